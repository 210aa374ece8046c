//! `agentpomdp` command-line front end.
//!
//! Exit codes: 0 on success, 2 on bad input (including unreadable files and
//! malformed arguments), 3 when a size cap is exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "agentpomdp", version, about = "Agent-state policies for finite POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a stationary or non-stationary policy exactly.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy file; the uniform rule is used when no policy is given.
        #[arg(long, conflicts_with_all = ["rule", "actions"])]
        policy: Option<PathBuf>,
        /// Stochastic rule, rows separated by ';', e.g. "0.61,0.39".
        #[arg(long, conflicts_with = "actions")]
        rule: Option<String>,
        /// Deterministic rule as one action per agent state, e.g. "1,0,1".
        #[arg(long)]
        actions: Option<String>,
    },
    /// Regenerate one of the bundled experiments.
    Reproduce {
        which: Experiment,
        #[command(flatten)]
        common: Common,
        /// Grid spacing of the fig2 sweep.
        #[arg(long, default_value_t = 0.001)]
        step: f64,
        /// Learning steps for asql-demo.
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
    },
    /// Fit an approximate information state and compare its loss bound with
    /// the measured suboptimality.
    AisAudit {
        #[command(flatten)]
        common: Common,
        /// Depth of the exact loss computation.
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        /// Metric on agent states.
        #[arg(long, value_enum, default_value_t = Metric::Tv)]
        ipm: Metric,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Experiment {
    Fig1,
    Fig2,
    Ordering,
    AsqlDemo,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Metric {
    /// Total variation.
    Tv,
    /// Wasserstein with the discrete metric.
    Discrete,
    /// Wasserstein with d(i, j) = |i - j|.
    Line,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Model file (`.pomdp` for Cassandra format, anything else native).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Machine name from the model file, or one of identity, singleton,
    /// window:N, belief:K.
    #[arg(long)]
    machine: Option<String>,
    /// Override the discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Numerical tolerance; each command has its own default.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Evaluate {
            common,
            policy,
            rule,
            actions,
        } => commands::evaluate(&common, policy.as_deref(), rule.as_deref(), actions.as_deref()),
        Command::Reproduce {
            which,
            common,
            step,
            steps,
        } => match which {
            Experiment::Fig1 => commands::reproduce_fig1(&common),
            Experiment::Fig2 => commands::reproduce_fig2(&common, step),
            Experiment::Ordering => commands::reproduce_ordering(&common),
            Experiment::AsqlDemo => commands::reproduce_asql(&common, steps),
        },
        Command::AisAudit { common, horizon, ipm } => commands::ais_audit(&common, horizon, ipm),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
