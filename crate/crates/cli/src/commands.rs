use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use agentpomdp::ais::{compute_ais_losses, fit_ais, solve_ais_dp, IpmSpec};
use agentpomdp::bruteforce::{enumerate_stationary_det, history_dp, verify_ordering, Budgets, ClassReport};
use agentpomdp::designer::{plan_designer, xi_init, RuleClass};
use agentpomdp::eval::{build_product_chain, performance, policy_evaluate};
use agentpomdp::gradient::{curve_argmax, curve_csv, gradient_ascent, sweep_1param, unit_grid, SoftmaxPolicyParams};
use agentpomdp::io::{load_document, parse_policy, write_atomic, ModelDocument};
use agentpomdp::learning::{asql_fixed_point, asql_policy, asql_run, snapshots_csv, LearningConfig};
use agentpomdp::machine::{belief_machine, window_machine};
use agentpomdp::{fixtures, AgentStateMachine, DecisionRule, Policy, PomdpModel};

use crate::{Common, Metric};

#[derive(Debug)]
pub enum CliError {
    Lib(agentpomdp::Error),
    Input(String),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_capacity() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Input(msg) => write!(f, "{msg}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<agentpomdp::Error> for CliError {
    fn from(e: agentpomdp::Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn load_model(common: &Common) -> CliResult<Option<ModelDocument>> {
    let Some(path) = &common.model else {
        return Ok(None);
    };
    if !path.exists() {
        return Err(input(format!("model file {} does not exist", path.display())));
    }
    let mut doc = load_document(path)?;
    if let Some(g) = common.gamma {
        doc.model = doc.model.with_gamma(g)?;
    }
    Ok(Some(doc))
}

fn require_model(common: &Common, command: &str) -> CliResult<ModelDocument> {
    load_model(common)?.ok_or_else(|| input(format!("{command} needs --model <path>")))
}

fn builtin_gamma(common: &Common, default: f64) -> CliResult<f64> {
    let g = common.gamma.unwrap_or(default);
    if !(g > 0.0 && g < 1.0) {
        return Err(input(format!("gamma {g} must lie in (0, 1)")));
    }
    Ok(g)
}

fn tolerance(common: &Common, default: f64) -> CliResult<f64> {
    let tol = common.tol.unwrap_or(default);
    if !(tol > 0.0) {
        return Err(input(format!("tolerance {tol} must be positive")));
    }
    Ok(tol)
}

/// Looks `name` up in the document, then among the built-in machines.
/// Without a name the first machine in the document is used, falling back
/// to the identity machine.
fn resolve_machine(doc: &ModelDocument, name: Option<&str>) -> CliResult<(String, AgentStateMachine)> {
    let model = &doc.model;
    let (ny, na) = (model.n_obs(), model.n_actions());
    let Some(name) = name else {
        return Ok(match doc.machines.first() {
            Some((n, m)) => (n.clone(), m.clone()),
            None => ("identity".into(), AgentStateMachine::identity(ny, na).with_label("identity")),
        });
    };
    if let Some(m) = doc.machine(name) {
        return Ok((name.to_string(), m.clone()));
    }
    let parse_arg = |arg: &str| {
        arg.parse::<usize>()
            .map_err(|_| input(format!("machine {name}: {arg} is not a non-negative integer")))
    };
    let m = match name.split_once(':') {
        None if name == "identity" => AgentStateMachine::identity(ny, na),
        None if name == "singleton" => AgentStateMachine::singleton(ny, na),
        Some(("window", n)) => window_machine(parse_arg(n)?, ny, na)?,
        Some(("belief", k)) => belief_machine(model, parse_arg(k)?)?,
        _ => return Err(input(format!("unknown machine {name}"))),
    };
    m.check_model(model)?;
    Ok((name.to_string(), m.with_label(name)))
}

fn write_csv(common: &Common, file: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&common.out).map_err(|e| CliError::Io(common.out.clone(), e))?;
    let path = common.out.join(file);
    write_atomic(&path, contents).map_err(|e| CliError::Io(path.clone(), e))?;
    Ok(path)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| input(format!("{what}: cannot parse {:?}", x.trim()))))
        .collect()
}

fn rule_from_args(rule: Option<&str>, actions: Option<&str>, nz: usize, na: usize) -> CliResult<DecisionRule> {
    let r = match (rule, actions) {
        (Some(text), _) => {
            let rows = text
                .split(';')
                .map(|row| parse_list::<f64>(row, "--rule"))
                .collect::<CliResult<Vec<_>>>()?;
            DecisionRule::stochastic(rows)?
        }
        (None, Some(text)) => DecisionRule::deterministic(parse_list::<usize>(text, "--actions")?, na)?,
        (None, None) => DecisionRule::uniform(nz, na),
    };
    if r.n_agent_states() != nz || r.n_actions() != na {
        return Err(input(format!(
            "rule has {} agent states and {} actions, the machine needs {nz} and {na}",
            r.n_agent_states(),
            r.n_actions()
        )));
    }
    Ok(r)
}

pub fn evaluate(common: &Common, policy: Option<&Path>, rule: Option<&str>, actions: Option<&str>) -> CliResult<()> {
    let doc = require_model(common, "evaluate")?;
    let tol = tolerance(common, 1e-10)?;
    let (policy, machine_name) = match policy {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
            let (p, name) = parse_policy(&text)?;
            if let Some(given) = &common.machine {
                if *given != name {
                    return Err(input(format!("policy was written for machine {name}, not {given}")));
                }
            }
            (Some(p), Some(name))
        }
        None => (None, common.machine.clone()),
    };
    let (name, m) = resolve_machine(&doc, machine_name.as_deref())?;
    m.check_model(&doc.model)?;
    let policy = match policy {
        Some(p) => p,
        None => Policy::Stationary(rule_from_args(rule, actions, m.n_agent_states(), doc.model.n_actions())?),
    };
    match &policy {
        Policy::Stationary(r) => {
            let chain = build_product_chain(&doc.model, &m)?;
            let bundle = policy_evaluate(&chain, r, &xi_init(&doc.model, &m)?, tol)?;
            println!("machine {name}: J = {:.12}", bundle.j);
            let path = write_csv(common, "evaluate.csv", &bundle.to_csv())?;
            println!("wrote {}", path.display());
        }
        Policy::NonStationary { .. } => {
            let perf = performance(&doc.model, &m, &policy, tol)?;
            println!("machine {name}: J = {:.12} (± {:.1e})", perf.value, perf.radius);
            let path = write_csv(common, "evaluate.csv", &format!("J,radius\n{:e},{:e}\n", perf.value, perf.radius))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn reproduce_fig1(common: &Common) -> CliResult<()> {
    let gamma = builtin_gamma(common, 0.9)?;
    let tol = tolerance(common, 1e-6)?;
    let model = fixtures::fig1_truncated(gamma);
    let m = AgentStateMachine::identity(2, 2);
    let (_, j_zsd) = enumerate_stationary_det(&model, &m)?;
    let plan = plan_designer(&model, &m, tol, RuleClass::Drd)?;
    let hnd = history_dp(&model, model.n_states() + 10, tol)?;
    println!("N = {} states, gamma = {gamma}", model.n_states());
    println!("J_HND in [{:.9}, {:.9}]", hnd.lo, hnd.hi);
    println!("J_ZND in [{:.9}, {:.9}]", plan.lo, plan.hi);
    println!("J_ZSD = {j_zsd:.9} (closed form {:.9})", fixtures::fig1_stationary_value(gamma));
    let gap = plan.lo - j_zsd;
    println!("J_ZND - J_ZSD >= {gap:.9}{}", if gap > 0.0 { " (strict)" } else { "" });
    let mut csv = String::from("quantity,lo,hi\n");
    let _ = writeln!(csv, "J_HND,{:e},{:e}", hnd.lo, hnd.hi);
    let _ = writeln!(csv, "J_ZND,{:e},{:e}", plan.lo, plan.hi);
    let _ = writeln!(csv, "J_ZSD,{j_zsd:e},{j_zsd:e}");
    let path = write_csv(common, "fig1.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn reproduce_fig2(common: &Common, step: f64) -> CliResult<()> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(input(format!("--step {step} must lie in (0, 0.5]")));
    }
    let model = match load_model(common)? {
        Some(doc) => doc.model,
        None => fixtures::fig2().with_gamma(builtin_gamma(common, 0.9)?)?,
    };
    let curve = sweep_1param(&model, &unit_grid(step))?;
    let (p, j) = curve_argmax(&curve);
    println!("grid argmax p = {p:.4}, J = {j:.9}");
    let m = AgentStateMachine::singleton(model.n_obs(), 2);
    let ascent = gradient_ascent(&model, &m, &SoftmaxPolicyParams::logit_difference(0.0), 0.1, 5000, 1e-10)?;
    println!(
        "gradient ascent p* = {:.6}, J = {:.9}",
        ascent.params.rule().prob(0, 1),
        ascent.j
    );
    let path = write_csv(common, "fig2_curve.csv", &curve_csv(&curve))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn reproduce_ordering(common: &Common) -> CliResult<()> {
    let budgets = Budgets {
        designer_tol: tolerance(common, 1e-6)?,
        history_horizon: 60,
        seed: common.seed,
        ..Budgets::default()
    };
    let instances: Vec<(String, PomdpModel, AgentStateMachine)> = match load_model(common)? {
        Some(doc) => {
            let (name, m) = resolve_machine(&doc, common.machine.as_deref())?;
            vec![(name, doc.model, m)]
        }
        None => {
            let gamma = builtin_gamma(common, 0.9)?;
            let mdp = fixtures::small_mdp().with_gamma(gamma)?;
            vec![
                ("fig2".into(), fixtures::fig2().with_gamma(gamma)?, AgentStateMachine::singleton(1, 2)),
                ("fig1".into(), fixtures::fig1_truncated(gamma), AgentStateMachine::identity(2, 2)),
                ("mdp".into(), mdp.clone(), AgentStateMachine::identity(mdp.n_obs(), mdp.n_actions())),
            ]
        }
    };
    // instances are independent; results are collected in input order
    let reports: Vec<agentpomdp::Result<ClassReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = instances
            .iter()
            .map(|(_, model, m)| scope.spawn(|| verify_ordering(model, m, &budgets)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("ordering worker panicked")).collect()
    });
    let mut csv = String::from("instance,quantity,lo,hi\n");
    let mut violations = 0;
    for ((name, _, _), report) in instances.iter().zip(reports) {
        let report = report?;
        println!("== {name}\n{report}");
        violations += report.violations();
        for line in report.to_csv().lines().skip(1) {
            let _ = writeln!(csv, "{name},{line}");
        }
    }
    println!("{violations} ordering violations");
    let path = write_csv(common, "ordering.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn reproduce_asql(common: &Common, steps: usize) -> CliResult<()> {
    if steps == 0 {
        return Err(input("--steps must be positive"));
    }
    let (model, m) = match load_model(common)? {
        Some(doc) => {
            let (_, m) = resolve_machine(&doc, common.machine.as_deref())?;
            (doc.model, m)
        }
        None => (fixtures::fig2().with_gamma(builtin_gamma(common, 0.9)?)?, AgentStateMachine::singleton(1, 2)),
    };
    let mu = DecisionRule::uniform(m.n_agent_states(), model.n_actions());
    let fp = asql_fixed_point(&model, &m, &mu, 1e-12)?;
    let cfg = LearningConfig {
        steps,
        seed: common.seed,
        eval_stride: (steps / 100).max(1),
        ..LearningConfig::default()
    };
    let snaps = asql_run(&model, &m, &mu, &cfg)?;
    let mut trace = String::from("step,distance\n");
    for s in &snaps {
        let _ = writeln!(trace, "{},{:e}", s.step, s.q.sup_dist(&fp.q));
    }
    let last = snaps.last().expect("at least one snapshot");
    println!("fixed point residual {:.1e}", fp.residual);
    println!("after {} steps: sup distance to the limit {:.6}", last.step, last.q.sup_dist(&fp.q));
    let greedy = asql_policy(&last.q);
    let actions: Vec<usize> = (0..m.n_agent_states())
        .map(|z| (0..model.n_actions()).find(|a| greedy.prob(z, *a) == 1.0).unwrap_or(0))
        .collect();
    println!("greedy action per agent state {actions:?}");
    let a = write_csv(common, "asql_snapshots.csv", &snapshots_csv(&snaps))?;
    let b = write_csv(common, "asql_distance.csv", &trace)?;
    println!("wrote {} and {}", a.display(), b.display());
    Ok(())
}

pub fn ais_audit(common: &Common, horizon: usize, metric: Metric) -> CliResult<()> {
    let doc = require_model(common, "ais-audit")?;
    let tol = tolerance(common, 1e-6)?;
    let (name, m) = resolve_machine(&doc, common.machine.as_deref())?;
    let model = &doc.model;
    let nz = m.n_agent_states();
    let spec = match metric {
        Metric::Tv => IpmSpec::TotalVariation,
        Metric::Discrete => IpmSpec::discrete(nz),
        Metric::Line => IpmSpec::line(nz),
    };
    let mu = DecisionRule::uniform(nz, model.n_actions());
    let ais = fit_ais(model, &m, &mu)?;
    let sol = solve_ais_dp(&ais, model.gamma(), 1e-12)?;
    let report = compute_ais_losses(model, &m, &ais, &spec, horizon)?;
    let j = performance(model, &m, &Policy::Stationary(sol.policy.clone()), 1e-12)?.value;
    let hnd = history_dp(model, 60, tol)?;
    let (gap_lo, gap_hi) = ((hnd.lo - j).max(0.0), (hnd.hi - j).max(0.0));
    println!("machine {name} ({nz} agent states), horizon {horizon}");
    println!("eps = {:.6e}, delta = {:.6e}, rho = {:.6e}", report.eps, report.delta, report.rho);
    println!("bound = {:.9}", report.bound);
    println!("J(pi_AIS) = {j:.9}, J_HND in [{:.9}, {:.9}] (depth {})", hnd.lo, hnd.hi, hnd.depth);
    println!("measured suboptimality in [{gap_lo:.9}, {gap_hi:.9}]");
    if gap_lo > report.bound + 1e-9 {
        println!("warning: measured suboptimality exceeds the bound");
    }
    let losses = write_csv(common, "ais_losses.csv", &report.to_csv())?;
    let summary = format!(
        "eps,delta,rho,bound,j_ais,j_hnd_lo,j_hnd_hi\n{:e},{:e},{:e},{:e},{j:e},{:e},{:e}\n",
        report.eps, report.delta, report.rho, report.bound, hnd.lo, hnd.hi
    );
    let bound = write_csv(common, "ais_bound.csv", &summary)?;
    println!("wrote {} and {}", losses.display(), bound.display());
    Ok(())
}
