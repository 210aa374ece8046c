//! Tabular Q-learning and TD evaluation driven by the agent state, with the
//! closed-form limits built from the stationary law ζ^μ of the behavior
//! policy:
//!
//! ```text
//! Q_{t+1}(z, a) = Q_t(z, a) + α_t(z, a) [R_t + γ max_a' Q_t(Z_{t+1}, a') − Q_t(z, a)]
//! Q^μ(z, a)     = r^μ(z, a) + γ Σ_z' P^μ(z' | z, a) max_a' Q^μ(z', a')
//! ```

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ais::{fit_ais, AisModel};
use crate::error::{Error, Result};
use crate::eval::stationary_dist;
use crate::linalg;
use crate::machine::AgentStateMachine;
use crate::model::PomdpModel;
use crate::policy::DecisionRule;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_agent_states: usize,
    n_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_agent_states: usize, n_actions: usize) -> Self {
        QTable {
            n_agent_states,
            n_actions,
            q: vec![0.0; n_agent_states * n_actions],
        }
    }

    pub fn from_vec(n_agent_states: usize, n_actions: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != n_agent_states * n_actions {
            return Err(Error::contract("Q table has the wrong size"));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("Q table entries must be finite"));
        }
        Ok(QTable {
            n_agent_states,
            n_actions,
            q,
        })
    }

    pub fn n_agent_states(&self) -> usize {
        self.n_agent_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, z: usize, a: usize) -> f64 {
        self.q[z * self.n_actions + a]
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.q[z * self.n_actions..(z + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn max_row(&self, z: usize) -> f64 {
        self.row(z).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_dist(&self, other: &QTable) -> f64 {
        linalg::sup_norm_diff(&self.q, &other.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub steps: usize,
    /// ω in α = 1 / (1 + visits(z, a))^ω.
    pub lr_exponent: f64,
    pub seed: u64,
    /// Steps between snapshots; 0 keeps only the final table.
    pub eval_stride: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            steps: 1_000_000,
            lr_exponent: 0.8,
            seed: 0,
            eval_stride: 0,
        }
    }
}

impl LearningConfig {
    fn check(&self) -> Result<()> {
        if !(self.lr_exponent > 0.5 && self.lr_exponent <= 1.0) {
            return Err(Error::contract("learning-rate exponent must lie in (0.5, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub q: QTable,
}

/// CSV with columns `step,z,a,q`.
pub fn snapshots_csv(snaps: &[Snapshot]) -> String {
    let mut out = String::from("step,z,a,q\n");
    for s in snaps {
        for z in 0..s.q.n_agent_states {
            for a in 0..s.q.n_actions {
                let _ = writeln!(out, "{},{z},{a},{:e}", s.step, s.q.get(z, a));
            }
        }
    }
    out
}

fn check_dims(model: &PomdpModel, machine: &AgentStateMachine, rule: &DecisionRule) -> Result<()> {
    machine.check_model(model)?;
    rule.check_dims(machine.n_agent_states(), model.n_actions())
}

enum Target {
    Max,
    Sarsa,
}

fn run(model: &PomdpModel, machine: &AgentStateMachine, rule: &DecisionRule, cfg: &LearningConfig, target: Target) -> Result<Vec<Snapshot>> {
    check_dims(model, machine, rule)?;
    cfg.check()?;
    let (nz, na) = (machine.n_agent_states(), model.n_actions());
    let gamma = model.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = QTable::zeros(nz, na);
    let mut visits = vec![0u64; nz * na];
    let mut snaps = Vec::new();
    let (mut s, y) = model.sample_initial(&mut rng);
    let mut z = machine.init(y);
    let mut a = rule.sample(z, &mut rng);
    for step in 1..=cfg.steps {
        let (sn, yn, r) = model.sample_step(s, a, &mut rng)?;
        let zn = machine.step(z, yn, a);
        let an = rule.sample(zn, &mut rng);
        let cont = match target {
            Target::Max => q.max_row(zn),
            Target::Sarsa => q.get(zn, an),
        };
        let i = z * na + a;
        let alpha = (1.0 + visits[i] as f64).powf(-cfg.lr_exponent);
        visits[i] += 1;
        q.q[i] += alpha * (r + gamma * cont - q.q[i]);
        s = sn;
        z = zn;
        a = an;
        if cfg.eval_stride > 0 && step % cfg.eval_stride == 0 && step != cfg.steps {
            snaps.push(Snapshot { step, q: q.clone() });
        }
    }
    snaps.push(Snapshot { step: cfg.steps, q });
    Ok(snaps)
}

/// Q-learning along one continuing trajectory under behavior rule μ.
pub fn asql_run(model: &PomdpModel, machine: &AgentStateMachine, mu: &DecisionRule, cfg: &LearningConfig) -> Result<Vec<Snapshot>> {
    run(model, machine, mu, cfg, Target::Max)
}

/// On-policy TD(0) evaluation of Q^π along one continuing trajectory.
pub fn asac_td_run(model: &PomdpModel, machine: &AgentStateMachine, pi: &DecisionRule, cfg: &LearningConfig) -> Result<Vec<Snapshot>> {
    run(model, machine, pi, cfg, Target::Sarsa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub q: QTable,
    /// Sup-norm residual of the fixed-point equation.
    pub residual: f64,
    /// The behavior chain is irreducible and aperiodic. When false the
    /// limit was built from the Cesàro-average law.
    pub ergodic: bool,
    /// The (r^μ, P^μ) pair the fixed point was built from.
    pub model: AisModel,
}

fn conditional_model(model: &PomdpModel, machine: &AgentStateMachine, rule: &DecisionRule) -> Result<(AisModel, bool)> {
    check_dims(model, machine, rule)?;
    let zeta = stationary_dist(model, machine, rule)?;
    let ais = fit_ais(model, machine, rule)?;
    if let Some(&(z, a)) = ais.unvisited.first() {
        return Err(Error::ZeroVisit { z, a });
    }
    Ok((ais, zeta.is_ergodic()))
}

/// The limit of Q-learning under behavior rule μ.
pub fn asql_fixed_point(model: &PomdpModel, machine: &AgentStateMachine, mu: &DecisionRule, tol: f64) -> Result<FixedPoint> {
    let (ais, ergodic) = conditional_model(model, machine, mu)?;
    let (nz, na) = (ais.n_agent_states(), ais.n_actions());
    let gamma = model.gamma();
    let bellman = |q: &QTable| -> QTable {
        let v: Vec<f64> = (0..nz).map(|z| q.max_row(z)).collect();
        let mut next = QTable::zeros(nz, na);
        for z in 0..nz {
            for a in 0..na {
                let cont: f64 = ais.p_row(z, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                next.q[z * na + a] = ais.r(z, a) + gamma * cont;
            }
        }
        next
    };
    let mut q = QTable::zeros(nz, na);
    loop {
        let next = bellman(&q);
        let diff = next.sup_dist(&q);
        q = next;
        if diff <= tol {
            break;
        }
    }
    // polish: evaluate the greedy rule exactly, keep it if it is closer
    let greedy = asql_policy(&q);
    if let Ok(exact) = evaluation_fixed_point(&ais, &greedy, gamma) {
        if bellman(&exact).sup_dist(&exact) < bellman(&q).sup_dist(&q) {
            q = exact;
        }
    }
    let residual = bellman(&q).sup_dist(&q);
    Ok(FixedPoint {
        q,
        residual,
        ergodic,
        model: ais,
    })
}

/// Greedy rule, ties to the lowest action.
pub fn asql_policy(q: &QTable) -> DecisionRule {
    let actions = (0..q.n_agent_states)
        .map(|z| {
            let row = q.row(z);
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    DecisionRule::Deterministic {
        n_actions: q.n_actions,
        actions,
    }
}

/// Solves Q = r + γ P^π Q with P^π((z, a), (z', a')) = P(z' | z, a) π(a' | z').
fn evaluation_fixed_point(ais: &AisModel, pi: &DecisionRule, gamma: f64) -> Result<QTable> {
    let (nz, na) = (ais.n_agent_states(), ais.n_actions());
    let n = nz * na;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for z in 0..nz {
        for act in 0..na {
            let i = z * na + act;
            a[i][i] += 1.0;
            b[i] = ais.r(z, act);
            for zn in 0..nz {
                let p = ais.p(z, act, zn);
                if p == 0.0 {
                    continue;
                }
                for an in 0..na {
                    a[i][zn * na + an] -= gamma * p * pi.prob(zn, an);
                }
            }
        }
    }
    QTable::from_vec(nz, na, linalg::solve_dense(a, &b)?)
}

/// The limit of TD evaluation under π.
pub fn asac_fixed_point(model: &PomdpModel, machine: &AgentStateMachine, pi: &DecisionRule, tol: f64) -> Result<FixedPoint> {
    let (ais, ergodic) = conditional_model(model, machine, pi)?;
    let q = evaluation_fixed_point(&ais, pi, model.gamma())?;
    let (nz, na) = (ais.n_agent_states(), ais.n_actions());
    let mut residual: f64 = 0.0;
    for z in 0..nz {
        for a in 0..na {
            let mut cont = 0.0;
            for zn in 0..nz {
                for an in 0..na {
                    cont += ais.p(z, a, zn) * pi.prob(zn, an) * q.get(zn, an);
                }
            }
            residual = residual.max((q.get(z, a) - ais.r(z, a) - model.gamma() * cont).abs());
        }
    }
    if residual > tol.max(1e-9) {
        return Err(Error::validation(format!("TD fixed point residual {residual:e} above tolerance")));
    }
    Ok(FixedPoint {
        q,
        residual,
        ergodic,
        model: ais,
    })
}

/// Σ_{z, a} Pr(Z₁ = z) π(a | z) Q(z, a).
pub fn initial_value(model: &PomdpModel, machine: &AgentStateMachine, pi: &DecisionRule, q: &QTable) -> f64 {
    let mut acc = 0.0;
    for y in 0..model.n_obs() {
        let py = model.initial_obs_probability(y);
        if py == 0.0 {
            continue;
        }
        let z = machine.init(y);
        for a in 0..model.n_actions() {
            acc += py * pi.prob(z, a) * q.get(z, a);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn greedy_tie_break() {
        let q = QTable::from_vec(2, 2, vec![0.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(asql_policy(&q), DecisionRule::Deterministic { n_actions: 2, actions: vec![1, 0] });
    }

    #[test]
    fn single_cell_converges_to_geometric_sum() {
        let model = fixtures::single_state(1.0, 0.9);
        let m = AgentStateMachine::singleton(1, 1);
        let rule = DecisionRule::uniform(1, 1);
        let cfg = LearningConfig::default();
        let q = &asql_run(&model, &m, &rule, &cfg).unwrap()[0].q;
        assert!((q.get(0, 0) - 10.0).abs() < 0.05, "{}", q.get(0, 0));
        let q = &asac_td_run(&model, &m, &rule, &cfg).unwrap()[0].q;
        assert!((q.get(0, 0) - 10.0).abs() < 0.05);
        let fp = asql_fixed_point(&model, &m, &rule, 1e-12).unwrap();
        assert!((fp.q.get(0, 0) - 10.0).abs() < 1e-10);
    }

    #[test]
    fn zero_visit_is_an_error() {
        let fig2 = fixtures::fig2();
        let m = AgentStateMachine::singleton(1, 2);
        let err = asql_fixed_point(&fig2, &m, &DecisionRule::bernoulli(0.0).unwrap(), 1e-12).unwrap_err();
        assert_eq!(err, Error::ZeroVisit { z: 0, a: 1 });
    }

    #[test]
    fn snapshots_follow_stride() {
        let model = fixtures::fig2();
        let m = AgentStateMachine::singleton(1, 2);
        let cfg = LearningConfig {
            steps: 1000,
            eval_stride: 300,
            ..LearningConfig::default()
        };
        let snaps = asql_run(&model, &m, &DecisionRule::uniform(1, 2), &cfg).unwrap();
        let steps: Vec<usize> = snaps.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![300, 600, 900, 1000]);
        assert!(snapshots_csv(&snaps).starts_with("step,z,a,q\n"));
        let again = asql_run(&model, &m, &DecisionRule::uniform(1, 2), &cfg).unwrap();
        assert_eq!(snaps, again);
    }
}
