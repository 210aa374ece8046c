//! Information-state checks and approximate information states.
//!
//! An agent state is an information state when E[R_t | H_t, A_t] and
//! Pr(Z_{t+1} | H_t, A_t) depend on the history only through Z_t. An AIS
//! posits (P_AIS, r_AIS) and measures by how much those properties fail:
//!
//! ```text
//! |E[R_t | H_t, A_t] − r_AIS(Z_t, A_t)|                 ≤ ε_t
//! d_F(Pr(Z_{t+1} | H_t, A_t), P_AIS(· | Z_t, A_t))       ≤ δ_t
//! J_HND − J(π_AIS) ≤ 2/(1 − γ) · (ε + γ δ ρ_F(V_AIS))
//! ```

mod ipm;

use std::collections::HashMap;
use std::fmt::Write as _;

pub use ipm::{ipm_distance, minkowski_norm, IpmSpec};

use crate::caps::{self, Caps};
use crate::error::{Error, Result};
use crate::eval::stationary_dist;
use crate::machine::AgentStateMachine;
use crate::model::{PomdpModel, ROW_TOL};
use crate::policy::DecisionRule;

/// A reachable (belief, agent state) pair: every positive-probability
/// history of the same length mapping to it behaves identically.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryNode {
    pub belief: Vec<f64>,
    pub z: usize,
}

fn key(belief: &[f64], z: usize) -> (Vec<i64>, usize) {
    (belief.iter().map(|b| (b * 1e12).round() as i64).collect(), z)
}

/// Distinct (belief, z) pairs reached by positive-probability histories of
/// length 1..=horizon, one vector per length.
pub fn reachable_nodes(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    horizon: usize,
    cap: u128,
) -> Result<Vec<Vec<HistoryNode>>> {
    machine.check_model(model)?;
    let mut levels: Vec<Vec<HistoryNode>> = Vec::with_capacity(horizon);
    let mut count: u128 = 0;
    let mut level = Vec::new();
    let mut seen = HashMap::new();
    for y in 0..model.n_obs() {
        if let Some(b) = model.initial_posterior(y) {
            let z = machine.init(y);
            if seen.insert(key(&b, z), ()).is_none() {
                level.push(HistoryNode { belief: b, z });
            }
        }
    }
    for t in 0..horizon {
        count += level.len() as u128;
        caps::check("distinct histories", count, cap)?;
        if t + 1 == horizon {
            levels.push(level);
            break;
        }
        let mut next = Vec::new();
        let mut seen = HashMap::new();
        for node in &level {
            for a in 0..model.n_actions() {
                for y in 0..model.n_obs() {
                    if model.predictive_obs(&node.belief, a, y) <= 0.0 {
                        continue;
                    }
                    let b = model.belief_update(&node.belief, a, y)?;
                    let z = machine.step(node.z, y, a);
                    if seen.insert(key(&b, z), ()).is_none() {
                        next.push(HistoryNode { belief: b, z });
                    }
                }
            }
        }
        levels.push(std::mem::replace(&mut level, next));
    }
    Ok(levels)
}

/// E[R | belief, a].
fn expected_reward(model: &PomdpModel, belief: &[f64], a: usize) -> f64 {
    belief.iter().enumerate().map(|(s, b)| b * model.reward(s, a)).sum()
}

/// Pr(Z' | belief, z, a).
fn next_agent_state(model: &PomdpModel, machine: &AgentStateMachine, node: &HistoryNode, a: usize) -> Vec<f64> {
    let mut out = vec![0.0; machine.n_agent_states()];
    for y in 0..model.n_obs() {
        let p = model.predictive_obs(&node.belief, a, y);
        if p > 0.0 {
            out[machine.step(node.z, y, a)] += p;
        }
    }
    out
}

fn next_obs(model: &PomdpModel, belief: &[f64], a: usize) -> Vec<f64> {
    (0..model.n_obs()).map(|y| model.predictive_obs(belief, a, y)).collect()
}

fn max_pairwise_tv(dists: &[Vec<f64>]) -> f64 {
    let mut uniq: HashMap<Vec<i64>, &Vec<f64>> = HashMap::new();
    for d in dists {
        uniq.entry(d.iter().map(|x| (x * 1e13).round() as i64).collect()).or_insert(d);
    }
    let u: Vec<&Vec<f64>> = uniq.into_values().collect();
    let mut best: f64 = 0.0;
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            let tv = 0.5 * u[i].iter().zip(u[j]).map(|(a, b)| (a - b).abs()).sum::<f64>();
            best = best.max(tv);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoStateReport {
    pub horizon: usize,
    /// Largest spread of E[R_t | H_t, A_t] among histories sharing (z, a).
    pub reward_residual: f64,
    /// Largest TV spread of Pr(Z_{t+1} | H_t, A_t).
    pub next_state_residual: f64,
    /// Largest TV spread of Pr(Y_{t+1} | H_t, A_t).
    pub next_obs_residual: f64,
    pub is_info_state: bool,
    pub histories: usize,
}

/// Checks the information-state properties on all positive-probability
/// histories up to `horizon`.
pub fn check_information_state(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    horizon: usize,
    tol: f64,
) -> Result<InfoStateReport> {
    let levels = reachable_nodes(model, machine, horizon, Caps::from_env().histories)?;
    let (nz, na) = (machine.n_agent_states(), model.n_actions());
    let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); nz * na];
    let mut zs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); nz * na];
    let mut ys: Vec<Vec<Vec<f64>>> = vec![Vec::new(); nz * na];
    let mut histories = 0;
    for node in levels.iter().flatten() {
        histories += 1;
        for a in 0..na {
            let i = node.z * na + a;
            rewards[i].push(expected_reward(model, &node.belief, a));
            zs[i].push(next_agent_state(model, machine, node, a));
            ys[i].push(next_obs(model, &node.belief, a));
        }
    }
    let mut p1: f64 = 0.0;
    let mut p2: f64 = 0.0;
    let mut p2b: f64 = 0.0;
    for i in 0..nz * na {
        if rewards[i].len() < 2 {
            continue;
        }
        let max = rewards[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rewards[i].iter().copied().fold(f64::INFINITY, f64::min);
        p1 = p1.max(max - min);
        p2 = p2.max(max_pairwise_tv(&zs[i]));
        p2b = p2b.max(max_pairwise_tv(&ys[i]));
    }
    Ok(InfoStateReport {
        horizon,
        reward_residual: p1,
        next_state_residual: p2,
        next_obs_residual: p2b,
        is_info_state: p1 <= tol && p2 <= tol && p2b <= tol,
        histories,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisModel {
    n_agent_states: usize,
    n_actions: usize,
    /// P_AIS(z' | z, a), indexed (z·|A| + a)·|Z| + z'.
    p_ais: Vec<f64>,
    /// r_AIS(z, a), indexed z·|A| + a.
    r_ais: Vec<f64>,
    /// (z, a) cells with no visitation, filled with uniform P and zero r.
    pub unvisited: Vec<(usize, usize)>,
}

impl AisModel {
    pub fn new(n_agent_states: usize, n_actions: usize, p_ais: Vec<f64>, r_ais: Vec<f64>) -> Result<Self> {
        let (nz, na) = (n_agent_states, n_actions);
        if nz == 0 || na == 0 || p_ais.len() != nz * na * nz || r_ais.len() != nz * na {
            return Err(Error::contract("AIS tables have the wrong shape"));
        }
        for (i, row) in p_ais.chunks(nz).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::validation("AIS kernel has a negative entry"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::Normalization {
                    row: format!("P_AIS(·|z={},a={})", i / na, i % na),
                    sum,
                });
            }
        }
        if r_ais.iter().any(|r| !r.is_finite()) {
            return Err(Error::validation("AIS reward must be finite"));
        }
        Ok(AisModel {
            n_agent_states,
            n_actions,
            p_ais,
            r_ais,
            unvisited: Vec::new(),
        })
    }

    pub fn n_agent_states(&self) -> usize {
        self.n_agent_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn p(&self, z: usize, a: usize, z_next: usize) -> f64 {
        self.p_ais[(z * self.n_actions + a) * self.n_agent_states + z_next]
    }

    pub fn p_row(&self, z: usize, a: usize) -> &[f64] {
        let nz = self.n_agent_states;
        let i = z * self.n_actions + a;
        &self.p_ais[i * nz..(i + 1) * nz]
    }

    pub fn r(&self, z: usize, a: usize) -> f64 {
        self.r_ais[z * self.n_actions + a]
    }

    pub fn p_table(&self) -> &[f64] {
        &self.p_ais
    }

    pub fn r_table(&self) -> &[f64] {
        &self.r_ais
    }
}

/// Conditional-expectation AIS under the stationary law ζ^μ of a behavior
/// rule:
///
/// ```text
/// r(z, a)     = Σ_s ζ(s | z, a) r(s, a)
/// P(z' | z, a) = Σ_{s, y'} 1{z' = φ(z, y', a)} P(y' | s, a) ζ(s | z, a)
/// ```
pub fn fit_ais(model: &PomdpModel, machine: &AgentStateMachine, mu: &DecisionRule) -> Result<AisModel> {
    let zeta = stationary_dist(model, machine, mu)?;
    let (nz, na, ny) = (machine.n_agent_states(), model.n_actions(), model.n_obs());
    let mut p = vec![0.0; nz * na * nz];
    let mut r = vec![0.0; nz * na];
    let mut unvisited = Vec::new();
    for z in 0..nz {
        for a in 0..na {
            let i = z * na + a;
            match zeta.state_given_za(z, a) {
                None => {
                    unvisited.push((z, a));
                    p[i * nz..(i + 1) * nz].iter_mut().for_each(|x| *x = 1.0 / nz as f64);
                }
                Some(cond) => {
                    for (s, w) in cond.iter().enumerate() {
                        if *w == 0.0 {
                            continue;
                        }
                        r[i] += w * model.reward(s, a);
                        for y in 0..ny {
                            let py = model.obs_probability(s, a, y);
                            if py > 0.0 {
                                p[i * nz + machine.step(z, y, a)] += w * py;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut ais = AisModel::new(nz, na, p, r)?;
    ais.unvisited = unvisited;
    Ok(ais)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisSolution {
    /// Q_AIS(z, a), indexed z·|A| + a.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub policy: DecisionRule,
    /// sup-norm fixed-point residual of the returned V.
    pub residual: f64,
}

/// Value iteration on the AIS model; greedy ties go to the lowest action.
pub fn solve_ais_dp(ais: &AisModel, gamma: f64, tol: f64) -> Result<AisSolution> {
    if !(0.0..1.0).contains(&gamma) || gamma == 0.0 {
        return Err(Error::contract("discount must lie in (0, 1)"));
    }
    let (nz, na) = (ais.n_agent_states, ais.n_actions);
    let bellman = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut q = vec![0.0; nz * na];
        let mut vn = vec![f64::NEG_INFINITY; nz];
        for z in 0..nz {
            for a in 0..na {
                let cont: f64 = ais.p_row(z, a).iter().zip(v).map(|(p, x)| p * x).sum();
                q[z * na + a] = ais.r(z, a) + gamma * cont;
                vn[z] = vn[z].max(q[z * na + a]);
            }
        }
        (q, vn)
    };
    let stop = tol * (1.0 - gamma) / (2.0 * gamma);
    let mut v = vec![0.0; nz];
    loop {
        let (_, vn) = bellman(&v);
        let diff = crate::linalg::sup_norm_diff(&vn, &v);
        v = vn;
        if diff <= stop {
            break;
        }
    }
    let (q, vn) = bellman(&v);
    let residual = crate::linalg::sup_norm_diff(&vn, &v);
    let actions = (0..nz)
        .map(|z| {
            let row = &q[z * na..(z + 1) * na];
            let mut best = 0;
            for a in 1..na {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok(AisSolution {
        q,
        v,
        policy: DecisionRule::Deterministic { n_actions: na, actions },
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisLossReport {
    pub horizon: usize,
    /// ε_t for t = 1..=horizon.
    pub eps_t: Vec<f64>,
    pub delta_t: Vec<f64>,
    /// Bounds used for every t beyond the horizon.
    pub eps_tail: f64,
    pub delta_tail: f64,
    /// (1 − γ) Σ γ^{t−1} ε_t including the tail.
    pub eps: f64,
    pub delta: f64,
    /// ρ_F(V_AIS).
    pub rho: f64,
    pub bound: f64,
}

impl AisLossReport {
    /// CSV with columns `t,eps_t,delta_t`; the last row (t = `tail`) holds
    /// the tail bounds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,eps_t,delta_t\n");
        for (t, (e, d)) in self.eps_t.iter().zip(&self.delta_t).enumerate() {
            let _ = writeln!(out, "{},{e:e},{d:e}", t + 1);
        }
        let _ = writeln!(out, "tail,{:e},{:e}", self.eps_tail, self.delta_tail);
        out
    }
}

/// Exact per-step AIS losses over all positive-probability histories up to
/// `horizon`, with conservative tails beyond it.
///
/// Past the horizon the losses are bounded by their worst case over the
/// (s, z) pairs reachable in the product chain: E[R | h, a] and
/// Pr(Z' | h, a) are convex combinations over the states the belief
/// supports, and d_F is convex.
pub fn compute_ais_losses(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    ais: &AisModel,
    spec: &IpmSpec,
    horizon: usize,
) -> Result<AisLossReport> {
    let (nz, na) = (machine.n_agent_states(), model.n_actions());
    if ais.n_agent_states != nz || ais.n_actions != na {
        return Err(Error::contract("AIS model does not match the machine"));
    }
    let gamma = model.gamma();
    let levels = reachable_nodes(model, machine, horizon, Caps::from_env().histories)?;
    let mut eps_t = Vec::with_capacity(horizon);
    let mut delta_t = Vec::with_capacity(horizon);
    for level in &levels {
        let mut eps: f64 = 0.0;
        let mut delta: f64 = 0.0;
        let mut cache: HashMap<(Vec<i64>, usize, usize), f64> = HashMap::new();
        for node in level {
            for a in 0..na {
                eps = eps.max((expected_reward(model, &node.belief, a) - ais.r(node.z, a)).abs());
                let pz = next_agent_state(model, machine, node, a);
                let k = (pz.iter().map(|x| (x * 1e13).round() as i64).collect(), node.z, a);
                let d = match cache.get(&k) {
                    Some(d) => *d,
                    None => {
                        let d = ipm_distance(spec, &pz, ais.p_row(node.z, a))?;
                        cache.insert(k, d);
                        d
                    }
                };
                delta = delta.max(d);
            }
        }
        eps_t.push(eps);
        delta_t.push(delta);
    }

    // Beyond the horizon every belief held at agent state z is supported on
    // states s with (s, z) reachable, and both E[R | h, a] and
    // Pr(Z' | h, a) are mixtures over those states.
    let reach = reachable_pairs(model, machine);
    let mut eps_tail: f64 = 0.0;
    let mut delta_tail: f64 = 0.0;
    for s in 0..model.n_states() {
        for z in 0..nz {
            if !reach[s * nz + z] {
                continue;
            }
            for a in 0..na {
                eps_tail = eps_tail.max((model.reward(s, a) - ais.r(z, a)).abs());
                let mut next = vec![0.0; nz];
                for y in 0..model.n_obs() {
                    next[machine.step(z, y, a)] += model.obs_probability(s, a, y);
                }
                delta_tail = delta_tail.max(ipm_distance(spec, &next, ais.p_row(z, a))?);
            }
        }
    }
    let aggregate = |per_t: &[f64], tail: f64| {
        let mut acc = 0.0;
        let mut disc = 1.0;
        for e in per_t {
            acc += disc * e;
            disc *= gamma;
        }
        (1.0 - gamma) * acc + disc * tail
    };
    let eps = aggregate(&eps_t, eps_tail);
    let delta = aggregate(&delta_t, delta_tail);
    let sol = solve_ais_dp(ais, gamma, 1e-10)?;
    let rho = minkowski_norm(spec, &sol.v)?;
    Ok(AisLossReport {
        horizon,
        eps_t,
        delta_t,
        eps_tail,
        delta_tail,
        eps,
        delta,
        rho,
        bound: 2.0 / (1.0 - gamma) * (eps + gamma * delta * rho),
    })
}

/// (s, z) pairs reachable under some policy, indexed s·|Z| + z.
fn reachable_pairs(model: &PomdpModel, machine: &AgentStateMachine) -> Vec<bool> {
    let (ns, nz) = (model.n_states(), machine.n_agent_states());
    let mut seen = vec![false; ns * nz];
    let mut stack = Vec::new();
    for s in 0..ns {
        if model.init_state()[s] == 0.0 {
            continue;
        }
        for y in 0..model.n_obs() {
            if model.init_obs(s, y) > 0.0 {
                let i = s * nz + machine.init(y);
                if !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
    }
    while let Some(i) = stack.pop() {
        let (s, z) = (i / nz, i % nz);
        for a in 0..model.n_actions() {
            for sn in 0..ns {
                for y in 0..model.n_obs() {
                    if model.kernel(s, a, sn, y) > 0.0 {
                        let j = sn * nz + machine.step(z, y, a);
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    seen
}

/// 2/(1 − γ) · (ε + γ δ ρ_F(V_AIS)).
pub fn suboptimality_bound(report: &AisLossReport, spec: &IpmSpec, v_ais: &[f64], gamma: f64) -> Result<f64> {
    let rho = minkowski_norm(spec, v_ais)?;
    Ok(2.0 / (1.0 - gamma) * (report.eps + gamma * report.delta * rho))
}
