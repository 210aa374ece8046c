//! Exact policy gradients for softmax agent-state policies.
//!
//! ```text
//! ∇_θ J = Σ_{s,z,a} d(s, z, a) Q(s, z, a) ∇_θ log π_θ(a | z)
//! ```
//!
//! with d and Q from the product chain.

use std::fmt::Write as _;

use crate::designer::xi_init;
use crate::error::{Error, Result};
use crate::eval::{build_product_chain, policy_evaluate, EvalBundle, ProductChain};
use crate::linalg;
use crate::machine::AgentStateMachine;
use crate::model::PomdpModel;
use crate::policy::DecisionRule;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicyParams {
    n_agent_states: usize,
    n_actions: usize,
    /// θ(z, a), row-major.
    theta: Vec<f64>,
}

impl SoftmaxPolicyParams {
    pub fn new(n_agent_states: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if n_agent_states == 0 || n_actions == 0 || theta.len() != n_agent_states * n_actions {
            return Err(Error::contract("logit table has the wrong shape"));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("logits must be finite"));
        }
        Ok(SoftmaxPolicyParams {
            n_agent_states,
            n_actions,
            theta,
        })
    }

    pub fn zeros(n_agent_states: usize, n_actions: usize) -> Self {
        SoftmaxPolicyParams {
            n_agent_states,
            n_actions,
            theta: vec![0.0; n_agent_states * n_actions],
        }
    }

    /// One agent state, two actions, θ = (0, x): π(1) = σ(x).
    pub fn logit_difference(x: f64) -> Self {
        SoftmaxPolicyParams {
            n_agent_states: 1,
            n_actions: 2,
            theta: vec![0.0, x],
        }
    }

    /// Logits of a rule with full support.
    pub fn from_rule(rule: &DecisionRule) -> Result<Self> {
        let mut theta = Vec::with_capacity(rule.n_agent_states() * rule.n_actions());
        for z in 0..rule.n_agent_states() {
            for a in 0..rule.n_actions() {
                let p = rule.prob(z, a);
                if p <= 0.0 {
                    return Err(Error::validation("softmax needs a rule with full support"));
                }
                theta.push(p.ln());
            }
        }
        SoftmaxPolicyParams::new(rule.n_agent_states(), rule.n_actions(), theta)
    }

    pub fn n_agent_states(&self) -> usize {
        self.n_agent_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn get(&self, z: usize, a: usize) -> f64 {
        self.theta[z * self.n_actions + a]
    }

    pub fn rule(&self) -> DecisionRule {
        let na = self.n_actions;
        let mut probs = Vec::with_capacity(self.theta.len());
        for row in self.theta.chunks(na) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|t| (t - m).exp()).collect();
            let s: f64 = e.iter().sum();
            probs.extend(e.iter().map(|x| x / s));
        }
        DecisionRule::Stochastic { n_actions: na, probs }
    }

    fn moved(&self, dir: &[f64], step: f64) -> Self {
        SoftmaxPolicyParams {
            n_agent_states: self.n_agent_states,
            n_actions: self.n_actions,
            theta: self.theta.iter().zip(dir).map(|(t, d)| t + step * d).collect(),
        }
    }
}

fn evaluate(chain: &ProductChain, model: &PomdpModel, machine: &AgentStateMachine, params: &SoftmaxPolicyParams) -> Result<EvalBundle> {
    let xi = xi_init(model, machine)?;
    policy_evaluate(chain, &params.rule(), &xi, 1e-12)
}

fn gradient_from_bundle(b: &EvalBundle, rule: &DecisionRule) -> Vec<f64> {
    let (ns, nz, na) = (b.n_states, b.n_agent_states, b.n_actions);
    let mut g = vec![0.0; nz * na];
    for z in 0..nz {
        // w(a) = Σ_s d(s, z, a) Q(s, z, a)
        let w: Vec<f64> = (0..na)
            .map(|a| (0..ns).map(|s| b.occupancy(s, z, a) * b.q_value(s, z, a)).sum())
            .collect();
        let total: f64 = w.iter().sum();
        for bb in 0..na {
            g[z * na + bb] = w[bb] - rule.prob(z, bb) * total;
        }
    }
    g
}

/// ∂J/∂θ(z, a) from exact occupancies and action values.
pub fn exact_policy_gradient(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    params: &SoftmaxPolicyParams,
) -> Result<Vec<f64>> {
    check_params(model, machine, params)?;
    let chain = build_product_chain(model, machine)?;
    let b = evaluate(&chain, model, machine, params)?;
    Ok(gradient_from_bundle(&b, &params.rule()))
}

/// Central differences of J with step `h` in each logit.
pub fn finite_diff_gradient(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    params: &SoftmaxPolicyParams,
    h: f64,
) -> Result<Vec<f64>> {
    check_params(model, machine, params)?;
    let chain = build_product_chain(model, machine)?;
    let n = params.theta.len();
    let mut g = vec![0.0; n];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let jp = evaluate(&chain, model, machine, &params.moved(&e, h))?.j;
        let jm = evaluate(&chain, model, machine, &params.moved(&e, -h))?.j;
        *gi = (jp - jm) / (2.0 * h);
    }
    Ok(g)
}

fn check_params(model: &PomdpModel, machine: &AgentStateMachine, params: &SoftmaxPolicyParams) -> Result<()> {
    if params.n_agent_states != machine.n_agent_states() || params.n_actions != model.n_actions() {
        return Err(Error::contract("logit table does not match the machine and model"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// max |analytic − numeric| / max(‖numeric‖∞, 1e-6).
    pub max_rel_err: f64,
}

pub fn gradient_report(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    params: &SoftmaxPolicyParams,
    h: f64,
) -> Result<GradientReport> {
    let analytic = exact_policy_gradient(model, machine, params)?;
    let numeric = finite_diff_gradient(model, machine, params, h)?;
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-6);
    let max_rel_err = linalg::sup_norm_diff(&analytic, &numeric) / scale;
    Ok(GradientReport {
        analytic,
        numeric,
        max_rel_err,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub params: SoftmaxPolicyParams,
    pub j: f64,
    pub converged: bool,
    pub iterations: usize,
    /// J after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Gradient ascent with backtracking: a step that lowers J is halved until
/// it does not; an accepted step doubles the next trial step.
pub fn gradient_ascent(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    params0: &SoftmaxPolicyParams,
    step: f64,
    iters: usize,
    grad_tol: f64,
) -> Result<AscentResult> {
    check_params(model, machine, params0)?;
    let chain = build_product_chain(model, machine)?;
    let mut params = params0.clone();
    let mut b = evaluate(&chain, model, machine, &params)?;
    let mut trace = vec![b.j];
    let mut eta = step;
    let max_eta = step * 1e6;
    for it in 0..iters {
        let g = gradient_from_bundle(&b, &params.rule());
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gmax < grad_tol {
            return Ok(AscentResult {
                params,
                j: b.j,
                converged: true,
                iterations: it,
                trace,
            });
        }
        let mut accepted = false;
        for _ in 0..80 {
            let cand = params.moved(&g, eta);
            let cb = evaluate(&chain, model, machine, &cand)?;
            if cb.j >= b.j {
                params = cand;
                b = cb;
                trace.push(b.j);
                eta = (eta * 2.0).min(max_eta);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // no ascent direction left at machine precision
            return Ok(AscentResult {
                params,
                j: b.j,
                converged: false,
                iterations: it,
                trace,
            });
        }
    }
    let g = gradient_from_bundle(&b, &params.rule());
    let converged = g.iter().all(|x| x.abs() < grad_tol);
    Ok(AscentResult {
        params,
        j: b.j,
        converged,
        iterations: iters,
        trace,
    })
}

/// J(p) = ξ₁ᵀ (I − γ P_p)⁻¹ r_p for the rule choosing action 1 with
/// probability p in a memoryless two-action policy.
pub fn sweep_1param(model: &PomdpModel, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if model.n_actions() != 2 {
        return Err(Error::contract("the one-parameter sweep needs exactly two actions"));
    }
    let ns = model.n_states();
    let gamma = model.gamma();
    let mut out = Vec::with_capacity(grid.len());
    for &p in grid {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(format!("p = {p} outside [0, 1]")));
        }
        let mut a = vec![vec![0.0; ns]; ns];
        let mut r = vec![0.0; ns];
        for s in 0..ns {
            r[s] = (1.0 - p) * model.reward(s, 0) + p * model.reward(s, 1);
            for sn in 0..ns {
                let pp = (1.0 - p) * model.state_transition(s, 0, sn) + p * model.state_transition(s, 1, sn);
                a[s][sn] = if s == sn { 1.0 } else { 0.0 } - gamma * pp;
            }
        }
        let v = linalg::solve_dense(a, &r)?;
        let j = model.init_state().iter().zip(&v).map(|(x, y)| x * y).sum();
        out.push((p, j));
    }
    Ok(out)
}

/// Evenly spaced grid 0, step, 2·step, ..., 1.
pub fn unit_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// The grid point with the largest J (first one on ties).
pub fn curve_argmax(curve: &[(f64, f64)]) -> (f64, f64) {
    curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// CSV with columns `p,J`.
pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("p,J\n");
    for (p, j) in curve {
        let _ = writeln!(out, "{p},{j:e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn softmax_rows_normalized_and_shift_invariant() {
        let p = SoftmaxPolicyParams::new(2, 3, vec![1.0, -2.0, 700.0, 0.0, 0.0, 0.0]).unwrap();
        let r = p.rule();
        for z in 0..2 {
            let s: f64 = r.row(z).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        let shifted = SoftmaxPolicyParams::new(2, 3, vec![1.0, -2.0, 700.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(shifted.rule().row(1), r.row(1));
    }

    #[test]
    fn single_action_gradient_is_zero() {
        let model = fixtures::random_model(1, 3, 1, 2, 0.9);
        let m = fixtures::random_machine(1, 2, 2, 1);
        let g = exact_policy_gradient(&model, &m, &SoftmaxPolicyParams::zeros(2, 1)).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn sweep_endpoints() {
        let curve = sweep_1param(&fixtures::fig2(), &[0.0, 1.0]).unwrap();
        assert!((curve[0].1 + 10.0).abs() < 1e-12);
        assert!((curve[1].1 + 5.0).abs() < 1e-12);
        assert!(sweep_1param(&fixtures::single_state(1.0, 0.9), &[0.5]).is_err());
    }

    #[test]
    fn grid_has_endpoints() {
        let g = unit_grid(0.005);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[200], 1.0);
        assert!((g[78] - 0.39).abs() < 1e-15);
    }
}
