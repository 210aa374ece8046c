//! Reference models: the two counterexamples separating the policy classes,
//! small MDPs, and seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::machine::AgentStateMachine;
use crate::model::{ModelParts, PomdpModel};
use crate::policy::{DecisionRule, Policy};

/// One state, one action, one observation, constant reward.
pub fn single_state(reward: f64, gamma: f64) -> PomdpModel {
    PomdpModel::from_parts(ModelParts {
        n_states: 1,
        n_actions: 1,
        n_obs: 1,
        kernel: vec![1.0],
        reward: vec![reward],
        init_state: vec![1.0],
        init_obs: None,
        gamma,
        r_max: None,
    })
    .expect("single-state model is valid")
}

/// The three-state, two-action, observation-free model where the best
/// stationary policy randomizes (p ≈ 0.39 on action 1 at γ = 0.9).
pub fn fig2() -> PomdpModel {
    fig2_with_gamma(0.9)
}

pub fn fig2_with_gamma(gamma: f64) -> PomdpModel {
    // rows (s, a) over s'; |Y| = 1
    let p0 = [[1.0, 0.0, 0.0], [0.5, 0.0, 0.5], [0.0, 0.0, 1.0]];
    let p1 = [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]];
    let mut kernel = Vec::with_capacity(18);
    for s in 0..3 {
        kernel.extend_from_slice(&p0[s]);
        kernel.extend_from_slice(&p1[s]);
    }
    let reward = vec![-1.0, -0.5, 0.0, -0.5, 2.0, -0.5];
    PomdpModel::from_parts(ModelParts {
        n_states: 3,
        n_actions: 2,
        n_obs: 1,
        kernel,
        reward,
        init_state: vec![1.0, 0.0, 0.0],
        init_obs: None,
        gamma,
        r_max: None,
    })
    .expect("fig2 model is valid")
}

/// True when `s` (one-based) is of the form n(n+1)/2 + 1, n ≥ 0.
pub fn fig1_in_d0(s: usize) -> bool {
    let m = s - 1;
    let mut n = 0usize;
    while n * (n + 1) / 2 < m {
        n += 1;
    }
    n * (n + 1) / 2 == m
}

/// The action that moves one-based state `s` to the right.
pub fn fig1_good_action(s: usize) -> usize {
    if fig1_in_d0(s) {
        0
    } else {
        1
    }
}

/// Smallest N with γ^N · r_max / (1 − γ) < `tail` (r_max = 1).
pub fn fig1_truncation(gamma: f64, tail: f64) -> usize {
    let mut n = 0usize;
    let mut g = 1.0;
    while g / (1.0 - gamma) >= tail {
        g *= gamma;
        n += 1;
    }
    n
}

/// The chain where the right action depends on membership of the state in
/// {n(n+1)/2 + 1}, truncated to `n_states` states.
///
/// The right action gives +1 and moves one state to the right (the last
/// state wraps to state 1); the wrong action gives −1 and resets to state 1.
/// The observation is the parity of the state: states 1, 3, 5, ... emit 0
/// and states 2, 4, ... emit 1.
pub fn fig1(gamma: f64, n_states: usize) -> PomdpModel {
    let ns = n_states;
    let (na, ny) = (2, 2);
    let obs_of = |i: usize| i % 2;
    let mut kernel = vec![0.0; ns * na * ns * ny];
    let mut reward = vec![0.0; ns * na];
    for i in 0..ns {
        let good = fig1_good_action(i + 1);
        for a in 0..na {
            let next = if a == good { (i + 1) % ns } else { 0 };
            kernel[((i * na + a) * ns + next) * ny + obs_of(next)] = 1.0;
            reward[i * na + a] = if a == good { 1.0 } else { -1.0 };
        }
    }
    let mut init_state = vec![0.0; ns];
    init_state[0] = 1.0;
    let mut init_obs = vec![0.0; ns * ny];
    for i in 0..ns {
        init_obs[i * ny + obs_of(i)] = 1.0;
    }
    PomdpModel::from_parts(ModelParts {
        n_states: ns,
        n_actions: na,
        n_obs: ny,
        kernel,
        reward,
        init_state,
        init_obs: Some(init_obs),
        gamma,
        r_max: Some(1.0),
    })
    .expect("fig1 model is valid")
}

/// The right-moving chain truncated so that the ignored tail is below 1e-8.
pub fn fig1_truncated(gamma: f64) -> PomdpModel {
    fig1(gamma, fig1_truncation(gamma, 1e-8))
}

/// The open-loop policy a_t = 1{t ∈ D₁}, valid for any two-state machine on
/// the right-moving chain, for the first `horizon` steps.
pub fn fig1_open_loop(horizon: usize, n_agent_states: usize) -> Policy {
    let rules = (1..=horizon)
        .map(|t| DecisionRule::Deterministic {
            n_actions: 2,
            actions: vec![fig1_good_action(t); n_agent_states],
        })
        .collect();
    Policy::NonStationary {
        rules,
        tail: DecisionRule::Deterministic {
            n_actions: 2,
            actions: vec![0; n_agent_states],
        },
    }
}

/// (1 + γ − γ²) / (1 − γ³): best stationary deterministic value on the right-moving chain
/// with Z = Y.
pub fn fig1_stationary_value(gamma: f64) -> f64 {
    (1.0 + gamma - gamma * gamma) / (1.0 - gamma.powi(3))
}

/// A fully observed model (Y = S, observation equals the next state) with a
/// fixed three-state, two-action kernel.
pub fn small_mdp() -> PomdpModel {
    let t = [
        [[0.7, 0.3, 0.0], [0.1, 0.0, 0.9]],
        [[0.0, 0.6, 0.4], [0.5, 0.5, 0.0]],
        [[0.3, 0.0, 0.7], [0.0, 0.2, 0.8]],
    ];
    let reward = vec![0.0, 0.5, 1.0, -0.2, -0.5, 0.8];
    mdp_from_transitions(&t.iter().map(|r| r.iter().map(|x| x.to_vec()).collect()).collect::<Vec<_>>(), reward, vec![0.5, 0.25, 0.25], 0.9)
}

/// Wraps T(s' | s, a) into a POMDP whose observation is the next state.
/// `transitions[s][a][s']`.
pub fn mdp_from_transitions(
    transitions: &[Vec<Vec<f64>>],
    reward: Vec<f64>,
    init_state: Vec<f64>,
    gamma: f64,
) -> PomdpModel {
    let ns = transitions.len();
    let na = transitions[0].len();
    let mut kernel = vec![0.0; ns * na * ns * ns];
    for s in 0..ns {
        for a in 0..na {
            for sn in 0..ns {
                kernel[((s * na + a) * ns + sn) * ns + sn] = transitions[s][a][sn];
            }
        }
    }
    let mut init_obs = vec![0.0; ns * ns];
    for s in 0..ns {
        init_obs[s * ns + s] = 1.0;
    }
    PomdpModel::from_parts(ModelParts {
        n_states: ns,
        n_actions: na,
        n_obs: ns,
        kernel,
        reward,
        init_state,
        init_obs: Some(init_obs),
        gamma,
        r_max: None,
    })
    .expect("mdp model is valid")
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                if n > 1 && rng.gen::<f64>() < sparsity {
                    0.0
                } else {
                    // Exp(1) draws give a flat Dirichlet after normalization
                    -(1.0 - rng.gen::<f64>()).ln()
                }
            })
            .collect();
        let sum: f64 = v.iter().sum();
        if sum > 0.0 {
            v.iter_mut().for_each(|x| *x /= sum);
            return v;
        }
    }
}

/// A seeded random POMDP with flat-Dirichlet kernel rows, rewards uniform
/// in [−1, 1] and a random initial state distribution.
pub fn random_model(seed: u64, n_states: usize, n_actions: usize, n_obs: usize, gamma: f64) -> PomdpModel {
    random_model_sparse(seed, n_states, n_actions, n_obs, gamma, 0.0)
}

/// As [`random_model`], with each kernel entry zeroed with probability
/// `sparsity` before normalization.
pub fn random_model_sparse(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    n_obs: usize,
    gamma: f64,
    sparsity: f64,
) -> PomdpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernel = Vec::with_capacity(n_states * n_actions * n_states * n_obs);
    for _ in 0..n_states * n_actions {
        kernel.extend(random_distribution(&mut rng, n_states * n_obs, sparsity));
    }
    let reward = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let init_state = random_distribution(&mut rng, n_states, 0.0);
    let mut init_obs = Vec::with_capacity(n_states * n_obs);
    for _ in 0..n_states {
        init_obs.extend(random_distribution(&mut rng, n_obs, sparsity));
    }
    PomdpModel::from_parts(ModelParts {
        n_states,
        n_actions,
        n_obs,
        kernel,
        reward,
        init_state,
        init_obs: Some(init_obs),
        gamma,
        r_max: None,
    })
    .expect("random model is valid")
}

/// A seeded random fully observed model.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> PomdpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transitions: Vec<Vec<Vec<f64>>> = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| random_distribution(&mut rng, n_states, 0.0))
                .collect()
        })
        .collect();
    let reward = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let init_state = random_distribution(&mut rng, n_states, 0.0);
    mdp_from_transitions(&transitions, reward, init_state, gamma)
}

/// A seeded random table machine.
pub fn random_machine(seed: u64, n_agent_states: usize, n_obs: usize, n_actions: usize) -> AgentStateMachine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let init = (0..n_obs).map(|_| rng.gen_range(0..n_agent_states)).collect();
    let update = (0..n_agent_states * n_obs * n_actions)
        .map(|_| rng.gen_range(0..n_agent_states))
        .collect();
    AgentStateMachine::from_tables(n_agent_states, n_obs, n_actions, init, update, "random")
        .expect("random machine is valid")
}

/// A seeded random stochastic decision rule with full support.
pub fn random_stochastic_rule(seed: u64, n_agent_states: usize, n_actions: usize) -> DecisionRule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let rows = (0..n_agent_states)
        .map(|_| {
            let mut row = random_distribution(&mut rng, n_actions, 0.0);
            // keep every action strictly positive
            row.iter_mut().for_each(|p| *p = 0.9 * *p + 0.1 / n_actions as f64);
            row
        })
        .collect();
    DecisionRule::stochastic(rows).expect("random rule is valid")
}
