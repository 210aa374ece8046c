//! The finite POMDP model: joint kernel P(s', y' | s, a), reward r(s, a),
//! initial state and observation distributions, and the discount factor.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used when validating probability rows.
pub const ROW_TOL: f64 = 1e-9;

/// Raw tables used to build a [`PomdpModel`].
///
/// `kernel` is laid out as `[s][a][s'][y']`, `reward` as `[s][a]` and
/// `init_obs` as `[s][y]`. When `init_obs` is `None` every initial state emits
/// observation 0 with probability one. When `r_max` is `None` it is set to
/// `max |r(s, a)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub kernel: Vec<f64>,
    pub reward: Vec<f64>,
    pub init_state: Vec<f64>,
    pub init_obs: Option<Vec<f64>>,
    pub gamma: f64,
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    n_states: usize,
    n_actions: usize,
    n_obs: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    init_state: Vec<f64>,
    init_obs: Vec<f64>,
    gamma: f64,
    r_max: f64,
}

fn check_distribution(row: &[f64], label: impl FnOnce() -> String) -> Result<()> {
    if let Some(bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::validation(format!("{}: invalid probability {bad}", label())));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Normalization { row: label(), sum });
    }
    Ok(())
}

impl PomdpModel {
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            n_states,
            n_actions,
            n_obs,
            kernel,
            reward,
            init_state,
            init_obs,
            gamma,
            r_max,
        } = parts;
        if n_states == 0 || n_actions == 0 || n_obs == 0 {
            return Err(Error::validation("model dimensions must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::validation(format!("discount {gamma} not in (0, 1)")));
        }
        let row_len = n_states * n_obs;
        if kernel.len() != n_states * n_actions * row_len {
            return Err(Error::validation(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                n_states * n_actions * row_len
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let start = (s * n_actions + a) * row_len;
                check_distribution(&kernel[start..start + row_len], || {
                    format!("kernel (s={s}, a={a})")
                })?;
            }
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::validation(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::validation("reward entries must be finite"));
        }
        if init_state.len() != n_states {
            return Err(Error::validation("initial state distribution has wrong length"));
        }
        check_distribution(&init_state, || "initial state".to_string())?;
        let init_obs = match init_obs {
            Some(v) => {
                if v.len() != n_states * n_obs {
                    return Err(Error::validation("initial observation kernel has wrong length"));
                }
                for s in 0..n_states {
                    check_distribution(&v[s * n_obs..(s + 1) * n_obs], || {
                        format!("initial observation (s={s})")
                    })?;
                }
                v
            }
            None => {
                let mut v = vec![0.0; n_states * n_obs];
                for s in 0..n_states {
                    v[s * n_obs] = 1.0;
                }
                v
            }
        };
        let max_abs = reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let r_max = match r_max {
            Some(b) => {
                if !(b.is_finite() && b >= max_abs) {
                    return Err(Error::validation(format!(
                        "r_max {b} is below max |r| = {max_abs}"
                    )));
                }
                b
            }
            None => max_abs,
        };
        Ok(PomdpModel {
            n_states,
            n_actions,
            n_obs,
            kernel,
            reward,
            init_state,
            init_obs,
            gamma,
            r_max,
        })
    }

    pub fn to_parts(&self) -> ModelParts {
        ModelParts {
            n_states: self.n_states,
            n_actions: self.n_actions,
            n_obs: self.n_obs,
            kernel: self.kernel.clone(),
            reward: self.reward.clone(),
            init_state: self.init_state.clone(),
            init_obs: Some(self.init_obs.clone()),
            gamma: self.gamma,
            r_max: Some(self.r_max),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Bound on |r| used by every tail estimate.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// P(s', y' | s, a).
    #[inline]
    pub fn kernel(&self, s: usize, a: usize, s_next: usize, y_next: usize) -> f64 {
        self.kernel[((s * self.n_actions + a) * self.n_states + s_next) * self.n_obs + y_next]
    }

    /// The row P(·, · | s, a), laid out `[s'][y']`.
    #[inline]
    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        let len = self.n_states * self.n_obs;
        let start = (s * self.n_actions + a) * len;
        &self.kernel[start..start + len]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn init_state(&self) -> &[f64] {
        &self.init_state
    }

    /// ν(y₁ | s₁).
    #[inline]
    pub fn init_obs(&self, s: usize, y: usize) -> f64 {
        self.init_obs[s * self.n_obs + y]
    }

    /// Σ_y' P(s', y' | s, a).
    pub fn state_transition(&self, s: usize, a: usize, s_next: usize) -> f64 {
        let row = self.kernel_row(s, a);
        row[s_next * self.n_obs..(s_next + 1) * self.n_obs].iter().sum()
    }

    /// Σ_s' P(s', y' | s, a).
    pub fn obs_probability(&self, s: usize, a: usize, y_next: usize) -> f64 {
        let row = self.kernel_row(s, a);
        (0..self.n_states).map(|sn| row[sn * self.n_obs + y_next]).sum()
    }

    /// Copy of the model with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.gamma = gamma;
        PomdpModel::from_parts(parts)
    }

    /// Copy of the model with every reward multiplied by `factor`.
    pub fn with_scaled_reward(&self, factor: f64) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.reward.iter_mut().for_each(|r| *r *= factor);
        parts.r_max = Some(self.r_max * factor.abs());
        PomdpModel::from_parts(parts)
    }

    /// Copy of the model with a replaced initial state distribution.
    pub fn with_init_state(&self, init_state: Vec<f64>) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.init_state = init_state;
        PomdpModel::from_parts(parts)
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::contract(format!("state {s} out of range 0..{}", self.n_states)));
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::contract(format!("action {a} out of range 0..{}", self.n_actions)));
        }
        Ok(())
    }

    fn check_obs(&self, y: usize) -> Result<()> {
        if y >= self.n_obs {
            return Err(Error::contract(format!("observation {y} out of range 0..{}", self.n_obs)));
        }
        Ok(())
    }

    /// Draws (s', y') from P(·, · | s, a) and returns it with r(s, a).
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, usize, f64)> {
        self.check_state(s)?;
        self.check_action(a)?;
        let idx = sample_index(self.kernel_row(s, a), rng);
        Ok((idx / self.n_obs, idx % self.n_obs, self.reward(s, a)))
    }

    /// Draws (S₁, Y₁).
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let s = sample_index(&self.init_state, rng);
        let y = sample_index(&self.init_obs[s * self.n_obs..(s + 1) * self.n_obs], rng);
        (s, y)
    }

    /// Pr(y' | b, a).
    pub fn predictive_obs(&self, belief: &[f64], a: usize, y_next: usize) -> f64 {
        belief
            .iter()
            .enumerate()
            .filter(|(_, b)| **b > 0.0)
            .map(|(s, b)| b * self.obs_probability(s, a, y_next))
            .sum()
    }

    /// Unnormalized posterior Σ_s b(s) P(s', y' | s, a).
    pub fn belief_predict(&self, belief: &[f64], a: usize, y_next: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for (s, &b) in belief.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let row = self.kernel_row(s, a);
            for (sn, o) in out.iter_mut().enumerate() {
                *o += b * row[sn * self.n_obs + y_next];
            }
        }
        out
    }

    /// Bayes filter: b'(s') ∝ Σ_s b(s) P(s', y' | s, a).
    pub fn belief_update(&self, belief: &[f64], a: usize, y_next: usize) -> Result<Vec<f64>> {
        if belief.len() != self.n_states {
            return Err(Error::contract("belief has wrong length"));
        }
        self.check_action(a)?;
        self.check_obs(y_next)?;
        let mut post = self.belief_predict(belief, a, y_next);
        let norm: f64 = post.iter().sum();
        if norm <= 0.0 {
            return Err(Error::ImpossibleObservation { obs: y_next, action: a });
        }
        post.iter_mut().for_each(|p| *p /= norm);
        Ok(post)
    }

    /// Posterior over S₁ given Y₁ = y, or `None` when y has probability zero.
    pub fn initial_posterior(&self, y: usize) -> Option<Vec<f64>> {
        let mut post: Vec<f64> = (0..self.n_states)
            .map(|s| self.init_state[s] * self.init_obs(s, y))
            .collect();
        let norm: f64 = post.iter().sum();
        if norm <= 0.0 {
            return None;
        }
        post.iter_mut().for_each(|p| *p /= norm);
        Some(post)
    }

    /// Pr(Y₁ = y).
    pub fn initial_obs_probability(&self, y: usize) -> f64 {
        (0..self.n_states)
            .map(|s| self.init_state[s] * self.init_obs(s, y))
            .sum()
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
