//! Deterministic agent-state machines: Z₁ = φ₀(Y₁), Z_{t+1} = φ(Z_t, Y_{t+1}, A_t).

use std::collections::HashMap;

use crate::caps::{self, Caps};
use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::policy::History;

/// How a machine was constructed. Kept so that documents can be written
/// back in their compact form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachineKind {
    Identity,
    Window { n: usize },
    Belief { k: usize },
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStateMachine {
    n_agent_states: usize,
    n_obs: usize,
    n_actions: usize,
    init_fn: Vec<usize>,
    update_fn: Vec<usize>,
    label: String,
    kind: MachineKind,
}

impl AgentStateMachine {
    /// Builds a machine from explicit tables. `update_fn` is laid out
    /// `[z][y'][a]`.
    pub fn from_tables(
        n_agent_states: usize,
        n_obs: usize,
        n_actions: usize,
        init_fn: Vec<usize>,
        update_fn: Vec<usize>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if n_agent_states == 0 || n_obs == 0 || n_actions == 0 {
            return Err(Error::validation("machine dimensions must be positive"));
        }
        if init_fn.len() != n_obs {
            return Err(Error::validation(format!(
                "init table has {} entries, expected {n_obs}",
                init_fn.len()
            )));
        }
        if update_fn.len() != n_agent_states * n_obs * n_actions {
            return Err(Error::validation(format!(
                "update table has {} entries, expected {}",
                update_fn.len(),
                n_agent_states * n_obs * n_actions
            )));
        }
        if let Some(z) = init_fn.iter().chain(&update_fn).find(|z| **z >= n_agent_states) {
            return Err(Error::validation(format!(
                "agent state {z} out of range 0..{n_agent_states}"
            )));
        }
        Ok(AgentStateMachine {
            n_agent_states,
            n_obs,
            n_actions,
            init_fn,
            update_fn,
            label: label.into(),
            kind: MachineKind::Table,
        })
    }

    /// Z_t = Y_t.
    pub fn identity(n_obs: usize, n_actions: usize) -> Self {
        let update_fn = (0..n_obs)
            .flat_map(|_| (0..n_obs).flat_map(move |y| std::iter::repeat(y).take(n_actions)))
            .collect();
        AgentStateMachine {
            n_agent_states: n_obs,
            n_obs,
            n_actions,
            init_fn: (0..n_obs).collect(),
            update_fn,
            label: "identity".into(),
            kind: MachineKind::Identity,
        }
    }

    /// A machine with a single agent state (no memory at all).
    pub fn singleton(n_obs: usize, n_actions: usize) -> Self {
        AgentStateMachine {
            n_agent_states: 1,
            n_obs,
            n_actions,
            init_fn: vec![0; n_obs],
            update_fn: vec![0; n_obs * n_actions],
            label: "singleton".into(),
            kind: MachineKind::Table,
        }
    }

    pub fn n_agent_states(&self) -> usize {
        self.n_agent_states
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &MachineKind {
        &self.kind
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn init_table(&self) -> &[usize] {
        &self.init_fn
    }

    pub fn update_table(&self) -> &[usize] {
        &self.update_fn
    }

    /// φ₀(y) without range checks.
    #[inline]
    pub fn init(&self, y: usize) -> usize {
        self.init_fn[y]
    }

    /// φ(z, y', a) without range checks.
    #[inline]
    pub fn step(&self, z: usize, y_next: usize, a: usize) -> usize {
        self.update_fn[(z * self.n_obs + y_next) * self.n_actions + a]
    }

    pub fn agent_state_init(&self, y: usize) -> Result<usize> {
        if y >= self.n_obs {
            return Err(Error::contract(format!("observation {y} out of range 0..{}", self.n_obs)));
        }
        Ok(self.init(y))
    }

    pub fn agent_state_update(&self, z: usize, y_next: usize, a: usize) -> Result<usize> {
        if z >= self.n_agent_states {
            return Err(Error::contract(format!(
                "agent state {z} out of range 0..{}",
                self.n_agent_states
            )));
        }
        if y_next >= self.n_obs {
            return Err(Error::contract(format!(
                "observation {y_next} out of range 0..{}",
                self.n_obs
            )));
        }
        if a >= self.n_actions {
            return Err(Error::contract(format!("action {a} out of range 0..{}", self.n_actions)));
        }
        Ok(self.step(z, y_next, a))
    }

    /// σ_t(h): the left fold of the update over the history.
    pub fn compress_history(&self, h: &History) -> Result<usize> {
        let obs = h.observations();
        let mut z = self.agent_state_init(obs[0])?;
        for (a, y) in h.actions().iter().zip(&obs[1..]) {
            z = self.agent_state_update(z, *y, *a)?;
        }
        Ok(z)
    }

    /// True when the machine's alphabets match the model.
    pub fn check_model(&self, model: &PomdpModel) -> Result<()> {
        if self.n_obs != model.n_obs() || self.n_actions != model.n_actions() {
            return Err(Error::contract(format!(
                "machine '{}' expects |Y|={}, |A|={} but model has |Y|={}, |A|={}",
                self.label,
                self.n_obs,
                self.n_actions,
                model.n_obs(),
                model.n_actions()
            )));
        }
        Ok(())
    }
}

/// A decoded window state: the last n observations and actions (`None`
/// for pre-history padding) and the current observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowState {
    pub past_obs: Vec<Option<usize>>,
    pub past_actions: Vec<Option<usize>>,
    pub current: usize,
}

/// Encoder for window machines. Past slots use one extra symbol for padding.
#[derive(Debug, Clone, Copy)]
pub struct WindowCodec {
    pub n: usize,
    pub n_obs: usize,
    pub n_actions: usize,
}

impl WindowCodec {
    pub fn size(&self) -> Option<u128> {
        let mut size = self.n_obs as u128;
        for _ in 0..self.n {
            size = size.checked_mul((self.n_obs as u128 + 1) * (self.n_actions as u128 + 1))?;
        }
        Some(size)
    }

    pub fn encode(&self, w: &WindowState) -> usize {
        let mut idx = 0usize;
        for y in &w.past_obs {
            idx = idx * (self.n_obs + 1) + y.unwrap_or(self.n_obs);
        }
        for a in &w.past_actions {
            idx = idx * (self.n_actions + 1) + a.unwrap_or(self.n_actions);
        }
        idx * self.n_obs + w.current
    }

    pub fn decode(&self, mut idx: usize) -> WindowState {
        let current = idx % self.n_obs;
        idx /= self.n_obs;
        let mut past_actions = vec![None; self.n];
        for slot in past_actions.iter_mut().rev() {
            let a = idx % (self.n_actions + 1);
            idx /= self.n_actions + 1;
            *slot = (a < self.n_actions).then_some(a);
        }
        let mut past_obs = vec![None; self.n];
        for slot in past_obs.iter_mut().rev() {
            let y = idx % (self.n_obs + 1);
            idx /= self.n_obs + 1;
            *slot = (y < self.n_obs).then_some(y);
        }
        WindowState {
            past_obs,
            past_actions,
            current,
        }
    }
}

/// Agent state Z_t = (Y_{t−n:t}, A_{t−n:t−1}) with padding before time n + 1.
pub fn window_machine(n: usize, n_obs: usize, n_actions: usize) -> Result<AgentStateMachine> {
    if n_obs == 0 || n_actions == 0 {
        return Err(Error::validation("machine dimensions must be positive"));
    }
    let codec = WindowCodec { n, n_obs, n_actions };
    let cap = Caps::from_env().agent_states;
    let size = codec.size().ok_or_else(|| Error::capacity("window agent states", u128::MAX, cap))?;
    caps::check("window agent states", size, cap)?;
    let size = size as usize;

    let init_fn = (0..n_obs)
        .map(|y| {
            codec.encode(&WindowState {
                past_obs: vec![None; n],
                past_actions: vec![None; n],
                current: y,
            })
        })
        .collect();
    let mut update_fn = Vec::with_capacity(size * n_obs * n_actions);
    for z in 0..size {
        let w = codec.decode(z);
        for y in 0..n_obs {
            for a in 0..n_actions {
                let next = if n == 0 {
                    WindowState {
                        past_obs: vec![],
                        past_actions: vec![],
                        current: y,
                    }
                } else {
                    let mut past_obs = w.past_obs[1..].to_vec();
                    past_obs.push(Some(w.current));
                    let mut past_actions = w.past_actions[1..].to_vec();
                    past_actions.push(Some(a));
                    WindowState {
                        past_obs,
                        past_actions,
                        current: y,
                    }
                };
                update_fn.push(codec.encode(&next));
            }
        }
    }
    Ok(AgentStateMachine {
        n_agent_states: size,
        n_obs,
        n_actions,
        init_fn,
        update_fn,
        label: format!("window-{n}"),
        kind: MachineKind::Window { n },
    })
}

/// All integer vectors of length `parts` with entries summing to `total`,
/// in lexicographic order.
pub fn simplex_lattice(parts: usize, total: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, parts: usize, remaining: usize, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(remaining as u32);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=remaining {
            prefix.push(v as u32);
            rec(prefix, parts - 1, remaining - v, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(&mut Vec::with_capacity(parts), parts, total, &mut out);
    }
    out
}

/// C(n + k − 1, k − 1) without overflow for the sizes used here.
pub fn lattice_size(parts: usize, total: usize) -> u128 {
    if parts == 0 {
        return 0;
    }
    let r = (parts - 1) as u128;
    let n = total as u128 + r;
    let mut c: u128 = 1;
    for i in 0..r {
        c = c.saturating_mul(n - i) / (i + 1);
    }
    c
}

/// Nearest point of {p : k·p integer} in ℓ₁. Coordinates with the largest
/// fractional parts are rounded up; equal fractional parts favor the lower
/// index.
pub fn project_to_lattice(belief: &[f64], k: usize) -> Vec<u32> {
    let scaled: Vec<f64> = belief.iter().map(|p| p * k as f64).collect();
    let mut counts: Vec<u32> = scaled.iter().map(|q| q.floor().max(0.0) as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut remaining = (k as i64) - assigned as i64;
    let mut order: Vec<usize> = (0..belief.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = scaled[i] - scaled[i].floor();
        let fj = scaled[j] - scaled[j].floor();
        fj.partial_cmp(&fi).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    let mut it = order.iter().cycle();
    while remaining > 0 {
        let i = *it.next().unwrap();
        counts[i] += 1;
        remaining -= 1;
    }
    // float noise can push the floor sum above k
    while remaining < 0 {
        let i = (0..counts.len())
            .filter(|&i| counts[i] > 0)
            .min_by(|&i, &j| {
                let ei = counts[i] as f64 - scaled[i];
                let ej = counts[j] as f64 - scaled[j];
                ej.partial_cmp(&ei).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        counts[i] -= 1;
        remaining += 1;
    }
    counts
}

/// Discretized-belief machine on the lattice {p ∈ Δ(S) : k·p integer}.
///
/// φ applies the exact Bayes update to the lattice point and projects the
/// result back. When the observation has probability zero under the lattice
/// point, the agent state is left unchanged.
pub fn belief_machine(model: &PomdpModel, k: usize) -> Result<AgentStateMachine> {
    if k == 0 {
        return Err(Error::validation("belief lattice resolution must be at least 1"));
    }
    let ns = model.n_states();
    let needed = lattice_size(ns, k);
    caps::check("belief lattice points", needed, Caps::from_env().agent_states)?;
    let points = simplex_lattice(ns, k);
    let index: HashMap<Vec<u32>, usize> =
        points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let to_belief = |p: &[u32]| -> Vec<f64> { p.iter().map(|c| *c as f64 / k as f64).collect() };

    let (n_obs, n_actions) = (model.n_obs(), model.n_actions());
    let init_fn = (0..n_obs)
        .map(|y| {
            let post = model
                .initial_posterior(y)
                .unwrap_or_else(|| model.init_state().to_vec());
            index[&project_to_lattice(&post, k)]
        })
        .collect();
    let mut update_fn = Vec::with_capacity(points.len() * n_obs * n_actions);
    for (z, p) in points.iter().enumerate() {
        let b = to_belief(p);
        for y in 0..n_obs {
            for a in 0..n_actions {
                let next = match model.belief_update(&b, a, y) {
                    Ok(post) => index[&project_to_lattice(&post, k)],
                    Err(_) => z,
                };
                update_fn.push(next);
            }
        }
    }
    Ok(AgentStateMachine {
        n_agent_states: points.len(),
        n_obs,
        n_actions,
        init_fn,
        update_fn,
        label: format!("belief-{k}"),
        kind: MachineKind::Belief { k },
    })
}

/// The belief represented by agent state `z` of a belief machine with
/// resolution `k` over `n_states` states.
pub fn lattice_belief(n_states: usize, k: usize, z: usize) -> Vec<f64> {
    simplex_lattice(n_states, k)[z]
        .iter()
        .map(|c| *c as f64 / k as f64)
        .collect()
}
