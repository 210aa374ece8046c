//! Decision rules (maps from agent states to actions or action
//! distributions), stationary and non-stationary policies, and histories.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{sample_index, ROW_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRule {
    /// `actions[z]` is the action taken in agent state z.
    Deterministic { n_actions: usize, actions: Vec<usize> },
    /// Row-major table of π(a | z).
    Stochastic { n_actions: usize, probs: Vec<f64> },
}

impl DecisionRule {
    pub fn deterministic(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if n_actions == 0 || actions.is_empty() {
            return Err(Error::validation("decision rule needs at least one state and action"));
        }
        if let Some(a) = actions.iter().find(|a| **a >= n_actions) {
            return Err(Error::validation(format!("action {a} out of range 0..{n_actions}")));
        }
        Ok(DecisionRule::Deterministic { n_actions, actions })
    }

    pub fn stochastic(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows.first().map(|r| r.len()).unwrap_or(0);
        if n_actions == 0 {
            return Err(Error::validation("decision rule needs at least one state and action"));
        }
        let mut probs = Vec::with_capacity(rows.len() * n_actions);
        for (z, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::validation(format!("rule row {z} has wrong length")));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::validation(format!("rule row {z} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::Normalization {
                    row: format!("decision rule z={z}"),
                    sum,
                });
            }
            probs.extend_from_slice(row);
        }
        Ok(DecisionRule::Stochastic { n_actions, probs })
    }

    pub fn uniform(n_agent_states: usize, n_actions: usize) -> Self {
        DecisionRule::Stochastic {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_agent_states * n_actions],
        }
    }

    /// The `index`-th deterministic rule in mixed-radix order (z = 0 is the
    /// least significant digit).
    pub fn from_index(mut index: u128, n_agent_states: usize, n_actions: usize) -> Self {
        let mut actions = Vec::with_capacity(n_agent_states);
        for _ in 0..n_agent_states {
            actions.push((index % n_actions as u128) as usize);
            index /= n_actions as u128;
        }
        DecisionRule::Deterministic { n_actions, actions }
    }

    /// Two-action, single-state rule choosing action 1 with probability p.
    pub fn bernoulli(p: f64) -> Result<Self> {
        DecisionRule::stochastic(vec![vec![1.0 - p, p]])
    }

    pub fn n_agent_states(&self) -> usize {
        match self {
            DecisionRule::Deterministic { actions, .. } => actions.len(),
            DecisionRule::Stochastic { n_actions, probs } => probs.len() / n_actions,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            DecisionRule::Deterministic { n_actions, .. }
            | DecisionRule::Stochastic { n_actions, .. } => *n_actions,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, DecisionRule::Deterministic { .. })
    }

    /// π(a | z).
    #[inline]
    pub fn prob(&self, z: usize, a: usize) -> f64 {
        match self {
            DecisionRule::Deterministic { actions, .. } => {
                if actions[z] == a {
                    1.0
                } else {
                    0.0
                }
            }
            DecisionRule::Stochastic { n_actions, probs } => probs[z * n_actions + a],
        }
    }

    pub fn row(&self, z: usize) -> Vec<f64> {
        (0..self.n_actions()).map(|a| self.prob(z, a)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, z: usize, rng: &mut R) -> usize {
        match self {
            DecisionRule::Deterministic { actions, .. } => actions[z],
            DecisionRule::Stochastic { n_actions, probs } => {
                sample_index(&probs[z * n_actions..(z + 1) * n_actions], rng)
            }
        }
    }

    /// The same rule expressed as a probability table.
    pub fn to_stochastic(&self) -> DecisionRule {
        let n_actions = self.n_actions();
        let probs = (0..self.n_agent_states())
            .flat_map(|z| self.row(z))
            .collect();
        DecisionRule::Stochastic { n_actions, probs }
    }

    pub(crate) fn check_dims(&self, n_agent_states: usize, n_actions: usize) -> Result<()> {
        if self.n_agent_states() != n_agent_states || self.n_actions() != n_actions {
            return Err(Error::contract(format!(
                "decision rule is {}x{}, expected {}x{}",
                self.n_agent_states(),
                self.n_actions(),
                n_agent_states,
                n_actions
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Stationary(DecisionRule),
    /// `rules[t]` is used at time t + 1; `tail` is used afterwards.
    NonStationary {
        rules: Vec<DecisionRule>,
        tail: DecisionRule,
    },
}

impl Policy {
    pub fn non_stationary(rules: Vec<DecisionRule>, tail: DecisionRule) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::validation("non-stationary policy needs at least one rule"));
        }
        let (nz, na) = (tail.n_agent_states(), tail.n_actions());
        for r in &rules {
            r.check_dims(nz, na)?;
        }
        Ok(Policy::NonStationary { rules, tail })
    }

    /// Decision rule used at zero-based time index `t`.
    pub fn rule_at(&self, t: usize) -> &DecisionRule {
        match self {
            Policy::Stationary(rule) => rule,
            Policy::NonStationary { rules, tail } => rules.get(t).unwrap_or(tail),
        }
    }

    pub fn tail(&self) -> &DecisionRule {
        match self {
            Policy::Stationary(rule) => rule,
            Policy::NonStationary { tail, .. } => tail,
        }
    }

    pub(crate) fn check_dims(&self, n_agent_states: usize, n_actions: usize) -> Result<()> {
        match self {
            Policy::Stationary(rule) => rule.check_dims(n_agent_states, n_actions),
            Policy::NonStationary { rules, tail } => {
                for r in rules {
                    r.check_dims(n_agent_states, n_actions)?;
                }
                tail.check_dims(n_agent_states, n_actions)
            }
        }
    }
}

/// Observations Y₁..Y_t and actions A₁..A_{t−1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    observations: Vec<usize>,
    actions: Vec<usize>,
}

impl History {
    pub fn new(observations: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::contract("history needs at least one observation"));
        }
        if observations.len() != actions.len() + 1 {
            return Err(Error::contract(format!(
                "history has {} observations and {} actions",
                observations.len(),
                actions.len()
            )));
        }
        Ok(History {
            observations,
            actions,
        })
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Appends action A_t and observation Y_{t+1}.
    pub fn extended(&self, action: usize, obs: usize) -> History {
        let mut h = self.clone();
        h.actions.push(action);
        h.observations.push(obs);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_index_enumerates_all_rules() {
        let rules: Vec<_> = (0..8).map(|i| DecisionRule::from_index(i, 3, 2)).collect();
        for (i, r) in rules.iter().enumerate() {
            for (j, q) in rules.iter().enumerate() {
                assert_eq!(i == j, r == q);
            }
        }
        assert_eq!(
            DecisionRule::from_index(6, 3, 2),
            DecisionRule::Deterministic {
                n_actions: 2,
                actions: vec![0, 1, 1]
            }
        );
    }

    #[test]
    fn stochastic_rows_validated() {
        assert!(DecisionRule::stochastic(vec![vec![0.5, 0.4]]).is_err());
        assert!(DecisionRule::stochastic(vec![vec![1.2, -0.2]]).is_err());
        assert!(DecisionRule::stochastic(vec![vec![0.39, 0.61]]).is_ok());
    }

    #[test]
    fn history_shape_checked() {
        assert!(History::new(vec![], vec![]).is_err());
        assert!(History::new(vec![0, 1], vec![]).is_err());
        assert_eq!(History::new(vec![0], vec![]).unwrap().extended(1, 2).len(), 2);
    }

    #[test]
    fn non_stationary_requires_rules() {
        let r = DecisionRule::uniform(1, 2);
        assert!(Policy::non_stationary(vec![], r.clone()).is_err());
        let p = Policy::non_stationary(vec![DecisionRule::bernoulli(1.0).unwrap()], r.clone())
            .unwrap();
        assert_eq!(p.rule_at(5), &r);
    }
}
