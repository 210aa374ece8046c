//! Size caps guarding the exhaustive routines.
//!
//! Every enumeration in the crate checks its size against one of these caps
//! before allocating. Setting the `AGENTPOMDP_CAP` environment variable to a
//! positive integer replaces every cap with that value.

use crate::error::{Error, Result};

pub const CAP_ENV_VAR: &str = "AGENTPOMDP_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// Agent states produced by window and belief-lattice machines.
    pub agent_states: u128,
    /// Product states |S|·|Z|.
    pub product_states: u128,
    /// Deterministic decision rules enumerated by the designer search.
    pub designer_rules: u128,
    /// Stationary deterministic rules enumerated by brute force.
    pub stationary_rules: u128,
    /// Distinct history nodes (belief, agent state) per enumeration.
    pub histories: u128,
    /// Nodes expanded by tree searches.
    pub search_nodes: u128,
    /// Grid points evaluated by stochastic grid search.
    pub grid_points: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            agent_states: 1_000_000,
            product_states: 1_000_000,
            designer_rules: 4096,
            stationary_rules: 1_000_000,
            histories: 1_000_000,
            search_nodes: 20_000_000,
            grid_points: 1_000_000,
        }
    }
}

impl Caps {
    /// A cap set with every field equal to `cap`.
    pub fn uniform(cap: u128) -> Self {
        Caps {
            agent_states: cap,
            product_states: cap,
            designer_rules: cap,
            stationary_rules: cap,
            histories: cap,
            search_nodes: cap,
            grid_points: cap,
        }
    }

    /// Defaults, overridden by `AGENTPOMDP_CAP` when it holds a positive integer.
    pub fn from_env() -> Self {
        match std::env::var(CAP_ENV_VAR) {
            Ok(v) => match v.trim().parse::<u128>() {
                Ok(n) if n > 0 => Caps::uniform(n),
                _ => Caps::default(),
            },
            Err(_) => Caps::default(),
        }
    }
}

pub(crate) fn check(what: &str, needed: u128, cap: u128) -> Result<()> {
    if needed > cap {
        Err(Error::capacity(what, needed, cap))
    } else {
        Ok(())
    }
}
