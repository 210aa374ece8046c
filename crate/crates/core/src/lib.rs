//! Planning and learning with agent-state based policies in finite POMDPs.

pub mod ais;
pub mod bruteforce;
pub mod caps;
pub mod designer;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod gradient;
pub mod io;
pub mod learning;
pub mod linalg;
pub mod machine;
pub mod model;
pub mod policy;

pub use caps::Caps;
pub use error::{Error, Result};
pub use machine::AgentStateMachine;
pub use model::{ModelParts, PomdpModel};
pub use policy::{DecisionRule, History, Policy};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/gradient.md")]
    mod gradient {}
    #[doc = include_str!("../../../book/src/ais.md")]
    mod ais {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
