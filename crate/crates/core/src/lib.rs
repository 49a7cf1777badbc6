//! Plan explanation toolkit over a classical PDDL fragment.
//!
//! The pipeline parses and grounds a domain/problem pair, searches for a
//! plan, and answers questions about it: why a step is there, why an
//! alternative is worse or impossible, how the plan scores under another
//! metric, and whether an observation during execution calls for replanning.

pub mod causal;
pub mod contrastive;
pub mod cost;
pub mod monitor;
pub mod pddl;
pub mod search;
pub mod service;
pub mod validate;

pub use cost::Cost;
