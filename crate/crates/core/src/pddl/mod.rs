//! Classical PDDL subset: STRIPS, typing, negative preconditions and a
//! single additive `total-cost` fluent.

mod ground;
mod model;
mod parse;
mod print;
pub mod sexpr;

pub use ground::{
    ground_task, ground_task_with, static_predicates, ActionId, GroundAction, GroundTask, GroundingOptions, PropId,
    DEFAULT_GROUNDING_CAP,
};
pub use model::*;
pub use parse::{parse_domain, parse_problem};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{column}: expected {expected}")]
    Syntax { line: usize, column: usize, expected: String },
    #[error("unsupported PDDL feature `{0}`")]
    UnsupportedFeature(String),
    #[error("type mismatch in {literal}: expected {expected}")]
    TypeMismatch { literal: String, expected: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown variable `{name}` in `{context}`")]
    UnknownVariable { name: String, context: String },
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("`{predicate}` expects {expected} arguments, found {found}")]
    Arity { predicate: String, expected: usize, found: usize },
    #[error("problem is for domain `{found}`, expected `{expected}`")]
    DomainMismatch { expected: String, found: String },
    #[error("grounding produced more than the configured cap ({0} actions)")]
    GroundingLimitExceeded(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
}
