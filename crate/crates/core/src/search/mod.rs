//! Grounded forward search: A*, greedy best-first and uniform-cost search
//! over closed-world states, with forbidden states and actions.

mod engine;
mod heuristic;
mod plan;
mod state;

pub(crate) use engine::diagnose_props;
pub use engine::{
    apply_action, search_plan, trace_of, ApplyError, Diagnosis, LimitKind, SearchConfig, SearchResult, Strategy,
    TraceError,
};
pub use heuristic::Heuristic;
pub use plan::{parse_plan, Plan, PlanParseError};
pub use state::State;
