use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::pddl::{ActionId, GroundTask, PddlError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<ActionId>,
    pub total_cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanParseError {
    #[error("plan line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("plan line {line}: {source}")]
    Model { line: usize, source: PddlError },
}

impl Plan {
    pub fn empty() -> Plan {
        Plan { steps: Vec::new(), total_cost: Cost::ZERO }
    }

    /// Builds a plan, summing costs from the task's action table (retired
    /// actions included, so forbidden steps still have a cost to report).
    pub fn from_steps(task: &GroundTask, steps: Vec<ActionId>) -> Plan {
        let total_cost = steps.iter().filter_map(|&a| task.action_any(a)).map(|a| a.cost).sum();
        Plan { steps, total_cost }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One action per line, `<index>: (<name> <args>) [cost=<c>]`, then
    /// `; total_cost=<C>`.
    pub fn to_text(&self, task: &GroundTask) -> String {
        let mut s = String::new();
        for (i, &a) in self.steps.iter().enumerate() {
            let cost = task.action_any(a).map(|a| a.cost).unwrap_or_default();
            let _ = writeln!(s, "{i}: {} [cost={cost}]", task.action_label(a));
        }
        let _ = writeln!(s, "; total_cost={}", self.total_cost);
        s
    }

    pub fn labels(&self, task: &GroundTask) -> Vec<String> {
        self.steps.iter().map(|&a| task.action_label(a)).collect()
    }
}

/// Reads a plan in the text format. Index prefixes (`3:` or VAL-style
/// `5.001:`) and bracketed suffixes are optional; `;` starts a comment.
/// Actions the grounder pruned are interned into `task` so that the plan can
/// still be validated and diagnosed.
pub fn parse_plan(text: &str, task: &mut GroundTask) -> Result<Plan, PlanParseError> {
    let mut steps = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let open = line
            .find('(')
            .ok_or_else(|| PlanParseError::Syntax { line: line_no, message: "expected `(action args...)`".into() })?;
        let prefix = line[..open].trim();
        if !prefix.is_empty() && !prefix.ends_with(':') {
            return Err(PlanParseError::Syntax { line: line_no, message: format!("unexpected `{prefix}`") });
        }
        let close = line[open..]
            .find(')')
            .map(|c| open + c)
            .ok_or_else(|| PlanParseError::Syntax { line: line_no, message: "unterminated action".into() })?;
        let rest = line[close + 1..].trim();
        if !rest.is_empty() && !(rest.starts_with('[') && rest.ends_with(']')) {
            return Err(PlanParseError::Syntax { line: line_no, message: format!("unexpected `{rest}`") });
        }
        let id = task
            .intern_action_text(&line[open..=close])
            .map_err(|source| PlanParseError::Model { line: line_no, source })?;
        steps.push(id);
    }
    Ok(Plan::from_steps(task, steps))
}
