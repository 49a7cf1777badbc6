//! Contrastive questions: "why not this action", "why not use this object",
//! "what if I did B here", and how two plans compare under other metrics.

mod compile;
mod inject;

use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub use compile::{compile_forbid_action, compile_require_participation, forbid_signature, Participation};
pub use inject::{
    classify_outcome, ContrastiveSession, InjectError, InjectionOutcome, InjectionRequest, StepRef, Variant,
};

use crate::cost::Cost;
use crate::pddl::{ground_task, DomainModel, GroundTask, PddlError, ProblemModel};
use crate::search::{search_plan, LimitKind, Plan, SearchConfig, SearchResult};
use crate::validate::{metric_value, Metric};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhyNotQuery {
    /// Ground actions, written `(name arg...)`, the alternative must avoid.
    /// A single string is accepted in place of a list.
    #[serde(default, deserialize_with = "one_or_many")]
    pub forbid: Vec<String>,
    /// Object the alternative must involve.
    #[serde(default)]
    pub require: Option<String>,
    /// Only count participation through actions that add a goal literal.
    #[serde(default)]
    pub goal_achievers: bool,
    #[serde(default)]
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub original: Cost,
    pub alternative: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Alternative {
        plan: Vec<StepRef>,
        cost: Cost,
        explored_states: usize,
    },
    /// Exhaustive search found no plan satisfying the constraints.
    Unsolvable {
        explored_states: usize,
    },
    ResourceLimit {
        explored_states: usize,
        limit: LimitKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhyNotAnswer {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub original_cost: Cost,
    pub comparisons: Vec<MetricComparison>,
    pub text: String,
}

impl WhyNotAnswer {
    pub fn alternative_plan(&self) -> Option<&[StepRef]> {
        match &self.verdict {
            Verdict::Alternative { plan, .. } => Some(plan),
            _ => None,
        }
    }
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::One(s) => vec![s],
        Raw::Many(v) => v,
    })
}

/// Builds the constrained task a why-not query describes: the participation
/// compilation first (it changes the model), then withdrawn actions.
pub fn constrained_task(
    domain: &DomainModel,
    problem: &ProblemModel,
    query: &WhyNotQuery,
) -> Result<GroundTask, PddlError> {
    let mut task = match &query.require {
        Some(obj) => {
            let (d, p, _) = compile_require_participation(domain, problem, obj, query.goal_achievers)?;
            ground_task(&d, &p)?
        }
        None => ground_task(domain, problem)?,
    };
    for f in &query.forbid {
        let id = task.intern_action_text(f)?;
        let sig = task.action_label(id);
        forbid_signature(&mut task, &sig);
    }
    Ok(task)
}

/// Scores both plans under each metric; each plan is read in its own task.
pub fn compare_plans(
    original_task: &GroundTask,
    original: &Plan,
    alternative_task: &GroundTask,
    alternative: &Plan,
    metrics: &[Metric],
) -> Vec<MetricComparison> {
    metrics
        .iter()
        .map(|m| MetricComparison {
            metric: m.clone(),
            original: metric_value(original_task, &original.steps, m),
            alternative: metric_value(alternative_task, &alternative.steps, m),
        })
        .collect()
}

/// Answers a why-not query against `original`, a plan for `original_task`.
/// The original plan is scored, never re-planned.
pub fn why_not(
    domain: &DomainModel,
    problem: &ProblemModel,
    original_task: &GroundTask,
    original: &Plan,
    query: &WhyNotQuery,
    cfg: &SearchConfig,
) -> Result<WhyNotAnswer, PddlError> {
    let task = constrained_task(domain, problem, query)?;
    let result = search_plan(&task, task.init(), cfg);
    let constraint = describe(query);
    let original_cost = original.total_cost;
    let (verdict, comparisons, text) = match result {
        SearchResult::PlanFound { plan, explored_states } => {
            let comparisons = compare_plans(original_task, original, &task, &plan, &query.metrics);
            let mut text = format!(
                "the best plan {constraint} costs {} against {original_cost} for the original plan; {}",
                plan.total_cost,
                verdict_phrase(original_cost, plan.total_cost)
            );
            for c in &comparisons {
                let _ = write!(
                    text,
                    "; under {} the original scores {} and the alternative {}",
                    c.metric, c.original, c.alternative
                );
            }
            let v = Verdict::Alternative {
                plan: StepRef::list(&task, &plan.steps),
                cost: plan.total_cost,
                explored_states,
            };
            (v, comparisons, text)
        }
        SearchResult::Unsolvable { explored_states } => {
            let text = format!("I cannot find a plan {constraint} ({})", unsolvable_evidence(explored_states));
            (Verdict::Unsolvable { explored_states }, Vec::new(), text)
        }
        SearchResult::ResourceLimit { explored_states, limit } => {
            let text = format!("no plan {constraint} was found before the {limit:?} limit ({explored_states} states)");
            (Verdict::ResourceLimit { explored_states, limit }, Vec::new(), text)
        }
    };
    Ok(WhyNotAnswer { verdict, original_cost, comparisons, text })
}

/// A search that stops before expanding anything did so because the goal is
/// unreachable even with delete effects ignored.
pub fn unsolvable_evidence(explored_states: usize) -> String {
    if explored_states == 0 {
        "the goal is unreachable even when delete effects are ignored".to_string()
    } else {
        format!("{explored_states} states explored exhaustively")
    }
}

fn verdict_phrase(original: Cost, alternative: Cost) -> String {
    if alternative > original {
        format!("avoiding the original choice makes the plan worse by {}", alternative - original)
    } else if alternative == original {
        "the alternative is as good as the original".to_string()
    } else {
        format!("the alternative is better by {}", original - alternative)
    }
}

fn describe(q: &WhyNotQuery) -> String {
    let forbid = q.forbid.join(" or ");
    match (&q.require, q.forbid.is_empty()) {
        (Some(o), empty) => {
            let role = if q.goal_achievers { "achieves a goal" } else { "takes part" };
            if empty {
                format!("in which {o} {role}")
            } else {
                format!("in which {o} {role} without {forbid}")
            }
        }
        (None, false) => format!("without {forbid}"),
        (None, true) => "for the unchanged model".to_string(),
    }
}
