//! Plan simulation, failure diagnosis and re-scoring under additive metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cost::Cost;
use crate::pddl::{ActionId, Atom, GroundTask};
use crate::search::{diagnose_props, Diagnosis, Plan, State};

/// An additive plan-scoring function.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    TotalCost,
    PlanLength,
    /// Per-schema multipliers on action cost; schemas not listed weigh 1.
    WeightedCost(BTreeMap<String, Cost>),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::TotalCost => f.write_str("total-cost"),
            Metric::PlanLength => f.write_str("plan-length"),
            Metric::WeightedCost(w) => {
                f.write_str("weighted(")?;
                for (i, (k, v)) in w.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{k}={v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid metric `{0}`: expected total-cost, plan-length or weighted(schema=w,...)")]
pub struct MetricParseError(pub String);

impl FromStr for Metric {
    type Err = MetricParseError;

    fn from_str(s: &str) -> Result<Metric, MetricParseError> {
        let err = || MetricParseError(s.to_string());
        match s.trim() {
            "total-cost" | "total_cost" | "cost" => Ok(Metric::TotalCost),
            "plan-length" | "plan_length" | "length" => Ok(Metric::PlanLength),
            t => {
                let body = t.strip_prefix("weighted(").and_then(|b| b.strip_suffix(')')).ok_or_else(err)?;
                let mut weights = BTreeMap::new();
                for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let (k, v) = part.split_once('=').ok_or_else(err)?;
                    let w: Cost = v.trim().parse().map_err(|_| err())?;
                    if w.is_negative() {
                        return Err(err());
                    }
                    weights.insert(k.trim().to_lowercase(), w);
                }
                Ok(Metric::WeightedCost(weights))
            }
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Metric, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    /// A step's preconditions do not hold when it is reached.
    Precondition,
    /// The step refers to an action withdrawn from the task.
    Unavailable,
    /// Every step applied but the final state misses the goal.
    GoalUnsatisfied,
}

/// First failure met while simulating a plan. For goal failures `step` is
/// the plan length and `missing`/`violated` list the unmet goal literals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<String>,
    pub missing: Vec<Atom>,
    pub violated: Vec<Atom>,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[Atom]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
        match self.kind {
            FailureKind::Precondition => {
                write!(f, "step {} {} is not applicable", self.step, self.action.as_deref().unwrap_or("?"))?;
            }
            FailureKind::Unavailable => {
                return write!(f, "step {} {} is not available", self.step, self.action.as_deref().unwrap_or("?"));
            }
            FailureKind::GoalUnsatisfied => write!(f, "goal not reached")?,
        }
        if !self.missing.is_empty() {
            write!(f, "; missing {}", list(&self.missing))?;
        }
        if !self.violated.is_empty() {
            write!(f, "; must be false: {}", list(&self.violated))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid plan: {0}")]
pub struct InvalidPlan(pub Failure);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub failure: Option<Failure>,
    #[serde(rename = "metrics")]
    pub metric_values: BTreeMap<Metric, Cost>,
    /// States visited, starting with the start state and ending at the last
    /// state reached before any failure.
    pub trace: Vec<State>,
}

impl ValidationReport {
    pub fn into_result(self) -> Result<ValidationReport, InvalidPlan> {
        match self.failure.clone() {
            Some(f) => Err(InvalidPlan(f)),
            None => Ok(self),
        }
    }
}

/// The unsatisfied preconditions of `a` in `s`; empty iff `a` is applicable.
pub fn explain_inapplicable(task: &GroundTask, s: &State, a: ActionId) -> Diagnosis {
    match task.action_any(a) {
        Some(act) => diagnose_props(task, s, &act.pre_pos, &act.pre_neg),
        None => Diagnosis::default(),
    }
}

/// Simulates `plan` from the task's initial state.
pub fn validate_plan(task: &GroundTask, plan: &Plan, metrics: &[Metric]) -> ValidationReport {
    validate_from(task, task.init(), &plan.steps, metrics)
}

/// Simulates `steps` from `start` and checks the goal in the final state.
pub fn validate_from(task: &GroundTask, start: &State, steps: &[ActionId], metrics: &[Metric]) -> ValidationReport {
    let mut trace = vec![start.clone()];
    let fail = |failure: Failure, trace: Vec<State>| ValidationReport {
        valid: false,
        failure: Some(failure),
        metric_values: BTreeMap::new(),
        trace,
    };
    for (step, &a) in steps.iter().enumerate() {
        let cur = trace.last().unwrap();
        let Some(act) = task.action(a) else {
            let failure = Failure {
                kind: FailureKind::Unavailable,
                step,
                action: task.action_any(a).map(|x| x.signature()),
                missing: Vec::new(),
                violated: Vec::new(),
            };
            return fail(failure, trace);
        };
        let d = diagnose_props(task, cur, &act.pre_pos, &act.pre_neg);
        if !d.is_empty() {
            let failure = Failure {
                kind: FailureKind::Precondition,
                step,
                action: Some(act.signature()),
                missing: d.missing_pos,
                violated: d.violated_neg,
            };
            return fail(failure, trace);
        }
        let mut next = cur.clone();
        for &p in &act.del {
            next.remove(p);
        }
        for &p in &act.add {
            next.insert(p);
        }
        trace.push(next);
    }
    let last = trace.last().unwrap();
    let d = diagnose_props(task, last, task.goal_pos(), task.goal_neg());
    if !d.is_empty() {
        let failure = Failure {
            kind: FailureKind::GoalUnsatisfied,
            step: steps.len(),
            action: None,
            missing: d.missing_pos,
            violated: d.violated_neg,
        };
        return fail(failure, trace);
    }
    let metric_values = metrics.iter().map(|m| (m.clone(), metric_value(task, steps, m))).collect();
    ValidationReport { valid: true, failure: None, metric_values, trace }
}

/// Scores `steps` without simulating them.
pub fn metric_value(task: &GroundTask, steps: &[ActionId], metric: &Metric) -> Cost {
    let acts = steps.iter().filter_map(|&a| task.action_any(a));
    match metric {
        Metric::TotalCost => acts.map(|a| a.cost).sum(),
        Metric::PlanLength => Cost::integer(steps.len() as i64),
        Metric::WeightedCost(w) => acts.map(|a| w.get(&a.name).copied().unwrap_or(Cost::ONE) * a.cost).sum(),
    }
}

/// Scores a plan under `metric`, refusing plans that do not validate.
pub fn evaluate_metric(plan: &Plan, metric: &Metric, task: &GroundTask) -> Result<Cost, InvalidPlan> {
    validate_plan(task, plan, &[]).into_result()?;
    Ok(metric_value(task, &plan.steps, metric))
}
