//! Execution monitoring: the plan's static dependency filter, knowledge-base
//! updates, violation reports, and justifications for not replanning.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::pddl::{Atom, GroundTask, PddlError, PropId};
use crate::search::{trace_of, Plan, State};
use crate::validate::{validate_from, validate_plan, InvalidPlan, ValidationReport};

/// Static facts true initially that some plan step needs, plus the objects
/// they mention.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    pub facts: BTreeSet<Atom>,
    pub objects: BTreeSet<String>,
    #[serde(skip)]
    pub fact_ids: BTreeSet<PropId>,
}

impl Filter {
    pub fn contains(&self, p: PropId) -> bool {
        self.fact_ids.contains(&p)
    }
}

pub fn build_filter(task: &GroundTask, plan: &Plan) -> Result<Filter, InvalidPlan> {
    validate_plan(task, plan, &[]).into_result()?;
    let mut f = Filter::default();
    for &a in &plan.steps {
        let act = task.action_any(a).expect("validated step");
        for &p in &act.pre_pos {
            if task.is_static(p) && task.init().contains(p) && f.fact_ids.insert(p) {
                let atom = task.atom(p).clone();
                f.objects.extend(atom.args.iter().cloned());
                f.facts.insert(atom);
            }
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOp {
    Add,
    Remove,
    /// The object no longer exists; `literal` holds its name.
    RemoveObject,
}

/// One knowledge-base change, observed while step `at` executes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeBaseUpdate {
    pub seq: u64,
    pub op: UpdateOp,
    pub literal: String,
    pub at: usize,
}

impl KnowledgeBaseUpdate {
    pub fn describe(&self) -> String {
        match self.op {
            UpdateOp::Add => format!("observed {}", self.literal),
            UpdateOp::Remove => format!("observed ¬{}", self.literal),
            UpdateOp::RemoveObject => format!("observed removal of object {}", self.literal),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("update stream line {line}: {message}")]
pub struct UpdateParseError {
    pub line: usize,
    pub message: String,
}

/// Reads newline-delimited JSON update records; blank lines are skipped.
pub fn parse_updates(text: &str) -> Result<Vec<KnowledgeBaseUpdate>, UpdateParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| UpdateParseError { line: n + 1, message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectedStep {
    pub index: usize,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violated_fact: Atom,
    /// Not-yet-executed steps needing the fact, in plan order.
    pub affected_steps: Vec<AffectedStep>,
    pub earliest_affected: usize,
    pub update_seq: u64,
    pub at: usize,
    pub observation: String,
    /// Set when the report stems from an object disappearing.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub object: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NoReplanReason {
    /// The observation touches no filter fact and no remaining precondition.
    NotInFilter { literal: String },
    /// The remaining plan still validates from the believed state.
    StillValid { revalidation: ValidationReport },
    /// The observation agrees with the predicted outcome of the current step.
    ObservationExpected { matched_state_index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoReplanReport {
    #[serde(flatten)]
    pub reason: NoReplanReason,
    pub update_seq: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplanExplanation {
    pub violated_fact: Atom,
    pub observation: String,
    pub earliest_affected: usize,
    pub affected_steps: Vec<AffectedStep>,
    /// The earliest affected step is the next one to execute.
    pub immediate: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("stale update: seq {seq} does not follow {last}")]
    StaleUpdate { seq: u64, last: u64 },
    #[error("update at step {at} but the plan has {len} steps")]
    CursorOutOfRange { at: usize, len: usize },
    #[error("update at step {at} comes after updates at step {cursor}")]
    CursorRegressed { at: usize, cursor: usize },
    #[error(transparent)]
    Literal(#[from] PddlError),
    #[error("the observation breaks the remaining plan: {}", .0.failure.as_ref().map(|f| f.to_string()).unwrap_or_default())]
    RevalidationFailed(Box<ValidationReport>),
}

/// Monitors one plan under execution. Updates are consumed in `seq` order.
#[derive(Debug, Clone)]
pub struct MonitorSession {
    task: Arc<GroundTask>,
    plan: Plan,
    trace: Vec<State>,
    filter: Filter,
    last_seq: Option<u64>,
    cursor: usize,
    /// Believed world state and the trace index it stands for.
    believed: State,
    believed_index: usize,
    log: Vec<(KnowledgeBaseUpdate, Vec<ViolationReport>)>,
}

impl MonitorSession {
    pub fn new(task: Arc<GroundTask>, plan: Plan) -> Result<MonitorSession, InvalidPlan> {
        let filter = build_filter(&task, &plan)?;
        let trace = trace_of(&task, task.init(), &plan).expect("validated plan");
        Ok(MonitorSession {
            believed: trace[0].clone(),
            task,
            plan,
            trace,
            filter,
            last_seq: None,
            cursor: 0,
            believed_index: 0,
            log: Vec::new(),
        })
    }

    pub fn filter(&self) -> &Filter {
        &self.filter
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn believed_state(&self) -> &State {
        &self.believed
    }

    pub fn updates(&self) -> impl Iterator<Item = &KnowledgeBaseUpdate> {
        self.log.iter().map(|(u, _)| u)
    }

    pub fn reports(&self) -> impl Iterator<Item = &ViolationReport> {
        self.log.iter().flat_map(|(_, r)| r)
    }

    /// Applies the update to the believed state and reports every filter
    /// fact it falsifies that a not-yet-executed step still needs.
    pub fn process_update(&mut self, u: &KnowledgeBaseUpdate) -> Result<Vec<ViolationReport>, MonitorError> {
        if let Some(last) = self.last_seq {
            if u.seq <= last {
                return Err(MonitorError::StaleUpdate { seq: u.seq, last });
            }
        }
        let len = self.plan.len();
        if u.at > len || (u.at == len && len > 0) {
            return Err(MonitorError::CursorOutOfRange { at: u.at, len });
        }
        if u.at < self.cursor {
            return Err(MonitorError::CursorRegressed { at: u.at, cursor: self.cursor });
        }
        let touched = self.touched(u)?;
        self.last_seq = Some(u.seq);
        self.cursor = u.at;
        self.advance_to((u.at + 1).min(len));

        // Atoms the task has no proposition for are mentioned by no action
        // or goal, so they only get logged.
        let mut reports = Vec::new();
        match u.op {
            UpdateOp::Add => {
                for &p in &touched {
                    self.believed.insert(p);
                }
            }
            UpdateOp::Remove | UpdateOp::RemoveObject => {
                let object = (u.op == UpdateOp::RemoveObject).then(|| u.literal.trim().to_string());
                for &p in &touched {
                    reports.extend(self.violation(p, u, object.clone()));
                    self.believed.remove(p);
                }
            }
        }
        self.log.push((u.clone(), reports.clone()));
        Ok(reports)
    }

    /// Proposition ids an update refers to.
    fn touched(&self, u: &KnowledgeBaseUpdate) -> Result<Vec<PropId>, MonitorError> {
        Ok(match u.op {
            UpdateOp::Add | UpdateOp::Remove => {
                let atom = Atom::parse(&u.literal)?;
                self.task.prop_id(&atom).into_iter().collect()
            }
            UpdateOp::RemoveObject => {
                let obj = u.literal.trim();
                (0..self.task.num_props()).filter(|&p| self.task.atom(p).args.iter().any(|a| a == obj)).collect()
            }
        })
    }

    fn advance_to(&mut self, index: usize) {
        while self.believed_index < index {
            let act = self.task.action_any(self.plan.steps[self.believed_index]).expect("plan step");
            for &d in &act.del {
                self.believed.remove(d);
            }
            for &a in &act.add {
                self.believed.insert(a);
            }
            self.believed_index += 1;
        }
    }

    fn violation(&self, p: PropId, u: &KnowledgeBaseUpdate, object: Option<String>) -> Option<ViolationReport> {
        if !self.filter.contains(p) {
            return None;
        }
        let affected: Vec<AffectedStep> = self
            .plan
            .steps
            .iter()
            .enumerate()
            .skip(u.at + 1)
            .filter(|(_, &a)| self.task.action_any(a).is_some_and(|x| x.pre_pos.contains(&p)))
            .map(|(index, &a)| AffectedStep { index, action: self.task.action_label(a) })
            .collect();
        let earliest = affected.first()?.index;
        Some(ViolationReport {
            violated_fact: self.task.atom(p).clone(),
            earliest_affected: earliest,
            affected_steps: affected,
            update_seq: u.seq,
            at: u.at,
            observation: describe_fact(u, self.task.atom(p)),
            object,
        })
    }

    /// Why the change observed in `u` calls for replanning.
    pub fn explain_replan_needed(&self, report: &ViolationReport) -> ReplanExplanation {
        let immediate = report.earliest_affected == report.at + 1;
        let first = &report.affected_steps[0];
        let mut text = format!(
            "replanning needed: {}; plan step {} {} depends on it",
            report.observation, first.index, first.action
        );
        if report.affected_steps.len() > 1 {
            let rest: Vec<String> =
                report.affected_steps[1..].iter().map(|s| format!("{} {}", s.index, s.action)).collect();
            let _ = write!(text, "; later steps {} also depend on it", rest.join(", "));
        }
        if immediate {
            text.push_str("; it is the next step to execute");
        }
        ReplanExplanation {
            violated_fact: report.violated_fact.clone(),
            observation: report.observation.clone(),
            earliest_affected: report.earliest_affected,
            affected_steps: report.affected_steps.clone(),
            immediate,
            text,
        }
    }

    /// Why an already processed observation needs no replanning. Fails with
    /// `RevalidationFailed` when the remaining plan no longer works.
    pub fn explain_no_replan(&self, u: &KnowledgeBaseUpdate) -> Result<NoReplanReport, MonitorError> {
        let touched = self.touched(u)?;
        let predicted = &self.trace[(u.at + 1).min(self.plan.len())];
        let expected = match u.op {
            UpdateOp::Add => touched.first().is_some_and(|&p| predicted.contains(p)),
            UpdateOp::Remove | UpdateOp::RemoveObject => touched.iter().all(|&p| !predicted.contains(p)),
        };
        if expected {
            return Ok(NoReplanReport {
                text: format!("no replanning needed: {} matches the predicted state after step {}", u.describe(), u.at),
                reason: NoReplanReason::ObservationExpected { matched_state_index: u.at },
                update_seq: u.seq,
            });
        }
        let remaining = &self.plan.steps[(self.cursor + 1).min(self.plan.len())..];
        let relevant = touched.iter().any(|&p| {
            self.filter.contains(p)
                || remaining
                    .iter()
                    .any(|&a| self.task.action_any(a).is_some_and(|x| x.pre_pos.contains(&p) || x.pre_neg.contains(&p)))
                || self.task.goal_pos().contains(&p)
                || self.task.goal_neg().contains(&p)
        });
        if !relevant {
            return Ok(NoReplanReport {
                text: format!("no replanning needed: {} touches nothing the remaining plan depends on", u.describe()),
                reason: NoReplanReason::NotInFilter { literal: u.literal.clone() },
                update_seq: u.seq,
            });
        }
        let report = self.revalidate();
        if !report.valid {
            return Err(MonitorError::RevalidationFailed(Box::new(report)));
        }
        let n = remaining.len();
        Ok(NoReplanReport {
            text: format!(
                "no replanning needed: after {} the remaining {n} step(s) still reach the goal from the believed state",
                u.describe()
            ),
            reason: NoReplanReason::StillValid { revalidation: report },
            update_seq: u.seq,
        })
    }

    /// Validates the steps after the cursor from the believed state.
    pub fn revalidate(&self) -> ValidationReport {
        let start = (self.cursor + 1).min(self.plan.len());
        let mut believed = self.believed.clone();
        let mut index = self.believed_index;
        while index < start {
            let act = self.task.action_any(self.plan.steps[index]).expect("plan step");
            for &d in &act.del {
                believed.remove(d);
            }
            for &a in &act.add {
                believed.insert(a);
            }
            index += 1;
        }
        validate_from(&self.task, &believed, &self.plan.steps[start..], &[])
    }
}

fn describe_fact(u: &KnowledgeBaseUpdate, fact: &Atom) -> String {
    match u.op {
        UpdateOp::RemoveObject => format!("observed removal of object {}, so ¬{fact}", u.literal.trim()),
        _ => format!("observed ¬{fact}"),
    }
}
