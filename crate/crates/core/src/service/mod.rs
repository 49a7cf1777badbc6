//! Sessions shared by the command line and the HTTP API. Every answer is
//! built here, so both surfaces emit the same JSON for the same input.

mod store;

use std::fmt::Write;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use store::{Service, Store};

use crate::causal::{extract_causal_links, why_action, CausalError, LinkView};
use crate::contrastive::{why_not, ContrastiveSession, InjectError, InjectionOutcome, StepRef, WhyNotQuery};
use crate::cost::Cost;
use crate::monitor::{KnowledgeBaseUpdate, MonitorError, MonitorSession, NoReplanReport, ReplanExplanation};
use crate::pddl::{ground_task, parse_domain, parse_problem, Atom, DomainModel, GroundTask, PddlError, ProblemModel};
use crate::search::{
    parse_plan, search_plan, trace_of, Diagnosis, LimitKind, Plan, PlanParseError, SearchConfig, SearchResult,
};
use crate::validate::{explain_inapplicable, validate_plan, Failure, InvalidPlan, Metric};

/// Version of every JSON document this module emits.
pub const SCHEMA_VERSION: u32 = 1;

/// One of the six questions, with its kind-specific arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "q", rename_all = "lowercase")]
pub enum Question {
    /// Why is step `step` in the plan?
    Q1 { step: usize },
    /// Why not a plan that avoids, or involves, the given choices?
    Q2(WhyNotQuery),
    /// How does the plan, and optionally another one, score under `metrics`?
    Q3 {
        metrics: Vec<Metric>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alternative: Option<String>,
    },
    /// Why can `action` not be applied after the first `after` steps?
    Q4 {
        action: String,
        #[serde(default)]
        after: usize,
    },
    /// Why must I replan? Explains the violation raised by update `seq`,
    /// or the latest one.
    Q5 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    /// Why need I not replan after update `seq` (default: the latest)?
    Q6 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
}

impl Question {
    pub fn kind(&self) -> &'static str {
        match self {
            Question::Q1 { .. } => "q1",
            Question::Q2(_) => "q2",
            Question::Q3 { .. } => "q3",
            Question::Q4 { .. } => "q4",
            Question::Q5 { .. } => "q5",
            Question::Q6 { .. } => "q6",
        }
    }
}

/// A question plus the session version the asker last saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    #[serde(flatten)]
    pub question: Question,
}

/// Run the first `after` steps of the current plan, then `action`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectCommand {
    pub after: usize,
    pub action: String,
    #[serde(default)]
    pub forbid_revisit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    #[serde(flatten)]
    pub command: InjectCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatesRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    pub updates: Vec<KnowledgeBaseUpdate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationResponse {
    pub schema_version: u32,
    /// `q1`..`q6`, or `plan` / `pop` for the answers that are not questions.
    pub question: String,
    /// Session version the answer describes.
    pub version: u64,
    pub text: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatesResponse {
    pub schema_version: u32,
    pub version: u64,
    pub responses: Vec<ExplanationResponse>,
}

/// Payload of a `q4` answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityAnswer {
    pub action: String,
    pub after: usize,
    pub applicable: bool,
    pub diagnosis: Diagnosis,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub plan: Cost,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Cost>,
}

/// Payload of a `q3` answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricAnswer {
    pub scores: Vec<MetricScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternative_failure: Option<Failure>,
    pub text: String,
}

/// Payload of the answer to one observed update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum UpdateOutcome {
    /// Filter facts the remaining plan needs were falsified.
    Violation {
        explanations: Vec<ReplanExplanation>,
    },
    /// No filter fact broke, but the remaining plan fails from the believed state.
    Invalidated {
        failure: Option<Failure>,
    },
    NoReplan {
        report: NoReplanReport,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanSource {
    Planner,
    Supplied,
}

/// Payload of the `plan` answer that opens every transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPayload {
    pub source: PlanSource,
    pub plan: String,
    pub steps: Vec<StepRef>,
    pub total_cost: Cost,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explored_states: Option<usize>,
}

/// Current plan with its causal links, for display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanView {
    pub schema_version: u32,
    pub version: u64,
    pub plan: String,
    pub steps: Vec<StepRef>,
    pub total_cost: Cost,
    pub valid: bool,
    pub causal_links: Vec<LinkView>,
    pub injections: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub schema_version: u32,
    pub id: String,
    pub version: u64,
    pub digest: String,
    pub plan: PlanView,
}

/// Transcript entry: the request that changed or queried the session and
/// the answer it got.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Plan { response: ExplanationResponse },
    Ask { request: Question, response: ExplanationResponse },
    Inject { request: InjectCommand, response: ExplanationResponse },
    Pop { response: ExplanationResponse },
    Update { update: KnowledgeBaseUpdate, response: ExplanationResponse },
}

impl Event {
    pub fn response(&self) -> &ExplanationResponse {
        match self {
            Event::Plan { response }
            | Event::Ask { response, .. }
            | Event::Inject { response, .. }
            | Event::Pop { response }
            | Event::Update { response, .. } => response,
        }
    }
}

/// Everything needed to rebuild a session; also its exported transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub id: String,
    pub domain: String,
    pub problem: String,
    /// SHA-256 over both sources.
    pub digest: String,
    /// Plan text handed in at creation, if the planner was not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplied_plan: Option<String>,
    /// Original plan in the text format, with its JSON mirror.
    pub plan: String,
    pub plan_steps: Vec<StepRef>,
    pub version: u64,
    /// Accepted injections, bottom of the stack first.
    pub injections: Vec<InjectCommand>,
    /// Updates consumed by the execution monitor.
    pub updates: Vec<KnowledgeBaseUpdate>,
    pub transcript: Vec<Event>,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub index: usize,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub schema_version: u32,
    pub events: usize,
    pub identical: bool,
    pub mismatches: Vec<Mismatch>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("stale session version {requested}, the session is at {current}")]
    StaleVersion { requested: u64, current: u64 },
    #[error(transparent)]
    Model(#[from] PddlError),
    #[error(transparent)]
    PlanText(#[from] PlanParseError),
    #[error(transparent)]
    InvalidPlan(#[from] InvalidPlan),
    #[error("no plan found: {0}")]
    NoPlan(String),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("{0}")]
    Request(String),
    #[error("session store: {0}")]
    Store(String),
}

impl ServiceError {
    /// HTTP status the error maps to.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::UnknownSession(_) => 404,
            ServiceError::StaleVersion { .. } => 409,
            ServiceError::Store(_) => 500,
            _ => 422,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown-session",
            ServiceError::StaleVersion { .. } => "stale-version",
            ServiceError::Model(_) => "model",
            ServiceError::PlanText(_) => "plan-text",
            ServiceError::InvalidPlan(_) => "invalid-plan",
            ServiceError::NoPlan(_) => "no-plan",
            ServiceError::Causal(_) => "causal",
            ServiceError::Inject(_) => "inject",
            ServiceError::Monitor(_) => "monitor",
            ServiceError::Request(_) => "request",
            ServiceError::Store(_) => "store",
        }
    }

    /// JSON error document with the owning module's diagnostics.
    pub fn body(&self) -> Value {
        let diagnostics = match self {
            ServiceError::InvalidPlan(InvalidPlan(f))
            | ServiceError::Causal(CausalError::InvalidPlan(InvalidPlan(f))) => {
                serde_json::to_value(f).unwrap_or(Value::Null)
            }
            ServiceError::Monitor(MonitorError::RevalidationFailed(r)) => {
                serde_json::to_value(&r.failure).unwrap_or(Value::Null)
            }
            ServiceError::Inject(InjectError::NotApplicable { diagnosis, .. }) => {
                serde_json::to_value(diagnosis).unwrap_or(Value::Null)
            }
            ServiceError::StaleVersion { requested, current } => json!({ "requested": requested, "current": current }),
            _ => Value::Null,
        };
        json!({
            "schema_version": SCHEMA_VERSION,
            "error": self.kind(),
            "message": self.to_string(),
            "diagnostics": diagnostics,
        })
    }
}

/// SHA-256 of the two sources, length-prefixed so the split is unambiguous.
pub fn sources_digest(domain: &str, problem: &str) -> String {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(problem.as_bytes());
    hex::encode(h.finalize())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("answer types serialize")
}

/// A live session: the record plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Session {
    record: SessionRecord,
    domain: DomainModel,
    problem: ProblemModel,
    task: Arc<GroundTask>,
    contrastive: ContrastiveSession,
    monitor: Option<MonitorSession>,
    cfg: SearchConfig,
}

impl Session {
    /// Parses and grounds the sources, then plans (or reads `plan_text`).
    pub fn create(domain_src: &str, problem_src: &str, plan_text: Option<&str>) -> Result<Session, ServiceError> {
        Session::build(uuid::Uuid::new_v4().to_string(), domain_src, problem_src, plan_text)
    }

    fn build(
        id: String,
        domain_src: &str,
        problem_src: &str,
        plan_text: Option<&str>,
    ) -> Result<Session, ServiceError> {
        let domain = parse_domain(domain_src)?;
        let problem = parse_problem(problem_src, &domain)?;
        let mut task = ground_task(&domain, &problem)?;
        let cfg = SearchConfig::default();
        let (plan, source, explored) = match plan_text {
            Some(text) => (parse_plan(text, &mut task)?, PlanSource::Supplied, None),
            None => match search_plan(&task, task.init(), &cfg) {
                SearchResult::PlanFound { plan, explored_states } => (plan, PlanSource::Planner, Some(explored_states)),
                SearchResult::Unsolvable { explored_states } => {
                    return Err(ServiceError::NoPlan(format!(
                        "the problem is unsolvable ({})",
                        crate::contrastive::unsolvable_evidence(explored_states)
                    )))
                }
                SearchResult::ResourceLimit { explored_states, limit } => {
                    return Err(ServiceError::NoPlan(format!(
                        "search hit the {} limit after {explored_states} states",
                        limit_name(limit)
                    )))
                }
            },
        };
        let task = Arc::new(task);
        let contrastive = ContrastiveSession::new(Arc::clone(&task), plan.clone())?;
        let text = plan.to_text(&task);
        let steps = StepRef::list(&task, &plan.steps);
        let t = now();
        let record = SessionRecord {
            schema_version: SCHEMA_VERSION,
            id,
            domain: domain_src.to_string(),
            problem: problem_src.to_string(),
            digest: sources_digest(domain_src, problem_src),
            supplied_plan: plan_text.map(str::to_string),
            plan: text.clone(),
            plan_steps: steps.clone(),
            version: 0,
            injections: Vec::new(),
            updates: Vec::new(),
            transcript: Vec::new(),
            created_at: t,
            updated_at: t,
        };
        let mut s = Session { record, domain, problem, task, contrastive, monitor: None, cfg };
        let payload = PlanPayload { source, plan: text, steps, total_cost: plan.total_cost, explored_states: explored };
        let response = s.respond(
            "plan",
            format!("a plan of {} step(s) with total cost {}", plan.len(), plan.total_cost),
            to_value(&payload),
        );
        s.record.transcript.push(Event::Plan { response });
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn version(&self) -> u64 {
        self.record.version
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn task(&self) -> &GroundTask {
        &self.task
    }

    pub fn contrastive(&self) -> &ContrastiveSession {
        &self.contrastive
    }

    pub fn monitor(&self) -> Option<&MonitorSession> {
        self.monitor.as_ref()
    }

    pub fn created(&self) -> SessionCreated {
        SessionCreated {
            schema_version: SCHEMA_VERSION,
            id: self.record.id.clone(),
            version: self.record.version,
            digest: self.record.digest.clone(),
            plan: self.plan_view(),
        }
    }

    pub fn plan_view(&self) -> PlanView {
        let plan = self.contrastive.current_plan();
        let links = extract_causal_links(&self.task, plan);
        PlanView {
            schema_version: SCHEMA_VERSION,
            version: self.record.version,
            plan: plan.to_text(&self.task),
            steps: StepRef::list(&self.task, &plan.steps),
            total_cost: plan.total_cost,
            valid: links.is_ok(),
            causal_links: links
                .unwrap_or_default()
                .iter()
                .map(|l| LinkView { producer: l.producer, prop: self.task.atom(l.prop).clone(), consumer: l.consumer })
                .collect(),
            injections: self.contrastive.depth(),
        }
    }

    /// The exported transcript.
    pub fn export(&self) -> SessionRecord {
        self.record.clone()
    }

    fn respond(&self, question: &str, text: String, payload: Value) -> ExplanationResponse {
        ExplanationResponse {
            schema_version: SCHEMA_VERSION,
            question: question.to_string(),
            version: self.record.version,
            text,
            payload,
        }
    }

    fn check_version(&self, requested: Option<u64>) -> Result<(), ServiceError> {
        match requested {
            Some(v) if v != self.record.version => {
                Err(ServiceError::StaleVersion { requested: v, current: self.record.version })
            }
            _ => Ok(()),
        }
    }

    fn touch(&mut self) {
        self.record.updated_at = now();
    }

    pub fn ask(&mut self, req: &AskRequest) -> Result<ExplanationResponse, ServiceError> {
        self.check_version(req.version)?;
        let response = self.answer(&req.question)?;
        self.record.transcript.push(Event::Ask { request: req.question.clone(), response: response.clone() });
        self.touch();
        Ok(response)
    }

    fn answer(&self, q: &Question) -> Result<ExplanationResponse, ServiceError> {
        let plan = self.contrastive.current_plan();
        let (text, payload) = match q {
            Question::Q1 { step } => {
                let a = why_action(&self.task, plan, *step)?;
                (a.text.clone(), to_value(&a))
            }
            Question::Q2(query) => {
                let a = why_not(&self.domain, &self.problem, &self.task, plan, query, &self.cfg)?;
                (a.text.clone(), to_value(&a))
            }
            Question::Q3 { metrics, alternative } => {
                let a = self.score(plan, metrics, alternative.as_deref())?;
                (a.text.clone(), to_value(&a))
            }
            Question::Q4 { action, after } => {
                let a = self.applicability(action, *after)?;
                (a.text.clone(), to_value(&a))
            }
            Question::Q5 { seq } => {
                let m = self.monitor_or_err()?;
                let report = match seq {
                    Some(s) => m.reports().find(|r| r.update_seq == *s),
                    None => m.reports().last(),
                }
                .ok_or_else(|| ServiceError::Request("no filter violation has been observed".into()))?;
                let e = m.explain_replan_needed(report);
                (e.text.clone(), to_value(&e))
            }
            Question::Q6 { seq } => {
                let m = self.monitor_or_err()?;
                let u = match seq {
                    Some(s) => m.updates().find(|u| u.seq == *s),
                    None => m.updates().last(),
                }
                .ok_or_else(|| ServiceError::Request("no such update has been observed".into()))?;
                let r = m.explain_no_replan(u)?;
                (r.text.clone(), to_value(&r))
            }
        };
        Ok(self.respond(q.kind(), text, payload))
    }

    fn monitor_or_err(&self) -> Result<&MonitorSession, ServiceError> {
        self.monitor.as_ref().ok_or_else(|| ServiceError::Request("no execution updates have been observed".into()))
    }

    fn score(&self, plan: &Plan, metrics: &[Metric], alternative: Option<&str>) -> Result<MetricAnswer, ServiceError> {
        let own = validate_plan(&self.task, plan, metrics).into_result()?;
        let mut alt_values = None;
        let mut alternative_failure = None;
        if let Some(text) = alternative {
            let mut t = (*self.task).clone();
            let alt = parse_plan(text, &mut t)?;
            let r = validate_plan(&t, &alt, metrics);
            match r.failure {
                Some(f) => alternative_failure = Some(f),
                None => alt_values = Some(r.metric_values),
            }
        }
        let scores: Vec<MetricScore> = metrics
            .iter()
            .map(|m| MetricScore {
                metric: m.clone(),
                plan: own.metric_values[m],
                alternative: alt_values.as_ref().map(|v| v[m]),
            })
            .collect();
        let mut text = String::new();
        for (i, s) in scores.iter().enumerate() {
            if i > 0 {
                text.push_str("; ");
            }
            let _ = write!(text, "under {} the plan scores {}", s.metric, s.plan);
            if let Some(a) = s.alternative {
                let _ = write!(text, " and the alternative {a}");
            }
        }
        if let Some(f) = &alternative_failure {
            let _ = write!(text, "; the alternative plan fails: {f}");
        }
        Ok(MetricAnswer { scores, alternative_failure, text })
    }

    fn applicability(&self, action: &str, after: usize) -> Result<ApplicabilityAnswer, ServiceError> {
        let plan = self.contrastive.current_plan();
        if after > plan.len() {
            return Err(ServiceError::Request(format!("step {after} is past the end of a {}-step plan", plan.len())));
        }
        let prefix = Plan::from_steps(&self.task, plan.steps[..after].to_vec());
        let trace =
            trace_of(&self.task, self.task.init(), &prefix).map_err(|e| ServiceError::Request(e.to_string()))?;
        let s = &trace[after];
        let atom = Atom::parse(action)?;
        // Actions pruned by the grounder are instantiated in a scratch copy.
        let mut scratch = None;
        let (task, id) = match self.task.find_action(&atom.predicate, &atom.args) {
            Some(id) => (&*self.task, id),
            None => {
                let mut t = (*self.task).clone();
                let id = t.intern_action(&atom.predicate, &atom.args)?;
                (&*scratch.insert(t), id)
            }
        };
        let diagnosis = explain_inapplicable(task, s, id);
        let label = task.action_label(id);
        Ok(applicability_answer(label, after, diagnosis))
    }

    /// Injects a decision. An inapplicable action is answered with a `q4`
    /// diagnosis and leaves the session unchanged.
    pub fn inject(&mut self, req: &InjectRequest) -> Result<ExplanationResponse, ServiceError> {
        self.check_version(req.version)?;
        let cmd = &req.command;
        if self.monitor.is_some() {
            return Err(ServiceError::Request("execution has started; injections are closed".into()));
        }
        let atom = Atom::parse(&cmd.action)?;
        let response = match self.task.find_action(&atom.predicate, &atom.args) {
            None => {
                let a = self.applicability(&cmd.action, cmd.after)?;
                self.respond("q4", a.text.clone(), to_value(&a))
            }
            Some(id) => match self.contrastive.inject(cmd.after, id, cmd.forbid_revisit, &self.cfg) {
                Ok(outcome) => {
                    self.record.version += 1;
                    self.record.injections.push(cmd.clone());
                    self.respond("q2", outcome.text.clone(), to_value(&outcome))
                }
                Err(InjectError::NotApplicable { prefix_length, action, diagnosis }) => {
                    let a = applicability_answer(action, prefix_length, diagnosis);
                    self.respond("q4", a.text.clone(), to_value(&a))
                }
                Err(e) => return Err(e.into()),
            },
        };
        self.record.transcript.push(Event::Inject { request: cmd.clone(), response: response.clone() });
        self.touch();
        Ok(response)
    }

    /// Undoes the most recent injection.
    pub fn pop(&mut self, version: Option<u64>) -> Result<ExplanationResponse, ServiceError> {
        self.check_version(version)?;
        if self.monitor.is_some() {
            return Err(ServiceError::Request("execution has started; injections are closed".into()));
        }
        let outcome: InjectionOutcome =
            self.contrastive.pop().ok_or_else(|| ServiceError::Request("no injection to undo".into()))?;
        self.record.injections.pop();
        self.record.version += 1;
        let text = format!(
            "withdrew {} at step {}; {} injection(s) remain",
            outcome.injected.action,
            outcome.prefix_length,
            self.contrastive.depth()
        );
        let response = self.respond("pop", text, json!({ "popped": outcome, "depth": self.contrastive.depth() }));
        self.record.transcript.push(Event::Pop { response: response.clone() });
        self.touch();
        Ok(response)
    }

    /// Feeds observations to the execution monitor, which starts on the
    /// current plan at the first update. A failing update leaves the
    /// session as it was before the batch.
    pub fn updates(&mut self, req: &UpdatesRequest) -> Result<UpdatesResponse, ServiceError> {
        self.check_version(req.version)?;
        let saved = self.clone();
        let mut responses = Vec::new();
        for u in &req.updates {
            match self.update(u) {
                Ok(r) => responses.push(r),
                Err(e) => {
                    *self = saved;
                    return Err(e);
                }
            }
        }
        self.touch();
        Ok(UpdatesResponse { schema_version: SCHEMA_VERSION, version: self.record.version, responses })
    }

    fn update(&mut self, u: &KnowledgeBaseUpdate) -> Result<ExplanationResponse, ServiceError> {
        if self.monitor.is_none() {
            let plan = self.contrastive.current_plan().clone();
            self.monitor = Some(MonitorSession::new(Arc::clone(&self.task), plan)?);
        }
        let m = self.monitor.as_mut().expect("monitor started");
        let reports = m.process_update(u)?;
        let m = self.monitor.as_ref().expect("monitor started");
        let (question, text, outcome) = if !reports.is_empty() {
            let explanations: Vec<ReplanExplanation> = reports.iter().map(|r| m.explain_replan_needed(r)).collect();
            let text = explanations.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n");
            ("q5", text, UpdateOutcome::Violation { explanations })
        } else {
            match m.explain_no_replan(u) {
                Ok(report) => ("q6", report.text.clone(), UpdateOutcome::NoReplan { report }),
                Err(MonitorError::RevalidationFailed(r)) => {
                    let mut text = format!("replanning needed: after {} the remaining plan fails", u.describe());
                    if let Some(f) = &r.failure {
                        let _ = write!(text, ": {f}");
                    }
                    ("q5", text, UpdateOutcome::Invalidated { failure: r.failure })
                }
                Err(e) => return Err(e.into()),
            }
        };
        self.record.version += 1;
        self.record.updates.push(u.clone());
        let response = self.respond(question, text, to_value(&outcome));
        self.record.transcript.push(Event::Update { update: u.clone(), response: response.clone() });
        Ok(response)
    }

    /// Rebuilds a session from its transcript, re-issuing every request, and
    /// reports where a recomputed answer differs from the recorded one.
    pub fn replay(record: &SessionRecord) -> Result<(Session, ReplayReport), ServiceError> {
        if sources_digest(&record.domain, &record.problem) != record.digest {
            return Err(ServiceError::Request("transcript digest does not match its sources".into()));
        }
        let mut s =
            Session::build(record.id.clone(), &record.domain, &record.problem, record.supplied_plan.as_deref())?;
        s.record.created_at = record.created_at;
        let mut mismatches = Vec::new();
        for (index, event) in record.transcript.iter().enumerate() {
            let actual = match event {
                Event::Plan { .. } => Ok(s.record.transcript[0].response().clone()),
                Event::Ask { request, .. } => s.ask(&AskRequest { version: None, question: request.clone() }),
                Event::Inject { request, .. } => s.inject(&InjectRequest { version: None, command: request.clone() }),
                Event::Pop { .. } => s.pop(None),
                Event::Update { update, .. } => s.update(update),
            };
            let expected = serde_json::to_string(event.response()).expect("response serializes");
            let actual = match actual {
                Ok(r) => serde_json::to_string(&r).expect("response serializes"),
                Err(e) => e.body().to_string(),
            };
            if expected != actual {
                mismatches.push(Mismatch { index, expected, actual });
            }
        }
        s.record.updated_at = record.updated_at;
        let report = ReplayReport {
            schema_version: SCHEMA_VERSION,
            events: record.transcript.len(),
            identical: mismatches.is_empty(),
            mismatches,
        };
        Ok((s, report))
    }
}

fn applicability_answer(action: String, after: usize, diagnosis: Diagnosis) -> ApplicabilityAnswer {
    let applicable = diagnosis.is_empty();
    let text = if applicable {
        format!("{action} can be applied after step {after}")
    } else {
        let mut reasons: Vec<String> = diagnosis.missing_pos.iter().map(|a| format!("{a} does not hold")).collect();
        reasons.extend(diagnosis.violated_neg.iter().map(|a| format!("{a} holds")));
        format!("{action} cannot be applied after step {after}: {}", reasons.join(", "))
    };
    ApplicabilityAnswer { action, after, applicable, diagnosis, text }
}

fn limit_name(l: LimitKind) -> &'static str {
    match l {
        LimitKind::Nodes => "node",
        LimitKind::Time => "time",
    }
}
