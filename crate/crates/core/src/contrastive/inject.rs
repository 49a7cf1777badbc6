//! Human-decision injection: run a plan prefix, apply the user's action,
//! replan, and classify how the new trajectory relates to the old one.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::pddl::{ActionId, GroundTask};
use crate::search::{
    apply_action, search_plan, trace_of, ApplyError, Diagnosis, LimitKind, Plan, SearchConfig, SearchResult, State,
    TraceError,
};
use crate::validate::{validate_plan, InvalidPlan};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepRef {
    pub id: ActionId,
    pub action: String,
    pub cost: Cost,
}

impl StepRef {
    pub fn of(task: &GroundTask, id: ActionId) -> StepRef {
        StepRef { id, action: task.action_label(id), cost: task.action_any(id).map(|a| a.cost).unwrap_or_default() }
    }

    pub fn list(task: &GroundTask, ids: &[ActionId]) -> Vec<StepRef> {
        ids.iter().map(|&a| StepRef::of(task, a)).collect()
    }
}

fn total(steps: &[StepRef]) -> Cost {
    steps.iter().map(|s| s.cost).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Variant {
    /// The new trajectory returns to the injection state or an earlier one.
    Undo { return_step: usize },
    /// The new trajectory rejoins the original at `original_suffix_start`
    /// after `k` steps beyond the injected one. `alpha` is the original
    /// segment from the injection point (its first step is the replaced
    /// action), `beta` the injected action followed by the `k` new steps.
    Reconvergence {
        k: usize,
        original_suffix_start: usize,
        #[serde(rename = "C_A")]
        c_a: Cost,
        #[serde(rename = "C_B")]
        c_b: Cost,
        alpha: Vec<StepRef>,
        beta: Vec<StepRef>,
    },
    /// The goal is reached without meeting any non-goal state of the
    /// original trajectory. Costs cover everything from the injection point.
    Divergence { alternative_plan: Vec<StepRef>, original_cost: Cost, alternative_cost: Cost },
    /// No plan exists from the state the injected action leads to.
    Failure { explored_states: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionOutcome {
    pub prefix_length: usize,
    pub injected: StepRef,
    /// The original action at the injection point, if the plan had one.
    pub replaced: Option<StepRef>,
    pub injection_state: State,
    #[serde(flatten)]
    pub variant: Variant,
    /// Continuation found after the injected action, if any.
    pub replanned: Option<Vec<StepRef>>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("{action} cannot be applied after step {prefix_length}")]
    NotApplicable { prefix_length: usize, action: String, diagnosis: Diagnosis },
    #[error("prefix length {prefix_length} exceeds plan length {len}")]
    PrefixTooLong { prefix_length: usize, len: usize },
    #[error("plan prefix is not executable: {0}")]
    PrefixInvalid(TraceError),
    #[error("unknown action id {0}")]
    UnknownAction(ActionId),
    #[error("replanning stopped at the {limit:?} limit after {explored_states} states")]
    ResourceLimit { explored_states: usize, limit: LimitKind },
}

/// Classifies the behaviour after injecting `injected` at `injection_index`.
///
/// `replanned` is the continuation from the state after the injected action,
/// or `None` when replanning proved the goal unreachable.
pub fn classify_outcome(
    task: &GroundTask,
    original_steps: &[ActionId],
    original_trace: &[State],
    injection_index: usize,
    injected: ActionId,
    replanned: Option<&Plan>,
    explored_states: usize,
) -> Variant {
    let Some(plan) = replanned else {
        return Variant::Failure { explored_states };
    };
    let i = injection_index;
    let r1 = apply_action(task, &original_trace[i], injected).expect("injected action applies");
    let new_trace = trace_of(task, &r1, plan).expect("replanned continuation applies");

    let mut index: HashMap<&State, Vec<usize>> = HashMap::new();
    for (n, s) in original_trace.iter().enumerate() {
        index.entry(s).or_default().push(n);
    }
    for (j, r) in new_trace.iter().enumerate() {
        let Some(hits) = index.get(r) else { continue };
        if let Some(&back) = hits.iter().filter(|&&n| n <= i).max() {
            return Variant::Undo { return_step: back };
        }
        if task.is_goal(r) {
            continue;
        }
        let m = *hits.iter().filter(|&&n| n > i).min().expect("hit after the injection point");
        let alpha = StepRef::list(task, &original_steps[i..m]);
        let mut beta = vec![StepRef::of(task, injected)];
        beta.extend(StepRef::list(task, &plan.steps[..j]));
        return Variant::Reconvergence {
            k: j,
            original_suffix_start: m,
            c_a: total(&alpha),
            c_b: total(&beta),
            alpha,
            beta,
        };
    }
    let mut alternative = vec![StepRef::of(task, injected)];
    alternative.extend(StepRef::list(task, &plan.steps));
    let original_cost = total(&StepRef::list(task, &original_steps[i.min(original_steps.len())..]));
    Variant::Divergence { original_cost, alternative_cost: total(&alternative), alternative_plan: alternative }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRequest {
    pub prefix_length: usize,
    pub action: ActionId,
    pub forbid_revisit: bool,
}

#[derive(Debug, Clone)]
struct Entry {
    request: InjectionRequest,
    outcome: InjectionOutcome,
    prev_plan: Plan,
    prev_state: State,
}

/// An original plan plus a stack of accepted injections. Each injection
/// applies to the plan as left by the previous one.
#[derive(Debug, Clone)]
pub struct ContrastiveSession {
    task: Arc<GroundTask>,
    original_plan: Plan,
    current_plan: Plan,
    current_state: State,
    stack: Vec<Entry>,
}

impl ContrastiveSession {
    pub fn new(task: Arc<GroundTask>, plan: Plan) -> Result<ContrastiveSession, InvalidPlan> {
        validate_plan(&task, &plan, &[]).into_result()?;
        let current_state = task.init().clone();
        Ok(ContrastiveSession {
            task,
            current_plan: plan.clone(),
            original_plan: plan,
            current_state,
            stack: Vec::new(),
        })
    }

    pub fn task(&self) -> &GroundTask {
        &self.task
    }

    pub fn original_plan(&self) -> &Plan {
        &self.original_plan
    }

    pub fn current_plan(&self) -> &Plan {
        &self.current_plan
    }

    /// State reached right after the most recent injected action (the
    /// initial state when nothing is injected).
    pub fn current_state(&self) -> &State {
        &self.current_state
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (&InjectionRequest, &InjectionOutcome)> {
        self.stack.iter().map(|e| (&e.request, &e.outcome))
    }

    /// Executes the first `prefix_length` steps of the current plan, applies
    /// `b`, and replans. With `forbid_revisit` the replanner may not enter
    /// the injection state or any state of the executed prefix.
    pub fn inject(
        &mut self,
        prefix_length: usize,
        b: ActionId,
        forbid_revisit: bool,
        cfg: &SearchConfig,
    ) -> Result<InjectionOutcome, InjectError> {
        let task = Arc::clone(&self.task);
        let steps = &self.current_plan.steps;
        if prefix_length > steps.len() {
            return Err(InjectError::PrefixTooLong { prefix_length, len: steps.len() });
        }
        let trace = trace_of(&task, task.init(), &self.current_plan).map_err(InjectError::PrefixInvalid)?;
        let s = &trace[prefix_length];
        let r1 = match apply_action(&task, s, b) {
            Ok(r) => r,
            Err(ApplyError::NotApplicable { action, diagnosis }) => {
                return Err(InjectError::NotApplicable { prefix_length, action, diagnosis })
            }
            Err(ApplyError::UnknownAction(a)) => return Err(InjectError::UnknownAction(a)),
        };
        let mut cfg = cfg.clone();
        if forbid_revisit {
            cfg.forbidden_states.extend(trace[..=prefix_length].iter().cloned());
        }
        let result = search_plan(&task, &r1, &cfg);
        let (replanned, explored) = match &result {
            SearchResult::PlanFound { plan, explored_states } => (Some(plan), *explored_states),
            SearchResult::Unsolvable { explored_states } => (None, *explored_states),
            SearchResult::ResourceLimit { explored_states, limit } => {
                return Err(InjectError::ResourceLimit { explored_states: *explored_states, limit: *limit })
            }
        };
        let variant = classify_outcome(&task, steps, &trace, prefix_length, b, replanned, explored);
        let replaced = steps.get(prefix_length).map(|&a| StepRef::of(&task, a));
        let injected = StepRef::of(&task, b);
        let blocked = cfg.forbidden_states.contains(&r1);
        let text = render(prefix_length, &injected, replaced.as_ref(), &variant, blocked);
        let outcome = InjectionOutcome {
            prefix_length,
            injected,
            replaced,
            injection_state: s.clone(),
            variant,
            replanned: replanned.map(|p| StepRef::list(&task, &p.steps)),
            text,
        };

        let mut next_steps = steps[..prefix_length].to_vec();
        next_steps.push(b);
        if let Some(p) = replanned {
            next_steps.extend(&p.steps);
        }
        let prev_plan = std::mem::replace(&mut self.current_plan, Plan::from_steps(&task, next_steps));
        let prev_state = std::mem::replace(&mut self.current_state, r1);
        self.stack.push(Entry {
            request: InjectionRequest { prefix_length, action: b, forbid_revisit },
            outcome: outcome.clone(),
            prev_plan,
            prev_state,
        });
        Ok(outcome)
    }

    /// Undoes the most recent injection.
    pub fn pop(&mut self) -> Option<InjectionOutcome> {
        let e = self.stack.pop()?;
        self.current_plan = e.prev_plan;
        self.current_state = e.prev_state;
        Some(e.outcome)
    }
}

fn compare(c_a: Cost, c_b: Cost) -> String {
    use std::cmp::Ordering::*;
    match c_b.cmp(&c_a) {
        Greater => format!("the original is cheaper by {}", c_b - c_a),
        Equal => "both cost the same".to_string(),
        Less => format!("the alternative is cheaper by {}", c_a - c_b),
    }
}

/// `blocked`: the injected action itself lands in a state replanning may not
/// enter.
fn render(i: usize, injected: &StepRef, replaced: Option<&StepRef>, v: &Variant, blocked: bool) -> String {
    let mut out = format!("injecting {} at step {i}", injected.action);
    if let Some(r) = replaced {
        let _ = write!(out, " instead of {}", r.action);
    }
    match v {
        Variant::Undo { return_step } => {
            let _ = write!(
                out,
                ": the replanned continuation returns to the state before step {return_step}, undoing the decision"
            );
        }
        Variant::Reconvergence { k, original_suffix_start, c_a, c_b, .. } => {
            let _ = write!(
                out,
                ": the plan rejoins the original before step {original_suffix_start} after {k} further step(s); \
                 original segment costs {c_a}, alternative segment costs {c_b}; {}",
                compare(*c_a, *c_b)
            );
        }
        Variant::Divergence { original_cost, alternative_cost, alternative_plan } => {
            let _ = write!(
                out,
                ": the plan never rejoins the original; the remaining {} step(s) cost {alternative_cost} against {original_cost}; {}",
                alternative_plan.len(),
                compare(*original_cost, *alternative_cost)
            );
        }
        Variant::Failure { .. } if blocked => {
            out.push_str(": it leads back to a state of the executed prefix, and revisits are forbidden");
        }
        Variant::Failure { explored_states } => {
            let _ =
                write!(out, ": no plan reaches the goal afterwards ({})", super::unsolvable_evidence(*explored_states));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{ground_task, parse_domain, parse_problem};
    use crate::search::parse_plan;

    // A corridor p0..p4 with reversible unit moves, a costly jump p1 -> p3,
    // a one-way exit p2 -> pit and a branch p1 -> q -> p4 with a flag.
    const D: &str = "(define (domain corridor) (:requirements :strips :typing :action-costs)
        (:types cell)
        (:predicates (at ?c - cell) (edge ?a ?b - cell) (jump ?a ?b - cell))
        (:functions (total-cost) - number)
        (:action move :parameters (?a ?b - cell) :precondition (and (at ?a) (edge ?a ?b))
          :effect (and (not (at ?a)) (at ?b) (increase (total-cost) 1)))
        (:action leap :parameters (?a ?b - cell) :precondition (and (at ?a) (jump ?a ?b))
          :effect (and (not (at ?a)) (at ?b) (increase (total-cost) 5))))";
    const P: &str = "(define (problem p) (:domain corridor) (:objects p0 p1 p2 p3 p4 pit q - cell)
        (:init (at p0) (edge p0 p1) (edge p1 p0) (edge p1 p2) (edge p2 p1) (edge p2 p3) (edge p3 p2)
               (edge p3 p4) (edge p4 p3) (jump p1 p3) (jump p2 pit) (edge p1 q) (jump q p4))
        (:goal (at p4)))";

    fn session() -> ContrastiveSession {
        let d = parse_domain(D).unwrap();
        let p = parse_problem(P, &d).unwrap();
        let mut t = ground_task(&d, &p).unwrap();
        let plan = parse_plan("(move p0 p1)\n(move p1 p2)\n(move p2 p3)\n(move p3 p4)", &mut t).unwrap();
        ContrastiveSession::new(Arc::new(t), plan).unwrap()
    }

    fn act(s: &ContrastiveSession, text: &str) -> ActionId {
        let inner = text.trim_matches(|c| c == '(' || c == ')');
        let mut parts = inner.split_whitespace();
        let name = parts.next().unwrap();
        let args: Vec<String> = parts.map(String::from).collect();
        s.task().find_action(name, &args).unwrap()
    }

    #[test]
    fn self_injection_reconverges_immediately() {
        let mut s = session();
        let a = act(&s, "(move p1 p2)");
        let o = s.inject(1, a, true, &SearchConfig::oracle()).unwrap();
        match o.variant {
            Variant::Reconvergence { k, original_suffix_start, c_a, c_b, .. } => {
                assert_eq!((k, original_suffix_start), (0, 2));
                assert_eq!((c_a, c_b), (Cost::ONE, Cost::ONE));
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn leap_reconverges_with_costs() {
        let mut s = session();
        let b = act(&s, "(leap p1 p3)");
        let o = s.inject(1, b, true, &SearchConfig::oracle()).unwrap();
        match &o.variant {
            Variant::Reconvergence { k, original_suffix_start, c_a, c_b, alpha, beta } => {
                assert_eq!((*k, *original_suffix_start), (0, 3));
                assert_eq!(alpha.len(), 2);
                assert_eq!(beta.len(), 1);
                assert_eq!((*c_a, *c_b), (Cost::integer(2), Cost::integer(5)));
            }
            v => panic!("{v:?}"),
        }
        assert!(o.text.contains("the original is cheaper by 3"), "{}", o.text);
        assert_eq!(s.current_plan().len(), 3);
        s.pop().unwrap();
        assert_eq!(s.current_state(), s.task().init());
        assert_eq!(s.current_plan(), s.original_plan());
    }

    #[test]
    fn undo_only_without_revisit_ban() {
        let mut s = session();
        let back = act(&s, "(move p1 p0)");
        let o = s.inject(1, back, false, &SearchConfig::oracle()).unwrap();
        assert_eq!(o.variant, Variant::Undo { return_step: 0 });
        s.pop();
        // Banned from p0 and p1: stuck at p0.
        let o = s.inject(1, back, true, &SearchConfig::oracle()).unwrap();
        assert!(matches!(o.variant, Variant::Failure { .. }));
    }

    #[test]
    fn divergence_and_failure() {
        let mut s = session();
        let side = act(&s, "(move p1 q)");
        let o = s.inject(1, side, true, &SearchConfig::oracle()).unwrap();
        match o.variant {
            Variant::Divergence { original_cost, alternative_cost, ref alternative_plan } => {
                assert_eq!(alternative_plan.len(), 2);
                assert_eq!((original_cost, alternative_cost), (Cost::integer(3), Cost::integer(6)));
            }
            v => panic!("{v:?}"),
        }
        s.pop();
        let pit = act(&s, "(leap p2 pit)");
        let o = s.inject(2, pit, false, &SearchConfig::oracle()).unwrap();
        assert!(matches!(o.variant, Variant::Failure { .. }));
    }

    #[test]
    fn inapplicable_injection_is_diagnosed() {
        let mut s = session();
        let b = act(&s, "(move p3 p4)");
        match s.inject(0, b, true, &SearchConfig::oracle()).unwrap_err() {
            InjectError::NotApplicable { diagnosis, .. } => {
                assert_eq!(diagnosis.missing_pos.iter().map(|a| a.to_string()).collect::<Vec<_>>(), vec!["(at p3)"]);
            }
            e => panic!("{e:?}"),
        }
        assert_eq!(s.depth(), 0);
        assert!(matches!(s.inject(9, b, true, &SearchConfig::oracle()), Err(InjectError::PrefixTooLong { .. })));
    }

    #[test]
    fn outcome_json_shape() {
        let mut s = session();
        let b = act(&s, "(leap p1 p3)");
        let o = s.inject(1, b, true, &SearchConfig::oracle()).unwrap();
        let v = serde_json::to_value(&o).unwrap();
        assert_eq!(v["variant"], "reconvergence");
        assert_eq!(v["C_A"], "2");
        assert_eq!(v["C_B"], "5");
        assert_eq!(v["k"], 0);
        let back: InjectionOutcome = serde_json::from_value(v).unwrap();
        assert_eq!(back, o);
    }
}
