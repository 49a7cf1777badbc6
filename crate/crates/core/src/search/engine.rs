use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::heuristic::{Heuristic, Relaxation};
use super::{Plan, State};
use crate::cost::Cost;
use crate::pddl::{ActionId, Atom, GroundTask, PropId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    AStar,
    GreedyBestFirst,
    /// Uniform-cost search; with [`Heuristic::Zero`] this is the complete,
    /// cost-optimal oracle configuration.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub heuristic: Heuristic,
    pub forbidden_states: HashSet<State>,
    pub forbidden_actions: BTreeSet<ActionId>,
    pub node_limit: usize,
    pub time_limit: Duration,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: Strategy::AStar,
            heuristic: Heuristic::HMax,
            forbidden_states: HashSet::new(),
            forbidden_actions: BTreeSet::new(),
            node_limit: 1_000_000,
            time_limit: Duration::from_secs(60),
        }
    }
}

impl SearchConfig {
    pub fn oracle() -> Self {
        SearchConfig { strategy: Strategy::Uniform, heuristic: Heuristic::Zero, ..Default::default() }
    }

    pub fn with(strategy: Strategy, heuristic: Heuristic) -> Self {
        SearchConfig { strategy, heuristic, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitKind {
    Nodes,
    Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchResult {
    PlanFound {
        plan: Plan,
        explored_states: usize,
    },
    /// The open list was exhausted: no plan exists under the configured
    /// constraints. `explored_states` is the size of the exhausted region.
    Unsolvable {
        explored_states: usize,
    },
    ResourceLimit {
        explored_states: usize,
        limit: LimitKind,
    },
}

impl SearchResult {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            SearchResult::PlanFound { plan, .. } => Some(plan),
            _ => None,
        }
    }

    pub fn explored_states(&self) -> usize {
        match self {
            SearchResult::PlanFound { explored_states, .. }
            | SearchResult::Unsolvable { explored_states }
            | SearchResult::ResourceLimit { explored_states, .. } => *explored_states,
        }
    }
}

/// The unsatisfied preconditions of an action in a state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnosis {
    pub missing_pos: Vec<Atom>,
    pub violated_neg: Vec<Atom>,
}

impl Diagnosis {
    pub fn is_empty(&self) -> bool {
        self.missing_pos.is_empty() && self.violated_neg.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("action {action} is not applicable: missing {missing:?}, violated {violated:?}", missing = .diagnosis.missing_pos, violated = .diagnosis.violated_neg)]
    NotApplicable { action: String, diagnosis: Diagnosis },
    #[error("unknown action id {0}")]
    UnknownAction(ActionId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("step {step}: {source}")]
pub struct TraceError {
    pub step: usize,
    pub source: ApplyError,
}

pub(crate) fn diagnose_props(task: &GroundTask, s: &State, pre_pos: &[PropId], pre_neg: &[PropId]) -> Diagnosis {
    Diagnosis {
        missing_pos: pre_pos.iter().filter(|&&p| !s.contains(p)).map(|&p| task.atom(p).clone()).collect(),
        violated_neg: pre_neg.iter().filter(|&&p| s.contains(p)).map(|&p| task.atom(p).clone()).collect(),
    }
}

/// STRIPS successor: `(s \ del) ∪ add`. Works on any assigned action id,
/// retired ones included; availability is the caller's concern.
pub fn apply_action(task: &GroundTask, s: &State, a: ActionId) -> Result<State, ApplyError> {
    let act = task.action_any(a).ok_or(ApplyError::UnknownAction(a))?;
    if !(s.contains_all(&act.pre_pos) && s.contains_none(&act.pre_neg)) {
        return Err(ApplyError::NotApplicable {
            action: act.signature(),
            diagnosis: diagnose_props(task, s, &act.pre_pos, &act.pre_neg),
        });
    }
    Ok(successor(task, s, a))
}

fn successor(task: &GroundTask, s: &State, a: ActionId) -> State {
    let act = task.action_any(a).expect("valid action id");
    let mut next = s.clone();
    for &d in &act.del {
        next.remove(d);
    }
    for &p in &act.add {
        next.insert(p);
    }
    next
}

pub fn trace_of(task: &GroundTask, start: &State, plan: &Plan) -> Result<Vec<State>, TraceError> {
    let mut out = Vec::with_capacity(plan.len() + 1);
    out.push(start.clone());
    for (step, &a) in plan.steps.iter().enumerate() {
        let next = apply_action(task, out.last().unwrap(), a).map_err(|source| TraceError { step, source })?;
        out.push(next);
    }
    Ok(out)
}

struct Node {
    state: State,
    parent: Option<usize>,
    action: Option<ActionId>,
}

/// Open-list key: lower priority first, then lower g, then lower action id,
/// then insertion order.
type Key = Reverse<(Cost, Cost, Option<ActionId>, u64, usize)>;

/// Forward state-space search from `start` to the task's goal.
///
/// States in `cfg.forbidden_states` are never entered (a forbidden start
/// yields `Unsolvable`), and neither forbidden nor retired actions are used.
pub fn search_plan(task: &GroundTask, start: &State, cfg: &SearchConfig) -> SearchResult {
    if cfg.forbidden_states.contains(start) {
        return SearchResult::Unsolvable { explored_states: 0 };
    }
    let began = Instant::now();
    let applicable: Vec<(ActionId, &crate::pddl::GroundAction)> =
        task.live_actions().filter(|(id, _)| !cfg.forbidden_actions.contains(id)).collect();
    let relax = Relaxation::new(task, cfg.heuristic, &cfg.forbidden_actions);

    let priority = |g: Cost, h: Cost| match cfg.strategy {
        Strategy::AStar => g + h,
        Strategy::GreedyBestFirst => h,
        Strategy::Uniform => g,
    };

    let mut nodes: Vec<Node> = Vec::new();
    // Best g per generated state. Greedy search only uses it as a seen set;
    // the optimal strategies reopen a state when a strictly cheaper path
    // turns up, so admissible but inconsistent heuristics stay optimal.
    let mut best_g: HashMap<State, Cost> = HashMap::new();
    let mut open: BinaryHeap<Key> = BinaryHeap::new();
    let mut seq = 0u64;

    let Some(h0) = relax.eval(start) else {
        return SearchResult::Unsolvable { explored_states: 0 };
    };
    nodes.push(Node { state: start.clone(), parent: None, action: None });
    best_g.insert(start.clone(), Cost::ZERO);
    open.push(Reverse((priority(Cost::ZERO, h0), Cost::ZERO, None, seq, 0)));

    let mut expanded = 0usize;
    let greedy = cfg.strategy == Strategy::GreedyBestFirst;
    while let Some(Reverse((_, g, _, _, idx))) = open.pop() {
        if !greedy && best_g[&nodes[idx].state] < g {
            continue;
        }
        let state = nodes[idx].state.clone();
        if task.is_goal(&state) {
            let mut steps = Vec::new();
            let mut cur = idx;
            while let Some(a) = nodes[cur].action {
                steps.push(a);
                cur = nodes[cur].parent.expect("non-root node has a parent");
            }
            steps.reverse();
            return SearchResult::PlanFound { plan: Plan::from_steps(task, steps), explored_states: expanded };
        }
        expanded += 1;
        if expanded > cfg.node_limit {
            return SearchResult::ResourceLimit { explored_states: expanded, limit: LimitKind::Nodes };
        }
        if expanded.is_multiple_of(1024) && began.elapsed() > cfg.time_limit {
            return SearchResult::ResourceLimit { explored_states: expanded, limit: LimitKind::Time };
        }
        for &(id, act) in &applicable {
            if !(state.contains_all(&act.pre_pos) && state.contains_none(&act.pre_neg)) {
                continue;
            }
            let next = successor(task, &state, id);
            if cfg.forbidden_states.contains(&next) {
                continue;
            }
            let ng = g + act.cost;
            match best_g.get(&next) {
                Some(_) if greedy => continue,
                Some(&b) if ng >= b => continue,
                _ => {}
            }
            let Some(h) = relax.eval(&next) else { continue };
            best_g.insert(next.clone(), ng);
            seq += 1;
            let ni = nodes.len();
            nodes.push(Node { state: next, parent: Some(idx), action: Some(id) });
            open.push(Reverse((priority(ng, h), ng, Some(id), seq, ni)));
        }
    }
    SearchResult::Unsolvable { explored_states: expanded }
}
