//! Delete-relaxation heuristics. Negative preconditions and negative goals
//! are ignored by the relaxation.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::State;
use crate::cost::Cost;
use crate::pddl::{ActionId, GroundTask, PropId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    HAdd,
    HMax,
    GoalCount,
    Zero,
}

/// Precomputed relaxed-planning-graph index for one task and one set of
/// forbidden actions.
pub(crate) struct Relaxation {
    kind: Heuristic,
    actions: Vec<(usize, Cost)>,
    pre_count: Vec<usize>,
    consumers: Vec<Vec<usize>>,
    no_pre: Vec<usize>,
    achieves: Vec<Vec<PropId>>,
    goal_pos: Vec<PropId>,
    goal_neg: Vec<PropId>,
    num_props: usize,
}

impl Relaxation {
    pub fn new(task: &GroundTask, kind: Heuristic, forbidden: &BTreeSet<ActionId>) -> Relaxation {
        let num_props = task.num_props();
        let mut actions = Vec::new();
        let mut pre_count = Vec::new();
        let mut consumers = vec![Vec::new(); num_props];
        let mut no_pre = Vec::new();
        let mut achieves = Vec::new();
        if matches!(kind, Heuristic::HAdd | Heuristic::HMax) {
            for (id, a) in task.live_actions() {
                if forbidden.contains(&id) {
                    continue;
                }
                let idx = actions.len();
                actions.push((id, a.cost));
                pre_count.push(a.pre_pos.len());
                for &p in &a.pre_pos {
                    consumers[p].push(idx);
                }
                if a.pre_pos.is_empty() {
                    no_pre.push(idx);
                }
                achieves.push(a.add.clone());
            }
        }
        Relaxation {
            kind,
            actions,
            pre_count,
            consumers,
            no_pre,
            achieves,
            goal_pos: task.goal_pos().to_vec(),
            goal_neg: task.goal_neg().to_vec(),
            num_props,
        }
    }

    /// Heuristic value, or `None` when the goal is relaxed-unreachable.
    pub fn eval(&self, s: &State) -> Option<Cost> {
        match self.kind {
            Heuristic::Zero => Some(Cost::ZERO),
            Heuristic::GoalCount => {
                let unmet = self.goal_pos.iter().filter(|&&p| !s.contains(p)).count()
                    + self.goal_neg.iter().filter(|&&p| s.contains(p)).count();
                Some(Cost::integer(unmet as i64))
            }
            Heuristic::HAdd | Heuristic::HMax => self.relaxed(s),
        }
    }

    fn combine(&self, acc: Cost, v: Cost) -> Cost {
        if self.kind == Heuristic::HMax {
            acc.max(v)
        } else {
            acc + v
        }
    }

    fn relaxed(&self, s: &State) -> Option<Cost> {
        let mut cost: Vec<Option<Cost>> = vec![None; self.num_props];
        let mut remaining = self.pre_count.clone();
        let mut acc = vec![Cost::ZERO; self.actions.len()];
        let mut heap = BinaryHeap::new();
        for p in s.iter() {
            if p < self.num_props {
                cost[p] = Some(Cost::ZERO);
                heap.push(Reverse((Cost::ZERO, p)));
            }
        }
        let fire =
            |a: usize, acc: &[Cost], cost: &mut [Option<Cost>], heap: &mut BinaryHeap<Reverse<(Cost, PropId)>>| {
                let v = acc[a] + self.actions[a].1;
                for &q in &self.achieves[a] {
                    if cost[q].is_none_or(|c| v < c) {
                        cost[q] = Some(v);
                        heap.push(Reverse((v, q)));
                    }
                }
            };
        for &a in &self.no_pre {
            fire(a, &acc, &mut cost, &mut heap);
        }
        let mut done = vec![false; self.num_props];
        while let Some(Reverse((c, p))) = heap.pop() {
            if done[p] || cost[p] != Some(c) {
                continue;
            }
            done[p] = true;
            for &a in &self.consumers[p] {
                acc[a] = self.combine(acc[a], c);
                remaining[a] -= 1;
                if remaining[a] == 0 {
                    fire(a, &acc, &mut cost, &mut heap);
                }
            }
        }
        let mut h = Cost::ZERO;
        for &g in &self.goal_pos {
            h = self.combine(h, cost[g]?);
        }
        Some(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{ground_task, parse_domain, parse_problem};

    // Chain a -> b -> c with costs 1, 2 plus a shortcut a -> c of cost 5.
    const D: &str = "(define (domain chain) (:requirements :strips :action-costs)
        (:predicates (a) (b) (c) (d)) (:functions (total-cost) - number)
        (:action ab :parameters () :precondition (a) :effect (and (b) (increase (total-cost) 1)))
        (:action bc :parameters () :precondition (b) :effect (and (c) (increase (total-cost) 2)))
        (:action ac :parameters () :precondition (a) :effect (and (c) (increase (total-cost) 5)))
        (:action ad :parameters () :precondition (a) :effect (and (d) (increase (total-cost) 4))))";

    fn eval(kind: Heuristic, goal: &str) -> Option<Cost> {
        let d = parse_domain(D).unwrap();
        let p = parse_problem(&format!("(define (problem p) (:domain chain) (:init (a)) (:goal {goal}))"), &d).unwrap();
        let t = ground_task(&d, &p).unwrap();
        Relaxation::new(&t, kind, &BTreeSet::new()).eval(t.init())
    }

    #[test]
    fn hmax_and_hadd_values() {
        assert_eq!(eval(Heuristic::HMax, "(c)"), Some(Cost::integer(3)));
        assert_eq!(eval(Heuristic::HAdd, "(and (c) (d))"), Some(Cost::integer(7)));
        assert_eq!(eval(Heuristic::HMax, "(and (c) (d))"), Some(Cost::integer(4)));
        assert_eq!(eval(Heuristic::GoalCount, "(and (c) (d) (a))"), Some(Cost::integer(2)));
    }

    #[test]
    fn unreachable_goal_is_dead_end() {
        let d = parse_domain(D).unwrap();
        let p = parse_problem("(define (problem p) (:domain chain) (:init (b)) (:goal (d)))", &d).unwrap();
        let t = ground_task(&d, &p).unwrap();
        assert_eq!(Relaxation::new(&t, Heuristic::HAdd, &BTreeSet::new()).eval(t.init()), None);
    }
}
