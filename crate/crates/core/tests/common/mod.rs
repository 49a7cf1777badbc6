//! Test-side oracles. Nothing here goes through the crate's grounder,
//! search or validator: tasks are generated as plain data, written out as
//! PDDL for the crate, and solved again by brute force for comparison.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt::Write;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use whyplan_core::Cost;

pub mod text;

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn read_fixture(name: &str, file: &str) -> String {
    let p = fixture_dir(name).join(file);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// `a` is the root type, `b` a subtype of it.
pub const TYPES: [&str; 2] = ["a", "b"];

pub fn subtype(t: usize, of: usize) -> bool {
    t == of || (t == 1 && of == 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    pub pred: usize,
    /// Parameter indices inside a schema, object indices inside a problem.
    pub args: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GenSchema {
    pub params: Vec<usize>,
    pub pre_pos: Vec<Lit>,
    pub pre_neg: Vec<Lit>,
    pub add: Vec<Lit>,
    pub del: Vec<Lit>,
    pub cost: (i64, i64),
}

#[derive(Debug, Clone)]
pub struct GenTask {
    /// Argument types per predicate.
    pub preds: Vec<Vec<usize>>,
    pub objects: Vec<usize>,
    pub schemas: Vec<GenSchema>,
    pub init: BTreeSet<Lit>,
    pub goal_pos: Vec<Lit>,
    pub goal_neg: Vec<Lit>,
}

fn tuples(n: usize, arity: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..n).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

fn random_lit(rng: &mut ChaCha8Rng, preds: &[Vec<usize>], params: &[usize], allowed: &[usize]) -> Option<Lit> {
    let pred = allowed[rng.random_range(0..allowed.len())];
    let mut args = Vec::new();
    for &at in &preds[pred] {
        let fits: Vec<usize> = (0..params.len()).filter(|&v| subtype(params[v], at)).collect();
        if fits.is_empty() {
            return None;
        }
        args.push(fits[rng.random_range(0..fits.len())]);
    }
    Some(Lit { pred, args })
}

fn random_lits(rng: &mut ChaCha8Rng, k: usize, preds: &[Vec<usize>], params: &[usize], allowed: &[usize]) -> Vec<Lit> {
    let mut v: Vec<Lit> = (0..k).filter_map(|_| random_lit(rng, preds, params, allowed)).collect();
    v.sort();
    v.dedup();
    v
}

impl GenTask {
    pub fn random(rng: &mut ChaCha8Rng) -> GenTask {
        let n_preds = rng.random_range(2..=4);
        let preds: Vec<Vec<usize>> = (0..n_preds)
            .map(|_| (0..[0, 1, 1, 2, 2][rng.random_range(0..5)]).map(|_| rng.random_range(0..2)).collect())
            .collect();
        let mut objects: Vec<usize> = (0..rng.random_range(2..=4)).map(|_| rng.random_range(0..2)).collect();
        objects[0] = 1;
        // One predicate is kept out of every effect so it is static.
        let static_pred = rng.random_range(0..n_preds);
        let all: Vec<usize> = (0..n_preds).collect();
        let fluent: Vec<usize> = all.iter().copied().filter(|&p| p != static_pred).collect();
        let mut schemas = Vec::new();
        for _ in 0..rng.random_range(3..=6) {
            let params: Vec<usize> =
                (0..[0, 1, 1, 2, 2][rng.random_range(0..5)]).map(|_| rng.random_range(0..2)).collect();
            let k = rng.random_range(0..=1);
            let mut pre_pos = random_lits(rng, k, &preds, &params, &fluent);
            if rng.random_bool(0.6) {
                pre_pos.extend(random_lit(rng, &preds, &params, &[static_pred]));
            }
            let k = usize::from(rng.random_bool(0.3));
            let pre_neg = random_lits(rng, k, &preds, &params, &all);
            let k = rng.random_range(1..=3);
            let add = random_lits(rng, k, &preds, &params, &fluent);
            let k = rng.random_range(0..=1);
            let del = random_lits(rng, k, &preds, &params, &fluent);
            let cost = [(1, 1), (2, 1), (3, 1), (1, 2)][rng.random_range(0..4)];
            schemas.push(GenSchema { params, pre_pos, pre_neg, add, del, cost });
        }
        let mut task =
            GenTask { preds, objects, schemas, init: BTreeSet::new(), goal_pos: Vec::new(), goal_neg: Vec::new() };
        let atoms = task.all_atoms();
        let statics = task.statics();
        task.init = atoms
            .iter()
            .filter(|a| rng.random_bool(if statics.contains(&a.pred) { 0.6 } else { 0.25 }))
            .cloned()
            .collect();
        let fluent: Vec<&Lit> = atoms.iter().filter(|a| !statics.contains(&a.pred)).collect();
        if !fluent.is_empty() {
            for _ in 0..rng.random_range(1..=3) {
                // Goals mostly ask for a change from the initial state.
                let a = fluent[rng.random_range(0..fluent.len())].clone();
                if task.init.contains(&a) == rng.random_bool(0.1) {
                    task.goal_pos.push(a);
                } else {
                    task.goal_neg.push(a);
                }
            }
        }
        task.goal_pos.sort();
        task.goal_pos.dedup();
        task.goal_neg.sort();
        task.goal_neg.dedup();
        task.goal_neg.retain(|a| !task.goal_pos.contains(a));
        task
    }

    /// Replaces the goal with up to three literals on which a reachable
    /// state `target` differs from the initial state.
    pub fn retarget(&mut self, oracle: &Oracle, target: u128, rng: &mut ChaCha8Rng) {
        let diff: Vec<usize> = (0..oracle.atoms.len()).filter(|&i| (target ^ oracle.init) >> i & 1 == 1).collect();
        self.goal_pos.clear();
        self.goal_neg.clear();
        for _ in 0..rng.random_range(2..=4) {
            let i = diff[rng.random_range(0..diff.len())];
            let atom = oracle.atoms[i].clone();
            if target >> i & 1 == 1 {
                self.goal_pos.push(atom);
            } else {
                self.goal_neg.push(atom);
            }
        }
        self.goal_pos.sort();
        self.goal_pos.dedup();
        self.goal_neg.sort();
        self.goal_neg.dedup();
    }

    /// Every type-correct ground atom.
    pub fn all_atoms(&self) -> Vec<Lit> {
        let mut out = Vec::new();
        for (p, tys) in self.preds.iter().enumerate() {
            for args in tuples(self.objects.len(), tys.len()) {
                if args.iter().zip(tys).all(|(&o, &t)| subtype(self.objects[o], t)) {
                    out.push(Lit { pred: p, args });
                }
            }
        }
        out
    }

    pub fn statics(&self) -> BTreeSet<usize> {
        let fluent: BTreeSet<usize> =
            self.schemas.iter().flat_map(|s| s.add.iter().chain(&s.del)).map(|l| l.pred).collect();
        (0..self.preds.len()).filter(|p| !fluent.contains(p)).collect()
    }

    pub fn atom_text(&self, l: &Lit) -> String {
        let mut s = format!("(p{}", l.pred);
        for &o in &l.args {
            let _ = write!(s, " o{o}");
        }
        s.push(')');
        s
    }

    pub fn domain_pddl(&self) -> String {
        let mut s = String::from(
            "(define (domain rnd)\n  (:requirements :strips :typing :negative-preconditions :action-costs)\n  (:types a - object b - a)\n  (:predicates",
        );
        for (i, tys) in self.preds.iter().enumerate() {
            let _ = write!(s, " (p{i}");
            for (k, &t) in tys.iter().enumerate() {
                let _ = write!(s, " ?x{k} - {}", TYPES[t]);
            }
            s.push(')');
        }
        s.push_str(")\n  (:functions (total-cost) - number)\n");
        for (i, sc) in self.schemas.iter().enumerate() {
            let lit = |l: &Lit| {
                let mut t = format!("(p{}", l.pred);
                for &v in &l.args {
                    let _ = write!(t, " ?v{v}");
                }
                t.push(')');
                t
            };
            let _ = write!(s, "  (:action op{i} :parameters (");
            for (v, &t) in sc.params.iter().enumerate() {
                let _ = write!(s, "?v{v} - {} ", TYPES[t]);
            }
            s.push_str(")\n    :precondition (and");
            for l in &sc.pre_pos {
                let _ = write!(s, " {}", lit(l));
            }
            for l in &sc.pre_neg {
                let _ = write!(s, " (not {})", lit(l));
            }
            s.push_str(")\n    :effect (and");
            for l in &sc.add {
                let _ = write!(s, " {}", lit(l));
            }
            for l in &sc.del {
                let _ = write!(s, " (not {})", lit(l));
            }
            let (n, d) = sc.cost;
            let c = if d == 1 { n.to_string() } else { format!("{}", n as f64 / d as f64) };
            let _ = writeln!(s, " (increase (total-cost) {c})))");
        }
        s.push(')');
        s
    }

    pub fn problem_pddl(&self) -> String {
        let mut s = String::from("(define (problem rp) (:domain rnd)\n  (:objects");
        for (i, &t) in self.objects.iter().enumerate() {
            let _ = write!(s, " o{i} - {}", TYPES[t]);
        }
        s.push_str(")\n  (:init");
        for l in &self.init {
            let _ = write!(s, " {}", self.atom_text(l));
        }
        s.push_str(")\n  (:goal (and");
        for l in &self.goal_pos {
            let _ = write!(s, " {}", self.atom_text(l));
        }
        for l in &self.goal_neg {
            let _ = write!(s, " (not {})", self.atom_text(l));
        }
        s.push_str("))\n  (:metric minimize (total-cost)))");
        s
    }
}

#[derive(Debug, Clone)]
pub struct OracleOp {
    pub label: String,
    pub pre_pos: u128,
    pub pre_neg: u128,
    pub add: u128,
    pub del: u128,
    pub cost: Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimVerdict {
    Valid,
    /// The step at this index has an unmet precondition.
    Precondition(usize),
    GoalUnsatisfied,
}

/// Naive grounding of a generated task: every type-correct instantiation,
/// states as bitmasks over every type-correct atom.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub atoms: Vec<Lit>,
    pub texts: Vec<String>,
    index: HashMap<Lit, usize>,
    pub ops: Vec<OracleOp>,
    by_label: HashMap<String, usize>,
    pub init: u128,
    pub goal_pos: u128,
    pub goal_neg: u128,
    statics: BTreeSet<usize>,
}

impl Oracle {
    pub fn new(g: &GenTask) -> Oracle {
        let atoms = g.all_atoms();
        assert!(atoms.len() <= 128, "too many atoms for the oracle");
        let index: HashMap<Lit, usize> = atoms.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let texts = atoms.iter().map(|a| g.atom_text(a)).collect();
        let mask = |ls: &[Lit], binding: &[usize]| -> u128 {
            ls.iter()
                .map(|l| {
                    let ground = Lit { pred: l.pred, args: l.args.iter().map(|&v| binding[v]).collect() };
                    1u128 << index[&ground]
                })
                .fold(0, |a, b| a | b)
        };
        let mut ops = Vec::new();
        for (i, sc) in g.schemas.iter().enumerate() {
            for binding in tuples(g.objects.len(), sc.params.len()) {
                if !binding.iter().zip(&sc.params).all(|(&o, &t)| subtype(g.objects[o], t)) {
                    continue;
                }
                let mut label = format!("(op{i}");
                for &o in &binding {
                    let _ = write!(label, " o{o}");
                }
                label.push(')');
                ops.push(OracleOp {
                    label,
                    pre_pos: mask(&sc.pre_pos, &binding),
                    pre_neg: mask(&sc.pre_neg, &binding),
                    add: mask(&sc.add, &binding),
                    del: mask(&sc.del, &binding),
                    cost: Cost::new(sc.cost.0, sc.cost.1),
                });
            }
        }
        let by_label = ops.iter().enumerate().map(|(i, o)| (o.label.clone(), i)).collect();
        let set = |ls: &[Lit]| ls.iter().map(|l| 1u128 << index[l]).fold(0, |a, b| a | b);
        let init = set(&g.init.iter().cloned().collect::<Vec<_>>());
        Oracle {
            goal_pos: set(&g.goal_pos),
            goal_neg: set(&g.goal_neg),
            init,
            atoms,
            texts,
            index,
            ops,
            by_label,
            statics: g.statics(),
        }
    }

    pub fn applicable(&self, s: u128, op: &OracleOp) -> bool {
        s & op.pre_pos == op.pre_pos && s & op.pre_neg == 0
    }

    /// Deletes first, then adds.
    pub fn apply(&self, s: u128, op: &OracleOp) -> u128 {
        (s & !op.del) | op.add
    }

    pub fn is_goal(&self, s: u128) -> bool {
        s & self.goal_pos == self.goal_pos && s & self.goal_neg == 0
    }

    pub fn op(&self, label: &str) -> Option<&OracleOp> {
        self.by_label.get(label).map(|&i| &self.ops[i])
    }

    pub fn state_texts(&self, s: u128) -> BTreeSet<String> {
        (0..self.atoms.len()).filter(|&i| s >> i & 1 == 1).map(|i| self.texts[i].clone()).collect()
    }

    /// Uniform-cost search. `Err` when more than `cap` states are reached.
    pub fn optimal_cost(&self, cap: usize) -> Result<Option<Cost>, usize> {
        let mut best: HashMap<u128, Cost> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(self.init, Cost::ZERO);
        heap.push(Reverse((Cost::ZERO, self.init)));
        let mut closed = HashSet::new();
        while let Some(Reverse((g, s))) = heap.pop() {
            if !closed.insert(s) {
                continue;
            }
            if self.is_goal(s) {
                return Ok(Some(g));
            }
            for op in self.ops.iter().filter(|o| self.applicable(s, o)) {
                let t = self.apply(s, op);
                let c = g + op.cost;
                if best.get(&t).is_none_or(|&b| c < b) {
                    best.insert(t, c);
                    if best.len() > cap {
                        return Err(best.len());
                    }
                    heap.push(Reverse((c, t)));
                }
            }
        }
        Ok(None)
    }

    /// Breadth-first reachable set, or `None` past `cap` states.
    pub fn reachable(&self, cap: usize) -> Option<HashSet<u128>> {
        self.depths(cap).map(|d| d.into_keys().collect())
    }

    /// Reachable states with their breadth-first depth.
    pub fn depths(&self, cap: usize) -> Option<HashMap<u128, usize>> {
        let mut seen = HashMap::from([(self.init, 0)]);
        let mut queue = VecDeque::from([self.init]);
        while let Some(s) = queue.pop_front() {
            let d = seen[&s];
            for op in self.ops.iter().filter(|o| self.applicable(s, o)) {
                let t = self.apply(s, op);
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(t) {
                    e.insert(d + 1);
                    if seen.len() > cap {
                        return None;
                    }
                    queue.push_back(t);
                }
            }
        }
        Some(seen)
    }

    /// Executes the labelled steps from the initial state.
    pub fn simulate(&self, labels: &[String]) -> SimVerdict {
        let mut s = self.init;
        for (i, l) in labels.iter().enumerate() {
            match self.op(l) {
                Some(op) if self.applicable(s, op) => s = self.apply(s, op),
                _ => return SimVerdict::Precondition(i),
            }
        }
        if self.is_goal(s) {
            SimVerdict::Valid
        } else {
            SimVerdict::GoalUnsatisfied
        }
    }

    /// Static initial facts some step requires, and the objects in them.
    pub fn filter(&self, labels: &[String]) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut facts = BTreeSet::new();
        let mut objects = BTreeSet::new();
        for l in labels {
            let op = self.op(l).expect("plan step");
            for i in 0..self.atoms.len() {
                if op.pre_pos >> i & 1 == 1 && self.init >> i & 1 == 1 && self.statics.contains(&self.atoms[i].pred) {
                    facts.insert(self.texts[i].clone());
                    objects.extend(self.atoms[i].args.iter().map(|o| format!("o{o}")));
                }
            }
        }
        (facts, objects)
    }
}

/// Uniform-cost search straight over a ground task's action table, without
/// the crate's search engine. States are sorted proposition lists.
pub fn ground_optimal_cost(task: &whyplan_core::pddl::GroundTask, cap: usize) -> Result<Option<Cost>, usize> {
    let start: Vec<usize> = task.init().iter().collect();
    ground_search(task, &start, cap).map(|(c, _)| c)
}

/// Uniform-cost search from `start`; also returns how many states were
/// closed, which is every reachable state when no plan exists.
pub fn ground_search(
    task: &whyplan_core::pddl::GroundTask,
    start: &[usize],
    cap: usize,
) -> Result<(Option<Cost>, usize), usize> {
    let start = start.to_vec();
    let goal = |s: &BTreeSet<usize>| {
        task.goal_pos().iter().all(|p| s.contains(p)) && !task.goal_neg().iter().any(|p| s.contains(p))
    };
    let mut best: HashMap<Vec<usize>, Cost> = HashMap::from([(start.clone(), Cost::ZERO)]);
    let mut heap = BinaryHeap::from([Reverse((Cost::ZERO, start))]);
    let mut closed = HashSet::new();
    while let Some(Reverse((g, s))) = heap.pop() {
        if !closed.insert(s.clone()) {
            continue;
        }
        let set: BTreeSet<usize> = s.iter().copied().collect();
        if goal(&set) {
            return Ok((Some(g), closed.len()));
        }
        for (_, a) in task.live_actions() {
            if let Some(t) = ground_apply(a, &set) {
                let t: Vec<usize> = t.into_iter().collect();
                let c = g + a.cost;
                if best.get(&t).is_none_or(|&b| c < b) {
                    best.insert(t.clone(), c);
                    if best.len() > cap {
                        return Err(best.len());
                    }
                    heap.push(Reverse((c, t)));
                }
            }
        }
    }
    Ok((None, closed.len()))
}

/// Delete-then-add successor, or `None` when a precondition fails.
pub fn ground_apply(a: &whyplan_core::pddl::GroundAction, s: &BTreeSet<usize>) -> Option<BTreeSet<usize>> {
    if !a.pre_pos.iter().all(|p| s.contains(p)) || a.pre_neg.iter().any(|p| s.contains(p)) {
        return None;
    }
    let mut t = s.clone();
    for d in &a.del {
        t.remove(d);
    }
    t.extend(a.add.iter().copied());
    Some(t)
}

pub const STATE_CAP: usize = 100_000;

/// Generated tasks with between 4 and `STATE_CAP` reachable states, with
/// their oracle and seed.
pub fn sample_tasks(seed: u64) -> impl Iterator<Item = (u64, GenTask, Oracle)> {
    use rand::SeedableRng;
    (0..).map(move |i| seed * 1_000_003 + i).filter_map(|s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut g = GenTask::random(&mut rng);
        let o = Oracle::new(&g);
        let depths = o.depths(STATE_CAP).filter(|r| r.len() >= 4)?;
        // Most tasks aim at one of the deepest reachable states; the rest
        // keep their random, often unreachable, goal.
        if rng.random_bool(0.7) {
            let max = depths.values().copied().max().unwrap_or(0);
            let mut deep: Vec<u128> = depths.iter().filter(|(_, &d)| d + 1 >= max && d > 0).map(|(&s, _)| s).collect();
            deep.sort();
            let target = deep[rng.random_range(0..deep.len())];
            g.retarget(&o, target, &mut rng);
            let o = Oracle::new(&g);
            return Some((s, g, o));
        }
        Some((s, g, o))
    })
}

/// The crate's reading of a generated task.
pub fn crate_task(g: &GenTask, opts: whyplan_core::pddl::GroundingOptions) -> whyplan_core::pddl::GroundTask {
    use whyplan_core::pddl::{ground_task_with, parse_domain, parse_problem};
    let d = parse_domain(&g.domain_pddl()).unwrap();
    let p = parse_problem(&g.problem_pddl(), &d).unwrap();
    ground_task_with(&d, &p, opts).unwrap()
}
