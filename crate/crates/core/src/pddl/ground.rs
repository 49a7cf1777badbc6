use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;
use std::sync::Arc;

use serde::Serialize;

use super::model::*;
use super::PddlError;
use crate::cost::Cost;
use crate::search::State;

pub type PropId = usize;
pub type ActionId = usize;

pub const DEFAULT_GROUNDING_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy)]
pub struct GroundingOptions {
    /// Drop instantiations whose static preconditions are false in the
    /// initial state.
    pub prune_static: bool,
    pub max_actions: usize,
}

impl Default for GroundingOptions {
    fn default() -> Self {
        GroundingOptions { prune_static: true, max_actions: DEFAULT_GROUNDING_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundAction {
    /// Schema the action was instantiated from.
    pub schema: String,
    /// Name the action is reported under (the origin schema for compiled ones).
    pub name: String,
    pub args: Vec<String>,
    pub pre_pos: Vec<PropId>,
    pub pre_neg: Vec<PropId>,
    pub add: Vec<PropId>,
    pub del: Vec<PropId>,
    pub cost: Cost,
}

impl GroundAction {
    pub fn signature(&self) -> String {
        let mut s = format!("({}", self.name);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s.push(')');
        s
    }
}

#[derive(Debug, Clone)]
pub struct GroundTask {
    propositions: Vec<Atom>,
    prop_index: HashMap<Atom, PropId>,
    actions: Vec<GroundAction>,
    retired: Vec<bool>,
    by_signature: HashMap<(String, Vec<String>), Vec<ActionId>>,
    init: State,
    goal_pos: Vec<PropId>,
    goal_neg: Vec<PropId>,
    static_predicates: BTreeSet<String>,
    domain: Arc<DomainModel>,
    problem: Arc<ProblemModel>,
}

/// Predicates that appear in no schema's add or delete effects.
pub fn static_predicates(domain: &DomainModel) -> BTreeSet<String> {
    let fluent: BTreeSet<&str> = domain
        .action_schemas
        .iter()
        .flat_map(|a| a.add_effects.iter().chain(&a.del_effects))
        .map(|t| t.predicate.as_str())
        .collect();
    domain.predicates.iter().filter(|p| !fluent.contains(p.name.as_str())).map(|p| p.name.clone()).collect()
}

struct RawAction {
    schema: String,
    name: String,
    args: Vec<String>,
    pre_pos: Vec<Atom>,
    pre_neg: Vec<Atom>,
    add: Vec<Atom>,
    del: Vec<Atom>,
    cost: Cost,
}

fn instantiate(schema: &ActionSchema, binding: &[&str]) -> RawAction {
    let inst = |ts: &[AtomTemplate]| -> Vec<Atom> {
        let mut v: Vec<Atom> = ts.iter().map(|t| t.instantiate(binding)).collect();
        v.sort();
        v.dedup();
        v
    };
    let add = inst(&schema.add_effects);
    // Add wins over delete when a binding makes both coincide.
    let del = inst(&schema.del_effects).into_iter().filter(|a| add.binary_search(a).is_err()).collect();
    RawAction {
        schema: schema.name.clone(),
        name: schema.display_name().to_string(),
        args: binding.iter().map(|s| s.to_string()).collect(),
        pre_pos: inst(&schema.pre_pos),
        pre_neg: inst(&schema.pre_neg),
        add,
        del,
        cost: schema.cost,
    }
}

struct Enumerator<'a> {
    schema: &'a ActionSchema,
    candidates: Vec<Vec<&'a str>>,
    /// Static precondition checks keyed by the last parameter they need.
    checks: Vec<Vec<(&'a AtomTemplate, bool)>>,
    init: &'a BTreeSet<Atom>,
    cap: usize,
}

impl<'a> Enumerator<'a> {
    fn run(&self, out: &mut Vec<RawAction>) -> Result<(), PddlError> {
        let mut binding: Vec<Option<&str>> = vec![None; self.schema.parameters.len()];
        if !self.level_ok(0, &binding) {
            return Ok(());
        }
        self.extend(0, &mut binding, out)
    }

    /// Checks at slot `k` cover templates whose variables are all below `k`.
    fn level_ok(&self, k: usize, binding: &[Option<&str>]) -> bool {
        self.checks[k].iter().all(|(t, positive)| {
            let atom = t.try_instantiate(binding).expect("checked template fully bound");
            self.init.contains(&atom) == *positive
        })
    }

    fn extend(&self, k: usize, binding: &mut Vec<Option<&'a str>>, out: &mut Vec<RawAction>) -> Result<(), PddlError> {
        if k == binding.len() {
            let full: Vec<&str> = binding.iter().map(|b| b.unwrap()).collect();
            out.push(instantiate(self.schema, &full));
            if out.len() > self.cap {
                return Err(PddlError::GroundingLimitExceeded(out.len()));
            }
            return Ok(());
        }
        for &obj in &self.candidates[k] {
            binding[k] = Some(obj);
            if self.level_ok(k + 1, binding) {
                self.extend(k + 1, binding, out)?;
            }
        }
        binding[k] = None;
        Ok(())
    }
}

pub fn ground_task(domain: &DomainModel, problem: &ProblemModel) -> Result<GroundTask, PddlError> {
    ground_task_with(domain, problem, GroundingOptions::default())
}

pub fn ground_task_with(
    domain: &DomainModel,
    problem: &ProblemModel,
    opts: GroundingOptions,
) -> Result<GroundTask, PddlError> {
    let statics = static_predicates(domain);
    let objects = problem.all_objects(domain);
    let mut raw = Vec::new();
    for schema in &domain.action_schemas {
        let candidates: Vec<Vec<&str>> = schema
            .parameters
            .iter()
            .map(|p| objects.iter().filter(|(_, t)| domain.types.is_subtype(t, &p.ty)).map(|(o, _)| *o).collect())
            .collect();
        let mut checks = vec![Vec::new(); schema.parameters.len() + 1];
        if opts.prune_static {
            let pos = schema.pre_pos.iter().map(|t| (t, true));
            let neg = schema.pre_neg.iter().map(|t| (t, false));
            for (t, positive) in pos.chain(neg) {
                if statics.contains(&t.predicate) {
                    let level = t.vars().map(|v| v + 1).max().unwrap_or(0);
                    checks[level].push((t, positive));
                }
            }
        }
        let e = Enumerator { schema, candidates, checks, init: &problem.init, cap: opts.max_actions };
        e.run(&mut raw)?;
    }

    let mut atoms: BTreeSet<&Atom> = problem.init.iter().collect();
    atoms.extend(problem.goal.iter().map(|l| &l.atom));
    for a in &raw {
        atoms.extend(a.pre_pos.iter().chain(&a.pre_neg).chain(&a.add).chain(&a.del));
    }
    let propositions: Vec<Atom> = atoms.into_iter().cloned().collect();
    let prop_index: HashMap<Atom, PropId> = propositions.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();

    raw.sort_by(|a, b| (&a.name, &a.args, &a.schema).cmp(&(&b.name, &b.args, &b.schema)));

    let mut task = GroundTask {
        init: problem.init.iter().map(|a| prop_index[a]).collect(),
        goal_pos: problem.goal.iter().filter(|l| l.positive).map(|l| prop_index[&l.atom]).collect(),
        goal_neg: problem.goal.iter().filter(|l| !l.positive).map(|l| prop_index[&l.atom]).collect(),
        propositions,
        prop_index,
        actions: Vec::with_capacity(raw.len()),
        retired: Vec::with_capacity(raw.len()),
        by_signature: HashMap::new(),
        static_predicates: statics,
        domain: Arc::new(domain.clone()),
        problem: Arc::new(problem.clone()),
    };
    task.goal_pos.sort_unstable();
    task.goal_pos.dedup();
    task.goal_neg.sort_unstable();
    task.goal_neg.dedup();
    for r in raw {
        task.push_raw(r);
    }
    Ok(task)
}

impl GroundTask {
    fn intern_prop(&mut self, atom: &Atom) -> PropId {
        if let Some(&id) = self.prop_index.get(atom) {
            return id;
        }
        let id = self.propositions.len();
        self.propositions.push(atom.clone());
        self.prop_index.insert(atom.clone(), id);
        id
    }

    fn push_raw(&mut self, r: RawAction) -> ActionId {
        let mut ids = |atoms: &[Atom]| -> Vec<PropId> {
            let mut v: Vec<PropId> = atoms.iter().map(|a| self.intern_prop(a)).collect();
            v.sort_unstable();
            v
        };
        let action = GroundAction {
            pre_pos: ids(&r.pre_pos),
            pre_neg: ids(&r.pre_neg),
            add: ids(&r.add),
            del: ids(&r.del),
            schema: r.schema,
            name: r.name,
            args: r.args,
            cost: r.cost,
        };
        let id = self.actions.len();
        self.by_signature.entry((action.name.clone(), action.args.clone())).or_default().push(id);
        self.actions.push(action);
        self.retired.push(false);
        id
    }

    pub fn domain(&self) -> &DomainModel {
        &self.domain
    }

    pub fn problem(&self) -> &ProblemModel {
        &self.problem
    }

    pub fn propositions(&self) -> &[Atom] {
        &self.propositions
    }

    pub fn num_props(&self) -> usize {
        self.propositions.len()
    }

    pub fn atom(&self, p: PropId) -> &Atom {
        &self.propositions[p]
    }

    pub fn prop_id(&self, atom: &Atom) -> Option<PropId> {
        self.prop_index.get(atom).copied()
    }

    /// Number of action ids ever assigned, retired ones included.
    pub fn num_action_ids(&self) -> usize {
        self.actions.len()
    }

    /// A live (non-retired) action.
    pub fn action(&self, id: ActionId) -> Option<&GroundAction> {
        if self.is_live(id) {
            self.actions.get(id)
        } else {
            None
        }
    }

    /// Any action ever assigned an id, including retired ones.
    pub fn action_any(&self, id: ActionId) -> Option<&GroundAction> {
        self.actions.get(id)
    }

    pub fn is_live(&self, id: ActionId) -> bool {
        self.retired.get(id).is_some_and(|r| !r)
    }

    pub fn live_actions(&self) -> impl Iterator<Item = (ActionId, &GroundAction)> {
        self.actions.iter().enumerate().filter(|(i, _)| !self.retired[*i])
    }

    pub fn num_live_actions(&self) -> usize {
        self.retired.iter().filter(|r| !**r).count()
    }

    pub fn init(&self) -> &State {
        &self.init
    }

    pub fn goal_pos(&self) -> &[PropId] {
        &self.goal_pos
    }

    pub fn goal_neg(&self) -> &[PropId] {
        &self.goal_neg
    }

    pub fn is_goal(&self, s: &State) -> bool {
        s.contains_all(&self.goal_pos) && s.contains_none(&self.goal_neg)
    }

    pub fn static_predicates(&self) -> &BTreeSet<String> {
        &self.static_predicates
    }

    pub fn is_static(&self, p: PropId) -> bool {
        self.static_predicates.contains(&self.propositions[p].predicate)
    }

    /// All ids (live or retired) reported under `name` with `args`.
    pub fn find_actions(&self, name: &str, args: &[String]) -> &[ActionId] {
        self.by_signature.get(&(name.to_string(), args.to_vec())).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The preferred live action for a signature: the one instantiated from a
    /// schema actually named `name`, else the first compiled variant.
    pub fn find_action(&self, name: &str, args: &[String]) -> Option<ActionId> {
        let ids = self.find_actions(name, args);
        ids.iter().copied().filter(|&i| self.is_live(i)).min_by_key(|&i| (self.actions[i].schema != name, i))
    }

    /// Looks up `(name args...)`, instantiating it from the domain if the
    /// grounder pruned it. Interned actions get fresh ids past the grounded
    /// block; the new propositions they mention are false in every state.
    pub fn intern_action(&mut self, name: &str, args: &[String]) -> Result<ActionId, PddlError> {
        if let Some(id) = self.find_action(name, args) {
            return Ok(id);
        }
        if let Some(&id) = self.find_actions(name, args).first() {
            // Retired: addressable, but stays unavailable.
            return Ok(id);
        }
        let schema = self.domain.schema(name).ok_or_else(|| PddlError::UnknownAction(name.to_string()))?.clone();
        if schema.parameters.len() != args.len() {
            return Err(PddlError::Arity {
                predicate: name.to_string(),
                expected: schema.parameters.len(),
                found: args.len(),
            });
        }
        for (arg, param) in args.iter().zip(&schema.parameters) {
            let ty =
                self.problem.object_type(&self.domain, arg).ok_or_else(|| PddlError::UnknownObject(arg.clone()))?;
            if !self.domain.types.is_subtype(ty, &param.ty) {
                return Err(PddlError::TypeMismatch {
                    literal: format!("({name} {})", args.join(" ")),
                    expected: param.ty.clone(),
                });
            }
        }
        let binding: Vec<&str> = args.iter().map(String::as_str).collect();
        Ok(self.push_raw(instantiate(&schema, &binding)))
    }

    /// Parses `(name arg...)` and resolves it with [`GroundTask::intern_action`].
    pub fn intern_action_text(&mut self, text: &str) -> Result<ActionId, PddlError> {
        let atom = Atom::parse(text)?;
        self.intern_action(&atom.predicate, &atom.args)
    }

    /// Removes actions from the searchable table. Ids are never reused.
    pub fn retire(&mut self, id: ActionId) {
        if let Some(r) = self.retired.get_mut(id) {
            *r = true;
        }
    }

    pub fn action_label(&self, id: ActionId) -> String {
        self.actions.get(id).map(GroundAction::signature).unwrap_or_else(|| format!("#{id}"))
    }

    /// Deterministic text dump: `P <id> <atom>` then `A <id> <name> <args> cost=<c>`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, p) in self.propositions.iter().enumerate() {
            let _ = writeln!(s, "P {i} {p}");
        }
        for (i, a) in self.live_actions() {
            let _ = write!(s, "A {i} {}", a.name);
            for arg in &a.args {
                let _ = write!(s, " {arg}");
            }
            let _ = writeln!(s, " cost={}", a.cost);
        }
        s
    }

    /// Renders a set of proposition ids as atoms.
    pub fn atoms(&self, props: impl IntoIterator<Item = PropId>) -> Vec<Atom> {
        props.into_iter().map(|p| self.propositions[p].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    const NAV: &str = "(define (domain nav)
        (:requirements :strips :typing)
        (:types vehicle waypoint)
        (:predicates (at ?v - vehicle ?w - waypoint) (connected ?from ?to - waypoint))
        (:action navigate
          :parameters (?v - vehicle ?from ?to - waypoint)
          :precondition (and (at ?v ?from) (connected ?from ?to))
          :effect (and (not (at ?v ?from)) (at ?v ?to))))";

    const NAV_P: &str = "(define (problem p) (:domain nav)
        (:objects r0 - vehicle w0 w1 w2 - waypoint)
        (:init (at r0 w0) (connected w0 w1) (connected w1 w0))
        (:goal (at r0 w1)))";

    #[test]
    fn static_pruning_drops_unconnected_moves() {
        let d = parse_domain(NAV).unwrap();
        let p = parse_problem(NAV_P, &d).unwrap();
        let t = ground_task(&d, &p).unwrap();
        let labels: Vec<String> = t.live_actions().map(|(_, a)| a.signature()).collect();
        assert_eq!(labels, vec!["(navigate r0 w0 w1)", "(navigate r0 w1 w0)"]);
        assert!(t.find_action("navigate", &["r0".into(), "w0".into(), "w2".into()]).is_none());

        let unpruned =
            ground_task_with(&d, &p, GroundingOptions { prune_static: false, ..Default::default() }).unwrap();
        assert_eq!(unpruned.num_live_actions(), 9);
        assert_eq!(t.static_predicates().iter().collect::<Vec<_>>(), vec!["connected"]);
    }

    #[test]
    fn zero_schemas() {
        let d = parse_domain("(define (domain e) (:predicates (p)))").unwrap();
        let p = parse_problem("(define (problem e) (:domain e) (:init (p)) (:goal (p)))", &d).unwrap();
        let t = ground_task(&d, &p).unwrap();
        assert_eq!(t.num_live_actions(), 0);
        assert!(t.is_goal(t.init()));
    }

    #[test]
    fn cap_enforced() {
        let d = parse_domain(NAV).unwrap();
        let p = parse_problem(NAV_P, &d).unwrap();
        let opts = GroundingOptions { prune_static: false, max_actions: 4 };
        assert_eq!(ground_task_with(&d, &p, opts).unwrap_err(), PddlError::GroundingLimitExceeded(5));
    }

    #[test]
    fn intern_pruned_action() {
        let d = parse_domain(NAV).unwrap();
        let p = parse_problem(NAV_P, &d).unwrap();
        let mut t = ground_task(&d, &p).unwrap();
        let before = t.num_action_ids();
        let id = t.intern_action_text("(navigate r0 w0 w2)").unwrap();
        assert_eq!(id, before);
        let a = t.action(id).unwrap();
        let missing = Atom::new("connected", ["w0", "w2"]);
        assert!(a.pre_pos.iter().any(|&q| t.atom(q) == &missing));
        assert!(matches!(t.intern_action_text("(navigate r0 w0 wp99)"), Err(PddlError::UnknownObject(_))));
        assert!(matches!(t.intern_action_text("(fly r0 w0)"), Err(PddlError::UnknownAction(_))));
    }

    #[test]
    fn dump_format() {
        let d = parse_domain(NAV).unwrap();
        let p = parse_problem(NAV_P, &d).unwrap();
        let t = ground_task(&d, &p).unwrap();
        let dump = t.dump();
        assert!(dump.starts_with("P 0 (at r0 w0)\n"));
        assert!(dump.contains("A 0 navigate r0 w0 w1 cost=1\n"));
    }
}
