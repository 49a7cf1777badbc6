//! Model compilations for "why not" questions: withdrawing a ground action
//! and forcing an object to take part in the plan.

use std::collections::BTreeSet;

use crate::pddl::{
    ActionId, ActionSchema, Atom, AtomTemplate, DomainModel, GroundTask, Literal, PddlError, PredicateDecl,
    ProblemModel, Term, TypedParam, ROOT_TYPE,
};

/// Copy of `task` with `a` withdrawn. Compiled clones reported under the same
/// signature are withdrawn too, so the action cannot come back in disguise.
pub fn compile_forbid_action(task: &GroundTask, a: ActionId) -> Result<GroundTask, PddlError> {
    let sig = task.action_any(a).map(|x| x.signature()).ok_or_else(|| PddlError::UnknownAction(format!("#{a}")))?;
    let mut out = task.clone();
    forbid_signature(&mut out, &sig);
    Ok(out)
}

/// Withdraws every live action whose reported signature is `sig`. Returns
/// the withdrawn ids.
pub fn forbid_signature(task: &mut GroundTask, sig: &str) -> Vec<ActionId> {
    let ids: Vec<ActionId> = task.live_actions().filter(|(_, x)| x.signature() == sig).map(|(id, _)| id).collect();
    for &id in &ids {
        task.retire(id);
    }
    ids
}

/// Names the compilation introduced, for reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participation {
    pub object: String,
    pub goal_predicate: String,
    pub restrict_to_goal_achievers: bool,
}

/// Adds a nullary `participated_<obj>` goal that only actions binding `obj`
/// can achieve. With `restrict`, only instances that also add a positive
/// goal literal of the original problem qualify.
pub fn compile_require_participation(
    domain: &DomainModel,
    problem: &ProblemModel,
    obj: &str,
    restrict: bool,
) -> Result<(DomainModel, ProblemModel, Participation), PddlError> {
    let obj_type =
        problem.object_type(domain, obj).ok_or_else(|| PddlError::UnknownObject(obj.to_string()))?.to_string();
    let mut d = domain.clone();
    let mut p = problem.clone();
    let mut names = Names::new(domain);

    let flag = names.fresh(&format!("participated_{obj}"));
    d.predicates.push(PredicateDecl { name: flag.clone(), params: Vec::new() });
    let flag_atom = AtomTemplate { predicate: flag.clone(), terms: Vec::new() };

    let is_obj = names.fresh(&format!("is_{obj}"));
    d.predicates.push(PredicateDecl {
        name: is_obj.clone(),
        params: vec![TypedParam { name: "x".into(), ty: ROOT_TYPE.into() }],
    });
    p.init.insert(Atom::new(&is_obj, [obj]));

    let can_bind = |s: &ActionSchema, v: usize| domain.types.is_subtype(&obj_type, &s.parameters[v].ty);
    let goal_atoms: Vec<&Atom> = problem.goal.iter().filter(|l| l.positive).map(|l| &l.atom).collect();

    let mut clones = Vec::new();
    let mut extra_preds = Vec::new();
    for (si, s) in domain.action_schemas.iter().enumerate() {
        let mentions_const = s.literal_templates().any(|t| t.terms.contains(&Term::Const(obj.to_string())));
        if !restrict {
            if mentions_const {
                d.action_schemas[si].add_effects.push(flag_atom.clone());
                continue;
            }
            for v in (0..s.parameters.len()).filter(|&v| can_bind(s, v)) {
                let mut c = clone_of(s, &names.fresh(&format!("{}__{obj}__{v}", s.name)));
                c.pre_pos.push(AtomTemplate { predicate: is_obj.clone(), terms: vec![Term::Var(v)] });
                c.add_effects.push(flag_atom.clone());
                clones.push(c);
            }
            continue;
        }
        // Restricted: one clone per (add effect, goal atom) unifier, pinned
        // to that goal atom by a static helper fact.
        let mut unifiers = BTreeSet::new();
        for t in &s.add_effects {
            for g in &goal_atoms {
                if let Some(b) = unify(t, g, s.parameters.len()) {
                    unifiers.insert(b);
                }
            }
        }
        for b in unifiers {
            let bound: Vec<(usize, &str)> =
                b.iter().enumerate().filter_map(|(v, o)| o.as_deref().map(|o| (v, o))).collect();
            let pin = if bound.is_empty() {
                None
            } else {
                let name = names.fresh(&format!("achieves_goal_{}", s.name));
                extra_preds.push(PredicateDecl {
                    name: name.clone(),
                    params: (0..bound.len())
                        .map(|i| TypedParam { name: format!("x{i}"), ty: ROOT_TYPE.into() })
                        .collect(),
                });
                p.init.insert(Atom::new(&name, bound.iter().map(|(_, o)| *o)));
                Some(AtomTemplate { predicate: name, terms: bound.iter().map(|(v, _)| Term::Var(*v)).collect() })
            };
            let involves = mentions_const || bound.iter().any(|(_, o)| *o == obj);
            let positions: Vec<Option<usize>> = if involves {
                vec![None]
            } else {
                (0..s.parameters.len()).filter(|&v| b[v].is_none() && can_bind(s, v)).map(Some).collect()
            };
            for q in positions {
                let suffix = q.map(|v| format!("__{v}")).unwrap_or_default();
                let mut c = clone_of(s, &names.fresh(&format!("{}__goal_{obj}{suffix}", s.name)));
                c.pre_pos.extend(pin.clone());
                if let Some(v) = q {
                    c.pre_pos.push(AtomTemplate { predicate: is_obj.clone(), terms: vec![Term::Var(v)] });
                }
                c.add_effects.push(flag_atom.clone());
                clones.push(c);
            }
        }
    }
    d.predicates.extend(extra_preds);
    d.action_schemas.extend(clones);
    p.goal.push(Literal { atom: Atom::new(&flag, Vec::<String>::new()), positive: true });
    d.check()?;
    p.check(&d)?;
    Ok((d, p, Participation { object: obj.to_string(), goal_predicate: flag, restrict_to_goal_achievers: restrict }))
}

fn clone_of(s: &ActionSchema, name: &str) -> ActionSchema {
    let mut c = s.clone();
    c.name = name.to_string();
    c.origin = Some(s.display_name().to_string());
    c
}

/// Most general binding of the schema's variables making `t` equal `g`.
fn unify(t: &AtomTemplate, g: &Atom, arity: usize) -> Option<Vec<Option<String>>> {
    if t.predicate != g.predicate || t.terms.len() != g.args.len() {
        return None;
    }
    let mut b: Vec<Option<String>> = vec![None; arity];
    for (term, arg) in t.terms.iter().zip(&g.args) {
        match term {
            Term::Const(c) if c != arg => return None,
            Term::Const(_) => {}
            Term::Var(v) => match &b[*v] {
                Some(o) if o != arg => return None,
                Some(_) => {}
                None => b[*v] = Some(arg.clone()),
            },
        }
    }
    Some(b)
}

/// Hands out predicate and schema names that clash with nothing in the model.
struct Names {
    taken: BTreeSet<String>,
}

impl Names {
    fn new(d: &DomainModel) -> Names {
        let taken = d
            .predicates
            .iter()
            .map(|p| p.name.clone())
            .chain(d.action_schemas.iter().map(|a| a.name.clone()))
            .collect();
        Names { taken }
    }

    fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut n = 1;
        while !self.taken.insert(name.clone()) {
            name = format!("{base}_{n}");
            n += 1;
        }
        name
    }
}
