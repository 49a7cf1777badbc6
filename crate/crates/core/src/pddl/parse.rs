use std::collections::BTreeSet;

use super::model::*;
use super::sexpr::{parse_one, Pos, SExpr};
use super::PddlError;
use crate::cost::Cost;
use crate::validate::Metric;

fn syntax(pos: Pos, expected: &str) -> PddlError {
    PddlError::Syntax { line: pos.line, column: pos.column, expected: expected.to_string() }
}

fn expect_list<'a>(e: &'a SExpr, expected: &str) -> Result<&'a [SExpr], PddlError> {
    e.as_list().ok_or_else(|| syntax(e.pos(), expected))
}

fn expect_atom<'a>(e: &'a SExpr, expected: &str) -> Result<&'a str, PddlError> {
    e.as_atom().ok_or_else(|| syntax(e.pos(), expected))
}

/// Splits `(define (<kind> NAME) sections...)`.
fn define_header<'a>(top: &'a SExpr, kind: &str) -> Result<(&'a str, &'a [SExpr]), PddlError> {
    let items = expect_list(top, "(define ...)")?;
    match items.first().and_then(SExpr::as_atom) {
        Some("define") => {}
        _ => return Err(syntax(top.pos(), "`define`")),
    }
    let header = items.get(1).ok_or_else(|| syntax(top.pos(), &format!("({kind} NAME)")))?;
    let h = expect_list(header, &format!("({kind} NAME)"))?;
    if h.len() != 2 || h[0].as_atom() != Some(kind) {
        return Err(syntax(header.pos(), &format!("({kind} NAME)")));
    }
    let name = expect_atom(&h[1], "name")?;
    Ok((name, &items[2..]))
}

/// Parses `a b - t c` style lists. Untyped trailing names get `object`.
fn typed_list(items: &[SExpr], strip_var: bool) -> Result<Vec<TypedParam>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let a = expect_atom(&items[i], "name or `-`")?;
        if a == "-" {
            let ty_expr = items.get(i + 1).ok_or_else(|| syntax(items[i].pos(), "type name"))?;
            let ty = match ty_expr {
                SExpr::Atom(t, _) => t.clone(),
                SExpr::List(..) => {
                    return Err(PddlError::UnsupportedFeature("either-types".into()));
                }
            };
            if pending.is_empty() {
                return Err(syntax(items[i].pos(), "name before `-`"));
            }
            out.extend(pending.drain(..).map(|name| TypedParam { name, ty: ty.clone() }));
            i += 2;
            continue;
        }
        let name =
            if strip_var { a.strip_prefix('?').ok_or_else(|| syntax(items[i].pos(), "variable `?name`"))? } else { a };
        pending.push(name.to_string());
        i += 1;
    }
    out.extend(pending.into_iter().map(|name| TypedParam { name, ty: ROOT_TYPE.to_string() }));
    Ok(out)
}

fn ensure_known_section(head: &str, pos: Pos, allowed: &[&str]) -> Result<(), PddlError> {
    match head {
        ":durative-action" => Err(PddlError::UnsupportedFeature("durative-actions".into())),
        ":derived" => Err(PddlError::UnsupportedFeature("derived-predicates".into())),
        ":process" | ":event" => Err(PddlError::UnsupportedFeature("processes".into())),
        h if allowed.contains(&h) => Ok(()),
        _ => Err(syntax(pos, &format!("one of {}", allowed.join(" ")))),
    }
}

pub fn parse_domain(text: &str) -> Result<DomainModel, PddlError> {
    let top = parse_one(text)?;
    let (name, sections) = define_header(&top, "domain")?;
    let mut d = DomainModel::empty(name);
    const SECTIONS: &[&str] = &[":requirements", ":types", ":constants", ":predicates", ":functions", ":action"];
    for sec in sections {
        let head = sec.head().ok_or_else(|| syntax(sec.pos(), "domain section"))?;
        ensure_known_section(&head, sec.pos(), SECTIONS)?;
        let body = &sec.as_list().unwrap()[1..];
        match head.as_str() {
            ":requirements" => {
                for r in body {
                    let kw = expect_atom(r, "requirement keyword")?;
                    let req = Requirement::from_keyword(kw)?;
                    if req == Requirement::ActionCosts {
                        d.uses_costs = true;
                    }
                    d.requirements.insert(req);
                }
            }
            ":types" => {
                for tp in typed_list(body, false)? {
                    d.types.declare(&tp.name, &tp.ty)?;
                }
            }
            ":constants" => {
                for tp in typed_list(body, false)? {
                    d.constants.push((tp.name, tp.ty));
                }
            }
            ":predicates" => {
                for p in body {
                    let items = expect_list(p, "(predicate ?args)")?;
                    let pname =
                        items.first().and_then(SExpr::as_atom).ok_or_else(|| syntax(p.pos(), "predicate name"))?;
                    let params = typed_list(&items[1..], true)?;
                    d.predicates.push(PredicateDecl { name: pname.to_string(), params });
                }
            }
            ":functions" => {
                // Only the `total-cost` fluent is accepted.
                let mut i = 0;
                while i < body.len() {
                    match &body[i] {
                        SExpr::List(f, _) if f.len() == 1 && f[0].as_atom() == Some("total-cost") => {}
                        SExpr::Atom(a, _) if a == "-" || a == "number" => {}
                        _ => return Err(PddlError::UnsupportedFeature("numeric-fluents".into())),
                    }
                    i += 1;
                }
                d.uses_costs = true;
            }
            ":action" => {
                let schema = parse_action(body, sec.pos(), &d)?;
                d.action_schemas.push(schema);
            }
            _ => unreachable!(),
        }
    }
    d.check()?;
    Ok(d)
}

fn parse_action(body: &[SExpr], pos: Pos, d: &DomainModel) -> Result<ActionSchema, PddlError> {
    let name = body.first().and_then(SExpr::as_atom).ok_or_else(|| syntax(pos, "action name"))?;
    let mut schema = ActionSchema {
        name: name.to_string(),
        parameters: Vec::new(),
        pre_pos: Vec::new(),
        pre_neg: Vec::new(),
        add_effects: Vec::new(),
        del_effects: Vec::new(),
        cost: if d.uses_costs { Cost::ZERO } else { Cost::ONE },
        origin: None,
    };
    let mut explicit_cost = false;
    let mut i = 1;
    while i < body.len() {
        let kw = expect_atom(&body[i], "`:parameters`, `:precondition` or `:effect`")?;
        let val = body.get(i + 1).ok_or_else(|| syntax(body[i].pos(), "section value"))?;
        match kw {
            ":parameters" => {
                schema.parameters = typed_list(expect_list(val, "parameter list")?, true)?;
            }
            ":precondition" => {
                let mut lits = Vec::new();
                condition(val, &schema, &mut lits)?;
                for (positive, t) in lits {
                    if positive {
                        schema.pre_pos.push(t);
                    } else {
                        schema.pre_neg.push(t);
                    }
                }
            }
            ":effect" => {
                let mut cost = None;
                let mut lits = Vec::new();
                effect(val, &schema, &mut lits, &mut cost)?;
                for (positive, t) in lits {
                    if positive {
                        schema.add_effects.push(t);
                    } else {
                        schema.del_effects.push(t);
                    }
                }
                if let Some(c) = cost {
                    schema.cost = c;
                    explicit_cost = true;
                }
            }
            _ => return Err(syntax(body[i].pos(), "`:parameters`, `:precondition` or `:effect`")),
        }
        i += 2;
    }
    if explicit_cost && !d.uses_costs {
        return Err(PddlError::Invalid(format!(
            "action `{}` increases total-cost but the domain does not declare :action-costs",
            schema.name
        )));
    }
    Ok(schema)
}

fn term(e: &SExpr, schema: &ActionSchema) -> Result<Term, PddlError> {
    let a = expect_atom(e, "term")?;
    if let Some(v) = a.strip_prefix('?') {
        schema
            .parameters
            .iter()
            .position(|p| p.name == v)
            .map(Term::Var)
            .ok_or_else(|| PddlError::UnknownVariable { name: a.to_string(), context: schema.name.clone() })
    } else {
        Ok(Term::Const(a.to_string()))
    }
}

fn template(items: &[SExpr], pos: Pos, schema: &ActionSchema) -> Result<AtomTemplate, PddlError> {
    let predicate = items.first().and_then(SExpr::as_atom).ok_or_else(|| syntax(pos, "predicate"))?;
    let terms = items[1..].iter().map(|t| term(t, schema)).collect::<Result<_, _>>()?;
    Ok(AtomTemplate { predicate: predicate.to_string(), terms })
}

fn unsupported_connective(head: &str) -> Option<&'static str> {
    match head {
        "or" => Some("disjunctive-preconditions"),
        "imply" => Some("disjunctive-preconditions"),
        "forall" => Some("universal-preconditions"),
        "exists" => Some("existential-preconditions"),
        "=" => Some("equality"),
        "when" => Some("conditional-effects"),
        ">" | "<" | ">=" | "<=" => Some("numeric-fluents"),
        _ => None,
    }
}

fn condition(e: &SExpr, schema: &ActionSchema, out: &mut Vec<(bool, AtomTemplate)>) -> Result<(), PddlError> {
    let items = expect_list(e, "condition")?;
    let Some(head) = items.first() else { return Ok(()) };
    let h = expect_atom(head, "condition keyword or predicate")?;
    if let Some(f) = unsupported_connective(h) {
        return Err(PddlError::UnsupportedFeature(f.into()));
    }
    match h {
        "and" => {
            for c in &items[1..] {
                condition(c, schema, out)?;
            }
        }
        "not" => {
            let inner = items.get(1).ok_or_else(|| syntax(e.pos(), "(not (atom))"))?;
            let il = expect_list(inner, "(not (atom))")?;
            if let Some(ih) = il.first().and_then(SExpr::as_atom) {
                if let Some(f) =
                    unsupported_connective(ih).or((ih == "and" || ih == "not").then_some("disjunctive-preconditions"))
                {
                    return Err(PddlError::UnsupportedFeature(f.into()));
                }
            }
            out.push((false, template(il, inner.pos(), schema)?));
        }
        _ => out.push((true, template(items, e.pos(), schema)?)),
    }
    Ok(())
}

fn effect(
    e: &SExpr,
    schema: &ActionSchema,
    out: &mut Vec<(bool, AtomTemplate)>,
    cost: &mut Option<Cost>,
) -> Result<(), PddlError> {
    let items = expect_list(e, "effect")?;
    let Some(head) = items.first() else { return Ok(()) };
    let h = expect_atom(head, "effect keyword or predicate")?;
    match h {
        "and" => {
            for c in &items[1..] {
                effect(c, schema, out, cost)?;
            }
        }
        "not" => {
            let inner = items.get(1).ok_or_else(|| syntax(e.pos(), "(not (atom))"))?;
            out.push((false, template(expect_list(inner, "(not (atom))")?, inner.pos(), schema)?));
        }
        "increase" => {
            let target = items.get(1).and_then(SExpr::as_list);
            let is_total_cost = matches!(target, Some([SExpr::Atom(n, _)]) if n == "total-cost");
            if !is_total_cost {
                return Err(PddlError::UnsupportedFeature("numeric-fluents".into()));
            }
            let amount = items.get(2).ok_or_else(|| syntax(e.pos(), "cost amount"))?;
            let text = amount.as_atom().ok_or_else(|| PddlError::UnsupportedFeature("numeric-fluents".into()))?;
            let c: Cost = text.parse().map_err(|_| syntax(amount.pos(), "nonnegative number"))?;
            if c.is_negative() {
                return Err(syntax(amount.pos(), "nonnegative number"));
            }
            *cost = Some(cost.unwrap_or(Cost::ZERO) + c);
        }
        "forall" => return Err(PddlError::UnsupportedFeature("universal-effects".into())),
        "when" => return Err(PddlError::UnsupportedFeature("conditional-effects".into())),
        "decrease" | "assign" | "scale-up" | "scale-down" => {
            return Err(PddlError::UnsupportedFeature("numeric-fluents".into()))
        }
        _ => out.push((true, template(items, e.pos(), schema)?)),
    }
    Ok(())
}

pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<ProblemModel, PddlError> {
    let top = parse_one(text)?;
    let (name, sections) = define_header(&top, "problem")?;
    let mut p = ProblemModel {
        name: name.to_string(),
        domain_name: domain.name.clone(),
        objects: Vec::new(),
        init: BTreeSet::new(),
        goal: Vec::new(),
        metric: None,
    };
    const SECTIONS: &[&str] = &[":domain", ":requirements", ":objects", ":init", ":goal", ":metric"];
    for sec in sections {
        let head = sec.head().ok_or_else(|| syntax(sec.pos(), "problem section"))?;
        ensure_known_section(&head, sec.pos(), SECTIONS)?;
        let body = &sec.as_list().unwrap()[1..];
        match head.as_str() {
            ":domain" => {
                let dn = body.first().and_then(SExpr::as_atom).ok_or_else(|| syntax(sec.pos(), "domain name"))?;
                if dn != domain.name {
                    return Err(PddlError::DomainMismatch { expected: domain.name.clone(), found: dn.to_string() });
                }
            }
            ":requirements" => {
                for r in body {
                    Requirement::from_keyword(expect_atom(r, "requirement keyword")?)?;
                }
            }
            ":objects" => {
                for tp in typed_list(body, false)? {
                    p.objects.push((tp.name, tp.ty));
                }
            }
            ":init" => {
                for f in body {
                    let items = expect_list(f, "initial fact")?;
                    match items.first().and_then(SExpr::as_atom) {
                        Some("=") => {
                            let fluent = items.get(1).and_then(SExpr::as_list);
                            if !matches!(fluent, Some([SExpr::Atom(n, _)]) if n == "total-cost") {
                                return Err(PddlError::UnsupportedFeature("numeric-fluents".into()));
                            }
                        }
                        Some("not") => return Err(syntax(f.pos(), "positive fact (closed world initial state)")),
                        _ => {
                            p.init.insert(ground_atom(items, f.pos())?);
                        }
                    }
                }
            }
            ":goal" => {
                let g = body.first().ok_or_else(|| syntax(sec.pos(), "goal condition"))?;
                goal_literals(g, &mut p.goal)?;
            }
            ":metric" => {
                p.metric = Some(parse_metric(body, sec.pos())?);
            }
            _ => unreachable!(),
        }
    }
    p.check(domain)?;
    Ok(p)
}

fn ground_atom(items: &[SExpr], pos: Pos) -> Result<Atom, PddlError> {
    let predicate = items.first().and_then(SExpr::as_atom).ok_or_else(|| syntax(pos, "predicate"))?;
    let args = items[1..]
        .iter()
        .map(|a| {
            let s = expect_atom(a, "object name")?;
            if s.starts_with('?') {
                Err(syntax(a.pos(), "object name (no variables in problems)"))
            } else {
                Ok(s.to_string())
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Atom { predicate: predicate.to_string(), args })
}

fn goal_literals(e: &SExpr, out: &mut Vec<Literal>) -> Result<(), PddlError> {
    let items = expect_list(e, "goal")?;
    let Some(head) = items.first() else { return Ok(()) };
    let h = expect_atom(head, "goal connective or predicate")?;
    if let Some(f) = unsupported_connective(h) {
        return Err(PddlError::UnsupportedFeature(f.into()));
    }
    match h {
        "and" => {
            for g in &items[1..] {
                goal_literals(g, out)?;
            }
        }
        "not" => {
            let inner = items.get(1).ok_or_else(|| syntax(e.pos(), "(not (atom))"))?;
            let atom = ground_atom(expect_list(inner, "(not (atom))")?, inner.pos())?;
            out.push(Literal { atom, positive: false });
        }
        _ => out.push(Literal { atom: ground_atom(items, e.pos())?, positive: true }),
    }
    Ok(())
}

fn parse_metric(body: &[SExpr], pos: Pos) -> Result<Metric, PddlError> {
    match (body.first().and_then(SExpr::as_atom), body.get(1)) {
        (Some("minimize"), Some(SExpr::List(f, _))) => match f.as_slice() {
            [SExpr::Atom(n, _)] if n == "total-cost" => Ok(Metric::TotalCost),
            [SExpr::Atom(n, _)] if n == "plan-length" => Ok(Metric::PlanLength),
            [SExpr::Atom(n, _)] if n == "total-time" => Err(PddlError::UnsupportedFeature("durative-actions".into())),
            _ => Err(PddlError::UnsupportedFeature("numeric-fluents".into())),
        },
        (Some("maximize"), _) => Err(PddlError::UnsupportedFeature("maximize-metric".into())),
        _ => Err(syntax(pos, "(:metric minimize (total-cost))")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAV: &str = "(define (domain nav)
        (:requirements :strips :typing)
        (:types vehicle waypoint)
        (:predicates (at ?v - vehicle ?w - waypoint) (connected ?from ?to - waypoint))
        (:action navigate
          :parameters (?v - vehicle ?from ?to - waypoint)
          :precondition (and (at ?v ?from) (connected ?from ?to))
          :effect (and (not (at ?v ?from)) (at ?v ?to))))";

    #[test]
    fn navigate_domain() {
        let d = parse_domain(NAV).unwrap();
        assert_eq!(d.predicates.len(), 2);
        assert_eq!(d.action_schemas.len(), 1);
        let nav = &d.action_schemas[0];
        assert_eq!(nav.parameters.len(), 3);
        assert_eq!(nav.cost, Cost::ONE);
        assert_eq!(nav.pre_pos[1].terms, vec![Term::Var(1), Term::Var(2)]);
        assert!(d.types.is_subtype("waypoint", ROOT_TYPE));
    }

    #[test]
    fn empty_domain_body() {
        let d = parse_domain("(define (domain empty))").unwrap();
        assert!(d.predicates.is_empty());
        assert!(d.action_schemas.is_empty());
    }

    #[test]
    fn durative_rejected() {
        let e = parse_domain("(define (domain t) (:requirements :strips :durative-actions))").unwrap_err();
        assert_eq!(e, PddlError::UnsupportedFeature("durative-actions".into()));
        let e = parse_domain("(define (domain t) (:durative-action a :parameters ()))").unwrap_err();
        assert_eq!(e, PddlError::UnsupportedFeature("durative-actions".into()));
    }

    #[test]
    fn conditional_effect_rejected() {
        let text = "(define (domain t) (:predicates (p) (q))
            (:action a :parameters () :precondition () :effect (when (p) (q))))";
        assert_eq!(parse_domain(text).unwrap_err(), PddlError::UnsupportedFeature("conditional-effects".into()));
    }

    #[test]
    fn unbound_variable_rejected() {
        let text = "(define (domain t) (:predicates (p ?x))
            (:action a :parameters () :precondition (p ?y) :effect ()))";
        assert!(matches!(parse_domain(text), Err(PddlError::UnknownVariable { .. })));
    }

    #[test]
    fn costs_parsed_exactly() {
        let text = "(define (domain t) (:requirements :strips :action-costs)
            (:predicates (p)) (:functions (total-cost) - number)
            (:action a :parameters () :precondition () :effect (and (p) (increase (total-cost) 71.696)))
            (:action b :parameters () :precondition () :effect (p)))";
        let d = parse_domain(text).unwrap();
        assert!(d.uses_costs);
        assert_eq!(d.action_schemas[0].cost, "71.696".parse().unwrap());
        assert_eq!(d.action_schemas[1].cost, Cost::ZERO);
    }

    #[test]
    fn problem_errors() {
        let d = parse_domain(NAV).unwrap();
        let ok = "(define (problem p) (:domain nav) (:objects v - vehicle w0 w1 - waypoint)
            (:init (at v w0) (connected w0 w1)) (:goal (at v w0)))";
        let p = parse_problem(ok, &d).unwrap();
        assert_eq!(p.goal.len(), 1);
        let bad_obj = ok.replace("(:init (at v w0)", "(:init (at v wp99)");
        assert_eq!(parse_problem(&bad_obj, &d).unwrap_err(), PddlError::UnknownObject("wp99".into()));
        let bad_type = ok.replace("(connected w0 w1)", "(connected v w1)");
        assert!(matches!(parse_problem(&bad_type, &d), Err(PddlError::TypeMismatch { .. })));
        let bad_pred = ok.replace("(connected w0 w1)", "(linked w0 w1)");
        assert_eq!(parse_problem(&bad_pred, &d).unwrap_err(), PddlError::UnknownPredicate("linked".into()));
        let bad_syntax = ok.replace("(:goal (at v w0)))", "(:goal (at v w0))");
        assert!(matches!(parse_problem(&bad_syntax, &d), Err(PddlError::Syntax { .. })));
    }
}
