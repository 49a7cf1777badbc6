//! PDDL pretty-printing. Output re-parses to a structurally identical model.

use std::fmt::{self, Display, Write};

use super::model::*;
use crate::validate::Metric;

fn typed(out: &mut String, params: &[TypedParam], var: bool) {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{}{} - {}", if var { "?" } else { "" }, p.name, p.ty);
    }
}

fn template(out: &mut String, t: &AtomTemplate, params: &[TypedParam]) {
    let _ = write!(out, "({}", t.predicate);
    for term in &t.terms {
        match term {
            Term::Var(v) => {
                let _ = write!(out, " ?{}", params[*v].name);
            }
            Term::Const(c) => {
                let _ = write!(out, " {c}");
            }
        }
    }
    out.push(')');
}

impl Display for DomainModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "(define (domain {})", self.name);
        if !self.requirements.is_empty() {
            s.push_str("  (:requirements");
            for r in &self.requirements {
                let _ = write!(s, " {}", r.keyword());
            }
            s.push_str(")\n");
        }
        let types: Vec<_> = self.types.types().collect();
        if !types.is_empty() {
            s.push_str("  (:types");
            for (t, p) in types {
                let _ = write!(s, " {t} - {p}");
            }
            s.push_str(")\n");
        }
        if !self.constants.is_empty() {
            s.push_str("  (:constants");
            for (c, t) in &self.constants {
                let _ = write!(s, " {c} - {t}");
            }
            s.push_str(")\n");
        }
        s.push_str("  (:predicates");
        for p in &self.predicates {
            let _ = write!(s, " ({}", p.name);
            if !p.params.is_empty() {
                s.push(' ');
                typed(&mut s, &p.params, true);
            }
            s.push(')');
        }
        s.push_str(")\n");
        if self.uses_costs {
            s.push_str("  (:functions (total-cost) - number)\n");
        }
        for a in &self.action_schemas {
            let _ = write!(s, "  (:action {}\n    :parameters (", a.name);
            typed(&mut s, &a.parameters, true);
            s.push_str(")\n    :precondition (and");
            for t in &a.pre_pos {
                s.push(' ');
                template(&mut s, t, &a.parameters);
            }
            for t in &a.pre_neg {
                s.push_str(" (not ");
                template(&mut s, t, &a.parameters);
                s.push(')');
            }
            s.push_str(")\n    :effect (and");
            for t in &a.add_effects {
                s.push(' ');
                template(&mut s, t, &a.parameters);
            }
            for t in &a.del_effects {
                s.push_str(" (not ");
                template(&mut s, t, &a.parameters);
                s.push(')');
            }
            if self.uses_costs && !a.cost.is_zero() {
                let _ = write!(s, " (increase (total-cost) {})", a.cost);
            }
            s.push_str("))\n");
        }
        s.push(')');
        f.write_str(&s)
    }
}

impl Display for ProblemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (problem {})", self.name)?;
        writeln!(f, "  (:domain {})", self.domain_name)?;
        write!(f, "  (:objects")?;
        for (o, t) in &self.objects {
            write!(f, " {o} - {t}")?;
        }
        writeln!(f, ")")?;
        write!(f, "  (:init")?;
        for a in &self.init {
            write!(f, " {a}")?;
        }
        writeln!(f, ")")?;
        write!(f, "  (:goal (and")?;
        for l in &self.goal {
            write!(f, " {l}")?;
        }
        write!(f, "))")?;
        match self.metric {
            Some(Metric::TotalCost) => write!(f, "\n  (:metric minimize (total-cost))")?,
            Some(Metric::PlanLength) => write!(f, "\n  (:metric minimize (plan-length))")?,
            _ => {}
        }
        write!(f, ")")
    }
}
