use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PddlError;
use crate::cost::Cost;
use crate::validate::Metric;

/// Name of the universal type every type hierarchy is rooted at.
pub const ROOT_TYPE: &str = "object";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Requirement {
    Strips,
    Typing,
    NegativePreconditions,
    ActionCosts,
}

impl Requirement {
    pub fn keyword(&self) -> &'static str {
        match self {
            Requirement::Strips => ":strips",
            Requirement::Typing => ":typing",
            Requirement::NegativePreconditions => ":negative-preconditions",
            Requirement::ActionCosts => ":action-costs",
        }
    }

    pub fn from_keyword(kw: &str) -> Result<Requirement, PddlError> {
        match kw {
            ":strips" => Ok(Requirement::Strips),
            ":typing" => Ok(Requirement::Typing),
            ":negative-preconditions" => Ok(Requirement::NegativePreconditions),
            ":action-costs" => Ok(Requirement::ActionCosts),
            other => Err(PddlError::UnsupportedFeature(other.trim_start_matches(':').to_string())),
        }
    }
}

/// Type forest: every declared type maps to its parent, `object` excluded.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeHierarchy {
    parents: BTreeMap<String, String>,
}

impl TypeHierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, parent: &str) -> Result<(), PddlError> {
        if name == ROOT_TYPE {
            return Ok(());
        }
        if parent != ROOT_TYPE && !self.parents.contains_key(parent) {
            self.parents.insert(parent.to_string(), ROOT_TYPE.to_string());
        }
        // A type mentioned earlier only as a parent may now get its real parent.
        self.parents.insert(name.to_string(), parent.to_string());
        if self.ancestors(name).any(|a| a == name) {
            return Err(PddlError::Invalid(format!("type cycle through `{name}`")));
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        name == ROOT_TYPE || self.parents.contains_key(name)
    }

    pub fn parent(&self, name: &str) -> Option<&str> {
        self.parents.get(name).map(String::as_str)
    }

    /// Declared types other than `object`, in name order.
    pub fn types(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parents.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Strict ancestors of `name`, nearest first. Terminates on cycles.
    pub fn ancestors<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a str> + 'a {
        let mut cur = self.parents.get(name).map(String::as_str);
        let mut steps = 0usize;
        let limit = self.parents.len() + 1;
        std::iter::from_fn(move || {
            let c = cur?;
            steps += 1;
            if steps > limit {
                return None;
            }
            cur = self.parents.get(c).map(String::as_str);
            Some(c)
        })
    }

    pub fn is_subtype(&self, ty: &str, of: &str) -> bool {
        ty == of || of == ROOT_TYPE || self.ancestors(ty).any(|a| a == of)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypedParam {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    /// Index into the owning schema's parameter list.
    Var(usize),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomTemplate {
    pub predicate: String,
    pub terms: Vec<Term>,
}

impl AtomTemplate {
    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().filter_map(|t| match t {
            Term::Var(v) => Some(*v),
            Term::Const(_) => None,
        })
    }

    /// Substitutes a full binding. Panics if a variable index is out of range.
    pub fn instantiate(&self, binding: &[&str]) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: self
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => binding[*v].to_string(),
                    Term::Const(c) => c.clone(),
                })
                .collect(),
        }
    }

    /// Substitutes a partial binding, or `None` if some variable is unbound.
    pub fn try_instantiate(&self, binding: &[Option<&str>]) -> Option<Atom> {
        let mut args = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match t {
                Term::Var(v) => args.push(binding.get(*v).copied().flatten()?.to_string()),
                Term::Const(c) => args.push(c.clone()),
            }
        }
        Some(Atom { predicate: self.predicate.clone(), args })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub parameters: Vec<TypedParam>,
    pub pre_pos: Vec<AtomTemplate>,
    pub pre_neg: Vec<AtomTemplate>,
    pub add_effects: Vec<AtomTemplate>,
    pub del_effects: Vec<AtomTemplate>,
    pub cost: Cost,
    /// Schema this one was compiled from; ground instances are reported under
    /// that name so compiled plans read as plans of the original model.
    pub origin: Option<String>,
}

impl ActionSchema {
    pub fn display_name(&self) -> &str {
        self.origin.as_deref().unwrap_or(&self.name)
    }

    pub fn literal_templates(&self) -> impl Iterator<Item = &AtomTemplate> {
        self.pre_pos.iter().chain(&self.pre_neg).chain(&self.add_effects).chain(&self.del_effects)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainModel {
    pub name: String,
    pub requirements: BTreeSet<Requirement>,
    pub types: TypeHierarchy,
    pub constants: Vec<(String, String)>,
    pub predicates: Vec<PredicateDecl>,
    pub action_schemas: Vec<ActionSchema>,
    pub uses_costs: bool,
}

impl DomainModel {
    pub fn empty(name: &str) -> Self {
        DomainModel {
            name: name.to_string(),
            requirements: BTreeSet::new(),
            types: TypeHierarchy::new(),
            constants: Vec::new(),
            predicates: Vec::new(),
            action_schemas: Vec::new(),
            uses_costs: false,
        }
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.action_schemas.iter().find(|a| a.name == name)
    }

    /// Checks the structural invariants: unique names, known types, forest
    /// hierarchy, bound variables and predicate signatures.
    pub fn check(&self) -> Result<(), PddlError> {
        let mut seen = BTreeSet::new();
        for p in &self.predicates {
            if !seen.insert(p.name.as_str()) {
                return Err(PddlError::Duplicate { kind: "predicate", name: p.name.clone() });
            }
            for param in &p.params {
                self.require_type(&param.ty)?;
            }
        }
        let mut seen = BTreeSet::new();
        for (c, ty) in &self.constants {
            if !seen.insert(c.as_str()) {
                return Err(PddlError::Duplicate { kind: "constant", name: c.clone() });
            }
            self.require_type(ty)?;
        }
        for (t, _) in self.types.types() {
            if !self.types.ancestors(t).any(|a| a == ROOT_TYPE) {
                return Err(PddlError::Invalid(format!("type `{t}` is not rooted at `object`")));
            }
        }
        let mut seen = BTreeSet::new();
        for a in &self.action_schemas {
            if !seen.insert(a.name.as_str()) {
                return Err(PddlError::Duplicate { kind: "action", name: a.name.clone() });
            }
            if a.cost.is_negative() {
                return Err(PddlError::Invalid(format!("negative cost on `{}`", a.name)));
            }
            for param in &a.parameters {
                self.require_type(&param.ty)?;
            }
            for lit in a.literal_templates() {
                self.check_template(a, lit)?;
            }
        }
        Ok(())
    }

    fn require_type(&self, ty: &str) -> Result<(), PddlError> {
        if self.types.contains(ty) {
            Ok(())
        } else {
            Err(PddlError::UnknownType(ty.to_string()))
        }
    }

    fn check_template(&self, schema: &ActionSchema, lit: &AtomTemplate) -> Result<(), PddlError> {
        let decl = self.predicate(&lit.predicate).ok_or_else(|| PddlError::UnknownPredicate(lit.predicate.clone()))?;
        if decl.params.len() != lit.terms.len() {
            return Err(PddlError::Arity {
                predicate: lit.predicate.clone(),
                expected: decl.params.len(),
                found: lit.terms.len(),
            });
        }
        for (term, param) in lit.terms.iter().zip(&decl.params) {
            let (ty, shown) = match term {
                Term::Var(v) => {
                    let p = schema.parameters.get(*v).ok_or_else(|| PddlError::UnknownVariable {
                        name: format!("#{v}"),
                        context: schema.name.clone(),
                    })?;
                    (p.ty.as_str(), format!("?{}", p.name))
                }
                Term::Const(c) => {
                    let ty = self
                        .constants
                        .iter()
                        .find(|(n, _)| n == c)
                        .map(|(_, t)| t.as_str())
                        .ok_or_else(|| PddlError::UnknownObject(c.clone()))?;
                    (ty, c.clone())
                }
            };
            if !self.types.is_subtype(ty, &param.ty) {
                return Err(PddlError::TypeMismatch {
                    literal: format!("({} ... {shown} ...) in {}", lit.predicate, schema.name),
                    expected: param.ty.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A ground atom `(predicate arg...)`. Ordering is lexicographic on
/// `(predicate, args)`, which fixes proposition ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<S: Into<String>>(predicate: &str, args: impl IntoIterator<Item = S>) -> Atom {
        Atom { predicate: predicate.to_string(), args: args.into_iter().map(Into::into).collect() }
    }

    /// Parses `(pred a b)` or `pred a b`.
    pub fn parse(text: &str) -> Result<Atom, PddlError> {
        let t = text.trim();
        let inner = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')).unwrap_or(t);
        let mut parts = inner.split_whitespace().map(str::to_ascii_lowercase);
        let predicate =
            parts.next().ok_or_else(|| PddlError::Syntax { line: 1, column: 1, expected: "atom".into() })?;
        if predicate.contains(['(', ')']) {
            return Err(PddlError::Syntax { line: 1, column: 1, expected: "flat atom".into() });
        }
        Ok(Atom { predicate, args: parts.collect() })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Atom {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Atom, D::Error> {
        let s = String::deserialize(d)?;
        Atom::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemModel {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<(String, String)>,
    pub init: BTreeSet<Atom>,
    pub goal: Vec<Literal>,
    pub metric: Option<Metric>,
}

impl ProblemModel {
    /// Problem objects followed by domain constants, with their types.
    pub fn all_objects<'a>(&'a self, domain: &'a DomainModel) -> Vec<(&'a str, &'a str)> {
        let mut out: Vec<(&str, &str)> = self.objects.iter().map(|(o, t)| (o.as_str(), t.as_str())).collect();
        for (c, t) in &domain.constants {
            if !self.objects.iter().any(|(o, _)| o == c) {
                out.push((c, t));
            }
        }
        out
    }

    pub fn object_type<'a>(&'a self, domain: &'a DomainModel, name: &str) -> Option<&'a str> {
        self.objects.iter().chain(&domain.constants).find(|(o, _)| o == name).map(|(_, t)| t.as_str())
    }

    /// Checks a ground atom against the domain's predicate signatures.
    pub fn check_atom(&self, domain: &DomainModel, atom: &Atom) -> Result<(), PddlError> {
        let decl =
            domain.predicate(&atom.predicate).ok_or_else(|| PddlError::UnknownPredicate(atom.predicate.clone()))?;
        if decl.params.len() != atom.args.len() {
            return Err(PddlError::Arity {
                predicate: atom.predicate.clone(),
                expected: decl.params.len(),
                found: atom.args.len(),
            });
        }
        for (arg, param) in atom.args.iter().zip(&decl.params) {
            let ty = self.object_type(domain, arg).ok_or_else(|| PddlError::UnknownObject(arg.clone()))?;
            if !domain.types.is_subtype(ty, &param.ty) {
                return Err(PddlError::TypeMismatch { literal: atom.to_string(), expected: param.ty.clone() });
            }
        }
        Ok(())
    }

    pub fn check(&self, domain: &DomainModel) -> Result<(), PddlError> {
        let mut seen = BTreeSet::new();
        for (o, ty) in &self.objects {
            if !seen.insert(o.as_str()) {
                return Err(PddlError::Duplicate { kind: "object", name: o.clone() });
            }
            if !domain.types.contains(ty) {
                return Err(PddlError::UnknownType(ty.clone()));
            }
        }
        for a in &self.init {
            self.check_atom(domain, a)?;
        }
        for l in &self.goal {
            self.check_atom(domain, &l.atom)?;
        }
        Ok(())
    }
}
