//! A second, deliberately naive reading of PDDL text: enough of the subset to
//! enumerate typed groundings and static facts without the crate's parser.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq)]
pub enum Sx {
    Atom(String),
    List(Vec<Sx>),
}

impl Sx {
    fn list(&self) -> &[Sx] {
        match self {
            Sx::List(v) => v,
            Sx::Atom(a) => panic!("expected a list, found {a}"),
        }
    }

    fn atom(&self) -> &str {
        match self {
            Sx::Atom(a) => a,
            Sx::List(_) => panic!("expected an atom"),
        }
    }

    fn head(&self) -> Option<&str> {
        match self.list().first() {
            Some(Sx::Atom(a)) => Some(a),
            _ => None,
        }
    }
}

pub fn read_sx(text: &str) -> Sx {
    let cleaned: String = text.lines().map(|l| l.split(';').next().unwrap()).collect::<Vec<_>>().join("\n");
    let spaced = cleaned.replace('(', " ( ").replace(')', " ) ");
    let mut stack: Vec<Vec<Sx>> = vec![Vec::new()];
    for tok in spaced.split_whitespace() {
        match tok {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().unwrap();
                stack.last_mut().unwrap().push(Sx::List(done));
            }
            t => stack.last_mut().unwrap().push(Sx::Atom(t.to_lowercase())),
        }
    }
    stack.pop().unwrap().into_iter().next().unwrap()
}

/// `a b - t c - u` into `[(a, t), (b, t), (c, u)]`; untyped names get `object`.
fn typed(items: &[Sx]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut pending = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let a = items[i].atom();
        if a == "-" {
            let t = items[i + 1].atom().to_string();
            out.extend(pending.drain(..).map(|n| (n, t.clone())));
            i += 2;
        } else {
            pending.push(a.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, "object".to_string())));
    out
}

fn section<'a>(items: &'a [Sx], key: &str) -> Option<&'a [Sx]> {
    items.iter().find(|s| matches!(s, Sx::List(_)) && s.head() == Some(key)).map(|s| &s.list()[1..])
}

/// Positive and negative literals of an `and` tree; cost increments dropped.
fn literals(s: &Sx, pos: &mut Vec<Vec<String>>, neg: &mut Vec<Vec<String>>) {
    match s.head() {
        Some("and") => {
            for x in &s.list()[1..] {
                literals(x, pos, neg);
            }
        }
        Some("not") => literals(&s.list()[1], neg, pos),
        Some("increase") | Some("=") => {}
        _ => pos.push(s.list().iter().map(|x| x.atom().to_string()).collect()),
    }
}

#[derive(Debug, Clone)]
pub struct TextSchema {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub pre_pos: Vec<Vec<String>>,
    pub pre_neg: Vec<Vec<String>>,
    pub add: Vec<Vec<String>>,
    pub del: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct TextDomain {
    pub parent: HashMap<String, String>,
    pub predicates: BTreeSet<String>,
    pub schemas: Vec<TextSchema>,
}

#[derive(Debug, Clone)]
pub struct TextProblem {
    pub objects: Vec<(String, String)>,
    pub init: BTreeSet<String>,
    pub goal_pos: BTreeSet<String>,
}

pub fn read_domain(text: &str) -> TextDomain {
    let sx = read_sx(text);
    let items = sx.list();
    let parent = section(items, ":types").map(typed).unwrap_or_default().into_iter().collect();
    let predicates =
        section(items, ":predicates").unwrap_or(&[]).iter().map(|p| p.list()[0].atom().to_string()).collect();
    let schemas = items
        .iter()
        .filter(|s| matches!(s, Sx::List(_)) && s.head() == Some(":action"))
        .map(|s| {
            let l = s.list();
            let key = |k: &str| l.iter().position(|x| x == &Sx::Atom(k.into())).map(|i| &l[i + 1]);
            let (mut pre_pos, mut pre_neg, mut add, mut del) = Default::default();
            if let Some(p) = key(":precondition") {
                literals(p, &mut pre_pos, &mut pre_neg);
            }
            if let Some(e) = key(":effect") {
                literals(e, &mut add, &mut del);
            }
            TextSchema {
                name: l[1].atom().to_string(),
                params: key(":parameters").map(|p| typed(p.list())).unwrap_or_default(),
                pre_pos,
                pre_neg,
                add,
                del,
            }
        })
        .collect();
    TextDomain { parent, predicates, schemas }
}

fn atom_text(parts: &[String]) -> String {
    format!("({})", parts.join(" "))
}

pub fn read_problem(text: &str) -> TextProblem {
    let sx = read_sx(text);
    let items = sx.list();
    let objects = section(items, ":objects").map(typed).unwrap_or_default();
    let init = section(items, ":init")
        .unwrap_or(&[])
        .iter()
        .filter(|s| s.head() != Some("="))
        .map(|s| atom_text(&s.list().iter().map(|x| x.atom().to_string()).collect::<Vec<_>>()))
        .collect();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    if let Some(g) = section(items, ":goal") {
        literals(&g[0], &mut pos, &mut neg);
    }
    TextProblem { objects, init, goal_pos: pos.iter().map(|a| atom_text(a)).collect() }
}

impl TextDomain {
    pub fn is_subtype(&self, t: &str, of: &str) -> bool {
        let mut cur = t;
        loop {
            if cur == of || of == "object" {
                return true;
            }
            match self.parent.get(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Predicates mentioned in no effect of any schema.
    pub fn static_predicates(&self) -> BTreeSet<String> {
        let mut out = self.predicates.clone();
        for s in &self.schemas {
            for l in s.add.iter().chain(&s.del) {
                out.remove(&l[0]);
            }
        }
        out
    }

    pub fn schema(&self, name: &str) -> &TextSchema {
        self.schemas.iter().find(|s| s.name == name).unwrap_or_else(|| panic!("no schema {name}"))
    }
}

impl TextSchema {
    /// Atom texts of `lits` with the parameters bound to `args`.
    pub fn bind(&self, lits: &[Vec<String>], args: &[String]) -> Vec<String> {
        let sub = |t: &String| match self.params.iter().position(|(v, _)| v == t) {
            Some(i) => args[i].clone(),
            None => t.clone(),
        };
        lits.iter()
            .map(|l| atom_text(&std::iter::once(l[0].clone()).chain(l[1..].iter().map(sub)).collect::<Vec<_>>()))
            .collect()
    }
}

/// Every type-consistent grounding, by nested loops over the objects, as
/// `(schema, args)` pairs.
pub fn all_groundings(d: &TextDomain, p: &TextProblem) -> Vec<(String, Vec<String>)> {
    let mut out = Vec::new();
    for s in &d.schemas {
        let mut tuples: Vec<Vec<String>> = vec![Vec::new()];
        for (_, ty) in &s.params {
            let objs: Vec<&String> = p.objects.iter().filter(|(_, t)| d.is_subtype(t, ty)).map(|(o, _)| o).collect();
            tuples = tuples
                .into_iter()
                .flat_map(|t| objs.iter().map(move |o| [t.clone(), vec![(*o).clone()]].concat()))
                .collect();
        }
        out.extend(tuples.into_iter().map(|t| (s.name.clone(), t)));
    }
    out
}

/// Groundings whose static positive preconditions all hold initially and
/// whose static negative preconditions are all absent.
pub fn surviving_groundings(d: &TextDomain, p: &TextProblem) -> Vec<(String, Vec<String>)> {
    let statics = d.static_predicates();
    let is_static =
        |a: &String| statics.contains(a.trim_start_matches('(').split(' ').next().unwrap().trim_end_matches(')'));
    all_groundings(d, p)
        .into_iter()
        .filter(|(name, args)| {
            let s = d.schema(name);
            s.bind(&s.pre_pos, args).iter().filter(|a| is_static(a)).all(|a| p.init.contains(a))
                && !s.bind(&s.pre_neg, args).iter().filter(|a| is_static(a)).any(|a| p.init.contains(a))
        })
        .collect()
}

/// Static initial facts that some step of the plan needs, and their objects.
pub fn filter_oracle(d: &TextDomain, p: &TextProblem, labels: &[String]) -> (BTreeSet<String>, BTreeSet<String>) {
    let statics = d.static_predicates();
    let mut facts = BTreeSet::new();
    for l in labels {
        let parts: Vec<String> =
            l.trim_matches(|c| c == '(' || c == ')').split_whitespace().map(str::to_string).collect();
        let s = d.schema(&parts[0]);
        for a in s.bind(&s.pre_pos, &parts[1..]) {
            let pred = a[1..a.len() - 1].split(' ').next().unwrap().to_string();
            if statics.contains(&pred) && p.init.contains(&a) {
                facts.insert(a);
            }
        }
    }
    let objects = facts
        .iter()
        .flat_map(|f| f[1..f.len() - 1].split(' ').skip(1).map(str::to_string).collect::<Vec<_>>())
        .collect();
    (facts, objects)
}
