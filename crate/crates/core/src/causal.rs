//! Causal links of a validated plan and the "why is this step here" answer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize, Serializer};

use crate::pddl::{ActionId, Atom, GroundTask, PropId};
use crate::search::Plan;
use crate::validate::{validate_plan, InvalidPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Consumer {
    Step(usize),
    Goal,
}

impl<'de> Deserialize<'de> for Consumer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Consumer, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Step(usize),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Step(i) => Ok(Consumer::Step(i)),
            Raw::Marker(m) if m == "goal" => Ok(Consumer::Goal),
            Raw::Marker(m) => Err(serde::de::Error::custom(format!("expected a step index or \"goal\", found {m:?}"))),
        }
    }
}

impl Serialize for Consumer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Consumer::Step(i) => s.serialize_u64(*i as u64),
            Consumer::Goal => s.serialize_str("goal"),
        }
    }
}

/// `producer` adds `prop`, which `consumer` needs, and no step in between
/// deletes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CausalLink {
    pub producer: usize,
    pub prop: PropId,
    pub consumer: Consumer,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CausalError {
    #[error(transparent)]
    InvalidPlan(#[from] InvalidPlan),
    #[error("step {step} is out of range for a plan of {len} steps")]
    StepOutOfRange { step: usize, len: usize },
}

/// Links for every positive precondition and positive goal literal, each
/// supplied by the latest earlier step that adds it. Conditions that held
/// initially and were never re-added produce no link.
pub fn extract_causal_links(task: &GroundTask, plan: &Plan) -> Result<Vec<CausalLink>, InvalidPlan> {
    validate_plan(task, plan, &[]).into_result()?;
    Ok(links_unchecked(task, &plan.steps))
}

fn links_unchecked(task: &GroundTask, steps: &[ActionId]) -> Vec<CausalLink> {
    let mut latest: Vec<Option<usize>> = vec![None; task.num_props()];
    let mut links = Vec::new();
    for (j, &a) in steps.iter().enumerate() {
        let act = task.action_any(a).expect("validated step");
        for &p in &act.pre_pos {
            if let Some(i) = latest[p] {
                links.push(CausalLink { producer: i, prop: p, consumer: Consumer::Step(j) });
            }
        }
        for &p in &act.add {
            latest[p] = Some(j);
        }
    }
    for &p in task.goal_pos() {
        if let Some(i) = latest[p] {
            links.push(CausalLink { producer: i, prop: p, consumer: Consumer::Goal });
        }
    }
    links.sort();
    links
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkView {
    pub producer: usize,
    pub prop: Atom,
    pub consumer: Consumer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhyAnswer {
    pub target: usize,
    pub action: String,
    pub links: Vec<LinkView>,
    /// For each condition the step supplies, the other actions adding it.
    pub alternatives: BTreeMap<Atom, Vec<String>>,
    #[serde(skip)]
    pub alternative_ids: BTreeMap<PropId, Vec<ActionId>>,
    pub redundant: bool,
    pub text: String,
}

pub fn why_action(task: &GroundTask, plan: &Plan, step: usize) -> Result<WhyAnswer, CausalError> {
    if step >= plan.len() {
        return Err(CausalError::StepOutOfRange { step, len: plan.len() });
    }
    let links: Vec<CausalLink> = extract_causal_links(task, plan)?.into_iter().filter(|l| l.producer == step).collect();
    let target_id = plan.steps[step];
    let target_sig = task.action_label(target_id);
    let supported: BTreeSet<PropId> = links.iter().map(|l| l.prop).collect();

    let mut alternative_ids: BTreeMap<PropId, Vec<ActionId>> = BTreeMap::new();
    for &p in &supported {
        let mut seen = BTreeSet::new();
        let ids = task
            .live_actions()
            .filter(|(id, a)| *id != target_id && a.add.contains(&p))
            .filter(|(_, a)| a.signature() != target_sig && seen.insert(a.signature()))
            .map(|(id, _)| id)
            .collect();
        alternative_ids.insert(p, ids);
    }

    let alternatives = alternative_ids
        .iter()
        .map(|(&p, ids)| (task.atom(p).clone(), ids.iter().map(|&a| task.action_label(a)).collect()))
        .collect();
    let text = render(task, plan, step, &target_sig, &links, &alternative_ids);
    Ok(WhyAnswer {
        target: step,
        action: target_sig,
        links: links
            .iter()
            .map(|l| LinkView { producer: l.producer, prop: task.atom(l.prop).clone(), consumer: l.consumer })
            .collect(),
        alternatives,
        alternative_ids,
        redundant: links.is_empty(),
        text,
    })
}

fn render(
    task: &GroundTask,
    plan: &Plan,
    step: usize,
    sig: &str,
    links: &[CausalLink],
    alternatives: &BTreeMap<PropId, Vec<ActionId>>,
) -> String {
    let mut out = format!("step {step} {sig} ");
    if links.is_empty() {
        out.push_str("supports no later step and no goal; it is causally redundant");
        return out;
    }
    let consumers: BTreeSet<Consumer> = links.iter().map(|l| l.consumer).collect();
    let names: Vec<String> = consumers
        .iter()
        .map(|c| match c {
            Consumer::Step(j) => format!("step {j} {}", task.action_label(plan.steps[*j])),
            Consumer::Goal => "the goal".to_string(),
        })
        .collect();
    let _ = write!(out, "supports {}", names.join(", "));
    for (&p, alts) in alternatives {
        if alts.is_empty() {
            let _ = write!(out, "; the condition {} has no other achiever", task.atom(p));
        } else {
            let labels: Vec<String> = alts.iter().map(|&a| task.action_label(a)).collect();
            let _ = write!(
                out,
                "; the condition {} could otherwise only be achieved by {}",
                task.atom(p),
                labels.join(" or ")
            );
        }
    }
    out
}
