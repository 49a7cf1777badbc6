//! Fixture loading shared by the benchmarks.

use std::path::PathBuf;

use whyplan_core::pddl::{ground_task, parse_domain, parse_problem, GroundTask};
use whyplan_core::search::{parse_plan, Plan};

pub fn fixture_text(name: &str, file: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).join(file);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn fixture_task(name: &str) -> GroundTask {
    let d = parse_domain(&fixture_text(name, "domain.pddl")).expect("fixture domain");
    let p = parse_problem(&fixture_text(name, "problem.pddl"), &d).expect("fixture problem");
    ground_task(&d, &p).expect("fixture grounds")
}

/// The AUV survey plan with its grounded task.
pub fn survey() -> (GroundTask, Plan) {
    let mut t = fixture_task("auv-toy");
    let plan = parse_plan(&fixture_text("auv-toy", "survey.plan"), &mut t).expect("survey plan");
    (t, plan)
}
