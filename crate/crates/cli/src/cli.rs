//! Command line front end. With `--json` every command prints the document
//! the HTTP API returns for the same request.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use whyplan_core::contrastive::WhyNotQuery;
use whyplan_core::monitor::parse_updates;
use whyplan_core::pddl::{ground_task, parse_domain, parse_problem};
use whyplan_core::search::{parse_plan, search_plan, Heuristic, SearchConfig, SearchResult, Strategy};
use whyplan_core::service::{
    AskRequest, InjectCommand, InjectRequest, Question, Service, ServiceError, Session, SessionRecord, Store,
    UpdatesRequest, SCHEMA_VERSION,
};
use whyplan_core::validate::{validate_plan, Metric};

pub const WORKSPACE_ENV: &str = "WHYPLAN_WORKSPACE";

#[derive(Debug, Parser)]
#[command(name = "whyplan", version, about = "Plans and explains plans for classical PDDL problems")]
struct Cli {
    /// Print JSON documents instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

/// Where the model and plan come from. A plan file names its domain and
/// problem in `; domain:` / `; problem:` header lines; the flags override.
#[derive(Debug, clap::Args)]
struct Target {
    /// Plan file. Without one the planner supplies the plan.
    plan: Option<PathBuf>,
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find a plan and write it in the plan text format.
    Plan {
        domain: PathBuf,
        problem: PathBuf,
        /// Write the plan here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "astar")]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value = "hmax")]
        heuristic: HeuristicArg,
    },
    /// Check a plan and score it under metrics.
    Validate {
        #[command(flatten)]
        target: Target,
        /// `total-cost`, `plan-length` or `weighted(name=w,...)`; repeatable.
        #[arg(long = "metric")]
        metrics: Vec<Metric>,
    },
    /// Why is step N in the plan?
    Why {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        step: usize,
    },
    /// Why not a plan without an action, or one that uses an object?
    Whynot {
        #[command(flatten)]
        target: Target,
        /// Ground action `(name args...)` to avoid; repeatable.
        #[arg(long = "forbid")]
        forbid: Vec<String>,
        /// Object the alternative must involve.
        #[arg(long)]
        require: Option<String>,
        /// Only count participation through actions achieving a goal.
        #[arg(long, requires = "require")]
        goal_achievers: bool,
        #[arg(long = "metric")]
        metrics: Vec<Metric>,
    },
    /// Why can an action not be applied after N steps?
    Whycant {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        action: String,
        #[arg(long, default_value_t = 0)]
        after: usize,
    },
    /// Run N steps, apply an action, replan and classify the outcome.
    Inject {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        after: usize,
        #[arg(long)]
        action: String,
        /// Forbid the replanner from revisiting the executed prefix.
        #[arg(long)]
        forbid_revisit: bool,
    },
    /// Feed an update stream (one JSON record per line) to the monitor.
    Monitor {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        updates: PathBuf,
        #[arg(long)]
        domain: Option<PathBuf>,
        #[arg(long)]
        problem: Option<PathBuf>,
    },
    /// Replay an exported session transcript and compare every answer.
    Replay { transcript: PathBuf },
    /// Print the grounded task.
    Dump { domain: PathBuf, problem: PathBuf },
    /// Serve the HTTP API.
    Serve {
        /// Session store directory.
        #[arg(long, env = WORKSPACE_ENV)]
        workspace: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    Astar,
    Gbfs,
    Uniform,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum HeuristicArg {
    Hadd,
    Hmax,
    GoalCount,
    Zero,
}

/// A failure that maps to exit status 1.
struct Failure {
    body: Value,
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Failure {
        Failure { body: e.body() }
    }
}

fn failure(kind: &str, message: String) -> Failure {
    Failure {
        body: json!({ "schema_version": SCHEMA_VERSION, "error": kind, "message": message, "diagnostics": null }),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| failure("io", format!("{}: {e}", path.display())))
}

struct Loaded {
    domain: String,
    problem: String,
    plan: Option<String>,
}

/// Value of a `; key: value` header line.
fn header(text: &str, key: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix(';'))
        .filter_map(|l| l.trim().strip_prefix(key)?.trim().strip_prefix(':').map(|v| v.trim().to_string()))
        .next()
}

fn load(plan: Option<&Path>, domain: Option<&Path>, problem: Option<&Path>) -> Result<Loaded, Failure> {
    let plan_text = plan.map(read).transpose()?;
    let base = plan.and_then(Path::parent).unwrap_or(Path::new("."));
    let resolve = |flag: Option<&Path>, key: &str| -> Result<PathBuf, Failure> {
        match (flag, plan_text.as_deref().and_then(|t| header(t, key))) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(h)) => Ok(base.join(h)),
            (None, None) => {
                Err(failure("usage", format!("no {key} file: pass --{key} or add a `; {key}:` plan header")))
            }
        }
    };
    let d = resolve(domain, "domain")?;
    let p = resolve(problem, "problem")?;
    Ok(Loaded { domain: read(&d)?, problem: read(&p)?, plan: plan_text })
}

fn session(t: &Target) -> Result<Session, Failure> {
    let l = load(t.plan.as_deref(), t.domain.as_deref(), t.problem.as_deref())?;
    Ok(Session::create(&l.domain, &l.problem, l.plan.as_deref())?)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error worth a panic.
fn write_out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// JSON goes out compact, byte for byte what the HTTP API sends.
fn emit<T: Serialize>(json_mode: bool, doc: &T, text: &str) {
    if json_mode {
        write_out(&format!("{}\n", serde_json::to_string(doc).expect("serializable")));
    } else {
        write_out(&format!("{text}\n"));
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let json_mode = cli.json;
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            if f.body["error"] == "usage" {
                eprintln!(
                    "error: {}\n\n{}",
                    f.body["message"].as_str().unwrap_or_default(),
                    Cli::command().render_usage()
                );
                return 2;
            }
            if json_mode {
                eprintln!("{}", serde_json::to_string(&f.body).expect("serializable"));
            } else {
                eprintln!("error: {}", f.body["message"].as_str().unwrap_or_default());
            }
            1
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    let j = cli.json;
    match cli.command {
        Command::Plan { domain, problem, out, strategy, heuristic } => {
            let l = load(None, Some(&domain), Some(&problem))?;
            let plan_text = plan_file(&l, &domain, &problem, strategy, heuristic)?;
            let s = Session::create(&l.domain, &l.problem, Some(&plan_text))?;
            let view = s.plan_view();
            match &out {
                Some(path) => {
                    std::fs::write(path, &plan_text).map_err(|e| failure("io", format!("{}: {e}", path.display())))?
                }
                None if !j => write_out(&plan_text),
                None => {}
            }
            emit(j, &view, &format!("total_cost {}", view.total_cost));
            Ok(0)
        }
        Command::Validate { target, metrics } => {
            let l = load(target.plan.as_deref(), target.domain.as_deref(), target.problem.as_deref())?;
            let plan_text = l.plan.as_deref().ok_or_else(|| failure("usage", "validate needs a plan file".into()))?;
            let d = parse_domain(&l.domain).map_err(ServiceError::from)?;
            let p = parse_problem(&l.problem, &d).map_err(ServiceError::from)?;
            let mut task = ground_task(&d, &p).map_err(ServiceError::from)?;
            let plan = parse_plan(plan_text, &mut task).map_err(ServiceError::from)?;
            let report = validate_plan(&task, &plan, &metrics);
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "valid": report.valid,
                "failure": report.failure,
                "metrics": report.metric_values,
            });
            let mut text = match &report.failure {
                None => "valid".to_string(),
                Some(f) => format!("invalid: {f}"),
            };
            for (m, v) in &report.metric_values {
                text.push_str(&format!("\n{m} {v}"));
            }
            emit(j, &doc, &text);
            Ok(if report.valid { 0 } else { 1 })
        }
        Command::Why { target, step } => ask(j, &target, Question::Q1 { step }),
        Command::Whynot { target, forbid, require, goal_achievers, metrics } => {
            if forbid.is_empty() && require.is_none() {
                return Err(failure("usage", "whynot needs --forbid or --require".into()));
            }
            ask(j, &target, Question::Q2(WhyNotQuery { forbid, require, goal_achievers, metrics }))
        }
        Command::Whycant { target, action, after } => ask(j, &target, Question::Q4 { action, after }),
        Command::Inject { target, after, action, forbid_revisit } => {
            let mut s = session(&target)?;
            let r =
                s.inject(&InjectRequest { version: None, command: InjectCommand { after, action, forbid_revisit } })?;
            emit(j, &r, &r.text);
            Ok(0)
        }
        Command::Monitor { plan, updates, domain, problem } => {
            let l = load(Some(&plan), domain.as_deref(), problem.as_deref())?;
            let mut s = Session::create(&l.domain, &l.problem, l.plan.as_deref())?;
            let stream = parse_updates(&read(&updates)?).map_err(|e| failure("updates", e.to_string()))?;
            let r = s.updates(&UpdatesRequest { version: None, updates: stream })?;
            let text: Vec<&str> = r.responses.iter().map(|x| x.text.as_str()).collect();
            emit(j, &r, &text.join("\n"));
            Ok(0)
        }
        Command::Replay { transcript } => {
            let record: SessionRecord = serde_json::from_str(&read(&transcript)?)
                .map_err(|e| failure("transcript", format!("{}: {e}", transcript.display())))?;
            let (_, report) = Session::replay(&record)?;
            let text = if report.identical {
                format!("{} event(s) replayed identically", report.events)
            } else {
                let idx: Vec<String> = report.mismatches.iter().map(|m| m.index.to_string()).collect();
                format!("{} event(s) replayed; answers differ at {}", report.events, idx.join(", "))
            };
            emit(j, &report, &text);
            Ok(if report.identical { 0 } else { 1 })
        }
        Command::Dump { domain, problem } => {
            let l = load(None, Some(&domain), Some(&problem))?;
            let d = parse_domain(&l.domain).map_err(ServiceError::from)?;
            let p = parse_problem(&l.problem, &d).map_err(ServiceError::from)?;
            let task = ground_task(&d, &p).map_err(ServiceError::from)?;
            write_out(&task.dump());
            Ok(0)
        }
        Command::Serve { workspace, addr } => {
            let store = Store::open(&workspace)?;
            let svc = Arc::new(Service::new(Some(store)));
            let rt = tokio::runtime::Runtime::new().map_err(|e| failure("io", e.to_string()))?;
            rt.block_on(crate::http::serve(svc, &addr)).map_err(|e| failure("io", format!("{addr}: {e}")))?;
            Ok(0)
        }
    }
}

fn ask(j: bool, target: &Target, question: Question) -> Result<i32, Failure> {
    let mut s = session(target)?;
    let r = s.ask(&AskRequest { version: None, question })?;
    emit(j, &r, &r.text);
    Ok(0)
}

/// Plans and renders the plan file, headers pointing back at the sources.
fn plan_file(l: &Loaded, domain: &Path, problem: &Path, s: StrategyArg, h: HeuristicArg) -> Result<String, Failure> {
    let d = parse_domain(&l.domain).map_err(ServiceError::from)?;
    let p = parse_problem(&l.problem, &d).map_err(ServiceError::from)?;
    let task = ground_task(&d, &p).map_err(ServiceError::from)?;
    let strategy = match s {
        StrategyArg::Astar => Strategy::AStar,
        StrategyArg::Gbfs => Strategy::GreedyBestFirst,
        StrategyArg::Uniform => Strategy::Uniform,
    };
    let heuristic = match h {
        HeuristicArg::Hadd => Heuristic::HAdd,
        HeuristicArg::Hmax => Heuristic::HMax,
        HeuristicArg::GoalCount => Heuristic::GoalCount,
        HeuristicArg::Zero => Heuristic::Zero,
    };
    let plan = match search_plan(&task, task.init(), &SearchConfig::with(strategy, heuristic)) {
        SearchResult::PlanFound { plan, .. } => plan,
        SearchResult::Unsolvable { explored_states } => {
            return Err(failure(
                "no-plan",
                format!(
                    "the problem is unsolvable ({})",
                    whyplan_core::contrastive::unsolvable_evidence(explored_states)
                ),
            ))
        }
        SearchResult::ResourceLimit { explored_states, .. } => {
            return Err(failure(
                "no-plan",
                format!("search stopped at a resource limit after {explored_states} states"),
            ))
        }
    };
    let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let mut text = format!("; domain: {}\n; problem: {}\n", abs(domain).display(), abs(problem).display());
    text.push_str(&plan.to_text(&task));
    Ok(text)
}
