use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use serde::Serialize;
use xbar_core::dse::{
    pareto_front, parse_dsl, parse_objectives, rank, ConstraintQuery, DseError, NearestMiss, Repository,
};
use xbar_core::paa::EvalResult;
use xbar_llm::passk::load_tasks;
use xbar_llm::{
    passk_harness, shipped_suite, AuditLog, DslBackend, EndpointConfig, LlmClient, QueryBackend, RepoStats, Task,
};

use crate::util::{finding, input, load_repo, read_text, CliResult, Ctx};

#[derive(Args)]
pub struct QueryArgs {
    /// Repository file; the published reference table when omitted.
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Query in the constraint DSL (inline text, or @file).
    #[arg(long, conflicts_with = "json_query", required_unless_present = "json_query")]
    dsl: Option<String>,
    /// Query as JSON (inline text, or @file).
    #[arg(long)]
    json_query: Option<String>,
    /// How many ranked entries to show.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args)]
pub struct ParetoArgs {
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Comma-separated `min:metric` / `max:metric` list.
    #[arg(long, default_value = "min:power,min:area,max:accuracy")]
    objectives: String,
}

#[derive(Args)]
pub struct LlmQueryArgs {
    #[arg(long)]
    repo: Option<PathBuf>,
    /// The request in plain language.
    #[arg(long)]
    prompt: String,
    /// Endpoint TOML (base_url, model_name, timeout_s, max_retries); the key comes from the environment.
    #[arg(long, conflicts_with = "dsl", required_unless_present = "dsl")]
    endpoint: Option<PathBuf>,
    /// Skip the model and use this DSL query instead (inline or @file).
    #[arg(long)]
    dsl: Option<String>,
    /// Append every model exchange to this JSONL file.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args)]
pub struct PassKArgs {
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Task suite (JSON); the shipped suite when omitted.
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Endpoint TOML; without it each task's reference DSL is used.
    #[arg(long, conflicts_with = "dsl")]
    endpoint: Option<PathBuf>,
    /// Score the reference DSL of every task (the default without --endpoint).
    #[arg(long)]
    dsl: bool,
    /// Tasks sent to the endpoint concurrently.
    #[arg(long, default_value_t = 4)]
    in_flight: usize,
    #[arg(long)]
    audit: Option<PathBuf>,
}

/// `@path` reads the file, anything else is the text itself.
fn inline_or_file(s: &str) -> CliResult<String> {
    match s.strip_prefix('@') {
        Some(p) => read_text(std::path::Path::new(p)),
        None => Ok(s.to_string()),
    }
}

#[derive(Serialize)]
struct RankedRow {
    rank: usize,
    design: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    feasible: bool,
    avg_power_w: f64,
    area_um2: f64,
    accuracy_pct: f64,
}

#[derive(Serialize)]
struct QueryOutput {
    query: ConstraintQuery,
    feasible: usize,
    results: Vec<RankedRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nearest_miss: Option<NearestMiss>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attempts: Option<usize>,
}

fn run_query(ctx: &Ctx, repo: &Repository, q: &ConstraintQuery, top: usize, attempts: Option<usize>) -> CliResult<u8> {
    if repo.is_empty() {
        return Err(finding("empty repository"));
    }
    let mut out = QueryOutput {
        query: q.clone(),
        feasible: 0,
        results: Vec::new(),
        nearest_miss: None,
        attempts,
    };
    let code = match rank(repo, q) {
        Ok(sel) => {
            out.feasible = sel.entries.iter().filter(|r| r.feasible).count();
            out.results = sel
                .entries
                .iter()
                .take(top)
                .enumerate()
                .map(|(i, r)| {
                    let e: &EvalResult = repo.get(&r.design_key).expect("ranked keys come from the repository");
                    RankedRow {
                        rank: i + 1,
                        design: r.design_key.clone(),
                        score: Some(r.score),
                        feasible: r.feasible,
                        avg_power_w: e.avg_power_w,
                        area_um2: e.area_um2,
                        accuracy_pct: e.accuracy_pct,
                    }
                })
                .collect();
            0
        }
        Err(DseError::NoFeasible(m)) => {
            out.nearest_miss = Some(*m);
            1
        }
        Err(e) => return Err(input(e)),
    };
    ctx.emit(&out, || {
        let mut s = format!("query: {}\n", out.query.to_dsl().replace('\n', "; "));
        if let Some(a) = out.attempts {
            s += &format!("accepted at attempt {a}\n");
        }
        if let Some(m) = &out.nearest_miss {
            s += &format!(
                "no feasible design; nearest miss {} (total relative violation {:.4})\n",
                m.design_key, m.total_relative_violation
            );
            for c in &m.slack {
                s += &format!("  {:<28} value {:<18} violation {}\n", c.constraint, c.value, c.violation);
            }
            return s;
        }
        s += &format!("{} feasible\n", out.feasible);
        for r in &out.results {
            s += &format!(
                "{:>3}. {:<36} score {:.4}  power {:.6} W  area {:.1} um^2  accuracy {:.2} %{}\n",
                r.rank,
                r.design,
                r.score.unwrap_or(f64::NAN),
                r.avg_power_w,
                r.area_um2,
                r.accuracy_pct,
                if r.feasible { "" } else { "  (infeasible)" }
            );
        }
        s
    });
    Ok(code)
}

pub fn query(ctx: &Ctx, a: &QueryArgs) -> CliResult<u8> {
    let repo = load_repo(a.repo.as_deref())?;
    let q = match (&a.dsl, &a.json_query) {
        (Some(d), _) => parse_dsl(&inline_or_file(d)?).map_err(input)?,
        (None, Some(j)) => ConstraintQuery::from_json(&inline_or_file(j)?).map_err(input)?,
        (None, None) => unreachable!("clap requires one of --dsl and --json-query"),
    };
    run_query(ctx, &repo, &q, a.top, None)
}

#[derive(Serialize)]
struct ParetoOutput {
    objectives: Vec<String>,
    front: Vec<RankedRow>,
}

pub fn pareto(ctx: &Ctx, a: &ParetoArgs) -> CliResult<u8> {
    let repo = load_repo(a.repo.as_deref())?;
    if repo.is_empty() {
        return Err(finding("empty repository"));
    }
    let objs = parse_objectives(&a.objectives).map_err(input)?;
    let front = pareto_front(&repo, &objs).map_err(input)?;
    let out = ParetoOutput {
        objectives: objs.iter().map(|(m, d)| format!("{d:?}:{m}").to_lowercase()).collect(),
        front: front
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let e = repo.get(k).expect("front keys come from the repository");
                RankedRow {
                    rank: i + 1,
                    design: k.clone(),
                    score: None,
                    feasible: true,
                    avg_power_w: e.avg_power_w,
                    area_um2: e.area_um2,
                    accuracy_pct: e.accuracy_pct,
                }
            })
            .collect(),
    };
    ctx.emit(&out, || {
        let mut s = format!("{} of {} entries on the front ({})\n", out.front.len(), repo.len(), out.objectives.join(", "));
        for r in &out.front {
            s += &format!(
                "  {:<36} power {:.6} W  area {:.1} um^2  accuracy {:.2} %\n",
                r.design, r.avg_power_w, r.area_um2, r.accuracy_pct
            );
        }
        s
    });
    Ok(0)
}

fn client(endpoint: &std::path::Path, repo: &Repository, audit: Option<&std::path::Path>) -> CliResult<LlmClient> {
    crate::util::require_file(endpoint)?;
    let cfg = EndpointConfig::load(endpoint).map_err(input)?;
    let mut c = LlmClient::new(cfg, RepoStats::from_repo(repo)).map_err(input)?;
    if let Some(p) = audit {
        c = c.with_audit(Arc::new(AuditLog::open(p).map_err(input)?));
    }
    Ok(c)
}

pub fn llm_query(ctx: &Ctx, a: &LlmQueryArgs) -> CliResult<u8> {
    let repo = load_repo(a.repo.as_deref())?;
    if let Some(d) = &a.dsl {
        let q = parse_dsl(&inline_or_file(d)?).map_err(input)?;
        return run_query(ctx, &repo, &q, a.top, None);
    }
    let endpoint = a.endpoint.as_deref().expect("clap requires --endpoint without --dsl");
    let c = client(endpoint, &repo, a.audit.as_deref())?;
    let x = c.extract_query(&a.prompt).map_err(finding)?;
    run_query(ctx, &repo, &x.query, a.top, Some(x.attempts))
}

pub fn passk(ctx: &Ctx, a: &PassKArgs) -> CliResult<u8> {
    let repo = load_repo(a.repo.as_deref())?;
    if repo.is_empty() {
        return Err(finding("empty repository"));
    }
    let tasks: Vec<Task> = match &a.tasks {
        Some(p) => {
            crate::util::require_file(p)?;
            load_tasks(p).map_err(input)?
        }
        None => shipped_suite(),
    };
    if a.k == 0 {
        return Err(input("--k must be at least 1"));
    }
    let backend: Box<dyn QueryBackend> = match &a.endpoint {
        Some(e) => {
            let c = client(e, &repo, a.audit.as_deref())?;
            if c.config().max_retries < a.k {
                tracing::warn!(
                    max_retries = c.config().max_retries,
                    k = a.k,
                    "endpoint allows fewer attempts than k; pass@k is capped at max_retries"
                );
            }
            Box::new(c)
        }
        None => Box::new(DslBackend),
    };
    let report = passk_harness(&tasks, a.k, &repo, backend.as_ref(), a.in_flight);
    ctx.emit(&report, || {
        let mut s = format!(
            "backend {}: {} tasks, pass@1 {:.3}, pass@{} {:.3}\n",
            report.backend,
            report.tasks.len(),
            report.pass_at_1,
            report.k,
            report.pass_at_k
        );
        for c in &report.categories {
            s += &format!(
                "  {:<16} {:>3} tasks  pass@1 {:.3}  pass@{} {:.3}\n",
                format!("{:?}", c.category),
                c.tasks,
                c.pass_at_1,
                report.k,
                c.pass_at_k
            );
        }
        for t in report.tasks.iter().filter(|t| t.first_success_attempt.is_none()) {
            s += &format!(
                "  failed {}: selected {}, expected {}{}\n",
                t.id,
                t.selected.as_deref().unwrap_or("-"),
                t.expected,
                t.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
            );
        }
        s
    });
    Ok(0)
}
