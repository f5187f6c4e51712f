use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use xbar_core::dse::{parse_dsl, rank, Repository};

use crate::client::{Extraction, LlmClient};
use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Power,
    Area,
    HardConstraints,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Power, Category::Area, Category::HardConstraints];
}

/// One request with its reference query and the design it should select.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub category: Category,
    pub request: String,
    /// Reference query in the DSL.
    pub dsl: String,
    /// Top-ranked design key of the reference query over the seeded repository.
    pub expected_top1: String,
}

/// The 30-task suite shipped with the crate: ten requests per category,
/// written for the seeded reference repository.
pub fn shipped_suite() -> Vec<Task> {
    serde_json::from_str(include_str!("../suite/tasks.json")).expect("shipped suite parses")
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>, LlmError> {
    let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let tasks: Vec<Task> = serde_json::from_str(&text).map_err(|e| LlmError::Suite(e.to_string()))?;
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(LlmError::Suite(format!("duplicate task id {}", w[0])));
    }
    Ok(tasks)
}

/// Something that turns a task into a query.
pub trait QueryBackend: Sync {
    fn name(&self) -> String;
    fn extract(&self, task: &Task) -> Result<Extraction, LlmError>;
}

impl QueryBackend for LlmClient {
    fn name(&self) -> String {
        format!("llm:{}", self.config().model_name)
    }

    fn extract(&self, task: &Task) -> Result<Extraction, LlmError> {
        self.extract_query(&task.request)
    }
}

/// Parses each task's reference DSL; the offline path.
pub struct DslBackend;

impl QueryBackend for DslBackend {
    fn name(&self) -> String {
        "dsl".into()
    }

    fn extract(&self, task: &Task) -> Result<Extraction, LlmError> {
        let query = parse_dsl(&task.dsl).map_err(|e| LlmError::Exhausted {
            attempts: 1,
            last_error: e.to_string(),
            responses: vec![task.dsl.clone()],
        })?;
        Ok(Extraction {
            query,
            attempts: 1,
            raw: task.dsl.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskOutcome {
    pub id: String,
    pub category: Category,
    /// Attempt whose query selected the expected design.
    pub first_success_attempt: Option<usize>,
    pub attempts: usize,
    pub selected: Option<String>,
    pub expected: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryScore {
    pub category: Category,
    pub tasks: usize,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassKReport {
    pub backend: String,
    pub k: usize,
    pub tasks: Vec<TaskOutcome>,
    pub categories: Vec<CategoryScore>,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
}

impl PassKReport {
    pub fn category(&self, c: Category) -> Option<&CategoryScore> {
        self.categories.iter().find(|s| s.category == c)
    }
}

fn pass_rate(outcomes: &[&TaskOutcome], k: usize) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let n = outcomes
        .iter()
        .filter(|o| o.first_success_attempt.is_some_and(|a| a <= k))
        .count();
    n as f64 / outcomes.len() as f64
}

fn run_task(task: &Task, repo: &Repository, backend: &dyn QueryBackend) -> TaskOutcome {
    let mut out = TaskOutcome {
        id: task.id.clone(),
        category: task.category,
        first_success_attempt: None,
        attempts: 0,
        selected: None,
        expected: task.expected_top1.clone(),
        error: None,
    };
    match backend.extract(task) {
        Ok(x) => {
            out.attempts = x.attempts;
            match rank(repo, &x.query) {
                Ok(sel) => {
                    out.selected = sel.top().map(|t| t.design_key.clone());
                    if out.selected.as_deref() == Some(task.expected_top1.as_str()) {
                        out.first_success_attempt = Some(x.attempts);
                    }
                }
                Err(e) => out.error = Some(e.to_string()),
            }
        }
        Err(e) => {
            if let LlmError::Exhausted { attempts, .. } = &e {
                out.attempts = *attempts;
            }
            out.error = Some(e.to_string());
        }
    }
    out
}

/// Runs every task through `backend` with at most `in_flight` tasks at once.
/// A task passes at attempt `a` when the query produced at attempt `a` ranks
/// the expected design first; endpoint failures count as failed tasks.
pub fn passk_harness(
    tasks: &[Task],
    k: usize,
    repo: &Repository,
    backend: &dyn QueryBackend,
    in_flight: usize,
) -> PassKReport {
    let k = k.max(1);
    let slots: Vec<Mutex<Option<TaskOutcome>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..in_flight.clamp(1, tasks.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                *slots[i].lock().unwrap() = Some(run_task(task, repo, backend));
            });
        }
    });
    let outcomes: Vec<TaskOutcome> = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every task ran"))
        .collect();

    let categories = Category::ALL
        .iter()
        .filter_map(|&c| {
            let of: Vec<&TaskOutcome> = outcomes.iter().filter(|o| o.category == c).collect();
            (!of.is_empty()).then(|| CategoryScore {
                category: c,
                tasks: of.len(),
                pass_at_1: pass_rate(&of, 1),
                pass_at_k: pass_rate(&of, k),
            })
        })
        .collect();
    let all: Vec<&TaskOutcome> = outcomes.iter().collect();
    PassKReport {
        backend: backend.name(),
        k,
        pass_at_1: pass_rate(&all, 1),
        pass_at_k: pass_rate(&all, k),
        categories,
        tasks: outcomes,
    }
}
