//! Filtering, weighted scoring, ranking and Pareto analysis over a repository.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::query::{ConstraintQuery, Direction, HardConstraint, Metric};
use super::repo::Repository;
use super::DseError;
use crate::paa::EvalResult;

/// Scores are compared at this resolution so that mathematically equal
/// scores tie regardless of rounding in the weighted sum.
const SCORE_RESOLUTION: f64 = 1e12;

/// Entries satisfying every hard constraint.
pub fn filter_hard<'a>(repo: &'a Repository, hard: &[HardConstraint]) -> Vec<&'a EvalResult> {
    repo.iter().filter(|e| hard.iter().all(|h| h.holds(e))).collect()
}

/// Min and max of each soft metric over a candidate set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormStats {
    pub ranges: BTreeMap<Metric, (f64, f64)>,
}

impl NormStats {
    pub fn over(candidates: &[&EvalResult], q: &ConstraintQuery) -> Self {
        let mut ranges = BTreeMap::new();
        for s in &q.soft {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for e in candidates {
                if let Some(v) = s.metric.value(e) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            ranges.insert(s.metric, (lo, hi));
        }
        Self { ranges }
    }
}

/// `Σ w_k u_k / Σ w_k` with `u_k` the min-max normalized metric oriented so
/// that larger is better; a metric with no spread contributes 1.
pub fn score(e: &EvalResult, q: &ConstraintQuery, stats: &NormStats) -> f64 {
    let total: f64 = q.soft.iter().map(|s| s.weight).sum();
    if total == 0.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for s in &q.soft {
        let v = s.metric.value(e).unwrap_or(f64::NAN);
        let (lo, hi) = stats.ranges.get(&s.metric).copied().unwrap_or((v, v));
        let u = if hi > lo {
            let t = (v - lo) / (hi - lo);
            match s.direction {
                Direction::Maximize => t,
                Direction::Minimize => 1.0 - t,
            }
        } else {
            1.0
        };
        acc += s.weight * u;
    }
    acc / total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub design_key: String,
    pub score: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSelection {
    pub entries: Vec<Ranked>,
    pub query_echo: ConstraintQuery,
}

impl RankedSelection {
    pub fn top(&self) -> Option<&Ranked> {
        self.entries.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSlack {
    pub constraint: String,
    pub value: String,
    /// Distance to the bound in the metric's unit; 0 if satisfied.
    pub violation: f64,
}

/// The entry closest to feasibility, with its per-constraint slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearestMiss {
    pub design_key: String,
    pub total_relative_violation: f64,
    pub slack: Vec<ConstraintSlack>,
}

fn tie_cmp(a: &EvalResult, b: &EvalResult, q: &ConstraintQuery) -> Ordering {
    for &m in &q.tie_break {
        let ord = match (m.value(a), m.value(b)) {
            (Some(x), Some(y)) => match q.direction_of(m) {
                Direction::Minimize => x.total_cmp(&y),
                Direction::Maximize => y.total_cmp(&x),
            },
            _ => m.label(a).cmp(&m.label(b)),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.key().cmp(&b.key())
}

fn score_key(s: f64) -> i64 {
    (s * SCORE_RESOLUTION).round() as i64
}

/// Filter, score over the feasible set, then sort by score, tie-break
/// metrics and design key. An empty feasible set yields `NoFeasible` unless
/// the query asks for infeasible entries too.
pub fn rank(repo: &Repository, q: &ConstraintQuery) -> Result<RankedSelection, DseError> {
    q.validate()?;
    if repo.is_empty() {
        return Err(DseError::EmptyRepository);
    }
    let feasible = filter_hard(repo, &q.hard);
    if feasible.is_empty() && !q.include_infeasible {
        return Err(DseError::NoFeasible(Box::new(nearest_miss(repo, &q.hard))));
    }
    let feasible_keys: BTreeSet<String> = feasible.iter().map(|e| e.key()).collect();
    let pool: Vec<&EvalResult> = if q.include_infeasible {
        repo.iter().collect()
    } else {
        feasible.clone()
    };
    let stats = NormStats::over(if feasible.is_empty() { &pool } else { &feasible }, q);
    let mut scored: Vec<(&EvalResult, f64, bool)> = pool
        .into_iter()
        .map(|e| (e, score(e, q, &stats).clamp(0.0, 1.0), feasible_keys.contains(&e.key())))
        .collect();
    scored.sort_by(|a, b| {
        b.2.cmp(&a.2)
            .then_with(|| score_key(b.1).cmp(&score_key(a.1)))
            .then_with(|| tie_cmp(a.0, b.0, q))
    });
    Ok(RankedSelection {
        entries: scored
            .into_iter()
            .map(|(e, s, f)| Ranked {
                design_key: e.key(),
                score: s,
                feasible: f,
            })
            .collect(),
        query_echo: q.clone(),
    })
}

/// The entry with the smallest summed relative violation.
pub fn nearest_miss(repo: &Repository, hard: &[HardConstraint]) -> NearestMiss {
    let mut best: Option<(&EvalResult, f64)> = None;
    for e in repo.iter() {
        let total: f64 = hard.iter().map(|h| h.relative_violation(e)).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((e, total));
        }
    }
    let (e, total) = best.expect("non-empty repository");
    NearestMiss {
        design_key: e.key(),
        total_relative_violation: total,
        slack: hard
            .iter()
            .map(|h| ConstraintSlack {
                constraint: h.to_string(),
                value: match (h.metric.value(e), h.metric.label(e)) {
                    (Some(v), _) => format!("{v}{}", h.metric.unit()),
                    (None, Some(l)) => l.to_string(),
                    _ => String::new(),
                },
                violation: h.violation(e),
            })
            .collect(),
    }
}

/// Non-dominated entries under the given objectives. Equal entries do not
/// dominate each other.
pub fn pareto_front(repo: &Repository, objectives: &[(Metric, Direction)]) -> Result<BTreeSet<String>, DseError> {
    if objectives.is_empty() {
        return Err(DseError::Query {
            line: None,
            message: "Pareto analysis needs at least one objective".into(),
        });
    }
    if let Some((m, _)) = objectives.iter().find(|(m, _)| !m.is_numeric()) {
        return Err(DseError::Query {
            line: None,
            message: format!("{m} is categorical and cannot be an objective"),
        });
    }
    let entries: Vec<&EvalResult> = repo.iter().collect();
    // Oriented so that larger is better.
    let vals: Vec<Vec<f64>> = entries
        .iter()
        .map(|e| {
            objectives
                .iter()
                .map(|(m, d)| {
                    let v = m.value(e).expect("numeric metric");
                    match d {
                        Direction::Maximize => v,
                        Direction::Minimize => -v,
                    }
                })
                .collect()
        })
        .collect();
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y);
    Ok(entries
        .iter()
        .enumerate()
        .filter(|(i, _)| !vals.iter().any(|other| dominates(other, &vals[*i])))
        .map(|(_, e)| e.key())
        .collect())
}

/// Parses `min:power,max:accuracy`.
pub fn parse_objectives(text: &str) -> Result<Vec<(Metric, Direction)>, DseError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (dir, name) = item.split_once(':').ok_or_else(|| DseError::Query {
                line: None,
                message: format!("objective `{item}` must look like min:power or max:accuracy"),
            })?;
            let direction = match dir.trim().to_ascii_lowercase().as_str() {
                "min" | "minimize" => Direction::Minimize,
                "max" | "maximize" => Direction::Maximize,
                other => {
                    return Err(DseError::Query {
                        line: None,
                        message: format!("unknown direction `{other}`"),
                    })
                }
            };
            let metric = Metric::parse(name.trim()).ok_or_else(|| DseError::Query {
                line: None,
                message: format!("unknown metric `{name}`"),
            })?;
            Ok((metric, direction))
        })
        .collect()
}
