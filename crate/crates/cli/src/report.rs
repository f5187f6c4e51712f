use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use xbar_core::dse::{pareto_front, Direction, Metric, Repository};
use xbar_core::paa::EvalResult;

use crate::util::{finding, input, load_repo, CliResult, Ctx};

#[derive(Args)]
pub struct ReportArgs {
    /// Repository file; the published reference table when omitted.
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Also write the grouped statistics as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub const GROUP_BY: [Metric; 4] = [Metric::Tech, Metric::Device, Metric::Bitcell, Metric::Size];
pub const STAT_METRICS: [Metric; 3] = [Metric::Power, Metric::Area, Metric::Accuracy];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Min, median (mean of the middle pair for even counts) and max. `None` for
/// an empty slice.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    Some(Summary {
        min: v[0],
        median,
        max: v[n - 1],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupStats {
    pub by: String,
    pub value: String,
    pub count: usize,
    pub stats: BTreeMap<String, Summary>,
}

fn group_label(m: Metric, e: &EvalResult) -> String {
    match (m.value(e), m.label(e)) {
        (_, Some(l)) => l.to_string(),
        (Some(v), None) => format!("{v}"),
        (None, None) => String::new(),
    }
}

fn group_sort_key(m: Metric, members: &[&EvalResult]) -> (f64, String) {
    let e = members[0];
    (m.value(e).unwrap_or(0.0), group_label(m, e))
}

pub fn grouped(repo: &Repository) -> Vec<GroupStats> {
    let mut out = Vec::new();
    for by in GROUP_BY {
        let mut groups: BTreeMap<String, Vec<&EvalResult>> = BTreeMap::new();
        for e in repo.iter() {
            groups.entry(group_label(by, e)).or_default().push(e);
        }
        let mut groups: Vec<(String, Vec<&EvalResult>)> = groups.into_iter().collect();
        groups.sort_by(|a, b| {
            let (ka, kb) = (group_sort_key(by, &a.1), group_sort_key(by, &b.1));
            ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
        });
        for (value, members) in groups {
            let stats = STAT_METRICS
                .iter()
                .filter_map(|&m| {
                    let vals: Vec<f64> = members.iter().filter_map(|e| m.value(e)).collect();
                    summarize(&vals).map(|s| (m.as_str().to_string(), s))
                })
                .collect();
            out.push(GroupStats {
                by: by.as_str().into(),
                value,
                count: members.len(),
                stats,
            });
        }
    }
    out
}

fn to_csv(groups: &[GroupStats]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group_by".to_string(), "value".into(), "count".into()];
    for m in STAT_METRICS {
        for s in ["min", "median", "max"] {
            header.push(format!("{}_{s}", m.as_str()));
        }
    }
    w.write_record(&header).map_err(input)?;
    for g in groups {
        let mut row = vec![g.by.clone(), g.value.clone(), g.count.to_string()];
        for m in STAT_METRICS {
            match g.stats.get(m.as_str()) {
                Some(s) => row.extend([s.min, s.median, s.max].map(|x| x.to_string())),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&row).map_err(input)?;
    }
    let bytes = w.into_inner().map_err(input)?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct ReportOutput {
    entries: usize,
    groups: Vec<GroupStats>,
    pareto_objectives: Vec<String>,
    pareto_front: Vec<String>,
}

pub fn report(ctx: &Ctx, a: &ReportArgs) -> CliResult<u8> {
    let repo = load_repo(a.repo.as_deref())?;
    if repo.is_empty() {
        return Err(finding("empty repository: nothing to report"));
    }
    let groups = grouped(&repo);
    let objectives = [
        (Metric::Power, Direction::Minimize),
        (Metric::Area, Direction::Minimize),
        (Metric::Accuracy, Direction::Maximize),
    ];
    let front = pareto_front(&repo, &objectives).map_err(input)?;
    if let Some(p) = &a.csv {
        crate::util::write_text(p, &to_csv(&groups)?)?;
    }
    let out = ReportOutput {
        entries: repo.len(),
        groups,
        pareto_objectives: vec!["min:power".into(), "min:area".into(), "max:accuracy".into()],
        pareto_front: front.into_iter().collect(),
    };
    ctx.emit(&out, || {
        let mut s = format!("{} entries\n", out.entries);
        let mut last = "";
        for g in &out.groups {
            if g.by != last {
                s += &format!(
                    "\nby {}\n  {:<10} {:>5}  {:>32}  {:>32}  {:>26}\n",
                    g.by, "value", "n", "power W (min/med/max)", "area um^2 (min/med/max)", "accuracy % (min/med/max)"
                );
                last = &g.by;
            }
            let cell = |m: Metric, prec: usize| {
                g.stats
                    .get(m.as_str())
                    .map(|x| format!("{:.p$}/{:.p$}/{:.p$}", x.min, x.median, x.max, p = prec))
                    .unwrap_or_default()
            };
            s += &format!(
                "  {:<10} {:>5}  {:>32}  {:>32}  {:>26}\n",
                g.value,
                g.count,
                cell(Metric::Power, 6),
                cell(Metric::Area, 1),
                cell(Metric::Accuracy, 2)
            );
        }
        s += &format!("\nPareto front ({}): {} designs\n", out.pareto_objectives.join(", "), out.pareto_front.len());
        for k in &out.pareto_front {
            s += &format!("  {k}\n");
        }
        s
    });
    Ok(0)
}
