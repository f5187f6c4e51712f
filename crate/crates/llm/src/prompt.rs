use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;
use xbar_core::dse::{Metric, Repository};

/// Value ranges of a repository, quoted in the prompt so the model can pick
/// sensible bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RepoStats {
    pub entries: usize,
    /// (metric, min, max) for power, area and accuracy.
    pub ranges: Vec<(Metric, f64, f64)>,
    pub tech_nm: Vec<u32>,
    pub devices: Vec<String>,
    pub bitcells: Vec<String>,
    pub sizes: Vec<usize>,
}

impl RepoStats {
    pub fn from_repo(repo: &Repository) -> Self {
        if repo.is_empty() {
            return Self::default();
        }
        let ranges = [Metric::Power, Metric::Area, Metric::Accuracy]
            .into_iter()
            .map(|m| {
                let vals = repo.iter().filter_map(|e| m.value(e));
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (m, lo, hi)
            })
            .collect();
        let tech: BTreeSet<u32> = repo.iter().map(|e| e.design.tech.nm()).collect();
        let devices: BTreeSet<&str> = repo.iter().map(|e| e.design.device.as_str()).collect();
        let bitcells: BTreeSet<&str> = repo.iter().map(|e| e.design.bitcell.as_str()).collect();
        let sizes: BTreeSet<usize> = repo.iter().map(|e| e.design.size()).collect();
        Self {
            entries: repo.len(),
            ranges,
            tech_nm: tech.into_iter().collect(),
            devices: devices.into_iter().map(String::from).collect(),
            bitcells: bitcells.into_iter().map(String::from).collect(),
            sizes: sizes.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// System and user messages for one request. Equal inputs give identical text.
pub fn build_prompt(schema: &serde_json::Value, stats: &RepoStats, request: &str) -> Prompt {
    let mut s = String::new();
    s.push_str(
        "You translate hardware design requests for resistive crossbar accelerators into a constraint query.\n\
         Reply with one JSON object and nothing else: no prose, no code fences.\n\n",
    );
    s.push_str("JSON schema of the reply:\n");
    s.push_str(&serde_json::to_string_pretty(schema).expect("schema serializes"));
    s.push_str("\n\n");
    s.push_str(
        "Fields:\n\
         - hard: constraints every selected design must meet.\n\
         - soft: objectives to optimize, each with a non-negative weight (default 1).\n\
         - tie_break: metrics that order designs with equal score.\n\
         - include_infeasible: true only if the user wants designs that break the constraints listed too.\n\n\
         Units and names:\n\
         - power: average power in watts (W); convert mW to W.\n\
         - area: square micrometres (um2); convert mm2 to um2.\n\
         - accuracy: percent, 0 to 100.\n\
         - tech: technology node in nanometres, as a number.\n\
         - size: crossbar side length, so 64 for a 64x64 crossbar.\n\
         - device and bitcell are names; use op \"in\" with a list of names.\n",
    );
    if stats.entries > 0 {
        s.push_str("\nRepository contents:\n");
        writeln!(s, "- entries: {}", stats.entries).unwrap();
        for (m, lo, hi) in &stats.ranges {
            writeln!(s, "- {m}: {lo} to {hi} {}", m.unit()).unwrap();
        }
        writeln!(s, "- tech: {} nm", join(&stats.tech_nm)).unwrap();
        writeln!(s, "- device: {}", join(&stats.devices)).unwrap();
        writeln!(s, "- bitcell: {}", join(&stats.bitcells)).unwrap();
        writeln!(s, "- size: {}", join(&stats.sizes)).unwrap();
    }
    s.push_str(
        "\nExample. Request: \"below 2 W and at least 90% accuracy, smallest area first\"\n\
         Reply: {\"hard\":[{\"metric\":\"power\",\"op\":\"<=\",\"value\":2},{\"metric\":\"accuracy\",\"op\":\">=\",\"value\":90}],\
         \"soft\":[{\"metric\":\"area\",\"direction\":\"minimize\",\"weight\":1}]}\n",
    );
    Prompt {
        system: s,
        user: request.trim().to_string(),
    }
}
