use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dynamic_check, has_errors, static_check, CheckSpec, Code, Diagnostic, DynamicBounds, VerifyError};
use crate::design_space::DesignPoint;
use crate::netlist::{ConductanceTile, Element, ElementKind, Netlist, Polarity, Role, GROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    DropElement,
    ShortNodes,
    OpenColumn,
    OutOfRangeConductance,
    DuplicateName,
    FloatingNode,
    WrongElementCount,
    PolarityMixup,
    SourceMisbind,
    GroundDetach,
}

impl FaultKind {
    pub const ALL: [FaultKind; 10] = [
        FaultKind::DropElement,
        FaultKind::ShortNodes,
        FaultKind::OpenColumn,
        FaultKind::OutOfRangeConductance,
        FaultKind::DuplicateName,
        FaultKind::FloatingNode,
        FaultKind::WrongElementCount,
        FaultKind::PolarityMixup,
        FaultKind::SourceMisbind,
        FaultKind::GroundDetach,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::DropElement => "drop_element",
            FaultKind::ShortNodes => "short_nodes",
            FaultKind::OpenColumn => "open_column",
            FaultKind::OutOfRangeConductance => "out_of_range_conductance",
            FaultKind::DuplicateName => "duplicate_name",
            FaultKind::FloatingNode => "floating_node",
            FaultKind::WrongElementCount => "wrong_element_count",
            FaultKind::PolarityMixup => "polarity_mixup",
            FaultKind::SourceMisbind => "source_misbind",
            FaultKind::GroundDetach => "ground_detach",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase().replace('-', "_");
        FaultKind::ALL
            .into_iter()
            .find(|k| k.as_str() == t || k.as_str().replace('_', "") == t)
            .ok_or_else(|| format!("unknown fault kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub seed: u64,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

fn rng_for(f: &FaultSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(f.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (f.kind as u64 + 1))
}

fn memory_indices(n: &Netlist) -> Vec<usize> {
    (0..n.elements.len())
        .filter(|&k| matches!(Role::parse(&n.elements[k].name), Some(Role::Memory { .. })))
        .collect()
}

fn rename_node(e: &mut Element, from: &str, to: &str) {
    let skip = usize::from(e.kind == ElementKind::Switch);
    for x in e.nodes.iter_mut().skip(skip) {
        if x == from {
            *x = to.to_string();
        }
    }
}

/// Mutated copy of `n` realizing `f`. The same `(kind, seed)` always yields
/// the same netlist.
pub fn inject_fault(n: &Netlist, f: FaultSpec) -> Result<Netlist, VerifyError> {
    let mut rng = rng_for(&f);
    let mut m = n.clone();
    let inapplicable = |reason: &str| VerifyError::Inapplicable {
        kind: f.kind,
        reason: reason.to_string(),
    };
    let memory = memory_indices(n);
    let pick_memory = |rng: &mut ChaCha8Rng| memory.choose(rng).copied().ok_or_else(|| inapplicable("netlist has no memory elements"));

    match f.kind {
        FaultKind::DropElement => {
            if m.elements.is_empty() {
                return Err(inapplicable("netlist has no elements"));
            }
            let k = rng.gen_range(0..m.elements.len());
            m.elements.remove(k);
        }
        FaultKind::ShortNodes => {
            // Merge the cell side of one memory element into its column side.
            let k = pick_memory(&mut rng)?;
            let (a, b) = {
                let (a, b) = n.elements[k].terminals();
                (a.to_string(), b.to_string())
            };
            if a == b {
                return Err(inapplicable("memory element is already shorted"));
            }
            for e in &mut m.elements {
                rename_node(e, &a, &b);
            }
        }
        FaultKind::OpenColumn => {
            let mut columns: Vec<(Polarity, usize)> = n
                .elements
                .iter()
                .filter_map(|e| match Role::parse(&e.name) {
                    Some(Role::Memory { polarity, j, .. } | Role::ColumnLead { polarity, j, .. }) => {
                        let (a, b) = e.terminals();
                        (a == GROUND || b == GROUND).then_some((polarity, j))
                    }
                    _ => None,
                })
                .collect();
            columns.sort();
            columns.dedup();
            let &(pol, j) = columns.choose(&mut rng).ok_or_else(|| inapplicable("no column reaches ground"))?;
            let open = format!("{}_col{j}_open", pol.node_prefix());
            for e in &mut m.elements {
                let in_column = matches!(
                    Role::parse(&e.name),
                    Some(Role::Memory { polarity, j: c, .. } | Role::ColumnLead { polarity, j: c, .. })
                        if polarity == pol && c == j
                );
                if in_column {
                    rename_node(e, GROUND, &open);
                }
            }
        }
        FaultKind::OutOfRangeConductance => {
            let k = pick_memory(&mut rng)?;
            let values: Vec<f64> = memory.iter().map(|&i| n.elements[i].value).collect();
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            // Six decades beyond the extreme present value leaves any
            // realistic device window.
            m.elements[k].value = if rng.gen_bool(0.5) { hi * 1e6 } else { lo * 1e-6 };
        }
        FaultKind::DuplicateName => {
            // Rename one element after another of the same kind and array.
            let mut by_prefix: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
            for (k, e) in n.elements.iter().enumerate() {
                by_prefix.entry(e.name.split('_').next().unwrap_or("")).or_default().push(k);
            }
            let groups: Vec<&Vec<usize>> = by_prefix.values().filter(|g| g.len() >= 2).collect();
            let group = groups.choose(&mut rng).ok_or_else(|| inapplicable("needs two elements of one kind"))?;
            let chosen: Vec<usize> = group.choose_multiple(&mut rng, 2).copied().collect();
            m.elements[chosen[1]].name = n.elements[chosen[0]].name.clone();
        }
        FaultKind::FloatingNode => {
            // Cut every element touching one cell node away from the rest of
            // the circuit, leaving the cell and the cut ends as an island.
            let candidates: Vec<usize> = memory
                .iter()
                .copied()
                .filter(|&k| n.elements[k].terminals().0 != GROUND)
                .collect();
            let &k = candidates.choose(&mut rng).ok_or_else(|| inapplicable("no memory element with a cell node"))?;
            let cell = n.elements[k].terminals().0.to_string();
            let mut cut = 0;
            for e in &mut m.elements {
                let skip = usize::from(e.kind == ElementKind::Switch);
                let touches = e.nodes.iter().skip(skip).any(|x| *x == cell);
                if !touches {
                    continue;
                }
                for x in e.nodes.iter_mut().skip(skip) {
                    if *x != cell {
                        *x = format!("{cell}_float{cut}");
                        cut += 1;
                    }
                }
            }
        }
        FaultKind::WrongElementCount => {
            // An extra memory element one column beyond the array.
            let k = pick_memory(&mut rng)?;
            let width = memory
                .iter()
                .filter_map(|&i| match Role::parse(&n.elements[i].name) {
                    Some(Role::Memory { j, .. }) => Some(j + 1),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            let Some(Role::Memory { polarity, i, .. }) = Role::parse(&n.elements[k].name) else {
                unreachable!("memory index")
            };
            let mut extra = n.elements[k].clone();
            extra.name = format!("RM{}_{i}_{width}", polarity.tag());
            m.elements.push(extra);
        }
        FaultKind::PolarityMixup => {
            let index = n.element_index();
            let mut swapped = 0;
            for &k in &memory {
                let name = &n.elements[k].name;
                if let Some(rest) = name.strip_prefix("RMP") {
                    if let Some(&other) = index.get(format!("RMN{rest}").as_str()) {
                        m.elements[k].value = n.elements[other].value;
                        m.elements[other].value = n.elements[k].value;
                        swapped += 1;
                    }
                }
            }
            if swapped == 0 {
                return Err(inapplicable("needs both polarity arrays"));
            }
        }
        FaultKind::SourceMisbind => {
            let sources: Vec<(usize, Polarity, usize)> = n
                .elements
                .iter()
                .enumerate()
                .filter(|(_, e)| e.kind == ElementKind::VSource)
                .filter_map(|(k, e)| match Role::parse(&e.name) {
                    Some(Role::Source { polarity, i, .. }) => Some((k, polarity, i)),
                    _ => None,
                })
                .collect();
            let options: Vec<(usize, usize)> = sources
                .iter()
                .flat_map(|&(k, p, i)| {
                    sources
                        .iter()
                        .filter(move |&&(_, q, r)| q == p && r != i)
                        .map(move |&(o, _, _)| (k, o))
                })
                .collect();
            let &(k, other) = options.choose(&mut rng).ok_or_else(|| inapplicable("needs two driven rows"))?;
            m.elements[k].nodes[0] = n.elements[other].nodes[0].clone();
        }
        FaultKind::GroundDetach => {
            if !n.nodes().contains(GROUND) {
                return Err(inapplicable("netlist has no ground node"));
            }
            // Even seeds detach the whole netlist, odd seeds one array.
            let only: Option<Polarity> = (f.seed % 2 == 1).then(|| *Polarity::BOTH.choose(&mut rng).unwrap());
            let rail = only.map_or("vref_rail".to_string(), |p| format!("{}_vref_rail", p.node_prefix()));
            for e in &mut m.elements {
                let belongs = match only {
                    None => true,
                    Some(p) => Role::parse(&e.name).map(Role::polarity) == Some(p),
                };
                if belongs {
                    rename_node(e, GROUND, &rail);
                }
            }
        }
    }
    Ok(m)
}

/// Outcome of one injected fault.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    pub fault: FaultSpec,
    pub detected: bool,
    pub codes: Vec<Code>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Injects every `(kind, seed)` into `clean` and checks the result, static
/// checks first and simulation only when those pass. Runs in parallel;
/// rows come back in `(kind, seed)` order.
pub fn detection_campaign(
    clean: &Netlist,
    dp: &DesignPoint,
    tile: &ConductanceTile,
    spec: &CheckSpec,
    bounds: &DynamicBounds,
    vectors: &[Vec<f64>],
    kinds: &[FaultKind],
    seeds: &[u64],
) -> Result<Vec<CampaignRow>, VerifyError> {
    let jobs: Vec<FaultSpec> = kinds
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| FaultSpec::new(k, s)))
        .collect();
    jobs.par_iter()
        .map(|&fault| {
            let faulty = inject_fault(clean, fault)?;
            let mut diags = static_check(&faulty, dp, spec);
            if !has_errors(&diags) {
                diags.extend(dynamic_check(&faulty, dp, tile, vectors, spec, bounds)?);
            }
            let mut codes: Vec<Code> = diags.iter().filter(|d| d.is_error()).map(|d| d.code).collect();
            codes.sort();
            codes.dedup();
            Ok(CampaignRow {
                fault,
                detected: has_errors(&diags),
                codes,
                diagnostics: diags,
            })
        })
        .collect()
}
