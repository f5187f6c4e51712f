use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CheckSpec, Code, Diagnostic, VerifyError};
use crate::circuit::{build_system, kcl_audit, CircuitError, SolveOptions, Solver};
use crate::design_space::DesignPoint;
use crate::netlist::{generate_crossbar_netlist, ConductanceTile, Netlist, Polarity, Role, GROUND};

/// Per-node KCL residual allowed relative to the node's current scale.
const KCL_TOL: f64 = 1e-9;

/// Cosine between the solved and ideal column-current vectors below which the
/// sign pattern counts as inverted. Interconnect loss reweights rows by
/// positive factors, so a clean solve stays positively correlated with the
/// ideal; exchanging the arrays negates it.
const SIGN_PATTERN_COS: f64 = -0.5;

/// Deviation allowance for netlists whose largest wire resistance per cell
/// pitch is at most `max_wire_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTier {
    pub max_wire_r: f64,
    /// Allowance that remains when the circuit has no parasitics.
    pub floor: f64,
    /// Multiple of the worst-case attenuation added on top of the floor.
    pub margin: f64,
}

/// Column deviations are measured against the mean column common-mode
/// current `mean_j Σ_i v_i (G+_ij + G−_ij)` and must stay below
/// `floor + margin · a`, where `a` is the largest per-polarity fractional
/// current loss of the same design with every cell at `g_on` and every row at
/// `vdd`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicBounds {
    /// Sorted by `max_wire_r`; the first tier that covers `wire_r` applies.
    pub tiers: Vec<BoundTier>,
}

impl Default for DynamicBounds {
    fn default() -> Self {
        Self {
            tiers: vec![
                BoundTier {
                    max_wire_r: 0.0,
                    floor: 1e-9,
                    margin: 1.5,
                },
                BoundTier {
                    max_wire_r: 1.0,
                    floor: 1e-6,
                    margin: 1.5,
                },
                BoundTier {
                    max_wire_r: f64::INFINITY,
                    floor: 1e-6,
                    margin: 2.0,
                },
            ],
        }
    }
}

impl DynamicBounds {
    pub fn tier(&self, wire_r: f64) -> BoundTier {
        self.tiers
            .iter()
            .copied()
            .find(|t| wire_r <= t.max_wire_r)
            .or_else(|| self.tiers.last().copied())
            .unwrap_or(BoundTier {
                max_wire_r: f64::INFINITY,
                floor: 1e-9,
                margin: 2.0,
            })
    }
}

/// Relative deviation allowed for `dp` under `spec`.
pub fn deviation_bound(dp: &DesignPoint, spec: &CheckSpec, bounds: &DynamicBounds) -> Result<f64, VerifyError> {
    let tier = bounds.tier(spec.wire_r);
    if spec.wire_r == 0.0 && spec.access_resistance == 0.0 {
        return Ok(tier.floor);
    }
    let g = spec.device.g_on();
    let tile = ConductanceTile::uniform(dp.rows, dp.cols, g);
    let n = generate_crossbar_netlist(dp, &tile, &spec.options(vec![spec.vdd; dp.rows]))?;
    let sys = build_system(&n)?;
    let rep = Solver::new(&sys, SolveOptions::default())?.solve()?;
    let ideal = spec.vdd * g * dp.rows as f64;
    let worst = rep
        .column_currents_pos
        .iter()
        .chain(&rep.column_currents_neg)
        .map(|i| 1.0 - i / ideal)
        .fold(0.0, f64::max);
    Ok(tier.floor + tier.margin * worst)
}

/// `count` input vectors in `[0, vdd]`: all rows at `vdd`, then uniform draws.
pub fn default_vectors(rows: usize, vdd: f64, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            if k == 0 {
                vec![vdd; rows]
            } else {
                (0..rows).map(|_| rng.gen_range(0.0..=vdd)).collect()
            }
        })
        .collect()
}

fn solve_failed(n: &Netlist, e: &CircuitError, vector: Option<usize>) -> Diagnostic {
    let present = |x: &str| n.elements.iter().any(|e| e.name == x || e.nodes.iter().any(|y| y == x));
    let named = match e {
        CircuitError::Island { nodes } => nodes.first().cloned(),
        CircuitError::FloatingSource { element } | CircuitError::SourceConflict { element, .. } => {
            Some(element.clone())
        }
        CircuitError::InvalidElement { name, .. } => Some(name.clone()),
        CircuitError::SingularPivot { node } => Some(node.clone()),
        CircuitError::Pattern { source, .. } => return solve_failed(n, source, vector),
        _ => None,
    };
    let element = named
        .filter(|x| present(x))
        .or_else(|| n.elements.first().map(|e| e.name.clone()))
        .unwrap_or_else(|| GROUND.to_string());
    let ctx = vector.map_or(String::new(), |k| format!(" on vector {k}"));
    Diagnostic::new(Code::SolveFailed, element, format!("{e}{ctx}"))
}

/// Name of an element belonging to column `j`, preferring the positive array.
fn column_element(n: &Netlist, j: usize) -> Option<String> {
    let mut best: Option<(u8, &str)> = None;
    for e in &n.elements {
        let rank = match Role::parse(&e.name) {
            Some(Role::ColumnLead { polarity, j: c, .. }) if c == j => 2 * u8::from(polarity == Polarity::Neg),
            Some(Role::Memory { polarity, j: c, .. }) if c == j => 1 + 2 * u8::from(polarity == Polarity::Neg),
            _ => continue,
        };
        if best.is_none_or(|(r, _)| rank < r) {
            best = Some((rank, &e.name));
        }
    }
    best.map(|(_, s)| s.to_string())
}

/// Solves the netlist for each input vector and compares column currents with
/// the ideal MAC of `tile`. Vector entries are row voltages relative to the
/// reference rail and must be non-negative.
pub fn dynamic_check(
    n: &Netlist,
    dp: &DesignPoint,
    tile: &ConductanceTile,
    vectors: &[Vec<f64>],
    spec: &CheckSpec,
    bounds: &DynamicBounds,
) -> Result<Vec<Diagnostic>, VerifyError> {
    if tile.shape() != (dp.rows, dp.cols) {
        return Err(VerifyError::Input(format!(
            "tile is {:?} but design is {}x{}",
            tile.shape(),
            dp.rows,
            dp.cols
        )));
    }
    if vectors.is_empty() {
        return Err(VerifyError::Input("no test vectors".into()));
    }
    for (k, v) in vectors.iter().enumerate() {
        if v.len() != dp.rows {
            return Err(VerifyError::Input(format!(
                "vector {k} has {} entries for {} rows",
                v.len(),
                dp.rows
            )));
        }
        if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(VerifyError::Input(format!("vector {k} has entry {x}; inputs must be >= 0")));
        }
    }
    let bound = deviation_bound(dp, spec, bounds)?;

    let sys = match build_system(n) {
        Ok(s) => s,
        Err(e) => return Ok(vec![solve_failed(n, &e, None)]),
    };
    let solver = match Solver::new(&sys, SolveOptions::default()) {
        Ok(s) => s,
        Err(e) => return Ok(vec![solve_failed(n, &e, None)]),
    };

    let mut out = Vec::new();
    let mut kcl_flagged = BTreeSet::new();
    // Worst finding per column: (relative deviation, code, vector, net, ideal).
    let mut worst: Vec<Option<(f64, Code, usize, f64, f64)>> = vec![None; dp.cols];
    // Most anti-correlated vector: (cosine, vector).
    let mut inverted: Option<(f64, usize)> = None;
    for (k, v) in vectors.iter().enumerate() {
        let rep = match sys
            .source_values_for_pattern(v)
            .and_then(|vals| solver.solve_sources(&vals))
        {
            Ok(r) => r,
            Err(e) => {
                out.push(solve_failed(n, &e, Some(k)));
                return Ok(out);
            }
        };
        for entry in kcl_audit(&sys, &rep) {
            if entry.residual.abs() > KCL_TOL * entry.scale + 1e-18 && kcl_flagged.insert(entry.node.clone()) {
                out.push(Diagnostic::new(
                    Code::KclResidual,
                    entry.node.clone(),
                    format!(
                        "current imbalance {:e} A against scale {:e} A on vector {k}",
                        entry.residual, entry.scale
                    ),
                ));
            }
        }
        let mut pos = vec![0.0; dp.cols];
        let mut neg = vec![0.0; dp.cols];
        for (i, &vi) in v.iter().enumerate() {
            let (gp, gn) = (tile.g_pos.row(i), tile.g_neg.row(i));
            for j in 0..dp.cols {
                pos[j] += vi * gp[j];
                neg[j] += vi * gn[j];
            }
        }
        let scale = pos.iter().zip(&neg).map(|(p, q)| p + q).sum::<f64>() / dp.cols as f64;
        let tol = bound * scale + 1e-18;
        let ideal: Vec<f64> = pos.iter().zip(&neg).map(|(p, q)| p - q).collect();
        let net: Vec<f64> = (0..dp.cols)
            .map(|j| {
                rep.column_currents_pos.get(j).copied().unwrap_or(0.0)
                    - rep.column_currents_neg.get(j).copied().unwrap_or(0.0)
            })
            .collect();
        let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos = net.iter().zip(&ideal).map(|(a, b)| a * b).sum::<f64>() / (norm(&net) * norm(&ideal));
        if cos < SIGN_PATTERN_COS && inverted.is_none_or(|(c, _)| cos < c) {
            inverted = Some((cos, k));
        }
        for j in 0..dp.cols {
            let (ideal, net) = (ideal[j], net[j]);
            let dev = (net - ideal).abs();
            let code = if ideal * net < 0.0 && ideal.abs() > tol && net.abs() > tol {
                Code::SignMismatch
            } else if net.abs() > ideal.abs() + tol {
                Code::MacExceedsIdeal
            } else if dev > tol {
                Code::MacDeviation
            } else {
                continue;
            };
            let rel = if scale > 0.0 { dev / scale } else { f64::INFINITY };
            if worst[j].is_none_or(|w| rel > w.0) {
                worst[j] = Some((rel, code, k, net, ideal));
            }
        }
    }
    if let Some((cos, k)) = inverted {
        out.push(Diagnostic::new(
            Code::SignMismatch,
            column_element(n, 0).unwrap_or_else(|| GROUND.to_string()),
            format!("column currents are anti-correlated with the ideal MAC on vector {k} (cosine {cos:.3})"),
        ));
    }
    for (j, w) in worst.into_iter().enumerate() {
        let Some((rel, code, k, net, ideal)) = w else { continue };
        out.push(Diagnostic::new(
            code,
            column_element(n, j).unwrap_or_else(|| GROUND.to_string()),
            format!(
                "column {j}: {net:e} A against ideal {ideal:e} A on vector {k}, relative deviation {rel:.3e} above bound {bound:.3e}"
            ),
        ));
    }
    Ok(out)
}
