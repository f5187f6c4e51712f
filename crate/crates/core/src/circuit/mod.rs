//! Electrical evaluation of crossbar netlists: the closed-form differential
//! MAC, nodal analysis with parasitics, behavioral DAC, and average power.

pub mod sparse;
mod solve;
mod system;

use thiserror::Error;

use crate::netlist::{ConductanceTile, Netlist};

pub use solve::{kcl_audit, solve, KclEntry, SolveMethod, SolveOptions, SolveReport, Solver};
pub use system::{build_system, LinearSystem, NodeRef};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("element {name}: {reason}")]
    InvalidElement { name: String, reason: String },
    #[error("netlist has no ground node `0`")]
    NoGround,
    #[error("isolated island with no path to a driven node: {}", nodes.join(", "))]
    Island { nodes: Vec<String> },
    #[error("source {element} is not referenced to ground")]
    FloatingSource { element: String },
    #[error("source {element} conflicts with another source at node {node}")]
    SourceConflict { element: String, node: String },
    #[error("singular factorization at pivot node {node}")]
    SingularPivot { node: String },
    #[error("no convergence after {iterations} iterations, best relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("no input patterns")]
    NoPatterns,
    #[error("pattern {index}: {source}")]
    Pattern {
        index: usize,
        #[source]
        source: Box<CircuitError>,
    },
}

/// Differential column currents `I_j = Σ_i v_i (G+_ij − G−_ij)`.
pub fn ideal_mac(v: &[f64], tile: &ConductanceTile) -> Result<Vec<f64>, CircuitError> {
    if v.len() != tile.rows() {
        return Err(CircuitError::Shape(format!(
            "{} inputs for {} rows",
            v.len(),
            tile.rows()
        )));
    }
    let mut out = vec![0.0; tile.cols()];
    for (i, &vi) in v.iter().enumerate() {
        let (gp, gn) = (tile.g_pos.row(i), tile.g_neg.row(i));
        for j in 0..out.len() {
            out[j] += vi * (gp[j] - gn[j]);
        }
    }
    Ok(out)
}

/// Nearest of `2^n` evenly spaced levels on `[0, vdd]`; `None` is the analog identity.
pub fn dac_quantize(x: f64, bits: Option<u8>, vdd: f64) -> Result<f64, CircuitError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(CircuitError::Range(format!("DAC input {x} outside [0, 1]")));
    }
    match bits {
        None => Ok(x * vdd),
        Some(0) => Err(CircuitError::Range("DAC needs at least one bit".into())),
        Some(n) => {
            let steps = ((1u64 << n.min(52)) - 1) as f64;
            Ok((x * steps).round() / steps * vdd)
        }
    }
}

/// Mean over patterns of `Σ V_source · I_source`. The system is assembled and
/// factorized once; each pattern only changes the source values.
pub fn average_power(n: &Netlist, patterns: &[Vec<f64>], tol: f64) -> Result<f64, CircuitError> {
    if patterns.is_empty() {
        return Err(CircuitError::NoPatterns);
    }
    let sys = build_system(n)?;
    let opts = SolveOptions {
        tol,
        ..SolveOptions::default()
    };
    let solver = Solver::new(&sys, opts)?;
    let mut total = 0.0;
    for (index, p) in patterns.iter().enumerate() {
        let wrap = |e: CircuitError| CircuitError::Pattern {
            index,
            source: Box::new(e),
        };
        let values = sys.source_values_for_pattern(p).map_err(wrap)?;
        total += solver.solve_sources(&values).map_err(wrap)?.source_power;
    }
    Ok(total / patterns.len() as f64)
}
