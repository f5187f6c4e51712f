use super::PaaError;
use crate::config::DeviceKind;
use crate::matrix::Matrix;
use crate::netlist::ConductanceTile;

/// Differential encoding with `w_max` taken from the tile itself (1 for an all-zero tile).
pub fn map_weights_to_conductance(
    w: &Matrix,
    device: &DeviceKind,
    n_levels: Option<usize>,
) -> Result<ConductanceTile, PaaError> {
    check_finite(w)?;
    let w_max = w.max_abs();
    map_with_full_scale(w, device, n_levels, if w_max > 0.0 { w_max } else { 1.0 })
}

/// Differential encoding against an externally chosen full scale, so that tiles
/// of one layer share a current-to-weight factor. `|w| > w_max` is rejected.
pub fn map_with_full_scale(
    w: &Matrix,
    device: &DeviceKind,
    n_levels: Option<usize>,
    w_max: f64,
) -> Result<ConductanceTile, PaaError> {
    check_finite(w)?;
    device.validate()?;
    if let Some(n) = n_levels {
        if n < 2 {
            return Err(PaaError::Mapping(format!("{n} conductance levels, need at least 2")));
        }
    }
    if !(w_max.is_finite() && w_max > 0.0) {
        return Err(PaaError::Mapping(format!("full scale {w_max} must be positive")));
    }
    let (g_off, g_on) = (device.g_off(), device.g_on());
    let conductance = |mag: f64| -> Result<f64, PaaError> {
        let t = mag / w_max;
        if t > 1.0 + 1e-12 {
            return Err(PaaError::Mapping(format!("|w| = {mag} exceeds full scale {w_max}")));
        }
        let t = match n_levels {
            Some(n) => (t * (n - 1) as f64).round() / (n - 1) as f64,
            None => t.min(1.0),
        };
        // The top level is pinned so that `w = ±w_max` lands on 1/r_on bit-exactly.
        Ok(if t >= 1.0 { g_on } else { g_off + t * (g_on - g_off) })
    };
    let (rows, cols) = w.shape();
    let mut g_pos = Matrix::filled(rows, cols, g_off);
    let mut g_neg = Matrix::filled(rows, cols, g_off);
    for i in 0..rows {
        for j in 0..cols {
            let v = w.get(i, j);
            if v > 0.0 {
                g_pos.set(i, j, conductance(v)?);
            } else if v < 0.0 {
                g_neg.set(i, j, conductance(-v)?);
            }
        }
    }
    Ok(ConductanceTile::new(g_pos, g_neg).expect("equal shapes"))
}

/// Permitted conductances for `n` uniform levels, ascending.
pub fn conductance_levels(device: &DeviceKind, n: usize) -> Vec<f64> {
    let (g_off, g_on) = (device.g_off(), device.g_on());
    (0..n)
        .map(|k| {
            if k + 1 == n {
                g_on
            } else {
                g_off + k as f64 / (n - 1) as f64 * (g_on - g_off)
            }
        })
        .collect()
}

fn check_finite(w: &Matrix) -> Result<(), PaaError> {
    match w.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(PaaError::Mapping(format!(
            "non-finite weight at ({}, {})",
            k / w.cols().max(1),
            k % w.cols().max(1)
        ))),
        None => Ok(()),
    }
}
