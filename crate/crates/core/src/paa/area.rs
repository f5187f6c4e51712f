//! Parametric silicon-area model.
//!
//! One crossbar tile of `r × c` cells split into `h × v` partitions costs
//!
//! ```text
//! 2·r·c·cell_coeff·factor·F^e  +  h·v·periph_fixed  +  r·v·periph_per_row  +  c·h·periph_per_col
//! ```
//!
//! where `F` is the feature size in nm, `factor` is the bitcell area factor
//! and the leading 2 counts both differential arrays. Each partition carries
//! its own row drivers (`r/h` rows) and column sense circuits (`c/v` columns).
//! A design's area is the tile area times the number of tiles needed for the
//! whole network, with one bias row per layer.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::weights::DEFAULT_LAYER_DIMS;
use crate::config::{ConfigError, DeviceConfig};
use crate::design_space::{tile_count, BitcellName, DesignPoint};

pub const N_PARAMS: usize = 5;
const N_LINEAR: usize = 4;
const EXPONENT_RANGE: (f64, f64) = (0.0, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    /// µm² per cell per nm^e.
    pub cell_coeff: f64,
    /// µm² per partition.
    pub periph_fixed: f64,
    /// µm² per driven row line.
    pub periph_per_row: f64,
    /// µm² per sensed column line.
    pub periph_per_col: f64,
    pub node_scaling_exponent: f64,
}

impl AreaParams {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let all = [
            self.cell_coeff,
            self.periph_fixed,
            self.periph_per_row,
            self.periph_per_col,
            self.node_scaling_exponent,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CalibrationError::Invalid(format!("parameters must be finite and non-negative: {self:?}")));
        }
        if self.cell_coeff <= 0.0 {
            return Err(CalibrationError::Invalid("cell_coeff must be positive".into()));
        }
        Ok(())
    }
}

/// Network shape and bitcell factors the area model is evaluated against.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaContext {
    pub layer_dims: Vec<usize>,
    pub factor_1t1r: f64,
    pub factor_2t1r: f64,
}

impl AreaContext {
    pub fn new(cfg: &DeviceConfig, layer_dims: &[usize]) -> Result<Self, ConfigError> {
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            factor_1t1r: cfg.bitcell(BitcellName::OneT1R)?.cell_area_factor,
            factor_2t1r: cfg.bitcell(BitcellName::TwoT1R)?.cell_area_factor,
        })
    }

    pub fn factor(&self, b: BitcellName) -> f64 {
        match b {
            BitcellName::OneT1R => self.factor_1t1r,
            BitcellName::TwoT1R => self.factor_2t1r,
        }
    }

    /// Crossbar tiles needed for all layers, bias rows included.
    pub fn tiles(&self, rows: usize, cols: usize) -> usize {
        self.layer_dims
            .windows(2)
            .map(|d| tile_count(d[0] + 1, d[1], rows, cols))
            .sum()
    }
}

impl Default for AreaContext {
    fn default() -> Self {
        Self::new(&DeviceConfig::default(), &DEFAULT_LAYER_DIMS).expect("default config has both bitcells")
    }
}

/// Area terms multiplying the four linear parameters, for a given exponent.
fn features(dp: &DesignPoint, ctx: &AreaContext, exponent: f64) -> [f64; N_LINEAR] {
    let (r, c) = (dp.rows as f64, dp.cols as f64);
    let (h, v) = (dp.partition.h_parts as f64, dp.partition.v_parts as f64);
    let f = f64::from(dp.tech.nm());
    let t = ctx.tiles(dp.rows, dp.cols) as f64;
    [
        t * 2.0 * r * c * ctx.factor(dp.bitcell) * f.powf(exponent),
        t * h * v,
        t * r * v,
        t * c * h,
    ]
}

/// Area of one `rows × cols` differential tile pair.
pub fn tile_area(dp: &DesignPoint, p: &AreaParams, cell_area_factor: f64) -> f64 {
    let (r, c) = (dp.rows as f64, dp.cols as f64);
    let (h, v) = (dp.partition.h_parts as f64, dp.partition.v_parts as f64);
    let f = f64::from(dp.tech.nm());
    2.0 * r * c * p.cell_coeff * cell_area_factor * f.powf(p.node_scaling_exponent)
        + h * v * p.periph_fixed
        + r * v * p.periph_per_row
        + c * h * p.periph_per_col
}

/// Whole-design area in µm².
pub fn area_estimate(dp: &DesignPoint, p: &AreaParams, ctx: &AreaContext) -> f64 {
    ctx.tiles(dp.rows, dp.cols) as f64 * tile_area(dp, p, ctx.factor(dp.bitcell))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("underdetermined: {rows} reference rows for a {params}-parameter model")]
    Underdetermined { rows: usize, params: usize },
    #[error("degenerate reference data: {0}")]
    Degenerate(String),
    #[error("invalid area parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of squared relative errors.
    LeastSquares,
    /// Largest absolute relative error.
    Minimax,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub design: String,
    pub reference: f64,
    pub fitted: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub params: AreaParams,
    pub objective: Objective,
    pub rows: Vec<CalibrationRow>,
    pub max_rel_error: f64,
    pub rms_rel_error: f64,
}

/// Non-negative least-squares fit of the relative errors.
pub fn calibrate_area_model(
    reference: &[(DesignPoint, f64)],
    ctx: &AreaContext,
) -> Result<Calibration, CalibrationError> {
    calibrate_area_model_with(reference, ctx, Objective::LeastSquares)
}

/// Fits the exponent by a coarse scan followed by golden-section refinement;
/// for each exponent the linear parameters are fitted exactly under
/// non-negativity. The minimax objective uses Lawson's reweighting.
pub fn calibrate_area_model_with(
    reference: &[(DesignPoint, f64)],
    ctx: &AreaContext,
    objective: Objective,
) -> Result<Calibration, CalibrationError> {
    if reference.len() < N_PARAMS {
        return Err(CalibrationError::Underdetermined {
            rows: reference.len(),
            params: N_PARAMS,
        });
    }
    if let Some((dp, a)) = reference.iter().find(|(_, a)| !(a.is_finite() && *a > 0.0)) {
        return Err(CalibrationError::Degenerate(format!("area {a} for {}", dp.key())));
    }
    let first = reference[0].1;
    if reference.iter().all(|(_, a)| *a == first) {
        return Err(CalibrationError::Degenerate(format!("all {} areas equal {first}", reference.len())));
    }

    let fit_at = |e: f64| -> Option<([f64; N_LINEAR], f64)> {
        let rows: Vec<[f64; N_LINEAR]> = reference
            .iter()
            .map(|(dp, a)| features(dp, ctx, e).map(|x| x / a))
            .collect();
        match objective {
            Objective::LeastSquares => {
                let x = weighted_nnls(&rows, &vec![1.0; rows.len()])?;
                let ss = rows.iter().map(|r| (dot(r, &x) - 1.0).powi(2)).sum();
                Some((x, ss))
            }
            Objective::Minimax => lawson_minimax(&rows),
        }
    };

    let (lo, hi) = EXPONENT_RANGE;
    let steps = 40;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let e = lo + (hi - lo) * k as f64 / steps as f64;
        if let Some((_, v)) = fit_at(e) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((e, v));
            }
        }
    }
    let (e0, _) = best.ok_or_else(|| CalibrationError::Degenerate("no exponent admits a fit".into()))?;
    let step = (hi - lo) / steps as f64;
    let value = |e: f64| fit_at(e).map_or(f64::INFINITY, |(_, v)| v);
    let e = golden_section(value, (e0 - step).max(lo), (e0 + step).min(hi), 1e-12);
    let (x, _) = fit_at(e).ok_or_else(|| CalibrationError::Degenerate("fit failed at the optimum".into()))?;
    let params = AreaParams {
        cell_coeff: x[0],
        periph_fixed: x[1],
        periph_per_row: x[2],
        periph_per_col: x[3],
        node_scaling_exponent: e,
    };
    if params.cell_coeff <= 0.0 {
        return Err(CalibrationError::Degenerate("best fit has no cell-area term".into()));
    }
    Ok(audit(reference, ctx, params, objective))
}

/// Per-row residuals of `params` against `reference`.
pub fn audit(reference: &[(DesignPoint, f64)], ctx: &AreaContext, params: AreaParams, objective: Objective) -> Calibration {
    let rows: Vec<CalibrationRow> = reference
        .iter()
        .map(|(dp, a)| {
            let fitted = area_estimate(dp, &params, ctx);
            CalibrationRow {
                design: dp.key(),
                reference: *a,
                fitted,
                rel_error: fitted / a - 1.0,
            }
        })
        .collect();
    let max_rel_error = rows.iter().map(|r| r.rel_error.abs()).fold(0.0, f64::max);
    let rms_rel_error = (rows.iter().map(|r| r.rel_error.powi(2)).sum::<f64>() / rows.len().max(1) as f64).sqrt();
    Calibration {
        params,
        objective,
        rows,
        max_rel_error,
        rms_rel_error,
    }
}

/// Reference areas of the published table.
pub fn paper_reference() -> Vec<(DesignPoint, f64)> {
    crate::dse::paper_rows().into_iter().map(|r| (r.design, r.area_um2)).collect()
}

/// Minimax calibration against the published table under the default context; computed once.
pub fn default_calibration() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(|| {
        calibrate_area_model_with(&paper_reference(), &AreaContext::default(), Objective::Minimax)
            .expect("published table calibrates")
    })
}

pub fn default_area_params() -> AreaParams {
    default_calibration().params
}

fn dot(a: &[f64; N_LINEAR], b: &[f64; N_LINEAR]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    [(f(m), m), (fc, c), (fd, d)]
        .into_iter()
        .fold((f64::INFINITY, m), |acc, p| if p.0 < acc.0 { p } else { acc })
        .1
}

/// Minimizes `Σ w_i (rows_i · x − 1)²` subject to `x ≥ 0` by enumerating
/// active sets; singular subsets are skipped.
fn weighted_nnls(rows: &[[f64; N_LINEAR]], w: &[f64]) -> Option<[f64; N_LINEAR]> {
    let mut best: Option<([f64; N_LINEAR], f64)> = None;
    for mask in 1u32..(1 << N_LINEAR) {
        let cols: Vec<usize> = (0..N_LINEAR).filter(|j| mask & (1 << j) != 0).collect();
        let m: Vec<Vec<f64>> = rows
            .iter()
            .zip(w)
            .map(|(r, wi)| cols.iter().map(|&j| r[j] * wi.sqrt()).collect())
            .collect();
        let b: Vec<f64> = w.iter().map(|wi| wi.sqrt()).collect();
        let Some(sol) = least_squares(&m, &b) else { continue };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut x = [0.0; N_LINEAR];
        for (&j, v) in cols.iter().zip(sol) {
            x[j] = v;
        }
        let cost: f64 = rows.iter().zip(w).map(|(r, wi)| wi * (dot(r, &x) - 1.0).powi(2)).sum();
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((x, cost));
        }
    }
    best.map(|(x, _)| x)
}

/// Lawson's iteratively reweighted least squares toward the minimax solution.
/// Returns the best iterate and its largest absolute residual.
fn lawson_minimax(rows: &[[f64; N_LINEAR]]) -> Option<([f64; N_LINEAR], f64)> {
    const ROUNDS: usize = 120;
    let n = rows.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut best: Option<([f64; N_LINEAR], f64)> = None;
    for _ in 0..ROUNDS {
        let x = weighted_nnls(rows, &w)?;
        let res: Vec<f64> = rows.iter().map(|r| (dot(r, &x) - 1.0).abs()).collect();
        let worst = res.iter().cloned().fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(_, b)| worst < *b) {
            best = Some((x, worst));
        }
        let total: f64 = w.iter().zip(&res).map(|(wi, ri)| wi * ri).sum();
        if total <= 0.0 {
            break;
        }
        for (wi, ri) in w.iter_mut().zip(&res) {
            *wi *= ri / total;
        }
    }
    best
}

/// Householder QR least squares with column equilibration. `None` when the
/// scaled matrix is numerically rank deficient.
fn least_squares(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = m.len();
    let k = m.first()?.len();
    if n < k {
        return None;
    }
    let scale: Vec<f64> = (0..k)
        .map(|j| m.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt())
        .collect();
    if scale.iter().any(|&s| s == 0.0) {
        return None;
    }
    let mut a: Vec<Vec<f64>> = m.iter().map(|r| r.iter().zip(&scale).map(|(v, s)| v / s).collect()).collect();
    let mut y = b.to_vec();
    for j in 0..k {
        let norm = (j..n).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return None;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for c in j..k {
            let s: f64 = (j..n).map(|i| v[i - j] * a[i][c]).sum::<f64>() * 2.0 / vv;
            for i in j..n {
                a[i][c] -= s * v[i - j];
            }
        }
        let s: f64 = (j..n).map(|i| v[i - j] * y[i]).sum::<f64>() * 2.0 / vv;
        for i in j..n {
            y[i] -= s * v[i - j];
        }
    }
    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let s: f64 = (j + 1..k).map(|c| a[j][c] * x[c]).sum();
        x[j] = (y[j] - s) / a[j][j];
    }
    Some(x.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{DeviceName, Mode};

    #[test]
    fn least_squares_solves_square_system() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = least_squares(&m, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(least_squares(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn rejects_short_and_flat_references() {
        let dp = DesignPoint::new(7, DeviceName::Pcm, BitcellName::OneT1R, 16, Mode::Analog);
        let ctx = AreaContext::default();
        assert_eq!(
            calibrate_area_model(&[(dp, 100.0)], &ctx),
            Err(CalibrationError::Underdetermined { rows: 1, params: 5 })
        );
        let flat = vec![(dp, 100.0); 8];
        assert!(matches!(calibrate_area_model(&flat, &ctx), Err(CalibrationError::Degenerate(_))));
    }

    #[test]
    fn tiles_include_bias_rows() {
        let ctx = AreaContext::default();
        // 401x120, 121x84, 85x10 on 64x64 tiles.
        assert_eq!(ctx.tiles(64, 64), 7 * 2 + 2 * 2 + 2);
        assert_eq!(ctx.tiles(16, 16), 26 * 8 + 8 * 6 + 6);
    }
}
