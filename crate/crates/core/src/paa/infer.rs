//! Crossbar-mapped MLP inference and design evaluation.
//!
//! Every layer is augmented with a bias row driven at full scale, tiled onto
//! `rows × cols` crossbars (zero padded at the edges) and encoded with one
//! full scale `w_max` per layer. A layer's pre-activation is
//!
//! ```text
//! z_j = Σ_tiles I_j · w_max / (vdd · (g_on − g_off))
//! ```
//!
//! which equals `Σ_i x_i w_ij + b_j` for ideal conductances. Activations are
//! fed to the next layer through the DAC, so ReLU outputs are clipped to the
//! DAC range `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::area::{area_estimate, AreaContext, AreaParams};
use super::mapping::map_with_full_scale;
use super::weights::{Activation, MlpWeights};
use super::PaaError;
use crate::circuit::{build_system, dac_quantize, ideal_mac, SolveOptions, Solver};
use crate::config::DeviceConfig;
use crate::design_space::{DesignPoint, Mode};
use crate::matrix::Matrix;
use crate::netlist::{generate_crossbar_netlist, ConductanceTile, GenerateOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// Closed-form differential currents from the programmed conductances.
    IdealMac,
    /// Nodal solve of the generated netlist with interconnect and access parasitics.
    FullParasitic,
}

impl std::str::FromStr for Fidelity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" | "ideal_mac" | "idealmac" => Ok(Fidelity::IdealMac),
            "parasitic" | "full_parasitic" | "fullparasitic" => Ok(Fidelity::FullParasitic),
            _ => Err(format!("unknown fidelity `{s}`, expected ideal or parasitic")),
        }
    }
}

struct MappedTile {
    r0: usize,
    c0: usize,
    tile: ConductanceTile,
    /// `Σ_j (G+_ij + G−_ij)` per row: power drawn at a virtual-ground column.
    row_load: Vec<f64>,
    solver: Option<Solver<'static>>,
}

struct MappedLayer {
    in_dim: usize,
    out_dim: usize,
    /// Converts summed column current to pre-activation units.
    scale: f64,
    tiles: Vec<MappedTile>,
}

/// A network programmed onto the crossbars of one design point.
pub struct MappedNetwork {
    design: DesignPoint,
    fidelity: Fidelity,
    activation: Activation,
    vdd: f64,
    bits: Option<u8>,
    layers: Vec<MappedLayer>,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub outputs: Vec<f64>,
    pub class: usize,
    /// Instantaneous power of all tiles of all layers, watts.
    pub power_w: f64,
}

impl MappedNetwork {
    pub fn new(dp: &DesignPoint, w: &MlpWeights, cfg: &DeviceConfig, fidelity: Fidelity) -> Result<Self, PaaError> {
        dp.validate()?;
        w.validate()?;
        let bits = match dp.mode {
            Mode::Analog => None,
            Mode::Digital(n) => Some(n),
            Mode::DigitalUnspecified => {
                return Err(PaaError::Design(format!(
                    "{} has no bit resolution to evaluate",
                    dp.key()
                )))
            }
        };
        let levels = bits.map(|n| 1usize << n);
        let resolved = cfg.resolve(dp)?;
        let device = resolved.device;
        let delta_g = device.g_on() - device.g_off();
        let mut layers = Vec::with_capacity(w.n_layers());
        for (k, (m, b)) in w.matrices.iter().zip(&w.biases).enumerate() {
            let (in_dim, out_dim) = m.shape();
            let aug = Matrix::from_fn(in_dim + 1, out_dim, |i, j| if i < in_dim { m.get(i, j) } else { b[j] });
            let w_max = match aug.max_abs() {
                v if v > 0.0 => v,
                _ => 1.0,
            };
            let mut tiles = Vec::new();
            for r0 in (0..in_dim + 1).step_by(dp.rows) {
                for c0 in (0..out_dim).step_by(dp.cols) {
                    let block = aug.block_padded(r0, c0, dp.rows, dp.cols);
                    let tile = map_with_full_scale(&block, &device, levels, w_max)?;
                    let row_load = (0..dp.rows)
                        .map(|i| tile.g_pos.row(i).iter().chain(tile.g_neg.row(i)).sum())
                        .collect();
                    let solver = match fidelity {
                        Fidelity::IdealMac => None,
                        Fidelity::FullParasitic => {
                            let mut opts = GenerateOptions::from_resolved(&resolved, vec![0.0; dp.rows]);
                            opts.tile_index = Some((r0 / dp.rows, c0 / dp.cols));
                            let n = generate_crossbar_netlist(dp, &tile, &opts)?;
                            let ctx = |source| PaaError::Solve {
                                design: dp.key(),
                                layer: k,
                                tile: (r0 / dp.rows, c0 / dp.cols),
                                source,
                            };
                            let sys = build_system(&n).map_err(ctx)?;
                            Some(Solver::new(sys, SolveOptions::default()).map_err(ctx)?)
                        }
                    };
                    tiles.push(MappedTile {
                        r0,
                        c0,
                        tile,
                        row_load,
                        solver,
                    });
                }
            }
            layers.push(MappedLayer {
                in_dim,
                out_dim,
                scale: w_max / (resolved.vdd * delta_g),
                tiles,
            });
        }
        Ok(Self {
            design: *dp,
            fidelity,
            activation: w.activation,
            vdd: resolved.vdd,
            bits,
            layers,
        })
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    pub fn tile_count(&self) -> usize {
        self.layers.iter().map(|l| l.tiles.len()).sum()
    }

    /// Tiles per axis of layer `k`: row tiles cover the inputs plus the bias row.
    pub fn tile_grid(&self, k: usize) -> Option<(usize, usize)> {
        let l = self.layers.get(k)?;
        Some(((l.in_dim + 1).div_ceil(self.design.rows), l.out_dim.div_ceil(self.design.cols)))
    }

    /// Programmed conductances of tile `(ti, tj)` of layer `k`.
    pub fn tile(&self, k: usize, ti: usize, tj: usize) -> Option<&ConductanceTile> {
        let l = self.layers.get(k)?;
        l.tiles
            .iter()
            .find(|t| t.r0 == ti * self.design.rows && t.c0 == tj * self.design.cols)
            .map(|t| &t.tile)
    }

    pub fn forward(&self, image: &[f64]) -> Result<Forward, PaaError> {
        let first = &self.layers[0];
        if image.len() != first.in_dim {
            return Err(PaaError::Topology(format!(
                "image has {} values, network expects {}",
                image.len(),
                first.in_dim
            )));
        }
        let mut x: Vec<f64> = image.to_vec();
        let mut power = 0.0;
        for (k, layer) in self.layers.iter().enumerate() {
            // Row voltages for the augmented input, bias row last.
            let mut v = Vec::with_capacity(layer.in_dim + 1);
            for &xi in &x {
                v.push(dac_quantize(xi, self.bits, self.vdd).map_err(|e| PaaError::Input(format!("layer {k}: {e}")))?);
            }
            v.push(self.vdd);
            let mut z = vec![0.0; layer.out_dim];
            for t in &layer.tiles {
                let rows = t.tile.rows();
                let tv: Vec<f64> = (0..rows).map(|i| v.get(t.r0 + i).copied().unwrap_or(0.0)).collect();
                let currents = match &t.solver {
                    None => {
                        power += tv.iter().zip(&t.row_load).map(|(vi, g)| vi * vi * g).sum::<f64>();
                        ideal_mac(&tv, &t.tile).expect("tile shape")
                    }
                    Some(solver) => {
                        let ctx = |source| PaaError::Solve {
                            design: self.design.key(),
                            layer: k,
                            tile: (t.r0 / rows, t.c0 / t.tile.cols()),
                            source,
                        };
                        let values = solver.system().source_values_for_pattern(&tv).map_err(ctx)?;
                        let report = solver.solve_sources(&values).map_err(ctx)?;
                        power += report.source_power;
                        report.column_currents
                    }
                };
                for (j, i) in currents.iter().enumerate() {
                    if let Some(zj) = z.get_mut(t.c0 + j) {
                        *zj += i;
                    }
                }
            }
            x = z
                .iter()
                .map(|zj| {
                    let y = self.activation.apply(zj * layer.scale).clamp(0.0, 1.0);
                    match self.bits {
                        Some(n) => adc_quantize(y, n),
                        None => y,
                    }
                })
                .collect();
        }
        Ok(Forward {
            class: argmax(&x),
            outputs: x,
            power_w: power,
        })
    }
}

/// Nearest of `2^n` uniform levels on `[0, 1]`.
pub fn adc_quantize(y: f64, bits: u8) -> f64 {
    let steps = ((1u64 << bits.min(52)) - 1) as f64;
    (y * steps).round() / steps
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Predicted class of one image.
pub fn infer_analog(
    dp: &DesignPoint,
    w: &MlpWeights,
    image: &[f64],
    fidelity: Fidelity,
    cfg: &DeviceConfig,
) -> Result<usize, PaaError> {
    Ok(MappedNetwork::new(dp, w, cfg, fidelity)?.forward(image)?.class)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    InternalSolver,
    PaperTable,
    External,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::InternalSolver => "internal_solver",
            Source::PaperTable => "paper_table",
            Source::External => "external",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "internal_solver" => Ok(Source::InternalSolver),
            "paper_table" => Ok(Source::PaperTable),
            "external" => Ok(Source::External),
            _ => Err(format!("unknown source `{s}`")),
        }
    }
}

/// Power, area and accuracy of one design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    #[serde(with = "design_as_key")]
    pub design: DesignPoint,
    pub area_um2: f64,
    pub accuracy_pct: f64,
    pub avg_power_w: f64,
    pub n_images: usize,
    pub n_patterns: usize,
    pub source: Source,
}

impl EvalResult {
    pub fn key(&self) -> String {
        self.design.key()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=100.0).contains(&self.accuracy_pct) {
            return Err(format!("accuracy {} outside [0, 100]", self.accuracy_pct));
        }
        if !(self.avg_power_w >= 0.0 && self.avg_power_w.is_finite()) {
            return Err(format!("power {} must be finite and non-negative", self.avg_power_w));
        }
        if !(self.area_um2 > 0.0 && self.area_um2.is_finite()) {
            return Err(format!("area {} must be positive", self.area_um2));
        }
        Ok(())
    }
}

mod design_as_key {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::design_space::DesignPoint;

    pub fn serialize<S: Serializer>(dp: &DesignPoint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&dp.key())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DesignPoint, D::Error> {
        let key = String::deserialize(d)?;
        key.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything `evaluate_design` needs besides the design, weights and images.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub config: DeviceConfig,
    pub area: AreaParams,
    pub fidelity: Fidelity,
}

impl EvalParams {
    pub fn new(config: DeviceConfig, fidelity: Fidelity) -> Self {
        Self {
            config,
            area: super::area::default_area_params(),
            fidelity,
        }
    }
}

/// Accuracy over the slice, mean whole-design power over its input patterns
/// and model area. Images are processed in parallel; results are reduced in
/// slice order.
pub fn evaluate_design(
    dp: &DesignPoint,
    w: &MlpWeights,
    images: &[Vec<f64>],
    labels: &[u8],
    params: &EvalParams,
) -> Result<EvalResult, PaaError> {
    let ctx = |e: PaaError| e.in_design(dp);
    if images.is_empty() {
        return Err(PaaError::EmptySlice(dp.key()));
    }
    if images.len() != labels.len() {
        return Err(ctx(PaaError::Input(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        ))));
    }
    let net = MappedNetwork::new(dp, w, &params.config, params.fidelity).map_err(ctx)?;
    let outs: Vec<Forward> = images
        .par_iter()
        .map(|img| net.forward(img))
        .collect::<Result<_, _>>()
        .map_err(ctx)?;
    let correct = outs
        .iter()
        .zip(labels)
        .filter(|(f, &l)| f.class == usize::from(l))
        .count();
    let power: f64 = outs.iter().map(|f| f.power_w).sum();
    let area_ctx = AreaContext::new(&params.config, &w.layer_dims).map_err(|e| ctx(e.into()))?;
    let n = images.len();
    Ok(EvalResult {
        design: *dp,
        area_um2: area_estimate(dp, &params.area, &area_ctx),
        accuracy_pct: 100.0 * correct as f64 / n as f64,
        avg_power_w: power / n as f64,
        n_images: n,
        n_patterns: n,
        source: Source::InternalSolver,
    })
}
