//! MLP weights file.
//!
//! ```json
//! {
//!   "layer_dims": [400, 120, 84, 10],
//!   "weights": [[...400*120 values...], [...120*84...], [...84*10...]],
//!   "biases": [[...120...], [...84...], [...10...]],
//!   "activation": "sigmoid"
//! }
//! ```
//!
//! Layer `k` maps `layer_dims[k]` inputs to `layer_dims[k+1]` outputs; its
//! weights are row-major with one row per input, so `w[i * out + j]` connects
//! input `i` to output `j`. This is also the crossbar orientation: inputs
//! drive rows, outputs are sensed on columns.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PaaError;
use crate::matrix::Matrix;

pub const DEFAULT_LAYER_DIMS: [usize; 4] = [400, 120, 84, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub layer_dims: Vec<usize>,
    /// One `in x out` matrix per layer.
    pub matrices: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl MlpWeights {
    pub fn new(
        layer_dims: Vec<usize>,
        matrices: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self, PaaError> {
        let w = Self {
            layer_dims,
            matrices,
            biases,
            activation,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), PaaError> {
        let bad = |m: String| Err(PaaError::Topology(m));
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return bad(format!("need at least two positive layer dims, got {:?}", self.layer_dims));
        }
        let layers = self.layer_dims.len() - 1;
        if self.matrices.len() != layers || self.biases.len() != layers {
            return bad(format!(
                "{} layers need {layers} matrices and bias vectors, got {} and {}",
                layers,
                self.matrices.len(),
                self.biases.len()
            ));
        }
        for k in 0..layers {
            let (i, o) = (self.layer_dims[k], self.layer_dims[k + 1]);
            if self.matrices[k].shape() != (i, o) {
                return bad(format!("layer {k} matrix is {:?}, expected ({i}, {o})", self.matrices[k].shape()));
            }
            if self.biases[k].len() != o {
                return bad(format!("layer {k} bias has {} entries, expected {o}", self.biases[k].len()));
            }
            if self.matrices[k].iter().chain(&self.biases[k]).any(|v| !v.is_finite()) {
                return bad(format!("layer {k} has non-finite parameters"));
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.matrices.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// All-zero network of the given topology.
    pub fn zeros(layer_dims: &[usize], activation: Activation) -> Self {
        let matrices = layer_dims.windows(2).map(|d| Matrix::zeros(d[0], d[1])).collect();
        let biases = layer_dims[1..].iter().map(|&o| vec![0.0; o]).collect();
        Self {
            layer_dims: layer_dims.to_vec(),
            matrices,
            biases,
            activation,
        }
    }

    /// Seeded weights uniform in `±sqrt(6 / (in + out))`, biases uniform in `±0.1`.
    pub fn synthetic(seed: u64, layer_dims: &[usize], activation: Activation) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        for d in layer_dims.windows(2) {
            let limit = (6.0 / (d[0] + d[1]) as f64).sqrt();
            matrices.push(Matrix::from_fn(d[0], d[1], |_, _| rng.gen_range(-limit..limit)));
            biases.push((0..d[1]).map(|_| rng.gen_range(-0.1..0.1)).collect());
        }
        Self {
            layer_dims: layer_dims.to_vec(),
            matrices,
            biases,
            activation,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PaaError> {
        let f: WeightsFile = serde_json::from_str(text).map_err(|e| PaaError::Weights(e.to_string()))?;
        let layers = f.layer_dims.len().saturating_sub(1);
        if f.weights.len() != layers {
            return Err(PaaError::Topology(format!(
                "{} weight arrays for {layers} layers",
                f.weights.len()
            )));
        }
        let mut matrices = Vec::with_capacity(layers);
        for (k, data) in f.weights.into_iter().enumerate() {
            let (i, o) = (f.layer_dims[k], f.layer_dims[k + 1]);
            let len = data.len();
            matrices.push(Matrix::from_row_major(i, o, data).ok_or_else(|| {
                PaaError::Topology(format!("layer {k} has {len} weights, expected {}", i * o))
            })?);
        }
        Self::new(f.layer_dims, matrices, f.biases, f.activation)
    }

    pub fn to_json(&self) -> String {
        let f = WeightsFile {
            layer_dims: self.layer_dims.clone(),
            weights: self.matrices.iter().map(|m| m.as_slice().to_vec()).collect(),
            biases: self.biases.clone(),
            activation: self.activation,
        };
        serde_json::to_string(&f).expect("weights serialize")
    }

    pub fn load(path: &Path) -> Result<Self, PaaError> {
        let text = std::fs::read_to_string(path).map_err(|e| PaaError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let w = MlpWeights::synthetic(3, &[4, 3, 2], Activation::Relu);
        let back = MlpWeights::from_json(&w.to_json()).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn synthetic_is_seeded() {
        let a = MlpWeights::synthetic(42, &DEFAULT_LAYER_DIMS, Activation::Sigmoid);
        let b = MlpWeights::synthetic(42, &DEFAULT_LAYER_DIMS, Activation::Sigmoid);
        let c = MlpWeights::synthetic(43, &DEFAULT_LAYER_DIMS, Activation::Sigmoid);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
    }

    #[test]
    fn rejects_bad_topology() {
        let text = r#"{"layer_dims":[2,1],"weights":[[1.0]],"biases":[[0.0]],"activation":"sigmoid"}"#;
        assert!(matches!(MlpWeights::from_json(text), Err(PaaError::Topology(_))));
        let text = r#"{"layer_dims":[2,1],"weights":[[1.0,2.0]],"biases":[[0.0,1.0]],"activation":"relu"}"#;
        assert!(matches!(MlpWeights::from_json(text), Err(PaaError::Topology(_))));
        let text = r#"{"layer_dims":[2,1],"weights":[[1.0,2.0]],"biases":[[0.0]],"activation":"tanh"}"#;
        assert!(matches!(MlpWeights::from_json(text), Err(PaaError::Weights(_))));
    }
}
