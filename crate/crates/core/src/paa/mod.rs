//! Power, area and accuracy of a design point: weight-to-conductance
//! mapping, crossbar-mapped inference, the parametric area model and its
//! calibration, and MNIST ingestion.

pub mod area;
pub mod infer;
pub mod mapping;
pub mod mnist;
pub mod weights;

use thiserror::Error;

use crate::circuit::CircuitError;
use crate::config::ConfigError;
use crate::design_space::{DesignError, DesignPoint};
use crate::netlist::NetlistError;

pub use area::{
    area_estimate, calibrate_area_model, calibrate_area_model_with, default_area_params, default_calibration,
    AreaContext, AreaParams, Calibration, CalibrationError, Objective,
};
pub use infer::{evaluate_design, infer_analog, EvalParams, EvalResult, Fidelity, Forward, MappedNetwork, Source};
pub use mapping::{conductance_levels, map_weights_to_conductance, map_with_full_scale};
pub use mnist::{load_mnist, Dataset, MnistError};
pub use weights::{Activation, MlpWeights, DEFAULT_LAYER_DIMS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaaError {
    #[error("weights topology: {0}")]
    Topology(String),
    #[error("weights file: {0}")]
    Weights(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("conductance mapping: {0}")]
    Mapping(String),
    #[error("input: {0}")]
    Input(String),
    #[error("design: {0}")]
    Design(String),
    #[error("empty image slice for {0}")]
    EmptySlice(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Mnist(#[from] MnistError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("{design} layer {layer} tile {tile:?}: {source}")]
    Solve {
        design: String,
        layer: usize,
        tile: (usize, usize),
        #[source]
        source: CircuitError,
    },
    #[error("{design}: {source}")]
    InDesign {
        design: String,
        #[source]
        source: Box<PaaError>,
    },
}

impl From<DesignError> for PaaError {
    fn from(e: DesignError) -> Self {
        PaaError::Design(e.to_string())
    }
}

impl PaaError {
    /// Adds the design key unless the error already names it.
    pub fn in_design(self, dp: &DesignPoint) -> Self {
        match self {
            e @ (PaaError::Solve { .. } | PaaError::InDesign { .. } | PaaError::EmptySlice(_)) => e,
            e => PaaError::InDesign {
                design: dp.key(),
                source: Box::new(e),
            },
        }
    }
}
