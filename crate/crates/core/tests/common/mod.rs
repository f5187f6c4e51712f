#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbar_core::config::DeviceConfig;
use xbar_core::netlist::{ConductanceTile, GenerateOptions};
use xbar_core::{BitcellName, DesignPoint, DeviceKind, DeviceName, Matrix, Mode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn design(size: usize, device: DeviceName, bitcell: BitcellName) -> DesignPoint {
    DesignPoint::new(7, device, bitcell, size, Mode::Analog)
}

pub fn device(name: DeviceName) -> DeviceKind {
    *DeviceConfig::default().device(name).unwrap()
}

/// Conductances drawn uniformly from the device window.
pub fn random_tile(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dev: &DeviceKind) -> ConductanceTile {
    let (lo, hi) = (dev.g_off(), dev.g_on());
    let mut draw = || Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..=hi));
    let g_pos = draw();
    let g_neg = draw();
    ConductanceTile::new(g_pos, g_neg).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, rows: usize) -> Vec<f64> {
    (0..rows).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

pub fn options(dp: &DesignPoint, input: Vec<f64>) -> GenerateOptions {
    let cfg = DeviceConfig::default();
    GenerateOptions::from_resolved(&cfg.resolve(dp).unwrap(), input)
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// The 1000-image fixture, cropped to 20×20.
pub fn mnist_fixture() -> xbar_core::paa::Dataset {
    let dir = data_dir();
    xbar_core::paa::load_mnist(&dir.join("images-idx3-ubyte.gz"), &dir.join("labels-idx1-ubyte.gz")).unwrap()
}

/// Sigmoid MLP trained on samples disjoint from the image fixture.
pub fn trained_weights() -> xbar_core::paa::MlpWeights {
    xbar_core::paa::MlpWeights::load(&data_dir().join("mlp_400_120_84_10.json")).unwrap()
}
