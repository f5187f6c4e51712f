use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tracing::warn;
use xbar_core::dse::{load_repository, seed_paper_table, Repository};
use xbar_core::paa::{load_mnist, Activation, Dataset, MlpWeights, DEFAULT_LAYER_DIMS};
use xbar_core::DeviceConfig;

pub struct CliError {
    pub code: u8,
    pub err: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

/// Bad usage or unreadable input: exit 2.
pub fn input<E: Display>(e: E) -> CliError {
    CliError {
        code: 2,
        err: anyhow::anyhow!("{e}"),
    }
}

/// The command ran but the answer is negative: exit 1.
pub fn finding<E: Display>(e: E) -> CliError {
    CliError {
        code: 1,
        err: anyhow::anyhow!("{e}"),
    }
}

pub struct Ctx {
    pub json: bool,
    pub seed: u64,
    pub parallel: usize,
    pub config: DeviceConfig,
    pub config_path: Option<PathBuf>,
    pub argv: Vec<String>,
}

impl Ctx {
    /// Prints `value` as JSON in `--json` mode, otherwise the text rendering.
    pub fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
        } else {
            let t = text();
            print!("{t}");
            if !t.ends_with('\n') {
                println!();
            }
        }
    }

    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallel)
            .build()
            .map_err(input)
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input(format!("{}: no such file", path.display())))
    }
}

/// Weights from `path`, or synthetic weights of the default topology from `seed`.
pub fn load_weights(path: Option<&Path>, seed: u64) -> CliResult<MlpWeights> {
    match path {
        Some(p) => {
            require_file(p)?;
            MlpWeights::load(p).map_err(input)
        }
        None => {
            warn!("no --weights given; using synthetic weights from seed {seed}");
            Ok(MlpWeights::synthetic(seed, &DEFAULT_LAYER_DIMS, Activation::Sigmoid))
        }
    }
}

pub fn load_images(images: &Path, labels: &Path, n: Option<usize>) -> CliResult<Dataset> {
    require_file(images)?;
    require_file(labels)?;
    let d = load_mnist(images, labels).map_err(input)?;
    let d = match n {
        Some(n) if n > d.len() => {
            return Err(input(format!("asked for {n} images but {} holds {}", images.display(), d.len())))
        }
        Some(n) => d.head(n),
        None => d,
    };
    if d.is_empty() {
        return Err(input(format!("{}: no images", images.display())));
    }
    Ok(d)
}

/// The repository at `path`, or the seeded reference table.
pub fn load_repo(path: Option<&Path>) -> CliResult<Repository> {
    match path {
        Some(p) => {
            require_file(p)?;
            load_repository(p).map_err(input)
        }
        None => Ok(seed_paper_table()),
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}
