use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::util::{input, CliResult, Ctx};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct PointFailure {
    pub design: String,
    pub error: String,
}

/// Provenance of one eval or sweep run. Digests are SHA-256 of file bytes,
/// or of the canonical JSON of effective settings.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub parallel: usize,
    pub config_digests: BTreeMap<String, String>,
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub points: usize,
    pub succeeded: usize,
    pub failures: Vec<PointFailure>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, ctx: &Ctx) -> Self {
        let mut config_digests = BTreeMap::new();
        let cfg = serde_json::to_string(&ctx.config).expect("config serializes");
        config_digests.insert("device_config".into(), sha256_hex(cfg.as_bytes()));
        Self {
            command: command.into(),
            command_line: ctx.argv.clone(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: ctx.seed,
            parallel: ctx.parallel,
            config_digests,
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            points: 0,
            succeeded: 0,
            failures: Vec::new(),
            duration_s: 0.0,
        }
    }

    pub fn digest_setting<T: Serialize>(&mut self, name: &str, value: &T) {
        let text = serde_json::to_string(value).expect("setting serializes");
        self.config_digests.insert(name.into(), sha256_hex(text.as_bytes()));
    }

    pub fn digest_input(&mut self, path: &Path) -> CliResult<()> {
        let d = file_digest(path)?;
        self.input_digests.insert(path.display().to_string(), d);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| input(format!("{}: {e}", path.display())))
    }
}
