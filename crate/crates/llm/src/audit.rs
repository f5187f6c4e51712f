use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::LlmError;

/// One model reply and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub request: String,
    pub attempt: usize,
    pub model: String,
    /// Raw assistant content, or the HTTP body on transport failures.
    pub raw: String,
    /// `valid`, `invalid` or `http_error`.
    pub outcome: String,
    pub error: Option<String>,
}

/// Append-only JSONL log; a mutex makes it the single writer.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, r: &AuditRecord) -> Result<(), LlmError> {
        let line = serde_json::to_string(r).expect("record serializes");
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| LlmError::Io {
                path: self.path.display().to_string(),
                reason: e.to_string(),
            })
    }

    pub fn read(path: &Path) -> Result<Vec<AuditRecord>, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| LlmError::Protocol(format!("audit line: {e}"))))
            .collect()
    }
}
