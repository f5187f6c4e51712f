//! Design repository and its flat-file formats.
//!
//! CSV columns, in order and all mandatory:
//!
//! | column | content |
//! |---|---|
//! | `tech_nm` | feature size in nm (a trailing `nm` is accepted on input) |
//! | `device` | `MRAM`, `RRAM`, `PCM`, `CBRAM` |
//! | `bitcell` | `1T1R`, `2T1R` |
//! | `rows`, `cols` | crossbar dimensions |
//! | `mode` | `analog` or `digital` |
//! | `bits` | empty for analog, bit count for digital, `?` when unpublished |
//! | `area_um2`, `accuracy_pct`, `avg_power_w` | the PAA triple |
//! | `n_images` | evaluation slice size |
//! | `source` | `internal_solver`, `paper_table`, `external` |
//!
//! CSV has no partition column, so only unpartitioned designs are stored
//! there and `n_patterns` is read back equal to `n_images`. JSONL stores one
//! serialized result per line and keeps every field.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use super::seed::{paper_rows, PAPER_N_IMAGES};
use super::DseError;
use crate::design_space::{BitcellName, DesignPoint, DeviceName, Mode, Partition};
use crate::paa::{EvalResult, Source};

pub const CSV_COLUMNS: [&str; 12] = [
    "tech_nm",
    "device",
    "bitcell",
    "rows",
    "cols",
    "mode",
    "bits",
    "area_um2",
    "accuracy_pct",
    "avg_power_w",
    "n_images",
    "source",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Repository {
    entries: BTreeMap<String, EvalResult>,
    version: u64,
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, key: &str) -> Option<&EvalResult> {
        self.entries.get(key)
    }

    /// Entries in design-key order.
    pub fn iter(&self) -> impl Iterator<Item = &EvalResult> {
        self.entries.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Adds a new entry; one committed write.
    pub fn insert(&mut self, r: EvalResult) -> Result<(), DseError> {
        r.validate().map_err(|m| DseError::Invalid { key: r.key(), message: m })?;
        let key = r.key();
        if self.entries.contains_key(&key) {
            return Err(DseError::DuplicateKey { key, row: None });
        }
        self.entries.insert(key, r);
        self.version += 1;
        Ok(())
    }

    /// Adds or replaces an entry; one committed write.
    pub fn upsert(&mut self, r: EvalResult) -> Result<(), DseError> {
        r.validate().map_err(|m| DseError::Invalid { key: r.key(), message: m })?;
        self.entries.insert(r.key(), r);
        self.version += 1;
        Ok(())
    }

    pub fn from_results(results: impl IntoIterator<Item = EvalResult>) -> Result<Self, DseError> {
        let mut repo = Self::new();
        for r in results {
            repo.insert(r)?;
        }
        Ok(repo)
    }

    /// Same entries, ignoring the version counter.
    pub fn same_entries(&self, other: &Repository) -> bool {
        self.entries == other.entries
    }
}

/// The published table as a repository of 60 entries.
pub fn seed_paper_table() -> Repository {
    Repository::from_results(paper_rows().into_iter().map(|r| EvalResult {
        design: r.design,
        area_um2: r.area_um2,
        accuracy_pct: r.accuracy_pct,
        avg_power_w: r.avg_power_w,
        n_images: PAPER_N_IMAGES,
        n_patterns: PAPER_N_IMAGES,
        source: Source::PaperTable,
    }))
    .expect("published rows are unique and valid")
}

fn mode_columns(mode: Mode) -> (&'static str, String) {
    match mode {
        Mode::Analog => ("analog", String::new()),
        Mode::Digital(n) => ("digital", n.to_string()),
        Mode::DigitalUnspecified => ("digital", "?".into()),
    }
}

pub fn to_csv(repo: &Repository) -> Result<String, DseError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| DseError::Format(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for e in repo.iter() {
        let d = &e.design;
        if d.partition != Partition::UNSPLIT {
            return Err(DseError::Format(format!(
                "{} is partitioned; CSV stores only 1x1 designs, use JSONL",
                e.key()
            )));
        }
        let (mode, bits) = mode_columns(d.mode);
        w.write_record([
            d.tech.nm().to_string(),
            d.device.as_str().to_string(),
            d.bitcell.as_str().to_string(),
            d.rows.to_string(),
            d.cols.to_string(),
            mode.to_string(),
            bits,
            e.area_um2.to_string(),
            e.accuracy_pct.to_string(),
            e.avg_power_w.to_string(),
            e.n_images.to_string(),
            e.source.as_str().to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| DseError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

pub fn from_csv(text: &str) -> Result<Repository, DseError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| DseError::Row { row: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DseError::Row { row: 1, message: "missing header row".into() });
    }
    let mut index = BTreeMap::new();
    for name in CSV_COLUMNS {
        let pos = headers.iter().position(|h| h == name).ok_or_else(|| DseError::Row {
            row: 1,
            message: format!("missing column `{name}`"),
        })?;
        index.insert(name, pos);
    }
    let mut repo = Repository::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| DseError::Row { row, message: e.to_string() })?;
        let field = |name: &str| rec.get(index[name]).unwrap_or("");
        let bad = |name: &str, why: String| DseError::Row {
            row,
            message: format!("column `{name}`: {why}"),
        };
        let num = |name: &str| -> Result<f64, DseError> {
            let s = field(name);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(name, format!("cannot parse `{s}` as a number")))
        };
        let int = |name: &str| -> Result<usize, DseError> {
            let s = field(name);
            s.parse::<usize>().map_err(|_| bad(name, format!("cannot parse `{s}` as an integer")))
        };
        let device: DeviceName = field("device").parse().map_err(|e| bad("device", format!("{e}")))?;
        let bitcell: BitcellName = field("bitcell").parse().map_err(|e| bad("bitcell", format!("{e}")))?;
        let mode = match (field("mode").to_ascii_lowercase().as_str(), field("bits")) {
            ("analog", "") => Mode::Analog,
            ("digital", "?") => Mode::DigitalUnspecified,
            ("digital", b) => Mode::Digital(
                b.parse()
                    .map_err(|_| bad("bits", format!("cannot parse `{b}` as a bit count")))?,
            ),
            (m, b) => return Err(bad("mode", format!("unknown mode `{m}` with bits `{b}`"))),
        };
        let tech_s = field("tech_nm");
        let tech: u32 = tech_s
            .strip_suffix("nm")
            .unwrap_or(tech_s)
            .parse()
            .map_err(|_| bad("tech_nm", format!("cannot parse `{tech_s}` as a node")))?;
        let design = DesignPoint {
            rows: int("rows")?,
            cols: int("cols")?,
            ..DesignPoint::new(tech, device, bitcell, 1, mode)
        };
        design.validate().map_err(|e| DseError::Row { row, message: e.to_string() })?;
        let n_images = int("n_images")?;
        let source: Source = field("source").parse().map_err(|e: String| bad("source", e))?;
        let r = EvalResult {
            design,
            area_um2: num("area_um2")?,
            accuracy_pct: num("accuracy_pct")?,
            avg_power_w: num("avg_power_w")?,
            n_images,
            n_patterns: n_images,
            source,
        };
        r.validate().map_err(|m| DseError::Row { row, message: m })?;
        if repo.get(&r.key()).is_some() {
            return Err(DseError::DuplicateKey {
                key: r.key(),
                row: Some(row),
            });
        }
        repo.insert(r)?;
    }
    Ok(repo)
}

pub fn to_jsonl(repo: &Repository) -> String {
    let mut out = String::new();
    for e in repo.iter() {
        out.push_str(&serde_json::to_string(e).expect("result serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Repository, DseError> {
    let mut repo = Repository::new();
    for (k, line) in text.lines().enumerate() {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalResult = serde_json::from_str(line).map_err(|e| DseError::Row { row, message: e.to_string() })?;
        r.validate().map_err(|m| DseError::Row { row, message: m })?;
        if repo.get(&r.key()).is_some() {
            return Err(DseError::DuplicateKey {
                key: r.key(),
                row: Some(row),
            });
        }
        repo.insert(r)?;
    }
    Ok(repo)
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("jsonl" | "ndjson" | "json")
    )
}

/// Loads CSV, or JSONL for `.jsonl`/`.ndjson`/`.json` paths.
pub fn load_repository(path: &Path) -> Result<Repository, DseError> {
    let text = std::fs::read_to_string(path).map_err(|e| DseError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if is_jsonl(path) {
        from_jsonl(&text)
    } else {
        from_csv(&text)
    }
}

pub fn save_repository(repo: &Repository, path: &Path) -> Result<(), DseError> {
    let text = if is_jsonl(path) { to_jsonl(repo) } else { to_csv(repo)? };
    std::fs::write(path, text).map_err(|e| DseError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Many readers share immutable snapshots; writers serialize through one
/// commit lock and publish a new snapshot per commit.
#[derive(Debug, Default)]
pub struct SharedRepository {
    current: RwLock<Arc<Repository>>,
    committer: Mutex<()>,
}

impl SharedRepository {
    pub fn new(repo: Repository) -> Self {
        Self {
            current: RwLock::new(Arc::new(repo)),
            committer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<Repository> {
        self.current.read().expect("snapshot lock").clone()
    }

    /// Applies `f` to a copy of the latest snapshot and publishes it if `f` succeeds.
    pub fn commit<T>(&self, f: impl FnOnce(&mut Repository) -> Result<T, DseError>) -> Result<T, DseError> {
        let _guard = self.committer.lock().expect("commit lock");
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        *self.current.write().expect("snapshot lock") = Arc::new(next);
        Ok(out)
    }
}
