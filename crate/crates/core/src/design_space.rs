//! Configuration grid: technology node, memory device, bitcell, crossbar size,
//! bit resolution and partitioning, plus the canonical string key for a point.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("grid axis `{axis}` is empty")]
    EmptyAxis { axis: &'static str },
    #[error("invalid design point: {0}")]
    Invalid(String),
    #[error("cannot parse design key `{key}`: {reason}")]
    BadKey { key: String, reason: String },
    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },
    #[error("grid file {path}: {reason}")]
    GridFile { path: String, reason: String },
}

/// Technology node, in nanometres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TechNode(pub u32);

impl TechNode {
    pub const DEFAULT_NODES: [u32; 4] = [7, 9, 14, 20];

    pub fn nm(self) -> u32 {
        self.0
    }
}

impl fmt::Display for TechNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}nm", self.0)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceName {
    Mram,
    Rram,
    Pcm,
    Cbram,
}

impl DeviceName {
    pub const ALL: [DeviceName; 4] = [Self::Mram, Self::Rram, Self::Pcm, Self::Cbram];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mram => "MRAM",
            Self::Rram => "RRAM",
            Self::Pcm => "PCM",
            Self::Cbram => "CBRAM",
        }
    }
}

impl fmt::Display for DeviceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceName {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DesignError::UnknownName {
                what: "device",
                value: s.to_string(),
            })
    }
}

string_serde!(DeviceName);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BitcellName {
    OneT1R,
    TwoT1R,
}

impl BitcellName {
    pub const ALL: [BitcellName; 2] = [Self::OneT1R, Self::TwoT1R];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::OneT1R => "1T1R",
            Self::TwoT1R => "2T1R",
        }
    }

    /// Access transistors per cell.
    pub fn switches_per_cell(self) -> usize {
        match self {
            Self::OneT1R => 1,
            Self::TwoT1R => 2,
        }
    }
}

impl fmt::Display for BitcellName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BitcellName {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "1T1R" | "ONET1R" => Ok(Self::OneT1R),
            "2T1R" | "TWOT1R" => Ok(Self::TwoT1R),
            _ => Err(DesignError::UnknownName {
                what: "bitcell",
                value: s.to_string(),
            }),
        }
    }
}

string_serde!(BitcellName);

/// Input/output resolution of a design point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Analog,
    Digital(u8),
    /// Digital design whose bit resolution was not reported (reference data only).
    DigitalUnspecified,
}

impl Mode {
    pub fn bits(self) -> Option<u8> {
        match self {
            Mode::Digital(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_analog(self) -> bool {
        matches!(self, Mode::Analog)
    }

    /// Token used inside design keys: `analog`, `d<bits>`, or `dx`.
    pub fn token(self) -> String {
        match self {
            Mode::Analog => "analog".to_string(),
            Mode::Digital(n) => format!("d{n}"),
            Mode::DigitalUnspecified => "dx".to_string(),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

impl FromStr for Mode {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let bad = || DesignError::UnknownName {
            what: "mode",
            value: s.to_string(),
        };
        if t == "analog" {
            return Ok(Mode::Analog);
        }
        if t == "dx" || t == "digital" {
            return Ok(Mode::DigitalUnspecified);
        }
        let digits = t
            .strip_prefix("digital")
            .or_else(|| t.strip_prefix('d'))
            .ok_or_else(bad)?;
        let n: u8 = digits.parse().map_err(|_| bad())?;
        if n == 0 || n > 16 {
            return Err(bad());
        }
        Ok(Mode::Digital(n))
    }
}

string_serde!(Mode);

/// Horizontal/vertical split of one crossbar into equally sized sub-arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    pub h_parts: usize,
    pub v_parts: usize,
}

impl Partition {
    pub const UNSPLIT: Partition = Partition {
        h_parts: 1,
        v_parts: 1,
    };

    pub fn count(self) -> usize {
        self.h_parts * self.v_parts
    }
}

impl Default for Partition {
    fn default() -> Self {
        Self::UNSPLIT
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.h_parts, self.v_parts)
    }
}

impl FromStr for Partition {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DesignError::UnknownName {
            what: "partition",
            value: s.to_string(),
        };
        let (h, v) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let h_parts: usize = h.parse().map_err(|_| bad())?;
        let v_parts: usize = v.parse().map_err(|_| bad())?;
        if h_parts == 0 || v_parts == 0 {
            return Err(bad());
        }
        Ok(Partition { h_parts, v_parts })
    }
}

string_serde!(Partition);

/// Smallest partition whose sub-arrays fit the crossbar, which for a single
/// crossbar is always the unsplit array.
pub fn default_partition(_rows: usize, _cols: usize) -> Partition {
    Partition::UNSPLIT
}

/// Number of `rows x cols` crossbars needed to hold a `matrix_rows x matrix_cols`
/// weight matrix (ceiling division on both axes).
pub fn tile_count(matrix_rows: usize, matrix_cols: usize, rows: usize, cols: usize) -> usize {
    matrix_rows.div_ceil(rows) * matrix_cols.div_ceil(cols)
}

/// One coordinate of the configuration grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DesignPoint {
    pub tech: TechNode,
    pub device: DeviceName,
    pub bitcell: BitcellName,
    pub rows: usize,
    pub cols: usize,
    pub mode: Mode,
    pub partition: Partition,
}

impl DesignPoint {
    pub fn new(
        tech_nm: u32,
        device: DeviceName,
        bitcell: BitcellName,
        size: usize,
        mode: Mode,
    ) -> Self {
        Self {
            tech: TechNode(tech_nm),
            device,
            bitcell,
            rows: size,
            cols: size,
            mode,
            partition: default_partition(size, size),
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(DesignError::Invalid(format!(
                "crossbar dimensions must be positive, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.tech.0 == 0 {
            return Err(DesignError::Invalid("technology node must be positive".into()));
        }
        let p = self.partition;
        if p.h_parts == 0 || p.v_parts == 0 {
            return Err(DesignError::Invalid("partition counts must be positive".into()));
        }
        if self.rows % p.h_parts != 0 || self.cols % p.v_parts != 0 {
            return Err(DesignError::Invalid(format!(
                "partition {p} does not divide crossbar {}x{}",
                self.rows, self.cols
            )));
        }
        if let Mode::Digital(n) = self.mode {
            if n == 0 || n > 16 {
                return Err(DesignError::Invalid(format!("unsupported bit resolution {n}")));
            }
        }
        Ok(())
    }

    /// Canonical identifier, e.g. `t7_pcm_1t1r_64x64_analog_p1x1`.
    pub fn key(&self) -> String {
        design_key(self)
    }

    /// Size used by queries: the larger crossbar dimension.
    pub fn size(&self) -> usize {
        self.rows.max(self.cols)
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for DesignPoint {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_design_key(s)
    }
}

impl PartialOrd for DesignPoint {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DesignPoint {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

pub fn design_key(dp: &DesignPoint) -> String {
    format!(
        "t{}_{}_{}_{}x{}_{}_p{}",
        dp.tech.0,
        dp.device.as_str().to_ascii_lowercase(),
        dp.bitcell.as_str().to_ascii_lowercase(),
        dp.rows,
        dp.cols,
        dp.mode.token(),
        dp.partition
    )
}

pub fn parse_design_key(key: &str) -> Result<DesignPoint, DesignError> {
    let bad = |reason: &str| DesignError::BadKey {
        key: key.to_string(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = key.split('_').collect();
    let [tech, device, bitcell, dims, mode, partition] = parts.as_slice() else {
        return Err(bad("expected 6 underscore-separated fields"));
    };
    let tech_nm: u32 = tech
        .strip_prefix('t')
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("technology field must look like t7"))?;
    let (rows, cols) = dims
        .split_once('x')
        .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
        .ok_or_else(|| bad("dimension field must look like 64x64"))?;
    let partition: Partition = partition
        .strip_prefix('p')
        .ok_or_else(|| bad("partition field must look like p1x1"))?
        .parse()?;
    let dp = DesignPoint {
        tech: TechNode(tech_nm),
        device: device.parse()?,
        bitcell: bitcell.parse()?,
        rows,
        cols,
        mode: mode.parse()?,
        partition,
    };
    dp.validate()?;
    if design_key(&dp) != key {
        return Err(bad("key is not in canonical form"));
    }
    Ok(dp)
}

/// Axis value lists of the configuration grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub tech_nm: Vec<u32>,
    #[serde(default)]
    pub devices: Vec<DeviceName>,
    #[serde(default)]
    pub bitcells: Vec<BitcellName>,
    /// Explicit (device, bitcell) combinations; replaces the devices x bitcells product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(DeviceName, BitcellName)>>,
    pub sizes: Vec<usize>,
    pub modes: Vec<Mode>,
    #[serde(default = "default_partitions")]
    pub partitions: Vec<Partition>,
}

fn default_partitions() -> Vec<Partition> {
    vec![Partition::UNSPLIT]
}

impl Default for GridSpec {
    /// Four nodes, four devices, two bitcells, three sizes, analog plus six bit resolutions.
    fn default() -> Self {
        let mut modes = vec![Mode::Analog];
        modes.extend([1u8, 2, 3, 4, 6, 8].map(Mode::Digital));
        Self {
            tech_nm: TechNode::DEFAULT_NODES.to_vec(),
            devices: DeviceName::ALL.to_vec(),
            bitcells: BitcellName::ALL.to_vec(),
            pairs: None,
            sizes: vec![16, 32, 64],
            modes,
            partitions: default_partitions(),
        }
    }
}

impl GridSpec {
    /// The 20 (node, device, bitcell) configurations by 3 sizes of the published reference table.
    pub fn table2_shape(mode: Mode) -> Self {
        Self {
            tech_nm: TechNode::DEFAULT_NODES.to_vec(),
            devices: Vec::new(),
            bitcells: Vec::new(),
            pairs: Some(vec![
                (DeviceName::Mram, BitcellName::OneT1R),
                (DeviceName::Rram, BitcellName::OneT1R),
                (DeviceName::Rram, BitcellName::TwoT1R),
                (DeviceName::Pcm, BitcellName::OneT1R),
                (DeviceName::Pcm, BitcellName::TwoT1R),
            ]),
            sizes: vec![16, 32, 64],
            modes: vec![mode],
            partitions: default_partitions(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DesignError> {
        toml::from_str(text).map_err(|e| DesignError::GridFile {
            path: "<inline>".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DesignError> {
        let text = std::fs::read_to_string(path).map_err(|e| DesignError::GridFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| DesignError::GridFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    fn device_bitcell_pairs(&self) -> Result<Vec<(DeviceName, BitcellName)>, DesignError> {
        match &self.pairs {
            Some(pairs) => {
                if pairs.is_empty() {
                    return Err(DesignError::EmptyAxis { axis: "pairs" });
                }
                Ok(pairs.clone())
            }
            None => {
                if self.devices.is_empty() {
                    return Err(DesignError::EmptyAxis { axis: "devices" });
                }
                if self.bitcells.is_empty() {
                    return Err(DesignError::EmptyAxis { axis: "bitcells" });
                }
                Ok(self
                    .devices
                    .iter()
                    .flat_map(|d| self.bitcells.iter().map(move |b| (*d, *b)))
                    .collect())
            }
        }
    }

    /// Number of points the grid enumerates, without materialising them.
    pub fn cardinality(&self) -> Result<usize, DesignError> {
        Ok(self.tech_nm.len()
            * self.device_bitcell_pairs()?.len()
            * self.sizes.len()
            * self.modes.len()
            * self.partitions.len())
    }
}

/// Cartesian product of the grid axes, sorted by design key.
pub fn enumerate_grid(grid: &GridSpec) -> Result<Vec<DesignPoint>, DesignError> {
    if grid.tech_nm.is_empty() {
        return Err(DesignError::EmptyAxis { axis: "tech_nm" });
    }
    let pairs = grid.device_bitcell_pairs()?;
    if grid.sizes.is_empty() {
        return Err(DesignError::EmptyAxis { axis: "sizes" });
    }
    if grid.modes.is_empty() {
        return Err(DesignError::EmptyAxis { axis: "modes" });
    }
    if grid.partitions.is_empty() {
        return Err(DesignError::EmptyAxis { axis: "partitions" });
    }

    let mut points = Vec::with_capacity(grid.cardinality()?);
    for &tech in &grid.tech_nm {
        for &(device, bitcell) in &pairs {
            for &size in &grid.sizes {
                for &mode in &grid.modes {
                    for &partition in &grid.partitions {
                        let dp = DesignPoint {
                            tech: TechNode(tech),
                            device,
                            bitcell,
                            rows: size,
                            cols: size,
                            mode,
                            partition,
                        };
                        dp.validate()?;
                        points.push((dp.key(), dp));
                    }
                }
            }
        }
    }
    points.sort_by(|a, b| a.0.cmp(&b.0));
    let before = points.len();
    points.dedup_by(|a, b| a.0 == b.0);
    if points.len() != before {
        return Err(DesignError::Invalid("grid axes contain duplicate values".into()));
    }
    Ok(points.into_iter().map(|(_, dp)| dp).collect())
}
