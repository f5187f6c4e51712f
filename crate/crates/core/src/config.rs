//! Device, bitcell and technology constants, loaded from `devices.toml`.
//!
//! Every value here is an overridable default, not a published figure. A file
//! may specify any subset of the sections; missing sections fall back to the
//! built-in tables below.
//!
//! ```toml
//! vdd = 1.0                 # supply voltage, volts
//!
//! [[device]]
//! name = "PCM"              # MRAM | RRAM | PCM | CBRAM
//! r_on = 20000.0            # low-resistance state, ohms
//! r_off = 10000000.0        # high-resistance state, ohms
//!
//! [[bitcell]]
//! name = "1T1R"             # 1T1R | 2T1R
//! access_resistance = 1000.0  # on-resistance per access transistor, ohms
//! cell_area_factor = 1.0    # cell footprint multiplier
//!
//! [[tech]]
//! nm = 7                    # feature size, nanometres
//! wire_r = 3.0              # interconnect resistance per cell pitch, ohms
//! wire_c_ff = 0.05          # interconnect capacitance per cell pitch, femtofarads (annotation only)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::design_space::GridSpec;
use crate::design_space::{BitcellName, DesignPoint, DeviceName, TechNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config file {path}: {reason}")]
    File { path: String, reason: String },
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },
    #[error("{what} `{name}` is not configured")]
    Missing { what: &'static str, name: String },
}

/// Resistive memory device with its two programmable resistance states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceKind {
    pub name: DeviceName,
    pub r_on: f64,
    pub r_off: f64,
}

impl DeviceKind {
    pub fn g_on(&self) -> f64 {
        1.0 / self.r_on
    }

    pub fn g_off(&self) -> f64 {
        1.0 / self.r_off
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.r_on.is_finite()
            && self.r_off.is_finite()
            && self.r_on > 0.0
            && self.r_off > self.r_on;
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid {
                what: format!("device {}", self.name),
                reason: format!(
                    "need 0 < r_on < r_off, got r_on={} r_off={}",
                    self.r_on, self.r_off
                ),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitcellKind {
    pub name: BitcellName,
    pub access_resistance: f64,
    pub cell_area_factor: f64,
}

impl BitcellKind {
    /// Series on-resistance between the row tap and the memory element.
    /// Two parallel transistors halve the single-transistor value.
    pub fn effective_access_resistance(&self) -> f64 {
        self.access_resistance / self.name.switches_per_cell() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechParams {
    pub nm: u32,
    pub wire_r: f64,
    #[serde(default)]
    pub wire_c_ff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    #[serde(default = "default_vdd")]
    pub vdd: f64,
    #[serde(default = "default_devices", rename = "device")]
    pub devices: Vec<DeviceKind>,
    #[serde(default = "default_bitcells", rename = "bitcell")]
    pub bitcells: Vec<BitcellKind>,
    #[serde(default = "default_techs", rename = "tech")]
    pub techs: Vec<TechParams>,
}

fn default_vdd() -> f64 {
    1.0
}

fn default_devices() -> Vec<DeviceKind> {
    let d = |name, r_on, r_off| DeviceKind { name, r_on, r_off };
    vec![
        d(DeviceName::Mram, 3.0e3, 6.0e3),
        d(DeviceName::Rram, 10.0e3, 1.0e6),
        d(DeviceName::Pcm, 20.0e3, 10.0e6),
        d(DeviceName::Cbram, 1.0e3, 1.0e6),
    ]
}

fn default_bitcells() -> Vec<BitcellKind> {
    vec![
        BitcellKind {
            name: BitcellName::OneT1R,
            access_resistance: 1.0e3,
            cell_area_factor: 1.0,
        },
        BitcellKind {
            name: BitcellName::TwoT1R,
            access_resistance: 1.0e3,
            cell_area_factor: 1.5,
        },
    ]
}

fn default_techs() -> Vec<TechParams> {
    let t = |nm, wire_r, wire_c_ff| TechParams { nm, wire_r, wire_c_ff };
    vec![
        t(7, 3.0, 0.03),
        t(9, 2.0, 0.04),
        t(14, 1.0, 0.06),
        t(20, 0.5, 0.08),
    ]
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            vdd: default_vdd(),
            devices: default_devices(),
            bitcells: default_bitcells(),
            techs: default_techs(),
        }
    }
}

impl DeviceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::File {
            path: "<inline>".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |reason: String| ConfigError::File {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |what: &str, reason: String| ConfigError::Invalid {
            what: what.to_string(),
            reason,
        };
        if !(self.vdd.is_finite() && self.vdd > 0.0) {
            return Err(invalid("vdd", format!("must be positive, got {}", self.vdd)));
        }
        for d in &self.devices {
            d.validate()?;
        }
        for b in &self.bitcells {
            if !(b.access_resistance.is_finite() && b.access_resistance >= 0.0) {
                return Err(invalid(
                    &format!("bitcell {}", b.name),
                    "access_resistance must be finite and >= 0".into(),
                ));
            }
            if !(b.cell_area_factor.is_finite() && b.cell_area_factor > 0.0) {
                return Err(invalid(
                    &format!("bitcell {}", b.name),
                    "cell_area_factor must be positive".into(),
                ));
            }
        }
        if let (Ok(one), Ok(two)) = (
            self.bitcell(BitcellName::OneT1R),
            self.bitcell(BitcellName::TwoT1R),
        ) {
            if two.cell_area_factor <= one.cell_area_factor {
                return Err(invalid(
                    "bitcell",
                    "2T1R cell_area_factor must exceed 1T1R".into(),
                ));
            }
        }
        for t in &self.techs {
            if t.nm == 0 || !(t.wire_r.is_finite() && t.wire_r >= 0.0) || !t.wire_c_ff.is_finite() {
                return Err(invalid(
                    &format!("tech {}nm", t.nm),
                    "need nm > 0 and finite wire_r >= 0".into(),
                ));
            }
        }
        for (what, names) in [
            ("device", self.devices.iter().map(|d| d.name.to_string()).collect::<Vec<_>>()),
            ("bitcell", self.bitcells.iter().map(|b| b.name.to_string()).collect()),
            ("tech", self.techs.iter().map(|t| t.nm.to_string()).collect()),
        ] {
            let mut sorted = names.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != names.len() {
                return Err(invalid(what, "duplicate entry".into()));
            }
        }
        Ok(())
    }

    pub fn device(&self, name: DeviceName) -> Result<&DeviceKind, ConfigError> {
        self.devices
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| ConfigError::Missing {
                what: "device",
                name: name.to_string(),
            })
    }

    pub fn bitcell(&self, name: BitcellName) -> Result<&BitcellKind, ConfigError> {
        self.bitcells
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| ConfigError::Missing {
                what: "bitcell",
                name: name.to_string(),
            })
    }

    pub fn tech(&self, node: TechNode) -> Result<&TechParams, ConfigError> {
        self.techs
            .iter()
            .find(|t| t.nm == node.0)
            .ok_or_else(|| ConfigError::Missing {
                what: "tech node",
                name: node.to_string(),
            })
    }

    /// Copy with zero interconnect resistance and ideal access switches.
    pub fn without_parasitics(&self) -> Self {
        let mut c = self.clone();
        for t in &mut c.techs {
            t.wire_r = 0.0;
        }
        for b in &mut c.bitcells {
            b.access_resistance = 0.0;
        }
        c
    }

    /// Resolved constants for one design point.
    pub fn resolve(&self, dp: &DesignPoint) -> Result<ResolvedDesign, ConfigError> {
        let tech = *self.tech(dp.tech)?;
        Ok(ResolvedDesign {
            device: *self.device(dp.device)?,
            bitcell: *self.bitcell(dp.bitcell)?,
            wire_r: tech.wire_r,
            wire_c_ff: tech.wire_c_ff,
            vdd: self.vdd,
        })
    }

    /// Checks that every design point of `grid` references configured names.
    pub fn check_grid(&self, grid: &GridSpec) -> Result<(), ConfigError> {
        for &nm in &grid.tech_nm {
            self.tech(TechNode(nm))?;
        }
        for d in grid
            .devices
            .iter()
            .chain(grid.pairs.iter().flatten().map(|(d, _)| d))
        {
            self.device(*d)?;
        }
        for b in grid
            .bitcells
            .iter()
            .chain(grid.pairs.iter().flatten().map(|(_, b)| b))
        {
            self.bitcell(*b)?;
        }
        Ok(())
    }
}

/// Constants needed to build circuits for one design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedDesign {
    pub device: DeviceKind,
    pub bitcell: BitcellKind,
    pub wire_r: f64,
    pub wire_c_ff: f64,
    pub vdd: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = DeviceConfig::default();
        cfg.validate().unwrap();
        cfg.check_grid(&GridSpec::default()).unwrap();
        let wire: Vec<f64> = cfg.techs.iter().map(|t| t.wire_r).collect();
        assert!(wire.windows(2).all(|w| w[0] > w[1]), "wire_r grows as nodes shrink");
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg = DeviceConfig::from_toml_str(
            r#"
vdd = 0.8
[[device]]
name = "PCM"
r_on = 1000.0
r_off = 2000.0
"#,
        )
        .unwrap();
        assert_eq!(cfg.vdd, 0.8);
        assert_eq!(cfg.devices.len(), 1);
        assert_eq!(cfg.bitcells, default_bitcells());
        assert!(cfg.device(DeviceName::Mram).is_err());
    }

    #[test]
    fn rejects_inverted_device() {
        let err = DeviceConfig::from_toml_str(
            "[[device]]\nname = \"RRAM\"\nr_on = 5.0\nr_off = 5.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }));
    }

    #[test]
    fn two_transistor_cell_halves_access_resistance() {
        let cfg = DeviceConfig::default();
        let one = cfg.bitcell(BitcellName::OneT1R).unwrap();
        let two = cfg.bitcell(BitcellName::TwoT1R).unwrap();
        assert_eq!(two.effective_access_resistance() * 2.0, one.effective_access_resistance());
    }
}
