//! Design-space exploration for analog in-memory-computing crossbar accelerators.
//!
//! The crate is organised along the pipeline it implements:
//!
//! * [`design_space`] enumerates crossbar configurations and names them.
//! * [`netlist`] generates and parses SPICE netlists for differential crossbar pairs.
//! * [`circuit`] evaluates those netlists: closed-form MAC, nodal analysis, power.
//! * [`paa`] turns a design point into a power/area/accuracy triple.
//! * [`dse`] stores results and answers weighted constraint queries over them.
//! * [`verify`] lints and simulates netlists, injects faults and drives the repair loop.
//!
//! Device constants and grid axes live in [`config`].

pub mod circuit;
pub mod config;
pub mod design_space;
pub mod dse;
pub mod matrix;
pub mod netlist;
pub mod paa;
pub mod verify;

pub use config::{BitcellKind, DeviceConfig, DeviceKind, ResolvedDesign, TechParams};
pub use design_space::{
    BitcellName, DesignPoint, DeviceName, GridSpec, Mode, Partition, TechNode,
};
pub use matrix::Matrix;
