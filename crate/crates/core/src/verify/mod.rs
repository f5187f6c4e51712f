//! Automated netlist validation: static lint, simulation against the ideal
//! MAC, fault injection for self-test, and the bounded repair loop.
//!
//! Diagnostic codes form a fixed catalog; see [`Code`]. Errors block
//! acceptance, warnings do not.

mod fault;
mod lint;
mod repair;
mod simulate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CircuitError;
use crate::config::ResolvedDesign;
use crate::netlist::{GenerateOptions, NetlistError};
use crate::DeviceKind;

pub use fault::{detection_campaign, inject_fault, CampaignRow, FaultKind, FaultSpec};
pub use lint::{static_check, static_check_text};
pub use repair::{
    apply_fixups, verification_loop, Accepted, DesignGenerator, LoopConfig, LoopFailure, NetlistSource, Regenerate,
};
pub use simulate::{default_vectors, deviation_bound, dynamic_check, BoundTier, DynamicBounds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("fault {kind} not applicable: {reason}")]
    Inapplicable { kind: FaultKind, reason: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// The diagnostic catalog.
///
/// | code | severity | meaning |
/// |---|---|---|
/// | `PARSE_ERROR` | error | the SPICE text does not parse |
/// | `DESIGN_INVALID` | error | the design point itself is inconsistent |
/// | `DESIGN_MISMATCH` | warning | the netlist is annotated with another design key |
/// | `DUPLICATE_NAME` | error | two elements share a name (fixable) |
/// | `INVALID_VALUE` | error | non-finite or non-positive value, or malformed terminal list |
/// | `GROUND_DETACHED` | error | the reference rail is not node `0` (fixable) |
/// | `FLOATING_NODE` | error | a group of nodes has no path to ground |
/// | `DANGLING_NODE` | warning | a node touches fewer than two terminals |
/// | `UNEXPECTED_ELEMENT` | error | an element the layout does not contain |
/// | `ELEMENT_COUNT_MISMATCH` | error | a category count differs from the closed form |
/// | `TERMINAL_MISMATCH` | error | an element is wired to the wrong nodes |
/// | `SHORTED_ELEMENT` | error | both terminals of an element are the same node |
/// | `SOURCE_MISBOUND` | error | a row driver feeds the wrong node |
/// | `CONDUCTANCE_OUT_OF_RANGE` | error | memory conductance outside the device window |
/// | `MISSING_POLARITY` | error | one of the two differential arrays is absent |
/// | `COLUMN_UNSENSED` | error | a column has no path into its sense node |
/// | `ROW_UNDRIVEN` | error | a row has no driver |
/// | `SOLVE_FAILED` | error | nodal analysis could not be assembled or solved |
/// | `KCL_RESIDUAL` | error | current balance violated after solving |
/// | `MAC_DEVIATION` | error | column current too far from the ideal MAC |
/// | `MAC_EXCEEDS_IDEAL` | error | column current magnitude above the ideal MAC |
/// | `SIGN_MISMATCH` | error | column current has the opposite sign of the ideal MAC |
/// | `GENERATION_FAILED` | error | the generator produced no netlist |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Code {
    ParseError,
    DesignInvalid,
    DesignMismatch,
    DuplicateName,
    InvalidValue,
    GroundDetached,
    FloatingNode,
    DanglingNode,
    UnexpectedElement,
    ElementCountMismatch,
    TerminalMismatch,
    ShortedElement,
    SourceMisbound,
    ConductanceOutOfRange,
    MissingPolarity,
    ColumnUnsensed,
    RowUndriven,
    SolveFailed,
    KclResidual,
    MacDeviation,
    MacExceedsIdeal,
    SignMismatch,
    GenerationFailed,
}

impl Code {
    pub const ALL: [Code; 23] = [
        Code::ParseError,
        Code::DesignInvalid,
        Code::DesignMismatch,
        Code::DuplicateName,
        Code::InvalidValue,
        Code::GroundDetached,
        Code::FloatingNode,
        Code::DanglingNode,
        Code::UnexpectedElement,
        Code::ElementCountMismatch,
        Code::TerminalMismatch,
        Code::ShortedElement,
        Code::SourceMisbound,
        Code::ConductanceOutOfRange,
        Code::MissingPolarity,
        Code::ColumnUnsensed,
        Code::RowUndriven,
        Code::SolveFailed,
        Code::KclResidual,
        Code::MacDeviation,
        Code::MacExceedsIdeal,
        Code::SignMismatch,
        Code::GenerationFailed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Code::ParseError => "PARSE_ERROR",
            Code::DesignInvalid => "DESIGN_INVALID",
            Code::DesignMismatch => "DESIGN_MISMATCH",
            Code::DuplicateName => "DUPLICATE_NAME",
            Code::InvalidValue => "INVALID_VALUE",
            Code::GroundDetached => "GROUND_DETACHED",
            Code::FloatingNode => "FLOATING_NODE",
            Code::DanglingNode => "DANGLING_NODE",
            Code::UnexpectedElement => "UNEXPECTED_ELEMENT",
            Code::ElementCountMismatch => "ELEMENT_COUNT_MISMATCH",
            Code::TerminalMismatch => "TERMINAL_MISMATCH",
            Code::ShortedElement => "SHORTED_ELEMENT",
            Code::SourceMisbound => "SOURCE_MISBOUND",
            Code::ConductanceOutOfRange => "CONDUCTANCE_OUT_OF_RANGE",
            Code::MissingPolarity => "MISSING_POLARITY",
            Code::ColumnUnsensed => "COLUMN_UNSENSED",
            Code::RowUndriven => "ROW_UNDRIVEN",
            Code::SolveFailed => "SOLVE_FAILED",
            Code::KclResidual => "KCL_RESIDUAL",
            Code::MacDeviation => "MAC_DEVIATION",
            Code::MacExceedsIdeal => "MAC_EXCEEDS_IDEAL",
            Code::SignMismatch => "SIGN_MISMATCH",
            Code::GenerationFailed => "GENERATION_FAILED",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Code::DesignMismatch | Code::DanglingNode => Severity::Warning,
            _ => Severity::Error,
        }
    }

    /// Codes with an unambiguous automatic repair.
    pub fn fixable(self) -> bool {
        matches!(self, Code::DuplicateName | Code::GroundDetached)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Code {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Code::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown diagnostic code `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    /// Element or node the finding refers to.
    pub element: String,
    pub message: String,
    /// 1-based line in the SPICE text, when checked from text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl Diagnostic {
    pub fn new(code: Code, element: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: code.severity(),
            element: element.into(),
            message: message.into(),
            line: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}] {}: {}", self.code, self.element, self.message)?;
        if let Some(l) = self.line {
            write!(f, " (line {l})")?;
        }
        Ok(())
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

/// Electrical parameters a netlist is checked against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSpec {
    pub device: DeviceKind,
    pub wire_r: f64,
    pub access_resistance: f64,
    pub vdd: f64,
}

impl CheckSpec {
    pub fn from_resolved(r: &ResolvedDesign) -> Self {
        Self {
            device: r.device,
            wire_r: r.wire_r,
            access_resistance: r.bitcell.access_resistance,
            vdd: r.vdd,
        }
    }

    pub fn from_options(o: &GenerateOptions) -> Self {
        Self {
            device: o.device,
            wire_r: o.wire_r,
            access_resistance: o.access_resistance,
            vdd: o.vdd,
        }
    }

    /// Generator options for this spec with the given row inputs.
    pub fn options(&self, input: Vec<f64>) -> GenerateOptions {
        GenerateOptions {
            wire_r: self.wire_r,
            vdd: self.vdd,
            input,
            device: self.device,
            access_resistance: self.access_resistance,
            wire_c_ff: 0.0,
            tile_index: None,
        }
    }

    pub fn has_wires(&self) -> bool {
        self.wire_r > 0.0
    }
}
