//! Element-level netlists for differential crossbar pairs.
//!
//! A generated netlist holds two arrays, one per weight polarity. Node `0` is
//! the reference rail held at `V_ref = V_DD/2`; row sources and column sense
//! terminations are both tied to it, so a column current into `0` is the
//! current seen by an ideal transimpedance sense amplifier.
//!
//! Node names, per polarity prefix `x` in {`p`, `n`}:
//!
//! * `x_r{i}_c{j}`: junction between the access switch and the memory element.
//! * `x_row{i}_s{k}`: row wire tap in front of cell `(i, k)`.
//! * `x_col{j}_h{m}`: column `j` collection node of horizontal partition `m`.
//! * `x_wl{i}`: word-line control of the row-`i` access switches.
//!
//! Element names, per polarity suffix `X` in {`P`, `N`}:
//!
//! * `RM{X}_{i}_{j}`: memory resistor.
//! * `RA{X}_{i}_{j}`, `RB{X}_{i}_{j}`: access switches (the second only for 2T1R).
//! * `RW{X}_{i}_{k}`: row wire segment ending at tap `k`.
//! * `RC{X}_{j}_{m}`: column wire lead to the sense node.
//! * `V{X}_{i}_{q}`: row driver feeding vertical partition `q`.

mod generate;
mod spice;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use generate::{element_count, generate_crossbar_netlist, ElementCount, GenerateOptions};
pub use spice::{emit_spice, parse_spice, ParseError};

pub const GROUND: &str = "0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("conductance {value:e} S at ({i},{j}) of the {polarity} array outside [{min:e}, {max:e}]")]
    OutOfRange {
        i: usize,
        j: usize,
        polarity: Polarity,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid option: {0}")]
    Option(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Pos, Polarity::Neg];

    /// Lowercase node prefix.
    pub fn node_prefix(self) -> &'static str {
        match self {
            Polarity::Pos => "p",
            Polarity::Neg => "n",
        }
    }

    /// Uppercase element-name tag.
    pub fn tag(self) -> &'static str {
        match self {
            Polarity::Pos => "P",
            Polarity::Neg => "N",
        }
    }

    pub fn from_tag(c: char) -> Option<Self> {
        match c {
            'P' => Some(Polarity::Pos),
            'N' => Some(Polarity::Neg),
            _ => None,
        }
    }
}

impl std::fmt::Display for Polarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Polarity::Pos => "positive",
            Polarity::Neg => "negative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Resistor,
    VSource,
    Switch,
}

/// One circuit element. Resistors and sources have two nodes; switches have
/// three: control, in, out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub name: String,
    pub nodes: Vec<String>,
    pub value: f64,
}

impl Element {
    pub fn resistor(name: impl Into<String>, a: impl Into<String>, b: impl Into<String>, ohms: f64) -> Self {
        Self {
            kind: ElementKind::Resistor,
            name: name.into(),
            nodes: vec![a.into(), b.into()],
            value: ohms,
        }
    }

    pub fn vsource(name: impl Into<String>, plus: impl Into<String>, minus: impl Into<String>, volts: f64) -> Self {
        Self {
            kind: ElementKind::VSource,
            name: name.into(),
            nodes: vec![plus.into(), minus.into()],
            value: volts,
        }
    }

    pub fn switch(
        name: impl Into<String>,
        control: impl Into<String>,
        a: impl Into<String>,
        b: impl Into<String>,
        on_ohms: f64,
    ) -> Self {
        Self {
            kind: ElementKind::Switch,
            name: name.into(),
            nodes: vec![control.into(), a.into(), b.into()],
            value: on_ohms,
        }
    }

    /// The two terminals that carry current.
    pub fn terminals(&self) -> (&str, &str) {
        match self.kind {
            ElementKind::Switch => (&self.nodes[1], &self.nodes[2]),
            _ => (&self.nodes[0], &self.nodes[1]),
        }
    }

    pub fn control(&self) -> Option<&str> {
        match self.kind {
            ElementKind::Switch => Some(&self.nodes[0]),
            _ => None,
        }
    }

    /// Conductance of a resistive element; `None` for sources and zero-ohm switches.
    pub fn conductance(&self) -> Option<f64> {
        match self.kind {
            ElementKind::VSource => None,
            _ if self.value > 0.0 => Some(1.0 / self.value),
            _ => None,
        }
    }
}

/// Role of an element in a generated crossbar, decoded from its name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Memory { polarity: Polarity, i: usize, j: usize },
    Access { polarity: Polarity, i: usize, j: usize, second: bool },
    RowWire { polarity: Polarity, i: usize, k: usize },
    ColumnLead { polarity: Polarity, j: usize, m: usize },
    Source { polarity: Polarity, i: usize, q: usize },
}

impl Role {
    pub fn polarity(self) -> Polarity {
        match self {
            Role::Memory { polarity, .. }
            | Role::Access { polarity, .. }
            | Role::RowWire { polarity, .. }
            | Role::ColumnLead { polarity, .. }
            | Role::Source { polarity, .. } => polarity,
        }
    }

    pub fn parse(name: &str) -> Option<Role> {
        let (head, rest) = name.split_once('_')?;
        let idx: Vec<usize> = rest.split('_').map(|t| t.parse().ok()).collect::<Option<_>>()?;
        let [a, b] = idx.as_slice() else {
            return None;
        };
        let (a, b) = (*a, *b);
        let mut chars = head.chars();
        let first = chars.next()?;
        let tail: String = chars.collect();
        let (kind, pol) = match (first, tail.len()) {
            ('R', 2) => (tail.chars().next()?, tail.chars().nth(1)?),
            ('V', 1) => ('V', tail.chars().next()?),
            _ => return None,
        };
        let polarity = Polarity::from_tag(pol)?;
        Some(match kind {
            'M' => Role::Memory { polarity, i: a, j: b },
            'A' => Role::Access { polarity, i: a, j: b, second: false },
            'B' => Role::Access { polarity, i: a, j: b, second: true },
            'W' => Role::RowWire { polarity, i: a, k: b },
            'C' => Role::ColumnLead { polarity, j: a, m: b },
            'V' => Role::Source { polarity, i: a, q: b },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Netlist {
    pub title: String,
    pub elements: Vec<Element>,
    pub annotations: BTreeMap<String, String>,
}

impl Netlist {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn ground_node(&self) -> &'static str {
        GROUND
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn element_index(&self) -> HashMap<&str, usize> {
        self.elements
            .iter()
            .enumerate()
            .map(|(k, e)| (e.name.as_str(), k))
            .collect()
    }

    /// Current-carrying nodes, ground included, in sorted order.
    pub fn nodes(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for e in &self.elements {
            let (a, b) = e.terminals();
            out.insert(a);
            out.insert(b);
        }
        out
    }

    pub fn annotation(&self, key: &str) -> Option<&str> {
        self.annotations.get(key).map(String::as_str)
    }

    /// Equality up to element order: same title, annotations and name-keyed elements.
    pub fn same_structure(&self, other: &Netlist) -> bool {
        if self.title != other.title
            || self.annotations != other.annotations
            || self.elements.len() != other.elements.len()
        {
            return false;
        }
        let theirs: HashMap<&str, &Element> =
            other.elements.iter().map(|e| (e.name.as_str(), e)).collect();
        self.elements
            .iter()
            .all(|e| theirs.get(e.name.as_str()).is_some_and(|o| *o == e))
    }
}

/// Conductances of the positive and negative arrays, in siemens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceTile {
    pub g_pos: Matrix,
    pub g_neg: Matrix,
}

impl ConductanceTile {
    pub fn new(g_pos: Matrix, g_neg: Matrix) -> Result<Self, NetlistError> {
        if g_pos.shape() != g_neg.shape() {
            return Err(NetlistError::Shape(format!(
                "g_pos is {:?} but g_neg is {:?}",
                g_pos.shape(),
                g_neg.shape()
            )));
        }
        Ok(Self { g_pos, g_neg })
    }

    pub fn uniform(rows: usize, cols: usize, g: f64) -> Self {
        Self {
            g_pos: Matrix::filled(rows, cols, g),
            g_neg: Matrix::filled(rows, cols, g),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.g_pos.shape()
    }

    pub fn rows(&self) -> usize {
        self.g_pos.rows()
    }

    pub fn cols(&self) -> usize {
        self.g_pos.cols()
    }

    pub fn get(&self, polarity: Polarity) -> &Matrix {
        match polarity {
            Polarity::Pos => &self.g_pos,
            Polarity::Neg => &self.g_neg,
        }
    }

    /// Cells in series with an access resistance, as seen from the row tap.
    pub fn with_series_resistance(&self, r: f64) -> Self {
        let series = |m: &Matrix| {
            Matrix::from_fn(m.rows(), m.cols(), |i, j| {
                let g = m.get(i, j);
                if g > 0.0 {
                    1.0 / (1.0 / g + r)
                } else {
                    0.0
                }
            })
        };
        Self {
            g_pos: series(&self.g_pos),
            g_neg: series(&self.g_neg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_names_round_trip() {
        assert_eq!(
            Role::parse("RMP_3_4"),
            Some(Role::Memory { polarity: Polarity::Pos, i: 3, j: 4 })
        );
        assert_eq!(
            Role::parse("RBN_0_1"),
            Some(Role::Access { polarity: Polarity::Neg, i: 0, j: 1, second: true })
        );
        assert_eq!(
            Role::parse("VP_7_0"),
            Some(Role::Source { polarity: Polarity::Pos, i: 7, q: 0 })
        );
        assert_eq!(Role::parse("R1"), None);
        assert_eq!(Role::parse("RXP_1_1"), None);
        assert_eq!(Role::parse("RMP_1_1_1"), None);
    }

    #[test]
    fn switch_terminals_skip_control() {
        let s = Element::switch("RAP_0_0", "p_wl0", "a", "b", 10.0);
        assert_eq!(s.terminals(), ("a", "b"));
        assert_eq!(s.control(), Some("p_wl0"));
    }
}
