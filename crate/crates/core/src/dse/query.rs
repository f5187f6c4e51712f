//! Constraint queries and their line-oriented DSL.
//!
//! ```text
//! # hard constraints
//! power <= 3W
//! accuracy >= 96%
//! area <= 5000um2; tech <= 14nm
//! device in {PCM, MRAM}
//! size = 64
//! # soft objectives and ordering
//! minimize power weight=2
//! maximize accuracy
//! tiebreak area, power
//! include infeasible
//! ```
//!
//! Statements are separated by newlines or `;`. Metric names and keywords are
//! case-insensitive. Units are optional: `W`/`mW` for power, `um2`/`µm2`/`mm2`
//! for area, `%` for accuracy, `nm` for tech. `size` is the crossbar side
//! length (`64` or `64x64`). Weights default to 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::DseError;
use crate::design_space::{BitcellName, DeviceName};
use crate::paa::EvalResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Power,
    Area,
    Accuracy,
    Tech,
    Device,
    Bitcell,
    Size,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Power,
        Metric::Area,
        Metric::Accuracy,
        Metric::Tech,
        Metric::Device,
        Metric::Bitcell,
        Metric::Size,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Power => "power",
            Metric::Area => "area",
            Metric::Accuracy => "accuracy",
            Metric::Tech => "tech",
            Metric::Device => "device",
            Metric::Bitcell => "bitcell",
            Metric::Size => "size",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Some(match s.to_ascii_lowercase().as_str() {
            "power" | "avg_power_w" | "avg_power" => Metric::Power,
            "area" | "area_um2" => Metric::Area,
            "accuracy" | "acc" | "accuracy_pct" => Metric::Accuracy,
            "tech" | "node" | "tech_nm" => Metric::Tech,
            "device" => Metric::Device,
            "bitcell" | "cell" => Metric::Bitcell,
            "size" => Metric::Size,
            _ => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, Metric::Device | Metric::Bitcell)
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::Power => "W",
            Metric::Area => "um2",
            Metric::Accuracy => "%",
            Metric::Tech => "nm",
            _ => "",
        }
    }

    /// Preferred direction when used as a tie-breaker without a soft objective.
    pub fn natural_direction(self) -> Direction {
        match self {
            Metric::Accuracy => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }

    /// Numeric value of the metric for an entry; `None` for categorical metrics.
    pub fn value(self, e: &EvalResult) -> Option<f64> {
        match self {
            Metric::Power => Some(e.avg_power_w),
            Metric::Area => Some(e.area_um2),
            Metric::Accuracy => Some(e.accuracy_pct),
            Metric::Tech => Some(f64::from(e.design.tech.nm())),
            Metric::Size => Some(((e.design.rows * e.design.cols) as f64).sqrt()),
            Metric::Device | Metric::Bitcell => None,
        }
    }

    /// Categorical label of the metric for an entry.
    pub fn label(self, e: &EvalResult) -> Option<&'static str> {
        match self {
            Metric::Device => Some(e.design.device.as_str()),
            Metric::Bitcell => Some(e.design.bitcell.as_str()),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "in")]
    In,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
            Comparator::In => "in",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Name(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(v) => write!(f, "{v}"),
            Scalar::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    One(Scalar),
    Set(Vec<Scalar>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardConstraint {
    pub metric: Metric,
    pub op: Comparator,
    pub value: Bound,
}

/// Relative slack for numeric equality and bound checks.
const EQ_TOL: f64 = 1e-9;

impl HardConstraint {
    pub fn numeric(metric: Metric, op: Comparator, v: f64) -> Self {
        Self {
            metric,
            op,
            value: Bound::One(Scalar::Number(v)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let scalar_ok = |s: &Scalar| -> Result<(), String> {
            match (self.metric, s) {
                (m, Scalar::Number(v)) if m.is_numeric() => {
                    if v.is_finite() {
                        Ok(())
                    } else {
                        Err(format!("{m} bound {v} is not finite"))
                    }
                }
                (Metric::Device, Scalar::Name(n)) => n
                    .parse::<DeviceName>()
                    .map(|_| ())
                    .map_err(|_| format!("unknown device `{n}`")),
                (Metric::Bitcell, Scalar::Name(n)) => n
                    .parse::<BitcellName>()
                    .map(|_| ())
                    .map_err(|_| format!("unknown bitcell `{n}`")),
                (m, s) => Err(format!("{m} cannot be compared with `{s}`")),
            }
        };
        match (self.op, &self.value) {
            (Comparator::Le | Comparator::Ge, _) if !self.metric.is_numeric() => {
                Err(format!("{} is categorical; use = or in", self.metric))
            }
            (Comparator::Le | Comparator::Ge | Comparator::Eq, Bound::One(s)) => scalar_ok(s),
            (Comparator::In, Bound::Set(items)) if !items.is_empty() => items.iter().try_for_each(scalar_ok),
            (Comparator::In, _) => Err(format!("{} in needs a non-empty set", self.metric)),
            (op, Bound::Set(_)) => Err(format!("{} {} needs a single value", self.metric, op.as_str())),
        }
    }

    fn matches_scalar(&self, e: &EvalResult, s: &Scalar) -> bool {
        match s {
            Scalar::Number(b) => self
                .metric
                .value(e)
                .is_some_and(|v| (v - b).abs() <= EQ_TOL * b.abs().max(1.0)),
            Scalar::Name(n) => match self.metric {
                Metric::Device => n.parse::<DeviceName>().is_ok_and(|d| d == e.design.device),
                Metric::Bitcell => n.parse::<BitcellName>().is_ok_and(|b| b == e.design.bitcell),
                _ => false,
            },
        }
    }

    pub fn holds(&self, e: &EvalResult) -> bool {
        match (self.op, &self.value) {
            (Comparator::Le, Bound::One(Scalar::Number(b))) => self.metric.value(e).is_some_and(|v| v <= *b),
            (Comparator::Ge, Bound::One(Scalar::Number(b))) => self.metric.value(e).is_some_and(|v| v >= *b),
            (Comparator::Eq, Bound::One(s)) => self.matches_scalar(e, s),
            (Comparator::In, Bound::Set(items)) => items.iter().any(|s| self.matches_scalar(e, s)),
            _ => false,
        }
    }

    /// Amount by which `e` misses the constraint, in the metric's unit; 0 when
    /// satisfied. Categorical and equality misses count as 1.
    pub fn violation(&self, e: &EvalResult) -> f64 {
        if self.holds(e) {
            return 0.0;
        }
        match (self.op, &self.value, self.metric.value(e)) {
            (Comparator::Le, Bound::One(Scalar::Number(b)), Some(v)) => v - b,
            (Comparator::Ge, Bound::One(Scalar::Number(b)), Some(v)) => b - v,
            _ => 1.0,
        }
    }

    /// Violation scaled by the bound magnitude.
    pub fn relative_violation(&self, e: &EvalResult) -> f64 {
        let v = self.violation(e);
        match &self.value {
            Bound::One(Scalar::Number(b)) if matches!(self.op, Comparator::Le | Comparator::Ge) && *b != 0.0 => {
                v / b.abs()
            }
            _ => v,
        }
    }
}

impl fmt::Display for HardConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Bound::One(s) => write!(f, "{} {} {}{}", self.metric, self.op.as_str(), s, match s {
                Scalar::Number(_) => self.metric.unit(),
                Scalar::Name(_) => "",
            }),
            Bound::Set(items) => {
                let parts: Vec<String> = items.iter().map(|s| s.to_string()).collect();
                write!(f, "{} in {{{}}}", self.metric, parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftObjective {
    pub metric: Metric,
    pub direction: Direction,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Hard bounds, weighted soft objectives and tie-break order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintQuery {
    #[serde(default)]
    pub hard: Vec<HardConstraint>,
    #[serde(default)]
    pub soft: Vec<SoftObjective>,
    #[serde(default)]
    pub tie_break: Vec<Metric>,
    /// Rank every entry, infeasible ones after the feasible ones.
    #[serde(default)]
    pub include_infeasible: bool,
}

impl ConstraintQuery {
    pub fn validate(&self) -> Result<(), DseError> {
        let err = |m: String| Err(DseError::Query { line: None, message: m });
        for h in &self.hard {
            if let Err(m) = h.validate() {
                return err(m);
            }
        }
        for s in &self.soft {
            if !s.metric.is_numeric() {
                return err(format!("cannot optimize categorical metric {}", s.metric));
            }
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return err(format!("weight {} for {} must be finite and non-negative", s.weight, s.metric));
            }
        }
        if self.soft.is_empty() && self.tie_break.is_empty() {
            return err("query needs at least one objective or a tiebreak".into());
        }
        if self.tie_break.is_empty() && self.soft.iter().all(|s| s.weight == 0.0) {
            return err("all objective weights are zero and no tiebreak is given".into());
        }
        Ok(())
    }

    /// Direction used when ordering by `m` as a tie-breaker.
    pub fn direction_of(&self, m: Metric) -> Direction {
        self.soft
            .iter()
            .find(|s| s.metric == m)
            .map_or(m.natural_direction(), |s| s.direction)
    }

    /// Canonical DSL text; parses back to an equal query.
    pub fn to_dsl(&self) -> String {
        let mut lines: Vec<String> = self.hard.iter().map(|h| h.to_string()).collect();
        for s in &self.soft {
            let verb = match s.direction {
                Direction::Minimize => "minimize",
                Direction::Maximize => "maximize",
            };
            lines.push(format!("{verb} {} weight={}", s.metric, s.weight));
        }
        if !self.tie_break.is_empty() {
            let names: Vec<&str> = self.tie_break.iter().map(|m| m.as_str()).collect();
            lines.push(format!("tiebreak {}", names.join(", ")));
        }
        if self.include_infeasible {
            lines.push("include infeasible".into());
        }
        lines.join("\n")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("query serializes")
    }

    /// Parses and validates the JSON form.
    pub fn from_json(text: &str) -> Result<Self, DseError> {
        let q: ConstraintQuery = serde_json::from_str(text).map_err(|e| DseError::Query {
            line: None,
            message: format!("invalid query JSON: {e}"),
        })?;
        q.validate()?;
        Ok(q)
    }
}

/// JSON schema of [`ConstraintQuery`], as embedded in prompts.
pub fn query_json_schema() -> serde_json::Value {
    let metrics: Vec<&str> = Metric::ALL.iter().map(|m| m.as_str()).collect();
    let numeric: Vec<&str> = Metric::ALL.iter().filter(|m| m.is_numeric()).map(|m| m.as_str()).collect();
    serde_json::json!({
        "type": "object",
        "additionalProperties": false,
        "properties": {
            "hard": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["metric", "op", "value"],
                    "properties": {
                        "metric": {"enum": metrics},
                        "op": {"enum": ["<=", ">=", "=", "in"]},
                        "value": {
                            "oneOf": [
                                {"type": "number"},
                                {"type": "string"},
                                {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 1}
                            ]
                        }
                    }
                }
            },
            "soft": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["metric", "direction"],
                    "properties": {
                        "metric": {"enum": numeric},
                        "direction": {"enum": ["minimize", "maximize"]},
                        "weight": {"type": "number", "minimum": 0}
                    }
                }
            },
            "tie_break": {"type": "array", "items": {"enum": metrics}},
            "include_infeasible": {"type": "boolean"}
        }
    })
}

/// Parses the DSL into a validated query.
pub fn parse_dsl(text: &str) -> Result<ConstraintQuery, DseError> {
    let mut q = ConstraintQuery::default();
    for (ln, raw_line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let code = raw_line.split('#').next().unwrap_or("");
        for stmt in code.split(';') {
            let stmt = stmt.trim();
            if stmt.is_empty() {
                continue;
            }
            parse_statement(stmt, &mut q).map_err(|message| DseError::Query {
                line: Some(line_no),
                message,
            })?;
        }
    }
    q.validate()?;
    Ok(q)
}

fn parse_statement(stmt: &str, q: &mut ConstraintQuery) -> Result<(), String> {
    let lower = stmt.to_ascii_lowercase();
    let first = lower.split_whitespace().next().unwrap_or("");
    match first {
        "minimize" | "maximize" | "min" | "max" => {
            let direction = if first.starts_with("min") {
                Direction::Minimize
            } else {
                Direction::Maximize
            };
            let mut words = stmt.split_whitespace().skip(1);
            let name = words.next().ok_or_else(|| format!("`{first}` needs a metric"))?;
            let metric = Metric::parse(name).ok_or_else(|| format!("unknown metric `{name}`"))?;
            let mut weight = 1.0;
            let rest: Vec<&str> = words.collect();
            let rest = rest.join("");
            if !rest.is_empty() {
                let w = rest
                    .to_ascii_lowercase()
                    .strip_prefix("weight=")
                    .map(str::to_string)
                    .ok_or_else(|| format!("expected `weight=<number>`, found `{rest}`"))?;
                weight = w.parse().map_err(|_| format!("bad weight `{w}`"))?;
            }
            q.soft.push(SoftObjective {
                metric,
                direction,
                weight,
            });
            Ok(())
        }
        "tiebreak" | "tie_break" | "tie-break" => {
            let rest = stmt[first.len()..].trim();
            for name in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                q.tie_break
                    .push(Metric::parse(name).ok_or_else(|| format!("unknown metric `{name}`"))?);
            }
            if q.tie_break.is_empty() {
                return Err("tiebreak needs at least one metric".into());
            }
            Ok(())
        }
        "include" => {
            if lower.split_whitespace().nth(1) == Some("infeasible") {
                q.include_infeasible = true;
                Ok(())
            } else {
                Err(format!("unknown statement `{stmt}`"))
            }
        }
        _ => {
            q.hard.push(parse_constraint(stmt)?);
            Ok(())
        }
    }
}

fn parse_constraint(stmt: &str) -> Result<HardConstraint, String> {
    let name_end = stmt
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(stmt.len());
    let name = &stmt[..name_end];
    if name.is_empty() {
        return Err(format!("expected a metric at `{stmt}`"));
    }
    let metric = Metric::parse(name).ok_or_else(|| format!("unknown metric `{name}`"))?;
    let rest = stmt[name_end..].trim_start();
    let lower = rest.to_ascii_lowercase();
    let (op, value) = if let Some(v) = rest.strip_prefix("<=").or_else(|| rest.strip_prefix('≤')) {
        (Comparator::Le, v)
    } else if let Some(v) = rest.strip_prefix(">=").or_else(|| rest.strip_prefix('≥')) {
        (Comparator::Ge, v)
    } else if let Some(v) = rest.strip_prefix("==").or_else(|| rest.strip_prefix('=')) {
        (Comparator::Eq, v)
    } else if lower.starts_with("in ") || lower.starts_with("in{") || rest.starts_with('∈') {
        let v = if rest.starts_with('∈') { &rest['∈'.len_utf8()..] } else { &rest[2..] };
        (Comparator::In, v)
    } else if rest.starts_with('<') || rest.starts_with('>') {
        return Err(format!("strict comparison in `{stmt}` is not supported; use <= or >="));
    } else {
        return Err(format!("expected <=, >=, = or in after `{name}`"));
    };
    let value = value.trim();
    let bound = if op == Comparator::In {
        let inner = value
            .strip_prefix('{')
            .and_then(|v| v.strip_suffix('}'))
            .ok_or_else(|| format!("set must be written as {{a, b}}, found `{value}`"))?;
        Bound::Set(
            inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_scalar(metric, s))
                .collect::<Result<_, _>>()?,
        )
    } else {
        Bound::One(parse_scalar(metric, value)?)
    };
    let h = HardConstraint {
        metric,
        op,
        value: bound,
    };
    h.validate()?;
    Ok(h)
}

fn parse_scalar(metric: Metric, s: &str) -> Result<Scalar, String> {
    if !metric.is_numeric() {
        return Ok(Scalar::Name(s.to_string()));
    }
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(s.len());
    // Keep an exponent marker only when digits follow it.
    let (mut num, mut unit) = (&s[..split], s[split..].trim());
    if num.ends_with(['e', 'E']) {
        num = &num[..num.len() - 1];
        unit = s[num.len()..].trim();
    }
    let v: f64 = num.parse().map_err(|_| format!("bad number `{s}`"))?;
    let unit_l = unit.to_ascii_lowercase();
    let factor = match (metric, unit_l.as_str()) {
        (_, "") => 1.0,
        (Metric::Power, "w") => 1.0,
        (Metric::Power, "mw") => 1e-3,
        (Metric::Power, "uw" | "µw") => 1e-6,
        (Metric::Area, "um2" | "µm2" | "um^2" | "µm²") => 1.0,
        (Metric::Area, "mm2" | "mm^2" | "mm²") => 1e6,
        (Metric::Accuracy, "%") => 1.0,
        (Metric::Tech, "nm") => 1.0,
        (Metric::Size, _) if unit_l.starts_with('x') => {
            let other: f64 = unit_l[1..].parse().map_err(|_| format!("bad size `{s}`"))?;
            if other != v {
                return Err(format!("size `{s}` must be square"));
            }
            1.0
        }
        _ => return Err(format!("unit `{unit}` does not apply to {metric}")),
    };
    Ok(Scalar::Number(v * factor))
}
