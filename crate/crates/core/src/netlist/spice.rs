//! SPICE dialect subset.
//!
//! ```text
//! *@title <text>                      netlist title
//! *@annotation <key> <value...>       one annotation per line
//! *switch <control> <name>...         marks R cards as access switches of one word line
//! * anything else                     comment
//! R<name> <n1> <n2> <ohms>            resistor (switch cards may be 0 ohms)
//! V<name> <n+> <n-> [DC] <volts>      DC voltage source
//! .END
//! ```
//!
//! Values accept the suffixes T, G, MEG, K, M, U, N, P, F (case-insensitive),
//! optionally followed by a unit name. Node `0` is the reference rail.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Element, ElementKind, Netlist};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} [line {line}, column {column}, token `{token}`]")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub token: String,
    pub message: String,
}

/// Serializes a netlist. Switches are written as resistor cards plus one
/// `*switch` header line per control node.
pub fn emit_spice(n: &Netlist) -> String {
    let mut out = String::new();
    writeln!(out, "*@title {}", n.title).unwrap();
    for (k, v) in &n.annotations {
        writeln!(out, "*@annotation {k} {v}").unwrap();
    }

    let mut controls: Vec<(&str, Vec<&str>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for e in &n.elements {
        if let Some(ctrl) = e.control() {
            let k = *slot.entry(ctrl).or_insert_with(|| {
                controls.push((ctrl, Vec::new()));
                controls.len() - 1
            });
            controls[k].1.push(&e.name);
        }
    }
    for (ctrl, names) in &controls {
        writeln!(out, "*switch {ctrl} {}", names.join(" ")).unwrap();
    }

    for e in &n.elements {
        let (a, b) = e.terminals();
        match e.kind {
            ElementKind::VSource => writeln!(out, "{} {a} {b} DC {}", e.name, e.value),
            _ => writeln!(out, "{} {a} {b} {}", e.name, e.value),
        }
        .unwrap();
    }
    out.push_str(".END\n");
    out
}

struct Card {
    line: usize,
    value_column: usize,
    value_token: String,
}

pub fn parse_spice(text: &str) -> Result<Netlist, ParseError> {
    let mut n = Netlist::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut cards: Vec<Card> = Vec::new();
    let mut switch_lines: Vec<(usize, String, Vec<(usize, String)>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('*') {
            if let Some(title) = rest.strip_prefix("@title") {
                n.title = title.trim().to_string();
            } else if let Some(ann) = rest.strip_prefix("@annotation") {
                let ann = ann.trim();
                let (k, v) = ann.split_once(char::is_whitespace).unwrap_or((ann, ""));
                if k.is_empty() {
                    return Err(err(line_no, raw, line, "annotation without a key"));
                }
                n.annotations.insert(k.to_string(), v.trim().to_string());
            } else if let Some(sw) = rest.strip_prefix("switch") {
                let toks = tokens(raw);
                if toks.len() < 3 || !sw.starts_with(char::is_whitespace) {
                    return Err(err(line_no, raw, line, "switch annotation needs a control node and at least one element"));
                }
                let names = toks[2..].iter().map(|(c, t)| (*c, t.to_string())).collect();
                switch_lines.push((line_no, toks[1].1.to_string(), names));
            }
            continue;
        }
        if line.eq_ignore_ascii_case(".end") {
            break;
        }

        let toks = tokens(raw);
        let (_, name) = toks[0];
        let first = name.chars().next().unwrap().to_ascii_uppercase();
        let (kind, value_idx) = match first {
            'R' => {
                if toks.len() != 4 {
                    let (c, t) = toks.get(4).copied().unwrap_or(toks[toks.len() - 1]);
                    return Err(ParseError {
                        line: line_no,
                        column: c,
                        token: t.to_string(),
                        message: format!("resistor card needs 4 fields, found {}", toks.len()),
                    });
                }
                (ElementKind::Resistor, 3)
            }
            'V' => match toks.len() {
                4 => (ElementKind::VSource, 3),
                5 if toks[3].1.eq_ignore_ascii_case("dc") => (ElementKind::VSource, 4),
                _ => {
                    let (c, t) = toks[toks.len().min(4) - 1];
                    return Err(ParseError {
                        line: line_no,
                        column: c,
                        token: t.to_string(),
                        message: "source card must be `V<name> n+ n- [DC] value`".into(),
                    });
                }
            },
            _ => {
                return Err(ParseError {
                    line: line_no,
                    column: toks[0].0,
                    token: name.to_string(),
                    message: format!("unsupported element kind at line {line_no}"),
                })
            }
        };
        let (vcol, vtok) = toks[value_idx];
        let value = parse_value(vtok).ok_or_else(|| ParseError {
            line: line_no,
            column: vcol,
            token: vtok.to_string(),
            message: "malformed numeric value".into(),
        })?;
        if let Some(prev) = seen.insert(name.to_string(), line_no) {
            return Err(ParseError {
                line: line_no,
                column: toks[0].0,
                token: name.to_string(),
                message: format!("duplicate element name `{name}` at lines {prev} and {line_no}"),
            });
        }
        n.elements.push(Element {
            kind,
            name: name.to_string(),
            nodes: vec![toks[1].1.to_string(), toks[2].1.to_string()],
            value,
        });
        cards.push(Card {
            line: line_no,
            value_column: vcol,
            value_token: vtok.to_string(),
        });
    }

    let index: HashMap<String, usize> = n
        .elements
        .iter()
        .enumerate()
        .map(|(k, e)| (e.name.clone(), k))
        .collect();
    for (line_no, ctrl, names) in switch_lines {
        for (col, name) in names {
            let k = *index.get(&name).ok_or_else(|| ParseError {
                line: line_no,
                column: col,
                token: name.clone(),
                message: "switch annotation names an unknown element".into(),
            })?;
            let e = &mut n.elements[k];
            if e.kind != ElementKind::Resistor {
                return Err(ParseError {
                    line: line_no,
                    column: col,
                    token: name,
                    message: "switch annotation names a non-resistor card or repeats an element".into(),
                });
            }
            e.kind = ElementKind::Switch;
            e.nodes.insert(0, ctrl.clone());
        }
    }

    for (e, card) in n.elements.iter().zip(&cards) {
        let bad = match e.kind {
            ElementKind::Resistor if !(e.value > 0.0) => Some("non-positive resistance"),
            ElementKind::Switch if !(e.value >= 0.0) => Some("negative switch resistance"),
            _ => None,
        };
        if let Some(message) = bad {
            return Err(ParseError {
                line: card.line,
                column: card.value_column,
                token: card.value_token.clone(),
                message: message.into(),
            });
        }
    }
    Ok(n)
}

fn err(line: usize, raw: &str, token: &str, message: &str) -> ParseError {
    let column = raw.find(token).map_or(1, |c| c + 1);
    ParseError {
        line,
        column,
        token: token.to_string(),
        message: message.to_string(),
    }
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(raw: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, c) in raw.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &raw[s..k]));
                start = None;
            }
            (false, None) => start = Some(k),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &raw[s..]));
    }
    out
}

/// Parses a SPICE number with an optional scale suffix and trailing unit letters.
pub fn parse_value(token: &str) -> Option<f64> {
    let t = token.to_ascii_lowercase();
    let bytes = t.as_bytes();
    let mut split = t.len();
    let mut k = 0;
    while k < bytes.len() {
        let c = bytes[k];
        if c.is_ascii_alphabetic() {
            let exponent = c == b'e'
                && bytes
                    .get(k + 1)
                    .is_some_and(|n| n.is_ascii_digit() || ((*n == b'+' || *n == b'-') && bytes.get(k + 2).is_some_and(u8::is_ascii_digit)));
            if !exponent {
                split = k;
                break;
            }
            k += 2;
            continue;
        }
        k += 1;
    }
    let (num, suffix) = t.split_at(split);
    let base: f64 = num.parse().ok()?;
    let (scale, unit) = if let Some(rest) = suffix.strip_prefix("meg") {
        (1e6, rest)
    } else {
        let scale = match suffix.chars().next() {
            Some('t') => 1e12,
            Some('g') => 1e9,
            Some('k') => 1e3,
            Some('m') => 1e-3,
            Some('u') => 1e-6,
            Some('n') => 1e-9,
            Some('p') => 1e-12,
            Some('f') => 1e-15,
            _ => 1.0,
        };
        let unit = if scale == 1.0 { suffix } else { &suffix[1..] };
        (scale, unit)
    };
    if !unit.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let v = base * scale;
    v.is_finite().then_some(v)
}
