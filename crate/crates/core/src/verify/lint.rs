use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{CheckSpec, Code, Diagnostic};
use crate::design_space::DesignPoint;
use crate::netlist::{element_count, parse_spice, Element, ElementKind, Netlist, Polarity, Role, GROUND};

/// Relative slack on the device window, absorbing `1/(1/g)` rounding.
const RANGE_SLACK: f64 = 1e-9;

/// Placement of one element in a generated crossbar.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slot {
    pub kind: ElementKind,
    pub a: String,
    pub b: String,
    pub control: Option<String>,
}

/// Every element a generated netlist for `dp` contains, keyed by name.
/// Derived from the naming scheme alone, independently of the generator.
pub(crate) fn expected_layout(dp: &DesignPoint, has_wires: bool) -> BTreeMap<String, Slot> {
    let mut out = BTreeMap::new();
    let (rows, cols) = (dp.rows, dp.cols);
    let row_block = rows / dp.partition.h_parts;
    let col_block = cols / dp.partition.v_parts;
    for pol in Polarity::BOTH {
        let x = pol.node_prefix();
        let t = pol.tag();
        let tap = |i: usize, j: usize| {
            let k = if has_wires { j } else { j / col_block * col_block };
            format!("{x}_row{i}_s{k}")
        };
        let col = |i: usize, j: usize| {
            if has_wires {
                format!("{x}_col{j}_h{}", i / row_block)
            } else {
                GROUND.to_string()
            }
        };
        let two = |kind, a: String, b: String| Slot {
            kind,
            a,
            b,
            control: None,
        };
        for i in 0..rows {
            for j in 0..cols {
                let cell = format!("{x}_r{i}_c{j}");
                out.insert(format!("RM{t}_{i}_{j}"), two(ElementKind::Resistor, cell.clone(), col(i, j)));
                let sw = Slot {
                    kind: ElementKind::Switch,
                    a: tap(i, j),
                    b: cell,
                    control: Some(format!("{x}_wl{i}")),
                };
                if dp.bitcell.switches_per_cell() == 2 {
                    out.insert(format!("RB{t}_{i}_{j}"), sw.clone());
                }
                out.insert(format!("RA{t}_{i}_{j}"), sw);
            }
        }
        if has_wires {
            for i in 0..rows {
                for k in (1..cols).filter(|k| k % col_block != 0) {
                    out.insert(
                        format!("RW{t}_{i}_{k}"),
                        two(ElementKind::Resistor, format!("{x}_row{i}_s{}", k - 1), format!("{x}_row{i}_s{k}")),
                    );
                }
            }
            for j in 0..cols {
                for m in 0..dp.partition.h_parts {
                    out.insert(
                        format!("RC{t}_{j}_{m}"),
                        two(ElementKind::Resistor, format!("{x}_col{j}_h{m}"), GROUND.into()),
                    );
                }
            }
        }
        for i in 0..rows {
            for q in 0..dp.partition.v_parts {
                out.insert(
                    format!("V{t}_{i}_{q}"),
                    two(ElementKind::VSource, format!("{x}_row{i}_s{}", q * col_block), GROUND.into()),
                );
            }
        }
    }
    out
}

const CATEGORIES: [&str; 5] = ["memory", "access switch", "row wire", "column lead", "source"];

fn category(role: Role) -> usize {
    match role {
        Role::Memory { .. } => 0,
        Role::Access { .. } => 1,
        Role::RowWire { .. } => 2,
        Role::ColumnLead { .. } => 3,
        Role::Source { .. } => 4,
    }
}

fn well_formed(e: &Element) -> bool {
    e.nodes.len() == if e.kind == ElementKind::Switch { 3 } else { 2 }
}

fn value_problem(e: &Element) -> Option<&'static str> {
    let v = e.value;
    match e.kind {
        ElementKind::Resistor if !(v.is_finite() && v > 0.0) => Some("resistance must be positive and finite"),
        ElementKind::Switch if !(v.is_finite() && v >= 0.0) => Some("switch resistance must be finite and >= 0"),
        ElementKind::VSource if !v.is_finite() => Some("source voltage must be finite"),
        _ => None,
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Structural lint of a netlist against the layout of `dp`. An empty list
/// means every check passed.
pub fn static_check(n: &Netlist, dp: &DesignPoint, spec: &CheckSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let fallback = n
        .elements
        .first()
        .map_or_else(|| GROUND.to_string(), |e| e.name.clone());
    if let Err(e) = dp.validate() {
        out.push(Diagnostic::new(Code::DesignInvalid, fallback, e.to_string()));
        return out;
    }
    if let Some(k) = n.annotation("design_key").filter(|k| *k != dp.key()) {
        out.push(Diagnostic::new(
            Code::DesignMismatch,
            fallback.clone(),
            format!("netlist is annotated as {k}, checked as {}", dp.key()),
        ));
    }

    // Names and values.
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut first: Vec<&Element> = Vec::new();
    let mut extras_by_name: Vec<&Element> = Vec::new();
    for e in &n.elements {
        let count = seen.entry(&e.name).or_insert(0);
        *count += 1;
        if *count == 2 {
            out.push(Diagnostic::new(
                Code::DuplicateName,
                e.name.clone(),
                format!("element name `{}` is used more than once", e.name),
            ));
        }
        if !well_formed(e) {
            out.push(Diagnostic::new(
                Code::InvalidValue,
                e.name.clone(),
                format!("{:?} with {} terminals", e.kind, e.nodes.len()),
            ));
            continue;
        }
        if let Some(why) = value_problem(e) {
            out.push(Diagnostic::new(Code::InvalidValue, e.name.clone(), format!("{why}, got {}", e.value)));
        }
        if *count == 1 {
            first.push(e);
        } else {
            extras_by_name.push(e);
        }
    }
    let all: Vec<&Element> = n.elements.iter().filter(|e| well_formed(e)).collect();
    let raw_nodes: BTreeSet<&str> = all
        .iter()
        .flat_map(|e| {
            let (a, b) = e.terminals();
            [a, b]
        })
        .collect();

    let layout = expected_layout(dp, spec.has_wires());
    let layout_nodes: BTreeSet<&str> = layout.values().flat_map(|s| [s.a.as_str(), s.b.as_str()]).collect();

    // Ground: a foreign node standing in for the reference rail is reported
    // once and treated as ground by the remaining checks.
    let mut rails: BTreeSet<String> = BTreeSet::new();
    let source_minus: Vec<&str> = all
        .iter()
        .filter(|e| e.kind == ElementKind::VSource)
        .map(|e| e.terminals().1)
        .collect();
    if !raw_nodes.contains(GROUND) {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for m in &source_minus {
            *freq.entry(m).or_insert(0) += 1;
        }
        let rail = freq
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| k.to_string())
            .or_else(|| raw_nodes.iter().next().map(|s| s.to_string()));
        match rail {
            Some(r) => {
                out.push(Diagnostic::new(
                    Code::GroundDetached,
                    r.clone(),
                    format!("no node `0`; `{r}` carries the reference rail"),
                ));
                rails.insert(r);
            }
            None => {
                out.push(Diagnostic::new(Code::GroundDetached, fallback.clone(), "netlist has no nodes"));
            }
        }
    }
    for m in &source_minus {
        if *m != GROUND && !layout_nodes.contains(m) && !rails.contains(*m) && raw_nodes.contains(GROUND) {
            out.push(Diagnostic::new(
                Code::GroundDetached,
                m.to_string(),
                format!("sources return to `{m}` instead of node `0`"),
            ));
            rails.insert(m.to_string());
        }
    }
    let canon = |x: &str| -> String {
        if rails.contains(x) {
            GROUND.to_string()
        } else {
            x.to_string()
        }
    };
    let terms = |e: &Element| {
        let (a, b) = e.terminals();
        (canon(a), canon(b))
    };
    let nodes: BTreeSet<String> = raw_nodes.iter().map(|x| canon(x)).collect();

    // Placement of every element against the expected layout.
    for e in &first {
        let (a, b) = terms(e);
        if a == b {
            out.push(Diagnostic::new(
                Code::ShortedElement,
                e.name.clone(),
                format!("both terminals on node `{a}`"),
            ));
            continue;
        }
        let Some(slot) = layout.get(&e.name) else {
            out.push(Diagnostic::new(
                Code::UnexpectedElement,
                e.name.clone(),
                format!("`{}` is not part of the {} layout", e.name, dp.key()),
            ));
            continue;
        };
        if slot.kind != e.kind {
            out.push(Diagnostic::new(
                Code::TerminalMismatch,
                e.name.clone(),
                format!("expected a {:?}, found a {:?}", slot.kind, e.kind),
            ));
        } else if a != slot.a || b != slot.b || e.control().map(String::from) != slot.control {
            let code = if e.kind == ElementKind::VSource {
                Code::SourceMisbound
            } else {
                Code::TerminalMismatch
            };
            out.push(Diagnostic::new(
                code,
                e.name.clone(),
                format!("connected {a} -> {b}, expected {} -> {}", slot.a, slot.b),
            ));
        }
    }

    // Category counts against the closed form.
    let expected = element_count(dp, spec.has_wires());
    let expected = [
        expected.memory,
        expected.switches,
        expected.row_wires,
        expected.column_leads,
        expected.sources,
    ];
    let mut actual = [0usize; 5];
    let mut extra: [Option<&str>; 5] = [None; 5];
    for e in &all {
        if let Some(role) = Role::parse(&e.name) {
            let c = category(role);
            actual[c] += 1;
            if extra[c].is_none() && !layout.contains_key(&e.name) {
                extra[c] = Some(&e.name);
            }
        }
    }
    for e in &extras_by_name {
        if let Some(role) = Role::parse(&e.name) {
            extra[category(role)].get_or_insert(&e.name);
        }
    }
    for c in 0..5 {
        if actual[c] == expected[c] {
            continue;
        }
        let missing = layout
            .iter()
            .find(|(name, _)| !seen.contains_key(name.as_str()) && Role::parse(name).map(category) == Some(c));
        let mut detail = String::new();
        let mut element = None;
        if let Some(x) = extra[c] {
            detail.push_str(&format!("; unexpected {x}"));
            element = Some(x.to_string());
        }
        if let Some((name, slot)) = missing {
            detail.push_str(&format!("; missing {name} between {} and {}", slot.a, slot.b));
            if element.is_none() {
                element = [&slot.a, &slot.b].into_iter().find(|x| nodes.contains(*x)).cloned();
            }
        }
        out.push(Diagnostic::new(
            Code::ElementCountMismatch,
            element.unwrap_or_else(|| fallback.clone()),
            format!("{}: expected {}, found {}{detail}", CATEGORIES[c], expected[c], actual[c]),
        ));
    }

    // Device window.
    let g_lo = spec.device.g_off() * (1.0 - RANGE_SLACK);
    let g_hi = spec.device.g_on() * (1.0 + RANGE_SLACK);
    let mut has_polarity = [false; 2];
    for e in &all {
        if let Some(Role::Memory { polarity, i, j }) = Role::parse(&e.name) {
            has_polarity[usize::from(polarity == Polarity::Neg)] = true;
            if e.kind != ElementKind::Resistor || value_problem(e).is_some() {
                continue;
            }
            let g = 1.0 / e.value;
            if !(g >= g_lo && g <= g_hi) {
                out.push(Diagnostic::new(
                    Code::ConductanceOutOfRange,
                    e.name.clone(),
                    format!(
                        "cell ({i},{j}) of the {polarity} array: {g:e} S outside [{:e}, {:e}]",
                        spec.device.g_off(),
                        spec.device.g_on()
                    ),
                ));
            }
        }
    }
    for (k, pol) in Polarity::BOTH.into_iter().enumerate() {
        if !has_polarity[k] {
            out.push(Diagnostic::new(
                Code::MissingPolarity,
                fallback.clone(),
                format!("the {pol} array has no memory elements"),
            ));
        }
    }

    // Connectivity: islands without ground, and nodes with a single terminal.
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(k, x)| (x.as_str(), k)).collect();
    let mut uf = UnionFind((0..nodes.len()).collect());
    let mut degree = vec![0usize; nodes.len()];
    for e in &all {
        let (a, b) = terms(e);
        let (ia, ib) = (index[a.as_str()], index[b.as_str()]);
        uf.union(ia, ib);
        degree[ia] += 1;
        degree[ib] += 1;
    }
    let ground_root = index.get(GROUND).map(|&g| uf.find(g));
    let mut islands: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (k, x) in nodes.iter().enumerate() {
        let r = uf.find(k);
        if Some(r) != ground_root {
            islands.entry(r).or_default().push(x);
        }
    }
    let mut islands: Vec<Vec<&str>> = islands.into_values().collect();
    islands.sort();
    for isl in islands {
        out.push(Diagnostic::new(
            Code::FloatingNode,
            isl[0].to_string(),
            format!("{} node(s) without a path to ground: {}", isl.len(), preview(&isl)),
        ));
    }
    for (k, x) in nodes.iter().enumerate() {
        if degree[k] < 2 && x != GROUND {
            out.push(Diagnostic::new(Code::DanglingNode, x.clone(), "node touches a single terminal"));
        }
    }

    // Every column returns to its sense node; every row has a driver.
    for pol in Polarity::BOTH {
        let mut sensed = vec![false; dp.cols];
        let mut any_in_col: Vec<Option<String>> = vec![None; dp.cols];
        let mut driven = vec![false; dp.rows];
        for e in &all {
            let (a, b) = terms(e);
            match Role::parse(&e.name) {
                Some(Role::Memory { polarity, j, .. } | Role::ColumnLead { polarity, j, .. })
                    if polarity == pol && j < dp.cols =>
                {
                    if (a == GROUND) != (b == GROUND) {
                        sensed[j] = true;
                    }
                    if any_in_col[j].is_none() {
                        any_in_col[j] = Some(if b != GROUND { b.clone() } else { a.clone() });
                    }
                }
                _ => {}
            }
            if e.kind == ElementKind::VSource && b == GROUND {
                if let Some(i) = row_of_tap(&a, pol) {
                    if i < dp.rows {
                        driven[i] = true;
                    }
                }
            }
        }
        for j in (0..dp.cols).filter(|&j| !sensed[j]) {
            out.push(Diagnostic::new(
                Code::ColumnUnsensed,
                any_in_col[j].clone().unwrap_or_else(|| fallback.clone()),
                format!("column {j} of the {pol} array does not reach its sense node"),
            ));
        }
        for i in (0..dp.rows).filter(|&i| !driven[i]) {
            let x = pol.node_prefix();
            let tap = nodes
                .iter()
                .find(|n| row_of_tap(n, pol) == Some(i))
                .cloned()
                .unwrap_or_else(|| format!("{x}_wl{i}"));
            let element = if nodes.contains(&tap) || n.elements.iter().any(|e| e.control() == Some(&tap)) {
                tap
            } else {
                fallback.clone()
            };
            out.push(Diagnostic::new(
                Code::RowUndriven,
                element,
                format!("row {i} of the {pol} array has no driver"),
            ));
        }
    }
    out
}

/// Row index of a row-tap node `x_row{i}_s{k}` of the given polarity.
fn row_of_tap(node: &str, pol: Polarity) -> Option<usize> {
    let rest = node.strip_prefix(pol.node_prefix())?.strip_prefix("_row")?;
    let (i, k) = rest.split_once("_s")?;
    k.parse::<usize>().ok()?;
    i.parse().ok()
}

fn preview(nodes: &[&str]) -> String {
    const SHOWN: usize = 4;
    let head = nodes.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if nodes.len() > SHOWN {
        format!("{head}, ...")
    } else {
        head
    }
}

/// Parses SPICE text and lints it, attaching line numbers to findings about
/// elements and nodes.
pub fn static_check_text(text: &str, dp: &DesignPoint, spec: &CheckSpec) -> Vec<Diagnostic> {
    let n = match parse_spice(text) {
        Ok(n) => n,
        Err(e) => {
            let code = if e.message.starts_with("duplicate element name") {
                Code::DuplicateName
            } else {
                Code::ParseError
            };
            let mut d = Diagnostic::new(code, e.token.clone(), e.message.clone());
            d.line = Some(e.line);
            return vec![d];
        }
    };
    let mut lines: HashMap<&str, usize> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('*') || line.starts_with('.') {
            continue;
        }
        for tok in line.split_whitespace().take(3) {
            lines.entry(tok).or_insert(k + 1);
        }
    }
    let mut out = static_check(&n, dp, spec);
    for d in &mut out {
        d.line = lines.get(d.element.as_str()).copied();
    }
    out
}
