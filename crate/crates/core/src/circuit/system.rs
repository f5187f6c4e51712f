//! Nodal equations of a resistive netlist.
//!
//! Zero-ohm switches merge their terminals into one electrical class. Voltage
//! sources pin their classes relative to ground (Dirichlet rows); the
//! remaining classes are the unknowns of a symmetric positive-definite system
//! `G v = i`, where `i` collects the conductance-weighted pinned voltages.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use super::sparse::CsrMatrix;
use super::CircuitError;
use crate::netlist::{ElementKind, Netlist, Polarity, Role, GROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Unknown(usize),
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Stamped {
    pub kind: ElementKind,
    pub a: usize,
    pub b: usize,
    /// Conductance; infinite for zero-ohm switches, zero for sources.
    pub g: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct TreeEdge {
    pub child: usize,
    pub parent: usize,
    pub element: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ColumnTap {
    pub element: usize,
    pub polarity: Polarity,
    pub col: usize,
    /// +1 when the element's second terminal is ground.
    pub sign: f64,
}

/// Immutable nodal system of one netlist.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub(crate) nodes: Arc<[String]>,
    pub(crate) node_ref: Vec<NodeRef>,
    pub(crate) unknown_rep: Vec<usize>,
    /// Per pinned class: voltage as a signed sum of source values.
    pub(crate) fixed_paths: Vec<Vec<(usize, f64)>>,
    pub(crate) matrix: CsrMatrix,
    pub(crate) coupling: Vec<(usize, usize, f64)>,
    pub(crate) source_elements: Vec<usize>,
    pub(crate) source_values: Vec<f64>,
    pub(crate) current_vector: Vec<f64>,
    pub(crate) elements: Vec<Stamped>,
    /// Zero-ohm spanning-tree edges in breadth-first order from each class root.
    pub(crate) tree_edges: Vec<TreeEdge>,
    pub(crate) column_taps: Vec<ColumnTap>,
    pub(crate) n_columns: usize,
    pub(crate) source_names: Vec<String>,
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

    /// Keeps the smaller id as representative.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

pub fn build_system(n: &Netlist) -> Result<LinearSystem, CircuitError> {
    let nodes: Vec<String> = n.nodes().into_iter().map(String::from).collect();
    let id = |s: &str| nodes.binary_search_by(|x| x.as_str().cmp(s)).unwrap();

    let mut elements = Vec::with_capacity(n.elements.len());
    for e in &n.elements {
        let (a, b) = e.terminals();
        let invalid = |reason: &str| CircuitError::InvalidElement {
            name: e.name.clone(),
            reason: reason.to_string(),
        };
        let g = match e.kind {
            ElementKind::Resistor if e.value > 0.0 && e.value.is_finite() => 1.0 / e.value,
            ElementKind::Resistor => return Err(invalid("resistance must be positive and finite")),
            ElementKind::Switch if e.value == 0.0 => f64::INFINITY,
            ElementKind::Switch if e.value > 0.0 && e.value.is_finite() => 1.0 / e.value,
            ElementKind::Switch => return Err(invalid("switch resistance must be >= 0")),
            ElementKind::VSource if e.value.is_finite() => 0.0,
            ElementKind::VSource => return Err(invalid("source voltage must be finite")),
        };
        elements.push(Stamped {
            kind: e.kind,
            a: id(a),
            b: id(b),
            g,
        });
    }

    let mut uf = UnionFind((0..nodes.len()).collect());
    for s in elements.iter().filter(|s| s.g.is_infinite()) {
        uf.union(s.a, s.b);
    }
    let class: Vec<usize> = (0..nodes.len()).map(|v| uf.find(v)).collect();

    let ground = nodes
        .binary_search_by(|x| x.as_str().cmp(GROUND))
        .map_err(|_| CircuitError::NoGround)?;

    // Pin classes reachable from ground through sources.
    let source_elements: Vec<usize> = (0..elements.len())
        .filter(|&k| elements[k].kind == ElementKind::VSource)
        .collect();
    let source_values: Vec<f64> = source_elements.iter().map(|&k| n.elements[k].value).collect();
    let mut path: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    path.insert(class[ground], Vec::new());
    let voltage = |p: &[(usize, f64)]| p.iter().map(|(s, sign)| sign * source_values[*s]).sum::<f64>();
    let mut pending: Vec<usize> = (0..source_elements.len()).collect();
    loop {
        let before = pending.len();
        let mut still = Vec::new();
        for s in pending {
            let e = &elements[source_elements[s]];
            let (cp, cm) = (class[e.a], class[e.b]);
            match (path.get(&cp).cloned(), path.get(&cm).cloned()) {
                (Some(pp), Some(pm)) => {
                    let (vp, vm, v) = (voltage(&pp), voltage(&pm), source_values[s]);
                    if (vp - vm - v).abs() > 1e-12 * (1.0 + v.abs() + vp.abs() + vm.abs()) {
                        return Err(CircuitError::SourceConflict {
                            element: n.elements[source_elements[s]].name.clone(),
                            node: nodes[e.a].clone(),
                        });
                    }
                }
                (None, Some(mut pm)) => {
                    pm.push((s, 1.0));
                    path.insert(cp, pm);
                }
                (Some(mut pp), None) => {
                    pp.push((s, -1.0));
                    path.insert(cm, pp);
                }
                (None, None) => still.push(s),
            }
        }
        pending = still;
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    if let Some(&s) = pending.first() {
        return Err(CircuitError::FloatingSource {
            element: n.elements[source_elements[s]].name.clone(),
        });
    }

    let fixed_classes: Vec<usize> = path.keys().copied().collect();
    let fixed_paths: Vec<Vec<(usize, f64)>> = path.into_values().collect();
    let mut unknown_rep = Vec::new();
    let mut class_ref: BTreeMap<usize, NodeRef> = BTreeMap::new();
    for (f, c) in fixed_classes.iter().enumerate() {
        class_ref.insert(*c, NodeRef::Fixed(f));
    }
    for v in 0..nodes.len() {
        if class[v] == v && !class_ref.contains_key(&v) {
            class_ref.insert(v, NodeRef::Unknown(unknown_rep.len()));
            unknown_rep.push(v);
        }
    }
    let node_ref: Vec<NodeRef> = class.iter().map(|c| class_ref[c]).collect();

    let dim = unknown_rep.len();
    let mut triplets = Vec::new();
    let mut coupling = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); dim];
    let mut pinned = vec![false; dim];
    for s in elements.iter().filter(|s| s.g > 0.0 && s.g.is_finite()) {
        match (node_ref[s.a], node_ref[s.b]) {
            (NodeRef::Unknown(u), NodeRef::Unknown(w)) if u != w => {
                triplets.extend([(u, u, s.g), (w, w, s.g), (u, w, -s.g), (w, u, -s.g)]);
                adjacency[u].push(w);
                adjacency[w].push(u);
            }
            (NodeRef::Unknown(u), NodeRef::Fixed(f)) | (NodeRef::Fixed(f), NodeRef::Unknown(u)) => {
                triplets.push((u, u, s.g));
                coupling.push((u, f, s.g));
                pinned[u] = true;
            }
            _ => {}
        }
    }

    // Every unknown component needs a conductive path to a pinned class.
    let mut seen = vec![false; dim];
    for start in 0..dim {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut grounded = pinned[start];
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    grounded |= pinned[w];
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        if !grounded {
            let reps: Vec<usize> = comp.iter().map(|u| unknown_rep[*u]).collect();
            let mut names: Vec<String> = (0..nodes.len())
                .filter(|v| reps.contains(&class[*v]))
                .map(|v| nodes[v].clone())
                .collect();
            names.sort();
            return Err(CircuitError::Island { nodes: names });
        }
    }

    let tree_edges = zero_ohm_trees(&elements, &class, &source_elements, nodes.len());

    let mut column_taps = Vec::new();
    let mut n_columns = 0;
    for (k, e) in n.elements.iter().enumerate() {
        let col = match Role::parse(&e.name) {
            Some(Role::Memory { polarity, j, .. }) => Some((polarity, j)),
            Some(Role::ColumnLead { polarity, j, .. }) => Some((polarity, j)),
            _ => None,
        };
        let Some((polarity, col)) = col else { continue };
        let (a, b) = e.terminals();
        let sign = match (a == GROUND, b == GROUND) {
            (false, true) => 1.0,
            (true, false) => -1.0,
            _ => continue,
        };
        n_columns = n_columns.max(col + 1);
        column_taps.push(ColumnTap {
            element: k,
            polarity,
            col,
            sign,
        });
    }

    let mut sys = LinearSystem {
        nodes: nodes.into(),
        node_ref,
        unknown_rep,
        fixed_paths,
        matrix: CsrMatrix::from_triplets(dim, &triplets),
        coupling,
        source_names: source_elements.iter().map(|&k| n.elements[k].name.clone()).collect(),
        source_elements,
        source_values,
        current_vector: Vec::new(),
        elements,
        tree_edges,
        column_taps,
        n_columns,
    };
    sys.current_vector = sys.rhs_for(&sys.source_values);
    Ok(sys)
}

fn zero_ohm_trees(
    elements: &[Stamped],
    class: &[usize],
    source_elements: &[usize],
    n_nodes: usize,
) -> Vec<TreeEdge> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
    for (k, s) in elements.iter().enumerate() {
        if s.g.is_infinite() && s.a != s.b {
            adj[s.a].push((s.b, k));
            adj[s.b].push((s.a, k));
        }
    }
    let mut class_size = vec![0usize; n_nodes];
    for &c in class {
        class_size[c] += 1;
    }
    // Root each class at its first source terminal, else at its representative.
    let mut root: Vec<Option<usize>> = vec![None; n_nodes];
    for &k in source_elements {
        for v in [elements[k].a, elements[k].b] {
            root[class[v]].get_or_insert(v);
        }
    }
    let mut visited = vec![false; n_nodes];
    let mut edges = Vec::new();
    for c in 0..n_nodes {
        if class[c] != c || class_size[c] < 2 {
            continue;
        }
        let r = root[c].unwrap_or(c);
        visited[r] = true;
        let mut queue = VecDeque::from([r]);
        while let Some(u) = queue.pop_front() {
            for &(w, k) in &adj[u] {
                if !visited[w] {
                    visited[w] = true;
                    edges.push(TreeEdge {
                        child: w,
                        parent: u,
                        element: k,
                    });
                    queue.push_back(w);
                }
            }
        }
    }
    edges
}

impl<'a> From<&'a LinearSystem> for std::borrow::Cow<'a, LinearSystem> {
    fn from(sys: &'a LinearSystem) -> Self {
        std::borrow::Cow::Borrowed(sys)
    }
}

impl From<LinearSystem> for std::borrow::Cow<'_, LinearSystem> {
    fn from(sys: LinearSystem) -> Self {
        std::borrow::Cow::Owned(sys)
    }
}

impl LinearSystem {
    pub fn dimension(&self) -> usize {
        self.unknown_rep.len()
    }

    pub fn conductance_matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn current_vector(&self) -> &[f64] {
        &self.current_vector
    }

    /// Current-carrying node names, sorted.
    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn lookup(&self, name: &str) -> Option<NodeRef> {
        self.nodes
            .binary_search_by(|x| x.as_str().cmp(name))
            .ok()
            .map(|v| self.node_ref[v])
    }

    /// Row of the unknown holding `name`, if the node is not pinned by a source.
    pub fn unknown_index(&self, name: &str) -> Option<usize> {
        match self.lookup(name)? {
            NodeRef::Unknown(u) => Some(u),
            NodeRef::Fixed(_) => None,
        }
    }

    /// Name of the representative node of an unknown row.
    pub fn unknown_name(&self, u: usize) -> &str {
        &self.nodes[self.unknown_rep[u]]
    }

    pub fn source_names(&self) -> &[String] {
        &self.source_names
    }

    pub fn source_values(&self) -> &[f64] {
        &self.source_values
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn fixed_voltages(&self, source_values: &[f64]) -> Vec<f64> {
        self.fixed_paths
            .iter()
            .map(|p| p.iter().map(|(s, sign)| sign * source_values[*s]).sum())
            .collect()
    }

    /// Right-hand side for a different assignment of source voltages.
    pub fn rhs_for(&self, source_values: &[f64]) -> Vec<f64> {
        let fixed = self.fixed_voltages(source_values);
        let mut rhs = vec![0.0; self.dimension()];
        for &(u, f, g) in &self.coupling {
            rhs[u] += g * fixed[f];
        }
        rhs
    }

    /// Source values for a crossbar input pattern: source `V{X}_{i}_{q}` takes
    /// `pattern[i]`. Netlists whose sources are not crossbar drivers take one
    /// value per source, in element order.
    pub fn source_values_for_pattern(&self, pattern: &[f64]) -> Result<Vec<f64>, CircuitError> {
        let rows: Option<Vec<usize>> = self
            .source_names
            .iter()
            .map(|name| match Role::parse(name) {
                Some(Role::Source { i, .. }) => Some(i),
                _ => None,
            })
            .collect();
        match rows {
            Some(rows) => {
                let need = rows.iter().max().map_or(0, |m| m + 1);
                if pattern.len() != need {
                    return Err(CircuitError::Shape(format!(
                        "pattern has {} entries for {need} driven rows",
                        pattern.len()
                    )));
                }
                Ok(rows.iter().map(|&i| pattern[i]).collect())
            }
            None => {
                if pattern.len() != self.source_names.len() {
                    return Err(CircuitError::Shape(format!(
                        "pattern has {} entries for {} sources",
                        pattern.len(),
                        self.source_names.len()
                    )));
                }
                Ok(pattern.to_vec())
            }
        }
    }
}
