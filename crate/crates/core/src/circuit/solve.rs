use std::borrow::Cow;
use std::sync::Arc;

use serde::Serialize;

use super::sparse::{pcg, LdlFactor, Preconditioner};
use super::system::{LinearSystem, NodeRef};
use super::CircuitError;
use crate::netlist::{ElementKind, Polarity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Bound on `‖G v − i‖ / ‖i‖`.
    pub tol: f64,
    /// Total iteration budget; defaults to `20·√dimension`.
    pub max_iter: Option<usize>,
    /// Largest dimension handled by direct factorization.
    pub direct_threshold: usize,
    /// Per-node target for `|residual| / Σ|terms|`; refinement stops early if it stagnates.
    pub row_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            direct_threshold: 5000,
            row_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Empty,
    Direct,
    Pcg { ic0: bool },
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub node_names: Arc<[String]>,
    /// Volts relative to node `0`, aligned with `node_names`.
    pub node_voltages: Vec<f64>,
    /// Per netlist element: current from first to second terminal (switches:
    /// in to out); for sources, the current delivered out of the `+` terminal.
    pub element_currents: Vec<f64>,
    /// Differential column currents `I_P − I_N`, amperes.
    pub column_currents: Vec<f64>,
    pub column_currents_pos: Vec<f64>,
    pub column_currents_neg: Vec<f64>,
    pub residual_norm: f64,
    /// Largest per-node residual relative to the magnitude of that node's terms.
    pub max_row_residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    /// `Σ V_source · I_source`, watts.
    pub source_power: f64,
}

impl SolveReport {
    pub fn voltage(&self, node: &str) -> Option<f64> {
        self.node_names
            .binary_search_by(|x| x.as_str().cmp(node))
            .ok()
            .map(|k| self.node_voltages[k])
    }
}

enum Engine {
    Empty,
    Direct(LdlFactor),
    Iterative(Preconditioner),
}

/// A factorized (or preconditioned) system, reusable across source assignments.
pub struct Solver<'a> {
    sys: Cow<'a, LinearSystem>,
    engine: Engine,
    opts: SolveOptions,
}

impl<'a> Solver<'a> {
    pub fn new(sys: impl Into<Cow<'a, LinearSystem>>, opts: SolveOptions) -> Result<Self, CircuitError> {
        let sys = sys.into();
        let n = sys.dimension();
        let engine = if n == 0 {
            Engine::Empty
        } else if n <= opts.direct_threshold {
            let f = LdlFactor::new(&sys.matrix).map_err(|p| CircuitError::SingularPivot {
                node: sys.unknown_name(p).to_string(),
            })?;
            Engine::Direct(f)
        } else {
            Engine::Iterative(Preconditioner::new(&sys.matrix))
        };
        Ok(Self { sys, engine, opts })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn method(&self) -> SolveMethod {
        match &self.engine {
            Engine::Empty => SolveMethod::Empty,
            Engine::Direct(_) => SolveMethod::Direct,
            Engine::Iterative(p) => SolveMethod::Pcg {
                ic0: matches!(p, Preconditioner::Ic0(_)),
            },
        }
    }

    /// Solves with the source values stored in the netlist.
    pub fn solve(&self) -> Result<SolveReport, CircuitError> {
        self.solve_sources(&self.sys.source_values)
    }

    pub fn solve_sources(&self, source_values: &[f64]) -> Result<SolveReport, CircuitError> {
        if source_values.len() != self.sys.source_values.len() {
            return Err(CircuitError::Shape(format!(
                "{} source values for {} sources",
                source_values.len(),
                self.sys.source_values.len()
            )));
        }
        let b = self.sys.rhs_for(source_values);
        let (x, iterations, residual_norm, max_row_residual) = self.solve_vector(&b)?;
        Ok(self.report(source_values, x, iterations, residual_norm, max_row_residual))
    }

    fn residuals(&self, x: &[f64], b: &[f64]) -> (Vec<f64>, f64, f64) {
        let a = &self.sys.matrix;
        let mut r = vec![0.0; b.len()];
        a.matvec(x, &mut r);
        let terms = a.abs_row_terms(x);
        let mut row_max: f64 = 0.0;
        for k in 0..b.len() {
            r[k] = b[k] - r[k];
            let scale = terms[k] + b[k].abs();
            if r[k] != 0.0 {
                row_max = row_max.max(r[k].abs() / scale);
            }
        }
        let bn = norm(b);
        let rn = norm(&r);
        let rel = if bn > 0.0 {
            rn / bn
        } else if rn == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        (r, rel, row_max)
    }

    /// Solve plus iterative refinement until both the global and per-row
    /// targets hold or refinement stops paying off.
    fn solve_vector(&self, b: &[f64]) -> Result<(Vec<f64>, usize, f64, f64), CircuitError> {
        let n = b.len();
        if n == 0 {
            return Ok((Vec::new(), 0, 0.0, 0.0));
        }
        let budget = self
            .opts
            .max_iter
            .unwrap_or_else(|| (20.0 * (n as f64).sqrt()).ceil() as usize)
            .max(1);
        let mut x = vec![0.0; n];
        let mut iterations = 0;
        let (mut r, mut rel, mut row) = self.residuals(&x, b);
        for round in 0..8 {
            if rel <= self.opts.tol && row <= self.opts.row_tol {
                break;
            }
            let dx = match &self.engine {
                Engine::Empty => unreachable!(),
                Engine::Direct(f) => {
                    iterations += 1;
                    f.solve(&r)
                }
                Engine::Iterative(m) => {
                    let remaining = budget.saturating_sub(iterations);
                    if remaining == 0 {
                        break;
                    }
                    let out = pcg(&self.sys.matrix, m, &r, 1e-10 * norm(&r), remaining);
                    iterations += out.iterations;
                    out.x
                }
            };
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let (r2, rel2, row2) = self.residuals(&candidate, b);
            let improved = rel2 < rel || row2 < row;
            if improved {
                x = candidate;
                r = r2;
            }
            let stagnated = round > 0 && !(rel2 < 0.5 * rel || row2 < 0.5 * row);
            if improved {
                rel = rel2;
                row = row2;
            }
            if stagnated || !improved {
                break;
            }
        }
        if rel <= self.opts.tol {
            Ok((x, iterations, rel, row))
        } else {
            Err(CircuitError::NonConvergence {
                iterations,
                residual: rel,
            })
        }
    }

    fn report(
        &self,
        source_values: &[f64],
        x: Vec<f64>,
        iterations: usize,
        residual_norm: f64,
        max_row_residual: f64,
    ) -> SolveReport {
        let sys = &*self.sys;
        let fixed = sys.fixed_voltages(source_values);
        let v: Vec<f64> = sys
            .node_ref
            .iter()
            .map(|r| match *r {
                NodeRef::Unknown(u) => x[u],
                NodeRef::Fixed(f) => fixed[f],
            })
            .collect();

        let mut currents = vec![0.0; sys.elements.len()];
        // Current leaving each node through resistive elements.
        let mut export = vec![0.0; v.len()];
        for (k, s) in sys.elements.iter().enumerate() {
            if s.g > 0.0 && s.g.is_finite() {
                let i = s.g * (v[s.a] - v[s.b]);
                currents[k] = i;
                export[s.a] += i;
                export[s.b] -= i;
            }
        }
        for e in sys.tree_edges.iter().rev() {
            let flow = export[e.child];
            export[e.parent] += flow;
            let s = &sys.elements[e.element];
            currents[e.element] = if s.a == e.parent { flow } else { -flow };
        }
        // Each source supplies what leaves its + node; later sources on the same node carry nothing.
        let mut leaving = vec![0.0; v.len()];
        for (s, &i) in sys.elements.iter().zip(&currents) {
            if s.kind != ElementKind::VSource {
                leaving[s.a] += i;
                leaving[s.b] -= i;
            }
        }
        let mut claimed = vec![false; v.len()];
        let mut source_power = 0.0;
        for (s_idx, &k) in sys.source_elements.iter().enumerate() {
            let plus = sys.elements[k].a;
            let i = if claimed[plus] { 0.0 } else { leaving[plus] };
            claimed[plus] = true;
            currents[k] = i;
            source_power += source_values[s_idx] * i;
        }

        let nc = sys.n_columns;
        let mut pos = vec![0.0; nc];
        let mut neg = vec![0.0; nc];
        for t in &sys.column_taps {
            let i = t.sign * currents[t.element];
            match t.polarity {
                Polarity::Pos => pos[t.col] += i,
                Polarity::Neg => neg[t.col] += i,
            }
        }
        SolveReport {
            node_names: sys.nodes.clone(),
            node_voltages: v,
            element_currents: currents,
            column_currents: pos.iter().zip(&neg).map(|(p, q)| p - q).collect(),
            column_currents_pos: pos,
            column_currents_neg: neg,
            residual_norm,
            max_row_residual,
            iterations,
            method: self.method(),
            source_power,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves with default options and an explicit tolerance and iteration cap.
pub fn solve(sys: &LinearSystem, tol: f64, max_iter: Option<usize>) -> Result<SolveReport, CircuitError> {
    let opts = SolveOptions {
        tol,
        max_iter,
        ..SolveOptions::default()
    };
    Solver::new(sys, opts)?.solve()
}

/// Current balance at one unpinned node.
#[derive(Debug, Clone, PartialEq)]
pub struct KclEntry {
    pub node: String,
    pub residual: f64,
    /// Sum of the magnitudes of the node's current terms.
    pub scale: f64,
}

/// Signed current sum at every node not pinned by a source.
pub fn kcl_audit(sys: &LinearSystem, report: &SolveReport) -> Vec<KclEntry> {
    let v = &report.node_voltages;
    let mut residual = vec![0.0; v.len()];
    let mut scale = vec![0.0; v.len()];
    for (k, s) in sys.elements.iter().enumerate() {
        if s.kind == ElementKind::VSource {
            continue;
        }
        let i = report.element_currents[k];
        residual[s.a] += i;
        residual[s.b] -= i;
        let mag = if s.g.is_finite() {
            s.g * (v[s.a].abs() + v[s.b].abs())
        } else {
            i.abs()
        };
        scale[s.a] += mag;
        scale[s.b] += mag;
    }
    (0..v.len())
        .filter(|&k| matches!(sys.node_ref[k], NodeRef::Unknown(_)))
        .map(|k| KclEntry {
            node: sys.nodes[k].clone(),
            residual: residual[k],
            scale: scale[k],
        })
        .collect()
}
