use std::collections::BTreeSet;

use serde::Serialize;

use super::lint::expected_layout;
use super::{dynamic_check, has_errors, static_check, CheckSpec, Code, Diagnostic, DynamicBounds};
use crate::design_space::DesignPoint;
use crate::netlist::{generate_crossbar_netlist, ConductanceTile, ElementKind, Netlist, GROUND};

/// Applies the unambiguous repairs for fixable findings: a duplicate name is
/// renamed to the one missing layout name wired to the same nodes, and a
/// detached reference rail is renamed back to node `0`. Returns the repaired
/// netlist and a note per repair.
pub fn apply_fixups(n: &Netlist, dp: &DesignPoint, spec: &CheckSpec, diags: &[Diagnostic]) -> (Netlist, Vec<String>) {
    let mut m = n.clone();
    let mut notes = Vec::new();

    for d in diags.iter().filter(|d| d.code == Code::GroundDetached) {
        let rail = d.element.as_str();
        if rail == GROUND || !m.elements.iter().any(|e| e.nodes.iter().any(|x| x == rail)) {
            continue;
        }
        for e in &mut m.elements {
            let skip = usize::from(e.kind == ElementKind::Switch);
            for x in e.nodes.iter_mut().skip(skip) {
                if x == rail {
                    *x = GROUND.to_string();
                }
            }
        }
        notes.push(format!("renamed rail `{rail}` to `0`"));
    }

    let dup_names: BTreeSet<&str> = diags
        .iter()
        .filter(|d| d.code == Code::DuplicateName)
        .map(|d| d.element.as_str())
        .collect();
    if !dup_names.is_empty() {
        let layout = expected_layout(dp, spec.has_wires());
        let present: BTreeSet<String> = m.elements.iter().map(|e| e.name.clone()).collect();
        for k in 0..m.elements.len() {
            let name = m.elements[k].name.clone();
            if !dup_names.contains(name.as_str()) {
                continue;
            }
            let e = &m.elements[k];
            // The copy wired as its own slot keeps the name; any other copy is renamed.
            let (a, b) = e.terminals();
            let owns = layout
                .get(&name)
                .is_some_and(|s| s.kind == e.kind && s.a == a && s.b == b);
            if !owns {
                let (a, b) = e.terminals();
                let candidates: Vec<&String> = layout
                    .iter()
                    .filter(|(cand, slot)| {
                        !present.contains(*cand) && slot.kind == e.kind && slot.a == a && slot.b == b
                    })
                    .map(|(cand, _)| cand)
                    .collect();
                if let [only] = candidates.as_slice() {
                    notes.push(format!("renamed duplicate `{name}` to `{only}`"));
                    m.elements[k].name = (*only).clone();
                }
            }
        }
    }
    (m, notes)
}

/// Produces a candidate netlist for a round. `feedback` holds the previous
/// round's diagnostics and is empty on round 1.
pub trait NetlistSource {
    fn generate(&mut self, round: usize, feedback: &[Diagnostic]) -> Result<Netlist, String>;
}

impl<F> NetlistSource for F
where
    F: FnMut(usize, &[Diagnostic]) -> Result<Netlist, String>,
{
    fn generate(&mut self, round: usize, feedback: &[Diagnostic]) -> Result<Netlist, String> {
        self(round, feedback)
    }
}

/// The deterministic crossbar generator.
#[derive(Debug, Clone)]
pub struct DesignGenerator {
    pub dp: DesignPoint,
    pub tile: ConductanceTile,
    pub spec: CheckSpec,
    pub input: Vec<f64>,
}

impl NetlistSource for DesignGenerator {
    fn generate(&mut self, _round: usize, _feedback: &[Diagnostic]) -> Result<Netlist, String> {
        generate_crossbar_netlist(&self.dp, &self.tile, &self.spec.options(self.input.clone())).map_err(|e| e.to_string())
    }
}

/// Default regeneration hook: regenerates, then applies automatic fixups for
/// the fixable findings of the previous round.
pub struct Regenerate<G> {
    pub inner: G,
    pub dp: DesignPoint,
    pub spec: CheckSpec,
    pub applied: Vec<String>,
}

impl<G: NetlistSource> Regenerate<G> {
    pub fn new(inner: G, dp: DesignPoint, spec: CheckSpec) -> Self {
        Self {
            inner,
            dp,
            spec,
            applied: Vec::new(),
        }
    }
}

impl<G: NetlistSource> NetlistSource for Regenerate<G> {
    fn generate(&mut self, round: usize, feedback: &[Diagnostic]) -> Result<Netlist, String> {
        let n = self.inner.generate(round, feedback)?;
        if !feedback.iter().any(|d| d.code.fixable()) {
            return Ok(n);
        }
        let (fixed, notes) = apply_fixups(&n, &self.dp, &self.spec, feedback);
        self.applied.extend(notes.into_iter().map(|s| format!("round {round}: {s}")));
        Ok(fixed)
    }
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub max_rounds: usize,
    pub spec: CheckSpec,
    pub bounds: DynamicBounds,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Accepted {
    pub netlist: Netlist,
    pub rounds: usize,
    /// Diagnostics of every round, the last one free of errors.
    pub history: Vec<Vec<Diagnostic>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopFailure {
    pub rounds: usize,
    pub history: Vec<Vec<Diagnostic>>,
    pub reason: String,
}

/// Generate, check, and feed findings back for at most `max_rounds` rounds.
/// Simulation runs only on candidates that pass the static checks.
pub fn verification_loop(
    dp: &DesignPoint,
    tile: &ConductanceTile,
    generator: &mut dyn NetlistSource,
    cfg: &LoopConfig,
) -> Result<Accepted, LoopFailure> {
    if cfg.max_rounds == 0 {
        return Err(LoopFailure {
            rounds: 0,
            history: Vec::new(),
            reason: "max_rounds must be at least 1".into(),
        });
    }
    let mut history: Vec<Vec<Diagnostic>> = Vec::new();
    for round in 1..=cfg.max_rounds {
        let feedback = history.last().map_or(&[][..], Vec::as_slice);
        let diags = match generator.generate(round, feedback) {
            Err(e) => vec![Diagnostic::new(Code::GenerationFailed, dp.key(), e)],
            Ok(n) => {
                let mut diags = static_check(&n, dp, &cfg.spec);
                if !has_errors(&diags) {
                    match dynamic_check(&n, dp, tile, &cfg.vectors, &cfg.spec, &cfg.bounds) {
                        Ok(d) => diags.extend(d),
                        Err(e) => {
                            return Err(LoopFailure {
                                rounds: round,
                                history,
                                reason: e.to_string(),
                            })
                        }
                    }
                }
                if !has_errors(&diags) {
                    history.push(diags);
                    return Ok(Accepted {
                        netlist: n,
                        rounds: round,
                        history,
                    });
                }
                diags
            }
        };
        history.push(diags);
    }
    Err(LoopFailure {
        rounds: cfg.max_rounds,
        history,
        reason: format!("no clean netlist within {} rounds", cfg.max_rounds),
    })
}
