use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use xbar_core::netlist::{
    emit_spice, generate_crossbar_netlist, parse_spice, ConductanceTile, GenerateOptions, Netlist, Polarity, Role,
};
use xbar_core::paa::{Fidelity, MappedNetwork};
use xbar_core::verify::{
    default_vectors, detection_campaign, dynamic_check, has_errors, static_check, static_check_text, CampaignRow,
    CheckSpec, Diagnostic, DynamicBounds, FaultKind,
};
use xbar_core::{DesignPoint, Matrix};

use crate::util::{input, load_weights, read_text, write_text, CliResult, Ctx};

#[derive(Args)]
pub struct NetlistArgs {
    /// Design key or `tech:device:bitcell:RxC:mode[:HxV]` string.
    #[arg(long)]
    design: String,
    /// MLP weights (JSON); synthetic weights from --seed when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Layer whose tile is emitted (0-based).
    #[arg(long, default_value_t = 0)]
    layer: usize,
    /// Tile position `ti,tj` within the layer.
    #[arg(long, default_value = "0,0")]
    tile: String,
    /// Row voltages above the reference rail: one value for all rows, or one per row, comma-separated.
    /// Defaults to vdd on every row.
    #[arg(long)]
    input: Option<String>,
    /// Leave out interconnect and access resistance.
    #[arg(long)]
    ideal: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// SPICE netlist written by `xbar netlist`.
    #[arg(long)]
    netlist: PathBuf,
    /// Design to check against; defaults to the netlist's design_key annotation.
    #[arg(long)]
    design: Option<String>,
    /// Lint only; skip the simulation.
    #[arg(long)]
    static_only: bool,
    /// Inject every fault kind into the netlist and report which are caught.
    #[arg(long, conflicts_with = "static_only")]
    campaign: bool,
    /// Seeds per fault kind in a campaign.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Random test vectors for the simulation (after the all-vdd vector).
    #[arg(long, default_value_t = 4)]
    vectors: usize,
}

fn parse_pair(s: &str) -> CliResult<(usize, usize)> {
    let bad = || input(format!("tile `{s}` is not `ti,tj`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_input(s: Option<&str>, rows: usize, vdd: f64) -> CliResult<Vec<f64>> {
    let Some(s) = s else {
        return Ok(vec![vdd; rows]);
    };
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| input(format!("input value `{t}` is not a number"))))
        .collect::<Result<_, _>>()?;
    match vals.len() {
        1 => Ok(vec![vals[0]; rows]),
        n if n == rows => Ok(vals),
        n => Err(input(format!("--input has {n} values for {rows} rows"))),
    }
}

pub fn netlist(ctx: &Ctx, a: &NetlistArgs) -> CliResult<u8> {
    let dp: DesignPoint = a.design.parse().map_err(input)?;
    let resolved = ctx.config.resolve(&dp).map_err(input)?;
    let w = load_weights(a.weights.as_deref(), ctx.seed)?;
    let (ti, tj) = parse_pair(&a.tile)?;
    let net = MappedNetwork::new(&dp, &w, &ctx.config, Fidelity::IdealMac).map_err(input)?;
    let grid = net
        .tile_grid(a.layer)
        .ok_or_else(|| input(format!("layer {} out of range; the network has {}", a.layer, w.n_layers())))?;
    let tile = net.tile(a.layer, ti, tj).ok_or_else(|| {
        input(format!(
            "tile ({ti},{tj}) out of range; layer {} has {}x{} tiles",
            a.layer, grid.0, grid.1
        ))
    })?;
    let mut opts = GenerateOptions::from_resolved(&resolved, parse_input(a.input.as_deref(), dp.rows, resolved.vdd)?);
    opts.tile_index = Some((ti, tj));
    if a.ideal {
        opts = opts.zero_parasitic();
    }
    let n = generate_crossbar_netlist(&dp, tile, &opts).map_err(input)?;
    let text = emit_spice(&n);

    #[derive(Serialize)]
    struct Out {
        design: String,
        layer: usize,
        tile: (usize, usize),
        elements: usize,
        lines: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        out: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        spice: Option<String>,
    }
    let mut o = Out {
        design: dp.key(),
        layer: a.layer,
        tile: (ti, tj),
        elements: n.elements.len(),
        lines: text.lines().count(),
        out: None,
        spice: None,
    };
    match &a.out {
        Some(p) => {
            write_text(p, &text)?;
            o.out = Some(p.display().to_string());
            ctx.emit(&o, || {
                format!("{}: {} elements, {} lines -> {}", o.design, o.elements, o.lines, p.display())
            });
        }
        None if ctx.json => {
            o.spice = Some(text);
            ctx.emit(&o, String::new);
        }
        None => print!("{text}"),
    }
    Ok(0)
}

/// Programmed conductances read back from the memory elements. Cells with
/// no readable element are left at the device's off conductance.
fn decode_tile(n: &Netlist, dp: &DesignPoint, spec: &CheckSpec) -> ConductanceTile {
    let g_off = spec.device.g_off();
    let mut pos = Matrix::from_fn(dp.rows, dp.cols, |_, _| g_off);
    let mut neg = pos.clone();
    let mut seen = std::collections::HashSet::new();
    for e in &n.elements {
        let Some(Role::Memory { polarity, i, j }) = Role::parse(&e.name) else {
            continue;
        };
        if i >= dp.rows || j >= dp.cols || !seen.insert(e.name.as_str()) {
            continue;
        }
        if let Some(g) = e.conductance() {
            match polarity {
                Polarity::Pos => pos.set(i, j, g),
                Polarity::Neg => neg.set(i, j, g),
            }
        }
    }
    ConductanceTile::new(pos, neg).expect("both matrices have the design shape")
}

fn annotated(n: &Netlist, key: &str) -> CliResult<Option<f64>> {
    n.annotation(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| input(format!("annotation {key} = `{v}` is not a number")))
        })
        .transpose()
}

/// Design and electrical spec the netlist claims to implement: config
/// constants for the design, overridden by the netlist's own annotations.
fn spec_for(ctx: &Ctx, n: &Netlist, design: Option<&str>) -> CliResult<(DesignPoint, CheckSpec)> {
    let key = match design.or(n.annotation("design_key")) {
        Some(k) => k.to_string(),
        None => return Err(input("netlist has no design_key annotation; pass --design")),
    };
    let dp: DesignPoint = key.parse().map_err(input)?;
    let mut spec = CheckSpec::from_resolved(&ctx.config.resolve(&dp).map_err(input)?);
    if let Some(v) = annotated(n, "wire_r")? {
        spec.wire_r = v;
    }
    if let Some(v) = annotated(n, "access_r")? {
        spec.access_resistance = v;
    }
    if let Some(v) = annotated(n, "vdd")? {
        spec.vdd = v;
    }
    Ok((dp, spec))
}

#[derive(Serialize)]
struct VerifyOutput {
    netlist: String,
    design: String,
    passed: bool,
    errors: usize,
    warnings: usize,
    simulated: bool,
    diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize)]
struct CampaignOutput {
    netlist: String,
    design: String,
    injected: usize,
    detected: usize,
    missed: Vec<String>,
    rows: Vec<CampaignRow>,
}

pub fn verify(ctx: &Ctx, a: &VerifyArgs) -> CliResult<u8> {
    crate::util::require_file(&a.netlist)?;
    let text = read_text(&a.netlist)?;
    let shown = a.netlist.display().to_string();

    let parsed = parse_spice(&text);
    let (dp, spec) = match &parsed {
        Ok(n) => spec_for(ctx, n, a.design.as_deref())?,
        Err(e) if a.design.is_none() => return Err(input(format!("{shown}: {e}"))),
        Err(_) => {
            let dp: DesignPoint = a.design.as_deref().unwrap_or_default().parse().map_err(input)?;
            (dp, CheckSpec::from_resolved(&ctx.config.resolve(&dp).map_err(input)?))
        }
    };
    let bounds = DynamicBounds::default();
    let vectors = default_vectors(dp.rows, spec.vdd, ctx.seed, a.vectors);

    if a.campaign {
        let n = parsed.map_err(|e| input(format!("{shown}: {e}")))?;
        let pre = static_check(&n, &dp, &spec);
        if has_errors(&pre) {
            for d in pre.iter().filter(|d| d.is_error()) {
                eprintln!("{d}");
            }
            return Err(crate::util::finding(format!(
                "{shown} does not pass its own checks; a campaign needs a clean netlist"
            )));
        }
        let tile = decode_tile(&n, &dp, &spec);
        let seeds: Vec<u64> = (0..a.seeds).collect();
        let rows = ctx
            .pool()?
            .install(|| detection_campaign(&n, &dp, &tile, &spec, &bounds, &vectors, &FaultKind::ALL, &seeds))
            .map_err(input)?;
        let missed: Vec<String> = rows
            .iter()
            .filter(|r| !r.detected)
            .map(|r| format!("{}#{}", r.fault.kind, r.fault.seed))
            .collect();
        let out = CampaignOutput {
            netlist: shown,
            design: dp.key(),
            injected: rows.len(),
            detected: rows.len() - missed.len(),
            missed,
            rows,
        };
        ctx.emit(&out, || {
            let mut s = format!("{}: {} of {} injected faults detected\n", out.design, out.detected, out.injected);
            for k in FaultKind::ALL {
                let of: Vec<&CampaignRow> = out.rows.iter().filter(|r| r.fault.kind == k).collect();
                let hit = of.iter().filter(|r| r.detected).count();
                s += &format!("  {:<26} {hit}/{}\n", k.as_str(), of.len());
            }
            for m in &out.missed {
                s += &format!("  missed {m}\n");
            }
            s
        });
        return Ok(if out.missed.is_empty() { 0 } else { 1 });
    }

    let mut diags = static_check_text(&text, &dp, &spec);
    let mut simulated = false;
    if !a.static_only && !has_errors(&diags) {
        if let Ok(n) = &parsed {
            let tile = decode_tile(n, &dp, &spec);
            let dynamic = ctx
                .pool()?
                .install(|| dynamic_check(n, &dp, &tile, &vectors, &spec, &bounds))
                .map_err(input)?;
            diags.extend(dynamic);
            simulated = true;
        }
    }
    let errors = diags.iter().filter(|d| d.is_error()).count();
    let out = VerifyOutput {
        netlist: shown,
        design: dp.key(),
        passed: errors == 0,
        errors,
        warnings: diags.len() - errors,
        simulated,
        diagnostics: diags,
    };
    ctx.emit(&out, || {
        let mut s = String::new();
        for d in &out.diagnostics {
            s += &format!("{d}\n");
        }
        s += &format!(
            "{}: {} ({} errors, {} warnings{})\n",
            out.netlist,
            if out.passed { "ok" } else { "FAILED" },
            out.errors,
            out.warnings,
            if out.simulated { ", simulated" } else { "" }
        );
        s
    });
    Ok(if out.passed { 0 } else { 1 })
}
