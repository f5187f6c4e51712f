use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use tracing::info;
use xbar_core::design_space::enumerate_grid;
use xbar_core::dse::{save_repository, seed_paper_table, to_csv, Repository};
use xbar_core::paa::{evaluate_design, EvalParams, EvalResult, Fidelity};
use xbar_core::{DesignPoint, GridSpec, Mode};

use crate::manifest::{PointFailure, RunManifest};
use crate::util::{finding, input, load_images, load_weights, CliResult, Ctx};
use crate::GridArgs;

pub fn grid_from(a: &GridArgs) -> CliResult<GridSpec> {
    if a.table2 {
        let mode: Mode = a.mode.parse().map_err(input)?;
        return Ok(GridSpec::table2_shape(mode));
    }
    match &a.grid {
        Some(p) => {
            crate::util::require_file(p)?;
            GridSpec::load(p).map_err(input)
        }
        None => Ok(GridSpec::default()),
    }
}

pub fn enumerate(ctx: &Ctx, a: &GridArgs) -> CliResult<u8> {
    let grid = grid_from(a)?;
    ctx.config.check_grid(&grid).map_err(input)?;
    let keys: Vec<String> = enumerate_grid(&grid).map_err(input)?.iter().map(DesignPoint::key).collect();
    ctx.emit(&keys, || keys.join("\n"));
    Ok(0)
}

#[derive(Args)]
pub struct EvalInputs {
    /// MLP weights (JSON); synthetic weights from --seed when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// IDX image file (optionally gzipped).
    #[arg(long)]
    images: PathBuf,
    /// IDX label file (optionally gzipped).
    #[arg(long)]
    labels: PathBuf,
    /// Evaluate only the first N images.
    #[arg(long)]
    n_images: Option<usize>,
    /// ideal or parasitic.
    #[arg(long, default_value = "ideal")]
    fidelity: String,
    /// Where to write the run manifest; defaults to `<out>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Design key or `tech:device:bitcell:RxC:mode[:HxV]` string.
    #[arg(long)]
    design: String,
    #[command(flatten)]
    inputs: EvalInputs,
    /// Also write the result as a one-entry repository (CSV or JSONL by extension).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    inputs: EvalInputs,
    /// Repository file to write (CSV, or JSONL for .jsonl).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SeedArgs {
    /// Repository file to write; prints CSV to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Prepared {
    weights: xbar_core::paa::MlpWeights,
    data: xbar_core::paa::Dataset,
    params: EvalParams,
    manifest: RunManifest,
}

fn prepare(ctx: &Ctx, command: &str, i: &EvalInputs) -> CliResult<Prepared> {
    let fidelity: Fidelity = i.fidelity.parse().map_err(input)?;
    let weights = load_weights(i.weights.as_deref(), ctx.seed)?;
    let data = load_images(&i.images, &i.labels, i.n_images)?;
    let mut manifest = RunManifest::new(command, ctx);
    if let Some(p) = &ctx.config_path {
        manifest.digest_input(p)?;
    }
    if let Some(p) = &i.weights {
        manifest.digest_input(p)?;
    } else {
        manifest.digest_setting("synthetic_weights", &weights.to_json());
    }
    manifest.digest_input(&i.images)?;
    manifest.digest_input(&i.labels)?;
    manifest.digest_setting("fidelity", &fidelity);
    manifest.digest_setting("n_images", &data.len());
    Ok(Prepared {
        weights,
        data,
        params: EvalParams::new(ctx.config.clone(), fidelity),
        manifest,
    })
}

fn manifest_path(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn eval_one(p: &Prepared, dp: &DesignPoint) -> Result<EvalResult, String> {
    evaluate_design(dp, &p.weights, &p.data.images, &p.data.labels, &p.params).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    design: String,
    area_um2: f64,
    accuracy_pct: f64,
    avg_power_w: f64,
    n_images: usize,
    fidelity: Fidelity,
    source: &'a str,
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> CliResult<u8> {
    let dp: DesignPoint = a.design.parse().map_err(input)?;
    ctx.config.resolve(&dp).map_err(input)?;
    let started = Instant::now();
    let mut p = prepare(ctx, "eval", &a.inputs)?;
    let r = ctx.pool()?.install(|| eval_one(&p, &dp)).map_err(finding)?;
    if let Some(out) = &a.out {
        let repo = Repository::from_results([r.clone()]).map_err(input)?;
        save_repository(&repo, out).map_err(input)?;
        p.manifest.outputs.push(out.display().to_string());
    }
    p.manifest.points = 1;
    p.manifest.succeeded = 1;
    p.manifest.duration_s = started.elapsed().as_secs_f64();
    if let Some(m) = manifest_path(a.inputs.manifest.as_deref(), a.out.as_deref()) {
        p.manifest.write(&m)?;
    }
    let o = EvalOutput {
        design: r.key(),
        area_um2: r.area_um2,
        accuracy_pct: r.accuracy_pct,
        avg_power_w: r.avg_power_w,
        n_images: r.n_images,
        fidelity: p.params.fidelity,
        source: r.source.as_str(),
    };
    ctx.emit(&o, || {
        format!(
            "{}\n  accuracy  {:.2} %\n  power     {:.6} W\n  area      {:.1} um^2\n  images    {}\n",
            o.design, o.accuracy_pct, o.avg_power_w, o.area_um2, o.n_images
        )
    });
    Ok(0)
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    out: String,
    points: usize,
    succeeded: usize,
    failures: &'a [PointFailure],
    duration_s: f64,
}

pub fn sweep(ctx: &Ctx, a: &SweepArgs) -> CliResult<u8> {
    let grid = grid_from(&a.grid)?;
    ctx.config.check_grid(&grid).map_err(input)?;
    let points = enumerate_grid(&grid).map_err(input)?;
    let started = Instant::now();
    let mut p = prepare(ctx, "sweep", &a.inputs)?;
    p.manifest.digest_setting("grid", &grid);
    info!(points = points.len(), parallel = ctx.parallel, "sweeping");

    let outcomes: Vec<(DesignPoint, Result<EvalResult, String>)> = ctx
        .pool()?
        .install(|| points.par_iter().map(|dp| (*dp, eval_one(&p, dp))).collect());

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (dp, r) in outcomes {
        match r {
            Ok(r) => results.push(r),
            Err(e) => failures.push(PointFailure { design: dp.key(), error: e }),
        }
    }
    failures.sort_by(|x, y| x.design.cmp(&y.design));
    let repo = Repository::from_results(results).map_err(input)?;
    save_repository(&repo, &a.out).map_err(input)?;

    let m = &mut p.manifest;
    m.outputs.push(a.out.display().to_string());
    m.points = points.len();
    m.succeeded = repo.len();
    m.failures = failures;
    m.duration_s = started.elapsed().as_secs_f64();
    let mpath = manifest_path(a.inputs.manifest.as_deref(), Some(&a.out)).expect("sweep always has an output");
    m.write(&mpath)?;

    let o = SweepOutput {
        out: a.out.display().to_string(),
        points: m.points,
        succeeded: m.succeeded,
        failures: &m.failures,
        duration_s: m.duration_s,
    };
    ctx.emit(&o, || {
        let mut s = format!(
            "{} of {} points evaluated in {:.1} s -> {}\n",
            o.succeeded, o.points, o.duration_s, o.out
        );
        for f in o.failures {
            s += &format!("  failed {}: {}\n", f.design, f.error);
        }
        s
    });
    Ok(if o.failures.is_empty() { 0 } else { 1 })
}

pub fn seed_paper(ctx: &Ctx, a: &SeedArgs) -> CliResult<u8> {
    let repo = seed_paper_table();
    match &a.out {
        Some(out) => {
            save_repository(&repo, out).map_err(input)?;
            #[derive(Serialize)]
            struct Seeded {
                out: String,
                entries: usize,
            }
            let o = Seeded {
                out: out.display().to_string(),
                entries: repo.len(),
            };
            ctx.emit(&o, || format!("wrote {} entries to {}", o.entries, o.out));
        }
        None => {
            let text = to_csv(&repo).map_err(input)?;
            if ctx.json {
                let rows: Vec<&EvalResult> = repo.iter().collect();
                ctx.emit(&rows, String::new);
            } else {
                print!("{text}");
            }
        }
    }
    Ok(0)
}
