//! Batch front-end: parses one JSON config, runs the requested subcommand,
//! writes CSV/JSON artifacts, prints a one-line summary per snapshot.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error,
//! 3 runtime error.

mod config;
mod validate_battery;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use niche_core::geometry::Domain;
use niche_core::io;
use niche_core::particle::{self, phantom, HistGrid, SimConfig};
use niche_core::pde;
use niche_core::validate::compare_tables;

use config::{parse_config, ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "niche",
    about = "Mixed Brownian/Levy dispersal laboratory: particle ensembles, a mixed local/nonlocal heat solver and identity checks"
)]
struct Args {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed recorded in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Suppress per-snapshot summaries.
    #[arg(long)]
    quiet: bool,
    /// Worker threads (also honored from NICHE_WORKERS; default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn run(args: &Args) -> Result<u8, Failure> {
    let workers = args.workers.or_else(|| {
        std::env::var("NICHE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(anyhow::anyhow!("thread pool: {e}")))?;
    }

    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))
        .map_err(|e| Failure::Config(ConfigError::OutOfRange {
            field: "config".into(),
            reason: format!("{e:#}"),
        }))?;
    let cfg = parse_config(&text)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::Runtime)?;
    // archive the resolved configuration next to the artifacts
    io::write_json(&args.out.join("run_config.json"), &cfg.to_json())
        .map_err(|e| Failure::Runtime(e.into()))?;
    if !args.quiet {
        println!("running {} from {}", cfg.subcommand(), args.config.display());
    }

    match cfg {
        RunConfig::Simulate(c) => cmd_simulate(args, c).map_err(Failure::Runtime),
        RunConfig::Solve(c) => cmd_solve(args, c).map_err(Failure::Runtime),
        RunConfig::Phantom(c) => cmd_phantom(args, c).map_err(Failure::Runtime),
        RunConfig::Compare(c) => cmd_compare(args, c).map_err(Failure::Runtime),
        RunConfig::Constants(c) => cmd_constants(args, c).map_err(Failure::Runtime),
        RunConfig::Validate(c) => cmd_validate(args, c).map_err(Failure::Runtime),
    }
}

fn note_lambda(quiet: bool, params: &niche_core::ProcessParams) {
    if !quiet && !params.lambda_is_integer() {
        println!(
            "note: lambda = h^(s-1) = {:.6} is not an integer; the process is defined for real lambda",
            params.lambda()
        );
    }
}

fn cmd_simulate(args: &Args, c: config::SimulateConfig) -> anyhow::Result<u8> {
    note_lambda(args.quiet, &c.process);
    let hist = HistGrid::new(c.domain.clone(), c.bins.clone())?;
    let sim = SimConfig {
        params: c.process,
        domain: c.domain,
        n_particles: c.particles,
        t_final: c.t_final,
        initial: c.initial,
        seed: args.seed.unwrap_or(c.seed),
        hist,
        snapshot_times: c.snapshot_times,
    };
    let out = particle::run_ensemble(&sim)?;
    for h in &out.snapshots {
        let path = args.out.join(format!("hist_step{:08}.csv", h.step));
        io::write_histogram_csv(&path, h)?;
        let mass: f64 = (0..h.counts.len())
            .map(|i| h.density[i] * h.grid.cell_volume(i))
            .sum();
        if !args.quiet {
            println!(
                "snapshot step={} t={} mass={} particles={} -> {}",
                h.step,
                h.time,
                mass,
                h.total_count(),
                path.display()
            );
        }
    }
    Ok(0)
}

fn cmd_solve(args: &Args, c: pde::SolveConfig) -> anyhow::Result<u8> {
    let snaps = pde::solve(&c)?;
    for s in &snaps {
        let base = format!("field_step{:08}", s.step);
        let csv = args.out.join(format!("{base}.csv"));
        io::write_field_csv(&csv, &s.field)?;
        let meta = io::FieldMeta {
            time: s.time,
            step: s.step,
            mass: s.mass,
            dt: s.dt,
            neumann_local_max: s.neumann_local_max,
            neumann_nonlocal_max: s.neumann_nonlocal_max,
            grid: io::GridMeta {
                dx: s.field.grid.dx,
                interior_cells: s.field.grid.n_interior(),
                exterior_cells: s.field.grid.exterior_cells.len(),
                r_trunc: s.field.grid.r_trunc,
                domain: s.field.grid.domain.clone(),
            },
        };
        io::write_json(&args.out.join(format!("{base}.meta.json")), &meta)?;
        if !args.quiet {
            println!(
                "snapshot step={} t={} mass={} dt={} neumann_local={:.3e} neumann_nonlocal={:.3e} -> {}",
                s.step, s.time, s.mass, s.dt, s.neumann_local_max, s.neumann_nonlocal_max,
                csv.display()
            );
        }
    }
    Ok(0)
}

fn cmd_phantom(args: &Args, c: config::PhantomCmdConfig) -> anyhow::Result<u8> {
    note_lambda(args.quiet, &c.process);
    let cfg = phantom::PhantomConfig {
        params: c.process,
        domain: c.domain,
        cells: c.cells,
        t_final: c.t_final,
        initial: c.initial,
        snapshot_times: c.snapshot_times,
        band_factor: c.band_factor,
        quad_tol: c.quad_tol,
    };
    let snaps = phantom::run_phantom_process(&cfg)?;
    for s in &snaps {
        let path = args.out.join(format!("phantom_step{:08}.csv", s.step));
        io::write_field_csv(&path, &s.field)?;
        if !args.quiet {
            println!(
                "snapshot step={} t={} mass={} -> {}",
                s.step,
                s.time,
                s.mass,
                path.display()
            );
        }
    }
    Ok(0)
}

fn cmd_compare(args: &Args, c: config::CompareConfig) -> anyhow::Result<u8> {
    let left = io::read_density_csv(Path::new(&c.left))?;
    let right = io::read_density_csv(Path::new(&c.right))?;
    let l1 = compare_tables(&left, &right)?;
    println!("L1 distance = {l1}");
    io::write_json(
        &args.out.join("compare.json"),
        &serde_json::json!({ "left": c.left, "right": c.right, "l1": l1 }),
    )?;
    if let Some(tol) = c.tolerance {
        if l1 > tol {
            eprintln!("L1 distance {l1} exceeds tolerance {tol}");
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_constants(args: &Args, c: config::ConstantsConfig) -> anyhow::Result<u8> {
    let seed = args.seed.unwrap_or(c.seed);
    let mut out = serde_json::Map::new();
    for &n in &c.dims {
        let mut entry = serde_json::Map::new();
        entry.insert("c_o".into(), serde_json::json!(niche_core::validate::compute_c_o(n)));
        let hc = if n == 1 {
            niche_core::validate::compute_c_star_1d()
        } else {
            niche_core::validate::compute_c_star_mc(n, c.mc_samples, seed + n as u64)
        };
        if !args.quiet {
            println!(
                "n={n}: c_o={:.12} c_star={:.6} (+-{:.2e}) a_0={:.6} b_0={:.6} varpi={:.6}",
                niche_core::validate::compute_c_o(n),
                hc.c_star,
                hc.c_star_stderr,
                hc.a_0,
                hc.b_0,
                hc.varpi
            );
        }
        entry.insert("halfspace".into(), serde_json::to_value(&hc)?);
        out.insert(format!("n={n}"), serde_json::Value::Object(entry));
    }
    io::write_json(&args.out.join("constants.json"), &serde_json::Value::Object(out))?;
    Ok(0)
}

fn cmd_validate(args: &Args, c: config::ValidateConfig) -> anyhow::Result<u8> {
    let seed = args.seed.unwrap_or(c.seed);
    let report = validate_battery::run_battery(&c, seed, args.quiet)?;
    io::write_json(&args.out.join("report.json"), &report)?;
    let failed = report.failures().count();
    if !args.quiet || failed > 0 {
        println!(
            "validation: {} entries, {} failed -> {}",
            report.entries.len(),
            failed,
            args.out.join("report.json").display()
        );
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}

/// Domains used by the default validation battery.
pub(crate) fn default_domain_1d() -> Domain {
    Domain::interval(0.0, 1.0).unwrap()
}

pub(crate) fn default_domain_2d() -> Domain {
    Domain::rectangle(
        niche_core::Point::x2(0.0, 0.0),
        niche_core::Point::x2(1.0, 1.0),
    )
    .unwrap()
}
