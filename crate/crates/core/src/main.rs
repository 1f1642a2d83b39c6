use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use solid_hhg::config::{parse_config, RunConfig};
use solid_hhg::matels::MatrixElements;
use solid_hhg::pipeline::{self, write_json};
use solid_hhg::units::hartree_to_ev;
use solid_hhg::{observables, plot, pulse, Result};

#[derive(Parser)]
#[command(name = "solid-hhg", version, about = "High-harmonic generation from a 1D model crystal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults are used for anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (overrides `run.threads`).
    #[arg(long, env = "HHG_THREADS")]
    threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the potential and write the band structure.
    Bands(Common),
    /// Write momentum matrices and overlap unitarity defects.
    Matels(Common),
    /// Full simulation: currents in both gauges, spectrum, gauge report.
    Run(Common),
    /// Full simulation, reporting only the gauge-transformation checks.
    GaugeCheck(Common),
    /// Spectrum from an existing `currents.csv` in the output directory.
    Spectrum(Common),
}

struct Context {
    config: RunConfig,
    out_dir: PathBuf,
    threads: usize,
    pool: rayon::ThreadPool,
}

fn context(common: &Common) -> Result<Context> {
    let mut config = match &common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if common.plot {
        config.output.svg = true;
    }
    let out_dir = common.out_dir.clone().unwrap_or_else(|| config.run.out_dir.clone());
    let requested = common.threads.unwrap_or(config.run.threads);
    let threads = if requested == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        requested
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| solid_hhg::Error::Config(format!("thread pool: {e}")))?;
    Ok(Context {
        config,
        out_dir,
        threads,
        pool,
    })
}

fn bands(ctx: &Context) -> Result<bool> {
    let stage = pipeline::band_stage(&ctx.config)?;
    pipeline::ensure_dir(&ctx.out_dir)?;
    pipeline::write_bands(&ctx.out_dir.join("bands.csv"), &stage.bands)?;
    let meta = serde_json::json!({
        "config": ctx.config,
        "depth_scale": stage.potential.depth_scale,
        "raw_gap_ev": stage.calibration.map(|c| c.raw_gap_ev).unwrap_or(hartree_to_ev(stage.gap.0)),
        "achieved_gap_ev": hartree_to_ev(stage.gap.0),
        "gap_k": stage.gap.1,
    });
    write_json(&ctx.out_dir.join("bands_metadata.json"), &meta)?;
    println!("direct gap {:.6} eV at k = {:.6}", hartree_to_ev(stage.gap.0), stage.gap.1);
    Ok(true)
}

fn matels(ctx: &Context) -> Result<bool> {
    let stage = pipeline::band_stage(&ctx.config)?;
    let grid = &stage.bands.grid;
    let pulse = ctx.config.pulse_spec();
    let max_shift = pulse::gauge_times(&pulse, grid.dk)
        .iter()
        .map(|g| g.shift.abs())
        .max()
        .unwrap_or(0);
    let sources: Vec<usize> = (0..grid.unique_len()).collect();
    let m = MatrixElements::compute(&stage.bands, &sources, max_shift);
    pipeline::ensure_dir(&ctx.out_dir)?;
    pipeline::write_momentum(&ctx.out_dir.join("matels_k.csv"), &stage.bands, &m)?;
    pipeline::write_overlap_defects(&ctx.out_dir.join("matels_shift.csv"), &m)?;
    let worst = m.overlaps.defect_by_shift().iter().map(|d| d.1).fold(0.0, f64::max);
    println!("max overlap unitarity defect {worst:e} over shifts |s| <= {max_shift}");
    Ok(true)
}

fn report(sim: &pipeline::Simulation) {
    for c in sim.checks() {
        println!(
            "{:<22} {:<4} value {:e} (threshold {:e})",
            c.name,
            if c.pass { "ok" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    let d = &sim.discrepancy;
    println!("delta_J {:e}  delta_j {:e}  delta_P {:e}", d.delta_total, d.delta_intra, d.delta_inter);
}

fn run(ctx: &Context) -> Result<bool> {
    let summary = pipeline::run_pipeline(&ctx.config, &ctx.out_dir, ctx.threads)?;
    report(&summary.simulation);
    for p in &summary.written {
        println!("wrote {}", p.display());
    }
    Ok(summary.simulation.passed())
}

fn gauge_check(ctx: &Context) -> Result<bool> {
    let sim = pipeline::simulate(&ctx.config)?;
    pipeline::ensure_dir(&ctx.out_dir)?;
    let path = ctx.out_dir.join("gauge_report.csv");
    pipeline::write_gauge_report(&path, &sim.shift_checks)?;
    report(&sim);
    println!("wrote {}", path.display());
    let boundary_ok = sim.boundary_error <= pipeline::BOUNDARY_TOLERANCE;
    Ok(sim.shift_failures() == 0 && boundary_ok)
}

fn spectrum(ctx: &Context) -> Result<bool> {
    let record = pipeline::read_currents(&ctx.out_dir.join("currents.csv"))?;
    let omega = ctx.config.pulse_spec().omega;
    let points = ctx.config.run.spectrum_points;
    let times = record.times();
    let v = observables::hhg_spectrum(&times, &record.series(|s| s.velocity.total), omega, points)?;
    let l = observables::hhg_spectrum(&times, &record.series(|s| s.length.total), omega, points)?;
    let path = ctx.out_dir.join("spectrum.csv");
    pipeline::write_spectrum(&path, &v, &l)?;
    println!("wrote {}", path.display());
    if ctx.config.output.svg {
        let svg = ctx.out_dir.join("spectrum.svg");
        plot::write_spectrum_svg(&svg, &v)?;
        println!("wrote {}", svg.display());
    }
    Ok(v.parseval_error <= pipeline::PARSEVAL_TOLERANCE)
}

fn dispatch(command: &Command) -> Result<bool> {
    let (common, f): (&Common, fn(&Context) -> Result<bool>) = match command {
        Command::Bands(c) => (c, bands),
        Command::Matels(c) => (c, matels),
        Command::Run(c) => (c, run),
        Command::GaugeCheck(c) => (c, gauge_check),
        Command::Spectrum(c) => (c, spectrum),
    };
    let ctx = context(common)?;
    ctx.pool.install(|| f(&ctx))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
