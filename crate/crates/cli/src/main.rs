mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use mincurvfg::planner::{run_lap, LapOutcome, LapResult, PlannerConfig};
use mincurvfg::track::{build_sdf, write_track, SdfGrid, Track, TrackKind};
use thiserror::Error;

use config::{track_hash, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Output(String),
    #[error("{0}")]
    Planner(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) | CliError::Output(_) => 3,
            CliError::Planner(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "mincurvfg", version, about = "Factor-graph receding-horizon planner for 1:43 racing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the signed distance field of a track and write the binary cache.
    Sdf(SdfArgs),
    /// Drive one lap and write the trajectory CSV, JSON report and SVG plot.
    Plan(PlanArgs),
    /// Drive the lap with and without curvature factors and compare.
    Bench(BenchArgs),
    /// Track utilities.
    Tracks {
        #[command(subcommand)]
        command: TracksCommand,
    },
}

#[derive(Subcommand)]
enum TracksCommand {
    /// Write a built-in track as a centerline CSV.
    Gen {
        kind: TrackKind,
        #[arg(long)]
        out: PathBuf,
        /// Waypoint spacing, meters.
        #[arg(long, default_value_t = 0.01)]
        spacing: f64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; missing sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Distance-field cell size, meters.
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Args)]
struct SdfArgs {
    #[command(flatten)]
    common: Common,
    /// Centerline CSV; overrides the config's track.
    #[arg(long)]
    track: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_curvature: bool,
    /// Write zero for wall-clock times so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_timing: bool,
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(r) = common.resolution {
        if !(r > 0.0 && r.is_finite()) {
            return Err(CliError::Usage(format!("--resolution must be positive, got {r}")));
        }
        config.planner.sdf_resolution = r;
    }
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

/// Loads the cached field when its resolution matches, otherwise builds it
/// and writes the cache if a path is configured.
fn obtain_sdf(config: &RunConfig, track: &Track) -> Result<(Arc<SdfGrid>, &'static str), CliError> {
    let res = config.planner.sdf_resolution;
    if let Some(path) = &config.track.sdf {
        if path.exists() {
            let grid = SdfGrid::load(path).map_err(|e| CliError::Input(e.to_string()))?;
            if grid.resolution == res {
                return Ok((Arc::new(grid), "loaded"));
            }
        }
    }
    let grid = build_sdf(track, res).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(path) = &config.track.sdf {
        grid.save(path).map_err(|e| CliError::Output(e.to_string()))?;
    }
    Ok((Arc::new(grid), "built"))
}

fn lap_error(lap: &LapResult) -> Option<CliError> {
    match &lap.outcome {
        LapOutcome::Completed => None,
        LapOutcome::StepLimit => Some(CliError::Planner(format!(
            "step limit reached after {:.2} of {:.2} m",
            lap.progress, lap.track_length
        ))),
        LapOutcome::Aborted { step, reason } => Some(CliError::Planner(format!("aborted at step {step}: {reason}"))),
    }
}

fn cmd_sdf(args: &SdfArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.common)?;
    if let Some(t) = &args.track {
        config.track.centerline = Some(t.clone());
    }
    let track = config.load_track()?;
    let grid = build_sdf(&track, config.planner.sdf_resolution).map_err(|e| CliError::Input(e.to_string()))?;
    grid.save(&args.out).map_err(|e| CliError::Output(e.to_string()))?;
    println!(
        "{}: {}x{} cells at {} m, origin ({}, {})",
        args.out.display(),
        grid.width,
        grid.height,
        grid.resolution,
        grid.origin[0],
        grid.origin[1]
    );
    Ok(())
}

fn drive(config: &PlannerConfig, track: &Track, sdf: Arc<SdfGrid>, timing: bool) -> Result<LapResult, CliError> {
    let mut lap = run_lap(config, track, sdf).map_err(|e| CliError::Input(e.to_string()))?;
    if !timing {
        output::strip_timing(&mut lap);
    }
    Ok(lap)
}

fn cmd_plan(args: &PlanArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.common)?;
    if args.no_curvature {
        config.planner.curvature = false;
    }
    let track = config.load_track()?;
    let (sdf, sdf_source) = obtain_sdf(&config, &track)?;
    let lap = drive(&config.planner_config(), &track, sdf, !args.no_timing)?;

    create_dir(&args.out)?;
    let hash = config.hash();
    let thash = track_hash(&track);
    output::write_file(&args.out.join("plan.csv"), &output::plan_csv(&lap, config.planner.ts))?;
    let report = output::Report {
        outcome: &lap.outcome,
        metrics: &lap.metrics,
        steps_count: lap.steps.len(),
        progress: lap.progress,
        track_length: lap.track_length,
        bounds: output::bounds_audit(&lap, &config),
        sdf: sdf_source,
        config_hash: &hash,
        track_hash: &thash,
        config: &config,
        steps: output::step_rows(&lap),
    };
    output::write_file(&args.out.join("report.json"), &output::to_json(&report))?;
    output::write_file(&args.out.join("plan.svg"), &output::svg(&track, &lap))?;

    let m = &lap.metrics;
    println!(
        "{}: {} steps, sum curvature {:.2}, distance {:.3} m, mean speed {:.3} m/s, mean solve {:.2} ms",
        output::outcome_label(&lap.outcome),
        lap.steps.len(),
        m.cumulative_curvature,
        m.distance,
        m.mean_speed,
        m.mean_solve_ms
    );
    match lap_error(&lap) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Worker threads from `MINCURVFG_THREADS`, defaulting to the available cores.
fn thread_budget() -> Result<usize, CliError> {
    match std::env::var("MINCURVFG_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("MINCURVFG_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let config = load_config(&args.common)?;
    let threads = thread_budget()?;
    let track = config.load_track()?;
    let (sdf, sdf_source) = obtain_sdf(&config, &track)?;
    let mut on = config.planner_config();
    on.planner.curvature = true;
    let mut off = on;
    off.planner.curvature = false;
    let timing = !args.no_timing;

    let (lap_on, lap_off) = if threads >= 2 {
        std::thread::scope(|scope| {
            let a = scope.spawn(|| drive(&on, &track, sdf.clone(), timing));
            let b = scope.spawn(|| drive(&off, &track, sdf.clone(), timing));
            (a.join().expect("lap thread"), b.join().expect("lap thread"))
        })
    } else {
        (drive(&on, &track, sdf.clone(), timing), drive(&off, &track, sdf.clone(), timing))
    };
    let (lap_on, lap_off) = (lap_on?, lap_off?);

    create_dir(&args.out)?;
    let hash = config.hash();
    let thash = track_hash(&track);
    output::write_file(&args.out.join("bench.csv"), &output::bench_csv(&lap_on, &lap_off, &hash, &thash))?;
    let report = output::BenchReport {
        runs: [
            output::bench_run(&lap_on, true, &config, &hash, &thash),
            output::bench_run(&lap_off, false, &config, &hash, &thash),
        ],
        delta: output::bench_delta(&lap_on.metrics, &lap_off.metrics),
        sdf: sdf_source,
        config: &config,
    };
    output::write_file(&args.out.join("bench.json"), &output::to_json(&report))?;
    for (name, lap) in [("curvature", &lap_on), ("no_curvature", &lap_off)] {
        output::write_file(
            &args.out.join(format!("plan_{name}.csv")),
            &output::plan_csv(lap, config.planner.ts),
        )?;
        let m = &lap.metrics;
        println!(
            "{name:>12}: {} steps={} sum_curvature={:.2} mean_speed={:.3} mean_solve_ms={:.2}",
            output::outcome_label(&lap.outcome),
            lap.steps.len(),
            m.cumulative_curvature,
            m.mean_speed,
            m.mean_solve_ms
        );
    }
    match lap_error(&lap_on).or_else(|| lap_error(&lap_off)) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_tracks_gen(kind: TrackKind, out: &Path, spacing: f64) -> Result<(), CliError> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(CliError::Usage(format!("--spacing must be positive, got {spacing}")));
    }
    let track = kind.build(spacing).map_err(|e| CliError::Input(e.to_string()))?;
    let mut buf = Vec::new();
    write_track(&track, &mut buf).map_err(|e| CliError::Output(e.to_string()))?;
    std::fs::write(out, buf).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    println!("{}: {kind}, {} waypoints, {:.3} m", out.display(), track.len(), track.length());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sdf(a) => cmd_sdf(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Tracks {
            command: TracksCommand::Gen { kind, out, spacing },
        } => cmd_tracks_gen(*kind, out, *spacing),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
