use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mincurvfg::metrics::{lap_metrics, LapMetrics};
use mincurvfg::planner::{LapOutcome, LapResult};
use mincurvfg::track::{Point, Track};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const PLAN_HEADER: &str = "step,t,x,y,vx,vy,phi,omega,delta,d,solve_ms";

/// Zeroes every wall-clock quantity so that outputs depend on the inputs only.
pub fn strip_timing(lap: &mut LapResult) {
    for s in &mut lap.steps {
        s.solve_ms = 0.0;
        s.stats.wall_time = 0.0;
    }
    lap.metrics = lap_metrics(&lap.states, &lap.solve_ms());
}

/// One row per state; the last row holds the final state and leaves the
/// control and timing fields empty.
pub fn plan_csv(lap: &LapResult, ts: f64) -> String {
    let mut out = String::from(PLAN_HEADER);
    out.push('\n');
    for (j, s) in lap.states.iter().enumerate() {
        let t = j as f64 * ts;
        let _ = write!(out, "{j},{t},{},{},{},{},{},{}", s.x, s.y, s.vx, s.vy, s.phi, s.omega);
        match (lap.controls.get(j), lap.steps.get(j)) {
            (Some(u), Some(r)) => {
                let _ = writeln!(out, ",{},{},{}", u.delta, u.d, r.solve_ms);
            }
            _ => out.push_str(",,,\n"),
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub solve_ms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: mincurvfg::fg::Termination,
    pub delta: f64,
    pub d: f64,
    pub speed: f64,
    pub station: f64,
    pub prediction_error: f64,
}

#[derive(Debug, Serialize)]
pub struct BoundsAudit {
    pub exact: f64,
    pub buffered_5pct: f64,
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub outcome: &'a LapOutcome,
    pub metrics: &'a LapMetrics,
    pub steps_count: usize,
    pub progress: f64,
    pub track_length: f64,
    pub bounds: BoundsAudit,
    pub sdf: &'a str,
    pub config_hash: &'a str,
    pub track_hash: &'a str,
    pub config: &'a RunConfig,
    pub steps: Vec<StepRow>,
}

pub fn step_rows(lap: &LapResult) -> Vec<StepRow> {
    lap.steps
        .iter()
        .zip(&lap.controls)
        .zip(&lap.states[1..])
        .map(|((r, u), s)| StepRow {
            step: r.step,
            t: r.t,
            solve_ms: r.solve_ms,
            iterations: r.stats.iterations,
            converged: r.stats.converged,
            termination: r.stats.termination,
            delta: u.delta,
            d: u.d,
            speed: s.speed(),
            station: r.station,
            prediction_error: r.prediction_error,
        })
        .collect()
}

pub fn bounds_audit(lap: &LapResult, config: &RunConfig) -> BoundsAudit {
    BoundsAudit {
        exact: lap.bounds_fraction(&config.bounds, 0.0),
        buffered_5pct: lap.bounds_fraction(&config.bounds, 0.05),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn speed_color(v: f64, max: f64) -> String {
    let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
    let hue = 240.0 * (1.0 - t);
    format!("hsl({hue:.0},90%,45%)")
}

fn polyline(points: &[Point], closed: bool, style: &str) -> String {
    let mut s = String::from("<polyline points=\"");
    let n = points.len();
    for p in points.iter().chain(if closed { points.first() } else { None }) {
        let _ = write!(s, "{:.4},{:.4} ", p.x, p.y);
    }
    if n > 0 {
        s.pop();
    }
    let _ = writeln!(s, "\" {style}/>");
    s
}

/// Boundaries, centerline and the driven trace colored from blue (slow) to
/// red (fast).
pub fn svg(track: &Track, lap: &LapResult) -> String {
    let (lo, hi) = track.bounding_box();
    let margin = 0.1;
    let (x0, y0) = (lo.x - margin, lo.y - margin);
    let (w, h) = (hi.x - lo.x + 2.0 * margin, hi.y - lo.y + 2.0 * margin);
    let px = 800.0;
    let stroke = w.max(h) / px;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"{x0:.4} {:.4} {w:.4} {h:.4}\">",
        px * w / w.max(h),
        px * h / w.max(h),
        -(y0 + h)
    );
    s.push_str("<g transform=\"scale(1,-1)\">\n");
    for ring in track.boundary_rings() {
        s.push_str(&polyline(
            &ring,
            track.closed,
            &format!("fill=\"none\" stroke=\"black\" stroke-width=\"{:.5}\"", 2.0 * stroke),
        ));
    }
    s.push_str(&polyline(
        &track.centerline,
        track.closed,
        &format!(
            "fill=\"none\" stroke=\"gray\" stroke-width=\"{stroke:.5}\" stroke-dasharray=\"{:.4} {:.4}\"",
            6.0 * stroke,
            4.0 * stroke
        ),
    ));
    let vmax = lap.metrics.max_speed;
    for w in lap.states.windows(2) {
        let _ = writeln!(
            s,
            "<line x1=\"{:.4}\" y1=\"{:.4}\" x2=\"{:.4}\" y2=\"{:.4}\" stroke=\"{}\" stroke-width=\"{:.5}\"/>",
            w[0].x,
            w[0].y,
            w[1].x,
            w[1].y,
            speed_color(0.5 * (w[0].speed() + w[1].speed()), vmax),
            3.0 * stroke
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<text x=\"{:.4}\" y=\"{:.4}\" font-size=\"{:.4}\">speed 0 (blue) to {vmax:.2} m/s (red)</text>",
        x0 + margin * 0.2,
        -(y0 + h) + 16.0 * stroke,
        14.0 * stroke
    );
    s.push_str("</svg>\n");
    s
}

pub const BENCH_HEADER: &str = "run,status,steps,cumulative_curvature,distance,mean_speed,max_speed,min_speed,mean_solve_ms,median_solve_ms,max_solve_ms,min_solve_ms,config_hash,track_hash";

fn metric_fields(m: &LapMetrics) -> [f64; 9] {
    [
        m.cumulative_curvature,
        m.distance,
        m.mean_speed,
        m.max_speed,
        m.min_speed,
        m.mean_solve_ms,
        m.median_solve_ms,
        m.max_solve_ms,
        m.min_solve_ms,
    ]
}

pub fn outcome_label(o: &LapOutcome) -> &'static str {
    match o {
        LapOutcome::Completed => "completed",
        LapOutcome::StepLimit => "step_limit",
        LapOutcome::Aborted { .. } => "failed",
    }
}

/// Two rows (curvature factors on, then off) and a row of differences.
pub fn bench_csv(on: &LapResult, off: &LapResult, config_hash: &str, track_hash: &str) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for (name, lap) in [("curvature", on), ("no_curvature", off)] {
        let _ = write!(out, "{name},{},{}", outcome_label(&lap.outcome), lap.steps.len());
        for v in metric_fields(&lap.metrics) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{config_hash},{track_hash}");
    }
    let _ = write!(out, "delta,,{}", on.steps.len() as i64 - off.steps.len() as i64);
    for (a, b) in metric_fields(&on.metrics).iter().zip(metric_fields(&off.metrics)) {
        let _ = write!(out, ",{}", a - b);
    }
    let _ = writeln!(out, ",{config_hash},{track_hash}");
    out
}

#[derive(Debug, Serialize)]
pub struct BenchRun<'a> {
    pub curvature: bool,
    pub status: &'static str,
    pub outcome: &'a LapOutcome,
    pub steps: usize,
    pub metrics: &'a LapMetrics,
    pub bounds: BoundsAudit,
    /// Solves whose accepted objectives never increased.
    pub monotone_solves: usize,
    pub config_hash: &'a str,
    pub track_hash: &'a str,
}

#[derive(Debug, Serialize)]
pub struct BenchDelta {
    pub cumulative_curvature: f64,
    pub cumulative_curvature_relative: f64,
    pub mean_speed: f64,
    pub distance: f64,
    pub mean_solve_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport<'a> {
    pub runs: [BenchRun<'a>; 2],
    pub delta: BenchDelta,
    pub sdf: &'a str,
    pub config: &'a RunConfig,
}

pub fn bench_run<'a>(
    lap: &'a LapResult,
    curvature: bool,
    config: &RunConfig,
    config_hash: &'a str,
    track_hash: &'a str,
) -> BenchRun<'a> {
    let monotone_solves = lap
        .steps
        .iter()
        .filter(|s| s.stats.objective_history.windows(2).all(|w| w[1] <= w[0]))
        .count();
    BenchRun {
        curvature,
        status: outcome_label(&lap.outcome),
        outcome: &lap.outcome,
        steps: lap.steps.len(),
        metrics: &lap.metrics,
        bounds: bounds_audit(lap, config),
        monotone_solves,
        config_hash,
        track_hash,
    }
}

pub fn bench_delta(on: &LapMetrics, off: &LapMetrics) -> BenchDelta {
    BenchDelta {
        cumulative_curvature: on.cumulative_curvature - off.cumulative_curvature,
        cumulative_curvature_relative: (on.cumulative_curvature - off.cumulative_curvature) / off.cumulative_curvature,
        mean_speed: on.mean_speed - off.mean_speed,
        distance: on.distance - off.distance,
        mean_solve_ms: on.mean_solve_ms - off.mean_solve_ms,
    }
}
