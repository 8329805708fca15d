use std::path::PathBuf;
use std::sync::Arc;

use mincurvfg::metrics;
use mincurvfg::planner::{run_lap as run, LapOutcome, PlannerConfig};
use mincurvfg::track::{build_sdf, load_track, Point, SdfGrid, Track, TrackKind};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn make_track(track: &str, spacing: f64) -> PyResult<Track> {
    match track.parse::<TrackKind>() {
        Ok(kind) => kind.build(spacing).map_err(value_err),
        Err(_) => load_track(&PathBuf::from(track), spacing, None).map_err(value_err),
    }
}

fn pairs(points: &[Point]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.x, p.y)).collect()
}

/// Centerline and boundaries of a built-in track or a schema-A CSV file.
#[pyfunction]
#[pyo3(signature = (track, spacing = 0.01))]
fn load<'py>(py: Python<'py>, track: &str, spacing: f64) -> PyResult<Bound<'py, PyDict>> {
    let t = make_track(track, spacing)?;
    let d = PyDict::new(py);
    d.set_item("centerline", pairs(&t.centerline))?;
    d.set_item("left", pairs(&t.left_boundary))?;
    d.set_item("right", pairs(&t.right_boundary))?;
    d.set_item("closed", t.closed)?;
    d.set_item("length", t.length())?;
    Ok(d)
}

/// Sum of three-point curvatures along a polyline.
#[pyfunction]
fn cumulative_curvature(points: Vec<(f64, f64)>) -> f64 {
    let p: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
    metrics::cumulative_curvature(&p)
}

#[pyclass(frozen)]
struct Sdf {
    grid: Arc<SdfGrid>,
}

#[pymethods]
impl Sdf {
    #[new]
    #[pyo3(signature = (track, resolution = 0.005, spacing = 0.01))]
    fn new(track: &str, resolution: f64, spacing: f64) -> PyResult<Self> {
        let t = make_track(track, spacing)?;
        let grid = build_sdf(&t, resolution).map_err(value_err)?;
        Ok(Self { grid: Arc::new(grid) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let grid = SdfGrid::load(&path).map_err(value_err)?;
        Ok(Self { grid: Arc::new(grid) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.grid.save(&path).map_err(value_err)
    }

    /// `(width, height)` in cells.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.grid.width, self.grid.height)
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.grid.resolution
    }

    #[getter]
    fn origin(&self) -> (f64, f64) {
        (self.grid.origin[0], self.grid.origin[1])
    }

    /// Signed distance and gradient `(d, gx, gy)` at a point.
    fn query(&self, x: f64, y: f64) -> PyResult<(f64, f64, f64)> {
        let s = self.grid.query(&Point::new(x, y)).map_err(value_err)?;
        Ok((s.distance, s.gradient.x, s.gradient.y))
    }
}

/// Drives one lap. `config` is a JSON object with any of the sections
/// `planner`, `vehicle`, `weights`, `bounds`, `solver`.
#[pyfunction]
#[pyo3(signature = (track = "chicane", config = None, curvature = None, spacing = 0.01))]
fn run_lap<'py>(
    py: Python<'py>,
    track: &str,
    config: Option<&str>,
    curvature: Option<bool>,
    spacing: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg: PlannerConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => PlannerConfig::default(),
    };
    if let Some(c) = curvature {
        cfg.planner.curvature = c;
    }
    let t = make_track(track, spacing)?;
    let lap = py
        .detach(|| {
            let grid = build_sdf(&t, cfg.planner.sdf_resolution).map_err(|e| e.to_string())?;
            run(&cfg, &t, Arc::new(grid)).map_err(|e| e.to_string())
        })
        .map_err(PyRuntimeError::new_err)?;

    let d = PyDict::new(py);
    let status = match &lap.outcome {
        LapOutcome::Completed => "completed".to_string(),
        LapOutcome::StepLimit => "step_limit".to_string(),
        LapOutcome::Aborted { step, reason } => format!("aborted at step {step}: {reason}"),
    };
    d.set_item("outcome", status)?;
    let m = &lap.metrics;
    let metrics = PyDict::new(py);
    metrics.set_item("cumulative_curvature", m.cumulative_curvature)?;
    metrics.set_item("distance", m.distance)?;
    metrics.set_item("mean_speed", m.mean_speed)?;
    metrics.set_item("max_speed", m.max_speed)?;
    metrics.set_item("min_speed", m.min_speed)?;
    metrics.set_item("mean_solve_ms", m.mean_solve_ms)?;
    metrics.set_item("median_solve_ms", m.median_solve_ms)?;
    metrics.set_item("max_solve_ms", m.max_solve_ms)?;
    metrics.set_item("min_solve_ms", m.min_solve_ms)?;
    d.set_item("metrics", metrics)?;
    let states: Vec<[f64; 6]> = lap
        .states
        .iter()
        .map(|s| [s.x, s.y, s.vx, s.vy, s.phi, s.omega])
        .collect();
    d.set_item("states", states)?;
    let controls: Vec<(f64, f64)> = lap.controls.iter().map(|u| (u.delta, u.d)).collect();
    d.set_item("controls", controls)?;
    d.set_item("solve_ms", lap.solve_ms())?;
    d.set_item("progress", lap.progress)?;
    d.set_item("track_length", lap.track_length)?;
    Ok(d)
}

#[pymodule]
fn pymincurvfg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(run_lap, m)?)?;
    m.add_class::<Sdf>()?;
    Ok(())
}
