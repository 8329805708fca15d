//! Receding-horizon planning loop on a simulated plant.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{
    assemble_horizon_factors, DynamicsModel, FactorWeights, HorizonInputs, HorizonKeys, ReferenceWindow, StateBounds,
};
use crate::fg::{solve_lm_with, FactorGraph, FgError, Retraction, SolveStats, SolverConfig, Values};
use crate::metrics::{lap_metrics, LapMetrics};
use crate::track::{ObstacleCostParams, Point, Projection, SdfGrid, Track};
use crate::vehicle::{integrate_substeps, ControlInput, Discretization, VehicleParams, VehicleState};

/// Search radius around the previous station when tracking progress, meters.
const PROJECTION_WINDOW: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerOptions {
    /// Horizon length `n` in steps.
    pub horizon: usize,
    /// Sampling time, seconds.
    pub ts: f64,
    /// Desired maximum speed, m/s.
    pub v_des: f64,
    /// Extra steps after the finish of an open run.
    pub decel_steps: usize,
    /// Longitudinal speed at the start line, m/s.
    pub initial_speed: f64,
    /// Acceleration assumed when ramping the reference speed, m/s².
    pub accel_ref: f64,
    /// Deceleration used for the speed cap ahead of corners and of an open
    /// track's end, m/s².
    pub decel_ref: f64,
    /// Lateral acceleration bounding the reference speed in corners, m/s².
    /// `None` leaves only `v_des`.
    pub lateral_accel_ref: Option<f64>,
    /// Safety distance to the boundary, meters.
    pub epsilon: f64,
    pub curvature: bool,
    /// Keep solver iterates of `(δ, d)` inside the control bounds.
    pub control_box: bool,
    /// Re-integrate the window states from `θ_0` after every solver step.
    pub rollout: bool,
    pub discretization: Discretization,
    /// Runge–Kutta substeps of the simulated plant per sampling period.
    pub plant_substeps: usize,
    /// Step cap; derived from the track length when absent.
    pub max_steps: Option<usize>,
    /// Distance-field cell size, meters.
    pub sdf_resolution: f64,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            horizon: 40,
            ts: 0.02,
            v_des: 3.0,
            decel_steps: 10,
            initial_speed: 0.0,
            accel_ref: 4.0,
            decel_ref: 1.5,
            lateral_accel_ref: None,
            epsilon: 0.015,
            curvature: true,
            control_box: true,
            rollout: true,
            discretization: Discretization::default(),
            plant_substeps: 40,
            max_steps: None,
            sdf_resolution: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub planner: PlannerOptions,
    pub vehicle: VehicleParams,
    pub weights: FactorWeights,
    pub bounds: StateBounds,
    pub solver: SolverConfig,
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let o = &self.planner;
        let fail = |m: String| Err(PlannerError::Config(m));
        if o.horizon < 2 {
            return fail(format!("planner.horizon must be at least 2, got {}", o.horizon));
        }
        for (name, v) in [
            ("ts", o.ts),
            ("v_des", o.v_des),
            ("accel_ref", o.accel_ref),
            ("decel_ref", o.decel_ref),
            ("sdf_resolution", o.sdf_resolution),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("planner.{name} must be positive, got {v}"));
            }
        }
        if let Some(a) = o.lateral_accel_ref {
            if !(a > 0.0 && a.is_finite()) {
                return fail(format!("planner.lateral_accel_ref must be positive, got {a}"));
            }
        }
        if !(o.epsilon >= 0.0 && o.epsilon.is_finite()) {
            return fail(format!("planner.epsilon must be nonnegative, got {}", o.epsilon));
        }
        if !(o.initial_speed >= 0.0 && o.initial_speed.is_finite()) {
            return fail(format!("planner.initial_speed must be nonnegative, got {}", o.initial_speed));
        }
        if o.plant_substeps == 0 {
            return fail("planner.plant_substeps must be positive".into());
        }
        if let Discretization::Rk4 { substeps: 0 } = o.discretization {
            return fail("planner.discretization.substeps must be positive".into());
        }
        self.vehicle.validate().map_err(PlannerError::Config)?;
        self.weights.validate().map_err(PlannerError::Config)?;
        self.bounds.validate().map_err(PlannerError::Config)?;
        self.solver
            .validate()
            .map_err(|e| PlannerError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn obstacle_params(&self) -> ObstacleCostParams {
        ObstacleCostParams {
            epsilon: self.planner.epsilon,
            sigma_obs: self.weights.sigma_obs,
        }
    }

    /// Step cap used when `max_steps` is not set.
    pub fn step_limit(&self, track: &Track) -> usize {
        let o = &self.planner;
        o.max_steps
            .unwrap_or_else(|| (3.0 * track.length() / (o.v_des * o.ts)).ceil() as usize + o.decel_steps)
    }
}

const PROFILE_STEP: f64 = 0.02;
const CURVATURE_BASE: f64 = 0.05;

/// Centerline curvature at `s` from the heading change over `±CURVATURE_BASE`.
fn centerline_curvature(track: &Track, s: f64) -> f64 {
    let h = CURVATURE_BASE;
    let (a, b) = if track.closed {
        (s - h, s + h)
    } else {
        ((s - h).max(0.0), (s + h).min(track.length()))
    };
    if b <= a {
        return 0.0;
    }
    let turn = unwrap_near(track.heading_at(b), track.heading_at(a)) - track.heading_at(a);
    turn / (b - a)
}

/// Speed ceiling on `[s0, s0 + span]` sampled every `PROFILE_STEP`: `v_des`,
/// the lateral-acceleration limit on the centerline curvature, and zero at the
/// end of an open track, each propagated backwards with `decel_ref`.
fn speed_ceiling(track: &Track, s0: f64, span: f64, options: &PlannerOptions) -> Vec<f64> {
    let brake = options.v_des * options.v_des / (2.0 * options.decel_ref);
    let count = ((span + brake) / PROFILE_STEP).ceil() as usize + 1;
    let len = track.length();
    let mut v: Vec<f64> = (0..count)
        .map(|i| {
            let s = s0 + i as f64 * PROFILE_STEP;
            if !track.closed && s >= len {
                return 0.0;
            }
            match options.lateral_accel_ref {
                Some(a) => {
                    let k = centerline_curvature(track, s).abs();
                    if k > 0.0 {
                        options.v_des.min((a / k).sqrt())
                    } else {
                        options.v_des
                    }
                }
                None => options.v_des,
            }
        })
        .collect();
    for i in (0..count - 1).rev() {
        let reach = (v[i + 1] * v[i + 1] + 2.0 * options.decel_ref * PROFILE_STEP).sqrt();
        v[i] = v[i].min(reach);
    }
    v
}

/// Arc-length stations, positions and speed targets for the next window.
///
/// The speed target starts at the current longitudinal speed and rises by
/// `accel_ref·Ts` per step. It never exceeds a ceiling made of `v_des`, the
/// corner speed `sqrt(a_lat/κ)` of the centerline and, on open tracks, a stop
/// at the end, each reachable by braking at `decel_ref`.
pub fn select_reference_window(
    track: &Track,
    state: &VehicleState,
    projection: &Projection,
    options: &PlannerOptions,
) -> ReferenceWindow {
    let n = options.horizon;
    let len = track.length();
    let span = options.v_des * options.ts * n as f64;
    let ceiling = speed_ceiling(track, projection.s, span, options);
    let cap = |s: f64| {
        let x = ((s - projection.s) / PROFILE_STEP).max(0.0);
        let i = (x.floor() as usize).min(ceiling.len() - 2);
        let t = (x - i as f64).min(1.0);
        ceiling[i] * (1.0 - t) + ceiling[i + 1] * t
    };
    let mut stations = Vec::with_capacity(n + 1);
    let mut speeds = Vec::with_capacity(n + 1);
    let mut s = projection.s;
    let mut v = state.vx.max(0.0).min(cap(s));
    for k in 0..=n {
        stations.push(s);
        speeds.push(v);
        if k < n {
            let next = (v + options.accel_ref * options.ts).min(options.v_des);
            s += 0.5 * (v + next) * options.ts;
            if !track.closed {
                s = s.min(len);
            }
            v = next.min(cap(s));
        }
    }
    let positions = stations.iter().map(|&s| track.point_at(s)).collect();
    ReferenceWindow {
        positions,
        speeds,
        stations,
    }
}

/// Solution of one window.
#[derive(Debug, Clone)]
pub struct PlanStepResult {
    pub applied_control: ControlInput,
    pub predicted: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    pub stats: SolveStats,
    /// Whether a curvature factor saw coincident points.
    pub degenerate_curvature: bool,
}

fn state_value(s: &VehicleState) -> DVector<f64> {
    DVector::from_column_slice(s.to_vector().as_slice())
}

fn control_value(u: &ControlInput) -> DVector<f64> {
    DVector::from_column_slice(u.to_vector().as_slice())
}

fn unwrap_near(angle: f64, reference: f64) -> f64 {
    let d = (angle - reference + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
        - std::f64::consts::PI;
    reference + d
}

/// Initial values for a window solve.
///
/// Without a previous solution the states sit on the reference with its
/// speed profile and the controls are zero. Otherwise the previous solution
/// is shifted by one step, the last control is repeated and the last state
/// is propagated through the plant model with it. `θ_0` is always the
/// measured state.
pub fn warm_start(
    previous: Option<&PlanStepResult>,
    current: &VehicleState,
    reference: &ReferenceWindow,
    track: &Track,
    config: &PlannerConfig,
) -> Values {
    let n = config.planner.horizon;
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    match previous {
        Some(prev) if prev.predicted.len() == n + 1 => {
            states.extend_from_slice(&prev.predicted[1..]);
            controls.extend_from_slice(&prev.controls[1..]);
            let last_u = *prev.controls.last().unwrap();
            let last = integrate_substeps(
                states.last().unwrap(),
                &last_u,
                &config.vehicle,
                config.planner.ts,
                config.planner.plant_substeps,
            );
            states.push(last);
            controls.push(last_u);
        }
        _ => {
            let mut phi = current.phi;
            for k in 0..=n {
                let p = reference.positions[k];
                phi = unwrap_near(track.heading_at(reference.stations[k]), phi);
                states.push(VehicleState::new(p.x, p.y, reference.speeds[k], 0.0, phi, 0.0));
            }
            controls.resize(n, ControlInput::new(0.0, 0.0));
        }
    }
    states[0] = *current;
    window_values(&states, &controls)
}

/// Factor graph of one window.
pub fn build_window_graph(
    config: &PlannerConfig,
    sdf: &Arc<SdfGrid>,
    current: &VehicleState,
    reference: &ReferenceWindow,
    goal: Option<Point>,
) -> Result<FactorGraph, FgError> {
    let keys = HorizonKeys::new(config.planner.horizon);
    let inputs = HorizonInputs {
        start: *current,
        reference,
        goal,
        weights: &config.weights,
        bounds: &config.bounds,
        obstacle: Some((sdf.clone(), config.obstacle_params())),
        params: &config.vehicle,
        ts: config.planner.ts,
        scheme: config.planner.discretization,
        curvature: config.planner.curvature,
    };
    let mut graph = FactorGraph::new();
    keys.declare(&mut graph)?;
    for f in assemble_horizon_factors(&keys, &inputs)? {
        graph.add_factor(f)?;
    }
    if config.planner.control_box {
        let b = &config.bounds;
        for key in &keys.controls {
            graph.set_box(
                *key,
                DVector::from_column_slice(&b.u_min),
                DVector::from_column_slice(&b.u_max),
            )?;
        }
    }
    Ok(graph)
}

/// Retraction that replaces `θ_1..θ_n` by the states the discrete dynamics
/// reach from `θ_0` under the window controls.
pub struct WindowRollout {
    keys: HorizonKeys,
    model: DynamicsModel,
}

impl WindowRollout {
    pub fn new(config: &PlannerConfig) -> Self {
        Self {
            keys: HorizonKeys::new(config.planner.horizon),
            model: DynamicsModel::Nonlinear {
                params: config.vehicle,
                ts: config.planner.ts,
                scheme: config.planner.discretization,
            },
        }
    }
}

impl Retraction for WindowRollout {
    fn retract(&self, values: &mut Values) -> Result<(), FgError> {
        let missing = |k| FgError::MissingVariable(k);
        for (k, u) in self.keys.controls.iter().enumerate() {
            let s = VehicleState::from_slice(values.get(self.keys.states[k]).ok_or(missing(self.keys.states[k]))?.as_slice());
            let u = ControlInput::from_slice(values.get(*u).ok_or(missing(*u))?.as_slice());
            let next = self.model.predict(&s, &u);
            if !next.iter().all(|x| x.is_finite()) {
                return Err(FgError::Evaluation(format!("rollout diverged at step {}", k + 1)));
            }
            let slot = values.get_mut(self.keys.states[k + 1]).ok_or(missing(self.keys.states[k + 1]))?;
            slot.copy_from_slice(next.as_slice());
        }
        Ok(())
    }
}

/// Packs a window trajectory into solver values.
pub fn window_values(states: &[VehicleState], controls: &[ControlInput]) -> Values {
    let keys = HorizonKeys::new(controls.len());
    let mut values = Values::new();
    for (k, s) in states.iter().enumerate() {
        values.insert(keys.states[k], state_value(s)).unwrap();
    }
    for (k, u) in controls.iter().enumerate() {
        values.insert(keys.controls[k], control_value(u)).unwrap();
    }
    values
}

/// Builds and solves the window graph; applies nothing.
pub fn plan_step(
    config: &PlannerConfig,
    sdf: &Arc<SdfGrid>,
    current: &VehicleState,
    reference: &ReferenceWindow,
    goal: Option<Point>,
    warm: &Values,
) -> Result<PlanStepResult, FgError> {
    let keys = HorizonKeys::new(config.planner.horizon);
    let graph = build_window_graph(config, sdf, current, reference, goal)?;
    let rollout = config.planner.rollout.then(|| WindowRollout::new(config));
    let (values, stats) = solve_lm_with(&graph, warm, &config.solver, rollout.as_ref().map(|r| r as &dyn Retraction))?;
    let predicted: Vec<VehicleState> = keys
        .states
        .iter()
        .map(|k| VehicleState::from_slice(values.get(*k).unwrap().as_slice()))
        .collect();
    let controls: Vec<ControlInput> = keys
        .controls
        .iter()
        .map(|k| ControlInput::from_slice(values.get(*k).unwrap().as_slice()))
        .collect();
    // a fresh evaluation at the solution reports coincident curvature points
    let degenerate_curvature = predicted
        .windows(3)
        .any(|w| (w[2].position() - w[1].position()).norm() < crate::factors::CURVATURE_DEGENERATE)
        && config.planner.curvature;
    Ok(PlanStepResult {
        applied_control: controls[0],
        predicted,
        controls,
        stats,
        degenerate_curvature,
    })
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum LapOutcome {
    Completed,
    StepLimit,
    Aborted { step: usize, reason: String },
}

/// Per-step bookkeeping of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Seconds since the start.
    pub t: f64,
    /// Wall time of the whole step (graph build and solve), milliseconds.
    pub solve_ms: f64,
    pub stats: SolveStats,
    /// Arc length of the plant's projection before the step.
    pub station: f64,
    /// `‖θ_plant(j+1) − θ*_1‖`.
    pub prediction_error: f64,
    pub degenerate_curvature: bool,
}

#[derive(Debug, Clone)]
pub struct LapResult {
    /// Plant states, one more than the number of steps.
    pub states: Vec<VehicleState>,
    /// Applied controls.
    pub controls: Vec<ControlInput>,
    pub steps: Vec<StepRecord>,
    pub metrics: LapMetrics,
    pub outcome: LapOutcome,
    /// Arc length covered along the centerline.
    pub progress: f64,
    pub track_length: f64,
}

impl LapResult {
    pub fn completed(&self) -> bool {
        self.outcome == LapOutcome::Completed
    }

    pub fn solve_ms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.solve_ms).collect()
    }

    /// Fraction of steps whose resulting state and applied control lie
    /// within `bounds` widened by `buffer` of each range.
    pub fn bounds_fraction(&self, bounds: &StateBounds, buffer: f64) -> f64 {
        if self.controls.is_empty() {
            return 1.0;
        }
        let ok = self
            .controls
            .iter()
            .zip(&self.states[1..])
            .filter(|(u, s)| bounds.satisfied(s, u, buffer))
            .count();
        ok as f64 / self.controls.len() as f64
    }
}

/// Initial state on the first centerline waypoint, aligned with the track.
pub fn start_state(track: &Track, speed: f64) -> VehicleState {
    let p = track.centerline[0];
    VehicleState::new(p.x, p.y, speed, 0.0, track.heading_at(0.0), 0.0)
}

/// Runs one lap (or one pass of an open track) under receding-horizon control.
pub fn run_lap(config: &PlannerConfig, track: &Track, sdf: Arc<SdfGrid>) -> Result<LapResult, PlannerError> {
    config.validate()?;
    let o = &config.planner;
    let len = track.length();
    let limit = config.step_limit(track);

    let mut state = start_state(track, o.initial_speed);
    let mut states = vec![state];
    let mut controls = Vec::new();
    let mut steps = Vec::new();
    let mut previous: Option<PlanStepResult> = None;
    let mut projection = track.project(&state.position());
    let start_station = projection.s;
    let mut progress = 0.0;
    let mut finished_at: Option<usize> = None;
    let mut outcome = LapOutcome::StepLimit;

    for j in 0..limit {
        let started = Instant::now();
        let reference = select_reference_window(track, &state, &projection, o);
        let goal = (!track.closed && *reference.stations.last().unwrap() >= len).then(|| track.point_at(len));
        let warm = warm_start(previous.as_ref(), &state, &reference, track, config);
        let result = match plan_step(config, &sdf, &state, &reference, goal, &warm) {
            Ok(r) => r,
            Err(e) => {
                outcome = LapOutcome::Aborted {
                    step: j,
                    reason: e.to_string(),
                };
                break;
            }
        };
        let solve_ms = started.elapsed().as_secs_f64() * 1e3;
        let u = result.applied_control;
        let next = integrate_substeps(&state, &u, &config.vehicle, o.ts, o.plant_substeps);
        let prediction_error = (next.to_vector() - result.predicted[1].to_vector()).norm();
        steps.push(StepRecord {
            step: j,
            t: j as f64 * o.ts,
            solve_ms,
            stats: result.stats.clone(),
            station: projection.s,
            prediction_error,
            degenerate_curvature: result.degenerate_curvature,
        });
        controls.push(u);
        states.push(next);
        state = next;
        previous = Some(result);

        if !state.is_finite() || sdf.query(&state.position()).is_err() {
            outcome = LapOutcome::Aborted {
                step: j,
                reason: format!("plant left the map at ({:.3}, {:.3})", state.x, state.y),
            };
            break;
        }
        let new_projection = track.project_near(&state.position(), projection.s, PROJECTION_WINDOW);
        let mut ds = new_projection.s - projection.s;
        if track.closed {
            ds = (ds + 0.5 * len).rem_euclid(len) - 0.5 * len;
        }
        progress += ds;
        projection = new_projection;

        if let Some(f) = finished_at {
            if j + 1 >= f + o.decel_steps {
                outcome = LapOutcome::Completed;
                break;
            }
        } else if track.closed && progress >= len {
            outcome = LapOutcome::Completed;
            break;
        } else if !track.closed && start_station + progress >= len - o.ts * o.v_des {
            finished_at = Some(j + 1);
            if o.decel_steps == 0 {
                outcome = LapOutcome::Completed;
                break;
            }
        }
    }
    if let Some(f) = finished_at {
        // the finish was crossed even if the trailing steps were cut short
        if outcome == LapOutcome::StepLimit && steps.len() >= f {
            outcome = LapOutcome::Completed;
        }
    }
    let solve_ms: Vec<f64> = steps.iter().map(|s| s.solve_ms).collect();
    let metrics = lap_metrics(&states, &solve_ms);
    Ok(LapResult {
        states,
        controls,
        steps,
        metrics,
        outcome,
        progress,
        track_length: len,
    })
}
