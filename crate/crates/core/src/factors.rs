//! Residual terms of the racing factor graph.
//!
//! States are 6-vectors `(x, y, vx, vy, φ, ω)` and controls 2-vectors
//! `(δ, d)`. Every factor here is an isotropic Gaussian on its residual.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::fg::{Factor, FactorGraph, FgError, VariableKey};
use crate::track::{ObstacleCostParams, Point, SdfGrid};
use crate::vehicle::{
    discrete_step, integrate_substeps, AffineDiscreteModel, ControlInput, Discretization, VehicleParams,
    VehicleState,
};

pub const STATE_DIM: usize = 6;
pub const CONTROL_DIM: usize = 2;
/// Below this spacing the curvature factor switches itself off.
pub const CURVATURE_DEGENERATE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorWeights {
    pub sigma_start_goal: f64,
    pub sigma_ref: f64,
    pub sigma_vel: f64,
    pub sigma_rlim: f64,
    pub sigma_ulim: f64,
    pub sigma_obs: f64,
    pub sigma_sys: f64,
    pub sigma_curv: f64,
}

impl Default for FactorWeights {
    fn default() -> Self {
        Self {
            sigma_start_goal: 8e-4,
            sigma_ref: 5.7e-2,
            sigma_vel: 5.5e-2,
            sigma_rlim: 1e-3,
            sigma_ulim: 5e-6,
            sigma_obs: 1e-4,
            sigma_sys: 1e-5,
            sigma_curv: 1e-2,
        }
    }
}

impl FactorWeights {
    /// Curvature weight used for the second benchmark track.
    pub const SIGMA_CURV_TRACK_II: f64 = 3.1e-2;

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("sigma_start_goal", self.sigma_start_goal),
            ("sigma_ref", self.sigma_ref),
            ("sigma_vel", self.sigma_vel),
            ("sigma_rlim", self.sigma_rlim),
            ("sigma_ulim", self.sigma_ulim),
            ("sigma_obs", self.sigma_obs),
            ("sigma_sys", self.sigma_sys),
            ("sigma_curv", self.sigma_curv),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("weights.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Box limits on the rotational states, the controls and the velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateBounds {
    /// `(φ, ω)` lower bounds.
    pub r_min: [f64; 2],
    pub r_max: [f64; 2],
    /// `(δ, d)` lower bounds.
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub vx: [f64; 2],
    pub vy: [f64; 2],
}

impl Default for StateBounds {
    fn default() -> Self {
        Self {
            r_min: [-10.0, -7.0],
            r_max: [10.0, 7.0],
            u_min: [-0.4, -0.1],
            u_max: [0.4, 1.0],
            vx: [-0.1, 4.0],
            vy: [-2.0, 2.0],
        }
    }
}

impl StateBounds {
    pub fn validate(&self) -> Result<(), String> {
        let pairs = [
            ("phi", self.r_min[0], self.r_max[0]),
            ("omega", self.r_min[1], self.r_max[1]),
            ("delta", self.u_min[0], self.u_max[0]),
            ("d", self.u_min[1], self.u_max[1]),
            ("vx", self.vx[0], self.vx[1]),
            ("vy", self.vy[0], self.vy[1]),
        ];
        for (name, lo, hi) in pairs {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(format!("bounds.{name}: need min < max, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// `(value, lower, upper, name)` for every bounded quantity.
    pub fn checks(&self, s: &VehicleState, u: &ControlInput) -> [(f64, f64, f64, &'static str); 6] {
        [
            (s.vx, self.vx[0], self.vx[1], "vx"),
            (s.vy, self.vy[0], self.vy[1], "vy"),
            (s.phi, self.r_min[0], self.r_max[0], "phi"),
            (s.omega, self.r_min[1], self.r_max[1], "omega"),
            (u.delta, self.u_min[0], self.u_max[0], "delta"),
            (u.d, self.u_min[1], self.u_max[1], "d"),
        ]
    }

    /// True when every quantity lies within its range widened by
    /// `buffer · (upper − lower)` on each side.
    pub fn satisfied(&self, s: &VehicleState, u: &ControlInput, buffer: f64) -> bool {
        self.checks(s, u).iter().all(|&(v, lo, hi, _)| {
            let slack = buffer * (hi - lo);
            v >= lo - slack && v <= hi + slack
        })
    }
}

/// Per-state centerline targets and longitudinal speed targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    pub positions: Vec<Point>,
    pub speeds: Vec<f64>,
    /// Arc-length station of each target.
    pub stations: Vec<f64>,
}

impl ReferenceWindow {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn check_block(name: &'static str, v: &DVector<f64>, dim: usize) -> Result<(), FgError> {
    if v.len() != dim {
        return Err(FgError::Evaluation(format!(
            "{name}: expected a {dim}-vector, got {}",
            v.len()
        )));
    }
    Ok(())
}

fn position_selector() -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2, STATE_DIM);
    j[(0, 0)] = 1.0;
    j[(1, 1)] = 1.0;
    j
}

/// `p − μ` on the position block of a state.
#[derive(Debug, Clone)]
pub struct PositionPrior {
    keys: [VariableKey; 1],
    mu: Point,
    sigma: f64,
    name: &'static str,
}

pub fn prior_position_factor(key: VariableKey, mu: Point, sigma: f64) -> PositionPrior {
    PositionPrior {
        keys: [key],
        mu,
        sigma,
        name: "prior",
    }
}

pub fn reference_factor(key: VariableKey, mu: Point, sigma_ref: f64) -> PositionPrior {
    PositionPrior {
        keys: [key],
        mu,
        sigma: sigma_ref,
        name: "reference",
    }
}

impl PositionPrior {
    pub fn named(mut self, name: &'static str) -> Self {
        self.name = name;
        self
    }
}

impl Factor for PositionPrior {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        2
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        check_block(self.name, b[0], STATE_DIM)?;
        Ok(DVector::from_vec(vec![b[0][0] - self.mu.x, b[0][1] - self.mu.y]))
    }
    fn jacobians(&self, _: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        Ok(vec![position_selector()])
    }
    fn name(&self) -> &'static str {
        self.name
    }
}

/// `θ − θ̄` on a whole state, pinning the measured initial state.
#[derive(Debug, Clone)]
pub struct StatePrior {
    keys: [VariableKey; 1],
    mean: DVector<f64>,
    sigma: f64,
}

pub fn state_prior_factor(key: VariableKey, mean: &VehicleState, sigma: f64) -> StatePrior {
    StatePrior {
        keys: [key],
        mean: DVector::from_column_slice(mean.to_vector().as_slice()),
        sigma,
    }
}

impl Factor for StatePrior {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        STATE_DIM
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        check_block("start", b[0], STATE_DIM)?;
        Ok(b[0] - &self.mean)
    }
    fn jacobians(&self, _: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        Ok(vec![DMatrix::identity(STATE_DIM, STATE_DIM)])
    }
    fn name(&self) -> &'static str {
        "start"
    }
}

/// `(vx, vy) − ṽ` on the body-frame velocity block.
#[derive(Debug, Clone)]
pub struct VelocityFactor {
    keys: [VariableKey; 1],
    target: Vector2<f64>,
    sigma: f64,
}

pub fn velocity_factor(key: VariableKey, v_des: Vector2<f64>, sigma_vel: f64) -> VelocityFactor {
    VelocityFactor {
        keys: [key],
        target: v_des,
        sigma: sigma_vel,
    }
}

impl Factor for VelocityFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        2
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        check_block("velocity", b[0], STATE_DIM)?;
        Ok(DVector::from_vec(vec![b[0][2] - self.target.x, b[0][3] - self.target.y]))
    }
    fn jacobians(&self, _: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        let mut j = DMatrix::zeros(2, STATE_DIM);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        Ok(vec![j])
    }
    fn name(&self) -> &'static str {
        "velocity"
    }
}

/// Which two components a limit factor watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitBlock {
    /// `(φ, ω)` of a state.
    Rotation,
    /// `(δ, d)` of a control.
    Control,
}

impl LimitBlock {
    fn layout(self) -> (usize, usize) {
        match self {
            LimitBlock::Rotation => (STATE_DIM, 4),
            LimitBlock::Control => (CONTROL_DIM, 0),
        }
    }
}

/// Componentwise hinge `z − z_min` below, `z − z_max` above, zero between.
pub fn hinge_residual(z: f64, lower: f64, upper: f64) -> f64 {
    if z < lower {
        z - lower
    } else if z > upper {
        z - upper
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LimitFactor {
    keys: [VariableKey; 1],
    lower: [f64; 2],
    upper: [f64; 2],
    sigma: f64,
    block: LimitBlock,
}

pub fn limit_factor(
    key: VariableKey,
    lower: [f64; 2],
    upper: [f64; 2],
    sigma: f64,
    block: LimitBlock,
) -> LimitFactor {
    LimitFactor {
        keys: [key],
        lower,
        upper,
        sigma,
        block,
    }
}

impl Factor for LimitFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        2
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        let (dim, off) = self.block.layout();
        check_block(self.name(), b[0], dim)?;
        Ok(DVector::from_fn(2, |k, _| {
            hinge_residual(b[0][off + k], self.lower[k], self.upper[k])
        }))
    }
    fn jacobians(&self, b: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        let (dim, off) = self.block.layout();
        check_block(self.name(), b[0], dim)?;
        let mut j = DMatrix::zeros(2, dim);
        for k in 0..2 {
            let z = b[0][off + k];
            if z < self.lower[k] || z > self.upper[k] {
                j[(k, off + k)] = 1.0;
            }
        }
        Ok(vec![j])
    }
    fn name(&self) -> &'static str {
        match self.block {
            LimitBlock::Rotation => "rotation_limit",
            LimitBlock::Control => "control_limit",
        }
    }
}

/// Transition model used by a dynamics factor.
#[derive(Debug, Clone)]
pub enum DynamicsModel {
    /// Fixed affine prediction `A θ + B u + c`.
    Affine(AffineDiscreteModel),
    /// Exact discrete map, so the linearization follows the current iterate.
    Nonlinear {
        params: VehicleParams,
        ts: f64,
        scheme: Discretization,
    },
}

impl DynamicsModel {
    /// `Φ(θ, u)`.
    pub fn predict(&self, s: &VehicleState, u: &ControlInput) -> Vector6<f64> {
        match self {
            DynamicsModel::Affine(m) => m.predict(s, u),
            DynamicsModel::Nonlinear { params, ts, scheme } => match scheme {
                Discretization::Rk4 { substeps } => integrate_substeps(s, u, params, *ts, (*substeps).max(1)).to_vector(),
                _ => discrete_step(s, u, params, *ts, *scheme).0,
            },
        }
    }
}

/// `θ_i − Φ(θ_{i−1}, u_{i−1})`.
#[derive(Debug, Clone)]
pub struct DynamicsFactor {
    keys: [VariableKey; 3],
    model: DynamicsModel,
    sigma: f64,
}

pub fn dynamics_factor(
    key_prev_state: VariableKey,
    key_prev_control: VariableKey,
    key_state: VariableKey,
    model: AffineDiscreteModel,
    sigma_sys: f64,
) -> DynamicsFactor {
    DynamicsFactor {
        keys: [key_prev_state, key_prev_control, key_state],
        model: DynamicsModel::Affine(model),
        sigma: sigma_sys,
    }
}

pub fn nonlinear_dynamics_factor(
    key_prev_state: VariableKey,
    key_prev_control: VariableKey,
    key_state: VariableKey,
    params: VehicleParams,
    ts: f64,
    scheme: Discretization,
    sigma_sys: f64,
) -> DynamicsFactor {
    DynamicsFactor {
        keys: [key_prev_state, key_prev_control, key_state],
        model: DynamicsModel::Nonlinear { params, ts, scheme },
        sigma: sigma_sys,
    }
}

impl DynamicsFactor {
    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    fn unpack(b: &[&DVector<f64>]) -> Result<(VehicleState, ControlInput), FgError> {
        check_block("dynamics", b[0], STATE_DIM)?;
        check_block("dynamics", b[1], CONTROL_DIM)?;
        check_block("dynamics", b[2], STATE_DIM)?;
        Ok((
            VehicleState::from_slice(b[0].as_slice()),
            ControlInput::from_slice(b[1].as_slice()),
        ))
    }

    fn evaluate(
        &self,
        b: &[&DVector<f64>],
        with_jacobians: bool,
    ) -> Result<(DVector<f64>, Option<Vec<DMatrix<f64>>>), FgError> {
        let (s, u) = Self::unpack(b)?;
        let (pred, a, bm) = match &self.model {
            DynamicsModel::Affine(m) => (m.predict(&s, &u), m.a, m.b),
            // same arithmetic as the sensitivity pass, without the Jacobians
            _ if !with_jacobians => (self.model.predict(&s, &u), Default::default(), Default::default()),
            DynamicsModel::Nonlinear { params, ts, scheme } => discrete_step(&s, &u, params, *ts, *scheme),
        };
        let r = DVector::from_fn(STATE_DIM, |k, _| b[2][k] - pred[k]);
        let jac = with_jacobians.then(|| {
            vec![
                DMatrix::from_fn(STATE_DIM, STATE_DIM, |i, j| -a[(i, j)]),
                DMatrix::from_fn(STATE_DIM, CONTROL_DIM, |i, j| -bm[(i, j)]),
                DMatrix::identity(STATE_DIM, STATE_DIM),
            ]
        });
        Ok((r, jac))
    }
}

impl Factor for DynamicsFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        STATE_DIM
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        Ok(self.evaluate(b, false)?.0)
    }
    fn jacobians(&self, b: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        Ok(self.evaluate(b, true)?.1.unwrap())
    }
    fn linearize(&self, b: &[&DVector<f64>]) -> Result<(DVector<f64>, Vec<DMatrix<f64>>), FgError> {
        let (r, j) = self.evaluate(b, true)?;
        Ok((r, j.unwrap()))
    }
    fn name(&self) -> &'static str {
        "dynamics"
    }
}

/// Hinge on the signed distance to the track boundary at the position.
#[derive(Debug, Clone)]
pub struct ObstacleFactor {
    keys: [VariableKey; 1],
    sdf: Arc<SdfGrid>,
    epsilon: f64,
    sigma: f64,
}

pub fn obstacle_factor(key: VariableKey, sdf: Arc<SdfGrid>, epsilon: f64, sigma_obs: f64) -> ObstacleFactor {
    ObstacleFactor {
        keys: [key],
        sdf,
        epsilon,
        sigma: sigma_obs,
    }
}

impl ObstacleFactor {
    fn evaluate(&self, b: &[&DVector<f64>]) -> Result<(f64, Point), FgError> {
        check_block("obstacle", b[0], STATE_DIM)?;
        let p = Point::new(b[0][0], b[0][1]);
        let s = self
            .sdf
            .query(&p)
            .map_err(|e| FgError::Evaluation(format!("obstacle: {e}")))?;
        Ok((s.distance, s.gradient))
    }
}

impl Factor for ObstacleFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        1
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        let (d, _) = self.evaluate(b)?;
        Ok(DVector::from_element(1, crate::track::hinge_cost(d, self.epsilon)))
    }
    fn jacobians(&self, b: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        let (d, g) = self.evaluate(b)?;
        let mut j = DMatrix::zeros(1, STATE_DIM);
        if d < self.epsilon {
            j[(0, 0)] = -g.x;
            j[(0, 1)] = -g.y;
        }
        Ok(vec![j])
    }
    fn name(&self) -> &'static str {
        "obstacle"
    }
}

/// Offset of `p0` from the line through `p1` and `p2`, perpendicular to it.
/// `None` when `p1` and `p2` coincide.
pub fn curvature_residual(p0: &Point, p1: &Point, p2: &Point) -> Option<Vector2<f64>> {
    let w = p2 - p1;
    let len = w.norm();
    if len < CURVATURE_DEGENERATE {
        return None;
    }
    let t = w / len;
    let e = p0 - p1;
    Some(e - t * e.dot(&t))
}

/// Jacobians of [`curvature_residual`] with respect to `p0`, `p1`, `p2`.
pub fn curvature_jacobians(p0: &Point, p1: &Point, p2: &Point) -> Option<[Matrix2<f64>; 3]> {
    let w = p2 - p1;
    let len = w.norm();
    if len < CURVATURE_DEGENERATE {
        return None;
    }
    let t = w / len;
    let e = p0 - p1;
    let proj = Matrix2::identity() - t * t.transpose();
    let j2 = -(t * e.transpose() + Matrix2::identity() * e.dot(&t)) * proj / len;
    let j0 = proj;
    let j1 = -j0 - j2;
    Some([j0, j1, j2])
}

/// Three-node curvature term on consecutive positions.
#[derive(Debug)]
pub struct CurvatureFactor {
    keys: [VariableKey; 3],
    sigma: f64,
    degenerate: AtomicBool,
}

pub fn curvature_factor(
    key_i: VariableKey,
    key_i1: VariableKey,
    key_i2: VariableKey,
    sigma_curv: f64,
) -> CurvatureFactor {
    CurvatureFactor {
        keys: [key_i, key_i1, key_i2],
        sigma: sigma_curv,
        degenerate: AtomicBool::new(false),
    }
}

impl CurvatureFactor {
    /// Whether any evaluation so far hit coincident points.
    pub fn was_degenerate(&self) -> bool {
        self.degenerate.load(Ordering::Relaxed)
    }

    fn points(b: &[&DVector<f64>]) -> Result<[Point; 3], FgError> {
        for v in b {
            check_block("curvature", v, STATE_DIM)?;
        }
        Ok([0, 1, 2].map(|k| Point::new(b[k][0], b[k][1])))
    }
}

impl Factor for CurvatureFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        2
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        let [p0, p1, p2] = Self::points(b)?;
        match curvature_residual(&p0, &p1, &p2) {
            Some(a) => Ok(DVector::from_column_slice(a.as_slice())),
            None => {
                self.degenerate.store(true, Ordering::Relaxed);
                Ok(DVector::zeros(2))
            }
        }
    }
    fn jacobians(&self, b: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        let [p0, p1, p2] = Self::points(b)?;
        let mut out = vec![DMatrix::zeros(2, STATE_DIM); 3];
        match curvature_jacobians(&p0, &p1, &p2) {
            Some(js) => {
                for (m, j) in out.iter_mut().zip(js.iter()) {
                    m.view_mut((0, 0), (2, 2)).copy_from(j);
                }
            }
            None => self.degenerate.store(true, Ordering::Relaxed),
        }
        Ok(out)
    }
    fn name(&self) -> &'static str {
        "curvature"
    }
}

/// Variable keys of one planning window: states `θ_0..θ_n` and controls
/// `u_0..u_{n−1}`, declared interleaved so the normal equations stay banded.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonKeys {
    pub states: Vec<VariableKey>,
    pub controls: Vec<VariableKey>,
}

impl HorizonKeys {
    pub fn new(n: usize) -> Self {
        Self {
            states: (0..=n).map(|k| VariableKey::new(2 * k as u32, STATE_DIM)).collect(),
            controls: (0..n).map(|k| VariableKey::new(2 * k as u32 + 1, CONTROL_DIM)).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn declare(&self, graph: &mut FactorGraph) -> Result<(), FgError> {
        for k in 0..self.states.len() {
            graph.add_variable(self.states[k])?;
            if let Some(u) = self.controls.get(k) {
                graph.add_variable(*u)?;
            }
        }
        Ok(())
    }
}

/// Everything besides keys that one window's factors depend on.
#[derive(Debug, Clone)]
pub struct HorizonInputs<'a> {
    /// Measured state pinned at `θ_0`.
    pub start: VehicleState,
    pub reference: &'a ReferenceWindow,
    /// Position prior on `θ_n` once the window reaches the end of the run.
    pub goal: Option<Point>,
    pub weights: &'a FactorWeights,
    pub bounds: &'a StateBounds,
    pub obstacle: Option<(Arc<SdfGrid>, ObstacleCostParams)>,
    pub params: &'a VehicleParams,
    pub ts: f64,
    pub scheme: Discretization,
    pub curvature: bool,
}

pub fn assemble_horizon_factors(
    keys: &HorizonKeys,
    inputs: &HorizonInputs<'_>,
) -> Result<Vec<Box<dyn Factor>>, FgError> {
    let n = keys.horizon();
    let w = inputs.weights;
    let reference = inputs.reference;
    if n < 1
        || keys.states.len() != n + 1
        || reference.positions.len() != n + 1
        || reference.speeds.len() != n + 1
    {
        return Err(FgError::Structure(format!(
            "window of {} states, {} controls, {} reference points, {} speeds",
            keys.states.len(),
            n,
            reference.positions.len(),
            reference.speeds.len()
        )));
    }
    let mut out: Vec<Box<dyn Factor>> = Vec::new();
    // the measured state is trusted as much as the model, otherwise the
    // solver relieves other terms by moving it
    let sigma_start = w.sigma_start_goal.min(w.sigma_sys);
    out.push(Box::new(state_prior_factor(keys.states[0], &inputs.start, sigma_start)));
    for (k, &key) in keys.states.iter().enumerate() {
        out.push(Box::new(reference_factor(key, reference.positions[k], w.sigma_ref)));
        out.push(Box::new(velocity_factor(
            key,
            Vector2::new(reference.speeds[k], 0.0),
            w.sigma_vel,
        )));
        out.push(Box::new(limit_factor(
            key,
            inputs.bounds.r_min,
            inputs.bounds.r_max,
            w.sigma_rlim,
            LimitBlock::Rotation,
        )));
        if let Some((sdf, params)) = &inputs.obstacle {
            out.push(Box::new(obstacle_factor(key, sdf.clone(), params.epsilon, params.sigma_obs)));
        }
    }
    for (k, &key) in keys.controls.iter().enumerate() {
        out.push(Box::new(limit_factor(
            key,
            inputs.bounds.u_min,
            inputs.bounds.u_max,
            w.sigma_ulim,
            LimitBlock::Control,
        )));
        out.push(Box::new(nonlinear_dynamics_factor(
            keys.states[k],
            key,
            keys.states[k + 1],
            *inputs.params,
            inputs.ts,
            inputs.scheme,
            w.sigma_sys,
        )));
    }
    if inputs.curvature {
        for k in 0..n - 1 {
            out.push(Box::new(curvature_factor(
                keys.states[k],
                keys.states[k + 1],
                keys.states[k + 2],
                w.sigma_curv,
            )));
        }
    }
    if let Some(goal) = inputs.goal {
        out.push(Box::new(
            prior_position_factor(keys.states[n], goal, w.sigma_start_goal).named("goal"),
        ));
    }
    Ok(out)
}
