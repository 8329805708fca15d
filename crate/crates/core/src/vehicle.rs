//! Dynamic bicycle model with simplified Pacejka lateral tire forces.

use nalgebra::{Matrix6, Matrix6x2, SMatrix, Vector2, Vector6};
use serde::{Deserialize, Serialize};

/// Longitudinal speed floor used only inside the slip-angle quotients.
pub const SLIP_MIN_VX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub phi: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64, phi: f64, omega: f64) -> Self {
        Self {
            x,
            y,
            vx,
            vy,
            phi,
            omega,
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.vx, self.vy, self.phi, self.omega)
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Steering angle, radians.
    pub delta: f64,
    /// Motor PWM duty cycle.
    pub d: f64,
}

impl ControlInput {
    pub fn new(delta: f64, d: f64) -> Self {
        Self { delta, d }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.delta, self.d)
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1])
    }
}

/// 1:43-scale car parameters. Defaults are the identified values of the
/// reference platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lb: f64,
    pub length: f64,
    pub width: f64,
    pub cr0: f64,
    pub cm1: f64,
    pub cm2: f64,
    pub cd: f64,
    pub bf: f64,
    pub cf: f64,
    pub df: f64,
    pub bb: f64,
    pub cb: f64,
    pub db: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 0.041,
            iz: 27.8e-6,
            lf: 0.029,
            lb: 0.033,
            length: 0.12,
            width: 0.06,
            cr0: 0.0518,
            cm1: 0.287,
            cm2: 0.0545,
            cd: 0.00035,
            bb: 3.3852,
            cb: 1.2691,
            db: 1.737,
            bf: 2.579,
            cf: 1.2,
            df: 0.192,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lb", self.lb),
            ("length", self.length),
            ("width", self.width),
            ("df", self.df),
            ("db", self.db),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("vehicle parameter {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireForces {
    pub ffy: f64,
    pub fby: f64,
    pub fbx: f64,
}

/// Slip angles `(α_f, α_b)`.
pub fn slip_angles(state: &VehicleState, control: &ControlInput, p: &VehicleParams) -> (f64, f64) {
    let vx = state.vx.max(SLIP_MIN_VX);
    let alpha_f = -((state.omega * p.lf + state.vy) / vx).atan() + control.delta;
    let alpha_b = ((state.omega * p.lb - state.vy) / vx).atan();
    (alpha_f, alpha_b)
}

pub fn tire_forces(state: &VehicleState, control: &ControlInput, p: &VehicleParams) -> TireForces {
    let (alpha_f, alpha_b) = slip_angles(state, control, p);
    TireForces {
        ffy: p.df * (p.cf * (p.bf * alpha_f).atan()).sin(),
        fby: p.db * (p.cb * (p.bb * alpha_b).atan()).sin(),
        fbx: (p.cm1 - p.cm2 * state.vx) * control.d - p.cr0 - p.cd * state.vx * state.vx,
    }
}

/// Continuous-time state derivative.
pub fn dynamics(state: &VehicleState, control: &ControlInput, p: &VehicleParams) -> Vector6<f64> {
    let f = tire_forces(state, control, p);
    let (s, c) = state.phi.sin_cos();
    let (sd, cd) = control.delta.sin_cos();
    let (vx, vy, w) = (state.vx, state.vy, state.omega);
    Vector6::new(
        vx * c - vy * s,
        vx * s + vy * c,
        (f.fbx - f.ffy * sd + p.m * vy * w) / p.m,
        (f.fby + f.ffy * cd - p.m * vx * w) / p.m,
        w,
        (f.ffy * p.lf * cd - f.fby * p.lb) / p.iz,
    )
}

/// Analytic Jacobians `(∂g/∂θ, ∂g/∂u)` of [`dynamics`].
pub fn dynamics_jacobians(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
) -> (Matrix6<f64>, Matrix6x2<f64>) {
    let (vx, vy, w) = (state.vx, state.vy, state.omega);
    let clamped = vx <= SLIP_MIN_VX;
    let vxc = vx.max(SLIP_MIN_VX);
    let dvxc = if clamped { 0.0 } else { 1.0 };

    let qf = (w * p.lf + vy) / vxc;
    let qb = (w * p.lb - vy) / vxc;
    let alpha_f = -qf.atan() + control.delta;
    let alpha_b = qb.atan();
    let kf = 1.0 / (1.0 + qf * qf);
    let kb = 1.0 / (1.0 + qb * qb);
    // ∂α/∂(vx, vy, ω)
    let daf = [kf * qf / vxc * dvxc, -kf / vxc, -kf * p.lf / vxc];
    let dab = [-kb * qb / vxc * dvxc, -kb / vxc, kb * p.lb / vxc];

    let pacejka_slope = |b: f64, c: f64, d: f64, a: f64| {
        let ba = b * a;
        d * (c * ba.atan()).cos() * c * b / (1.0 + ba * ba)
    };
    let ffy = p.df * (p.cf * (p.bf * alpha_f).atan()).sin();
    let sf = pacejka_slope(p.bf, p.cf, p.df, alpha_f);
    let sb = pacejka_slope(p.bb, p.cb, p.db, alpha_b);
    // ∂F/∂(vx, vy, ω); front force also depends on δ with unit slip slope
    let dffy = [sf * daf[0], sf * daf[1], sf * daf[2]];
    let dfby = [sb * dab[0], sb * dab[1], sb * dab[2]];
    let dffy_ddelta = sf;
    let dfbx_dvx = -p.cm2 * control.d - 2.0 * p.cd * vx;
    let dfbx_dd = p.cm1 - p.cm2 * vx;

    let (s, c) = state.phi.sin_cos();
    let (sd, cd) = control.delta.sin_cos();
    let mut a = Matrix6::zeros();
    let mut b = Matrix6x2::zeros();
    // position rows
    a[(0, 2)] = c;
    a[(0, 3)] = -s;
    a[(0, 4)] = -vx * s - vy * c;
    a[(1, 2)] = s;
    a[(1, 3)] = c;
    a[(1, 4)] = vx * c - vy * s;
    // vx row
    a[(2, 2)] = (dfbx_dvx - dffy[0] * sd) / p.m;
    a[(2, 3)] = (-dffy[1] * sd) / p.m + w;
    a[(2, 5)] = (-dffy[2] * sd) / p.m + vy;
    b[(2, 0)] = (-dffy_ddelta * sd - ffy * cd) / p.m;
    b[(2, 1)] = dfbx_dd / p.m;
    // vy row
    a[(3, 2)] = (dfby[0] + dffy[0] * cd) / p.m - w;
    a[(3, 3)] = (dfby[1] + dffy[1] * cd) / p.m;
    a[(3, 5)] = (dfby[2] + dffy[2] * cd) / p.m - vx;
    b[(3, 0)] = (dffy_ddelta * cd - ffy * sd) / p.m;
    // heading
    a[(4, 5)] = 1.0;
    // yaw rate
    a[(5, 2)] = (dffy[0] * p.lf * cd - dfby[0] * p.lb) / p.iz;
    a[(5, 3)] = (dffy[1] * p.lf * cd - dfby[1] * p.lb) / p.iz;
    a[(5, 5)] = (dffy[2] * p.lf * cd - dfby[2] * p.lb) / p.iz;
    b[(5, 0)] = (dffy_ddelta * p.lf * cd - ffy * p.lf * sd) / p.iz;
    (a, b)
}

fn add_scaled(state: &VehicleState, k: &Vector6<f64>, h: f64) -> VehicleState {
    let v = state.to_vector() + k * h;
    VehicleState::from_slice(v.as_slice())
}

/// One classical Runge–Kutta step of length `ts` with the control held.
pub fn integrate(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
    ts: f64,
) -> VehicleState {
    let k1 = dynamics(state, control, p);
    let k2 = dynamics(&add_scaled(state, &k1, ts / 2.0), control, p);
    let k3 = dynamics(&add_scaled(state, &k2, ts / 2.0), control, p);
    let k4 = dynamics(&add_scaled(state, &k3, ts), control, p);
    add_scaled(state, &(k1 + k2 * 2.0 + k3 * 2.0 + k4), ts / 6.0)
}

/// `substeps` Runge–Kutta steps covering `ts`.
pub fn integrate_substeps(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
    ts: f64,
    substeps: usize,
) -> VehicleState {
    let h = ts / substeps.max(1) as f64;
    let mut s = *state;
    for _ in 0..substeps.max(1) {
        s = integrate(&s, control, p, h);
    }
    s
}

/// Affine one-step model `θ⁺ ≈ A·θ + B·u + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDiscreteModel {
    pub a: Matrix6<f64>,
    pub b: Matrix6x2<f64>,
    pub c: Vector6<f64>,
    pub ts: f64,
}

impl AffineDiscreteModel {
    pub fn predict(&self, state: &VehicleState, control: &ControlInput) -> Vector6<f64> {
        self.a * state.to_vector() + self.b * control.to_vector() + self.c
    }
}

/// Forward-Euler affine discretization of the linearized dynamics.
pub fn linearize_discretize(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
    ts: f64,
) -> AffineDiscreteModel {
    let (ac, bc) = dynamics_jacobians(state, control, p);
    let g = dynamics(state, control, p);
    let theta = state.to_vector();
    let u = control.to_vector();
    AffineDiscreteModel {
        a: Matrix6::identity() + ac * ts,
        b: bc * ts,
        c: (g - ac * theta - bc * u) * ts,
        ts,
    }
}

/// How the dynamics factor maps one step to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Discretization {
    /// `θ⁺ = θ + Ts·g(θ, u)`.
    Euler,
    /// Runge–Kutta 4 over `substeps` equal sub-intervals.
    Rk4 { substeps: usize },
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization::Rk4 { substeps: 8 }
    }
}

/// Discrete one-step map and its exact Jacobians with respect to `(θ, u)`.
pub fn discrete_step(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
    ts: f64,
    scheme: Discretization,
) -> (Vector6<f64>, Matrix6<f64>, Matrix6x2<f64>) {
    match scheme {
        Discretization::Euler => {
            let m = linearize_discretize(state, control, p, ts);
            (m.predict(state, control), m.a, m.b)
        }
        Discretization::Rk4 { substeps } => rk4_sensitivity(state, control, p, ts, substeps.max(1)),
    }
}

/// Linearization of [`discrete_step`] as an affine model.
pub fn linearize_discrete_step(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
    ts: f64,
    scheme: Discretization,
) -> AffineDiscreteModel {
    let (next, a, b) = discrete_step(state, control, p, ts, scheme);
    AffineDiscreteModel {
        a,
        b,
        c: next - a * state.to_vector() - b * control.to_vector(),
        ts,
    }
}

type Sens = SMatrix<f64, 6, 8>;

fn rk4_sensitivity(
    state: &VehicleState,
    control: &ControlInput,
    p: &VehicleParams,
    ts: f64,
    substeps: usize,
) -> (Vector6<f64>, Matrix6<f64>, Matrix6x2<f64>) {
    let h = ts / substeps as f64;
    let mut z = state.to_vector();
    let mut sens = Sens::zeros();
    sens.fixed_view_mut::<6, 6>(0, 0).copy_from(&Matrix6::identity());
    let mut input_sel = SMatrix::<f64, 2, 8>::zeros();
    input_sel[(0, 6)] = 1.0;
    input_sel[(1, 7)] = 1.0;
    let stage = |z: &Vector6<f64>, s: &Sens| -> (Vector6<f64>, Sens) {
        let st = VehicleState::from_slice(z.as_slice());
        let (gz, gu) = dynamics_jacobians(&st, control, p);
        let k = dynamics(&st, control, p);
        let dk = gz * s + gu * input_sel;
        (k, dk)
    };
    for _ in 0..substeps {
        let (k1, d1) = stage(&z, &sens);
        let (k2, d2) = stage(&(z + k1 * (h / 2.0)), &(sens + d1 * (h / 2.0)));
        let (k3, d3) = stage(&(z + k2 * (h / 2.0)), &(sens + d2 * (h / 2.0)));
        let (k4, d4) = stage(&(z + k3 * h), &(sens + d3 * h));
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        sens += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0);
    }
    (
        z,
        sens.fixed_view::<6, 6>(0, 0).into_owned(),
        sens.fixed_view::<6, 2>(0, 6).into_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> VehicleParams {
        VehicleParams::default()
    }

    pub(crate) fn random_point(rng: &mut ChaCha8Rng) -> (VehicleState, ControlInput) {
        let s = VehicleState::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..4.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(-7.0..7.0),
            rng.random_range(-6.0..6.0),
        );
        let u = ControlInput::new(rng.random_range(-0.4..0.4), rng.random_range(-0.1..1.0));
        (s, u)
    }

    #[test]
    fn zero_slip_means_zero_lateral_force() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0, 0.3, 0.0);
        let f = tire_forces(&s, &ControlInput::new(0.0, 0.4), &p());
        assert_eq!(f.ffy, 0.0);
        assert_eq!(f.fby, 0.0);
    }

    #[test]
    fn drivetrain_force_hand_value() {
        let s = VehicleState::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.0);
        let f = tire_forces(&s, &ControlInput::new(0.0, 1.0), &p());
        // (0.287 − 0.0545·2)·1 − 0.0518 − 0.00035·4
        assert_relative_eq!(f.fbx, 0.1248, epsilon = 1e-12);
    }

    #[test]
    fn front_force_is_odd_and_bounded() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        for i in -200..=200 {
            let delta = i as f64 * 0.02;
            let a = tire_forces(&s, &ControlInput::new(delta, 0.0), &p()).ffy;
            let b = tire_forces(&s, &ControlInput::new(-delta, 0.0), &p()).ffy;
            assert_relative_eq!(a, -b, epsilon = 1e-15);
            assert!(a.abs() <= 0.192);
        }
    }

    #[test]
    fn coasting_derivative() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let g = dynamics(&s, &ControlInput::default(), &p());
        let pr = p();
        let expected = Vector6::new(1.0, 0.0, (-pr.cr0 - pr.cd) / pr.m, 0.0, 0.0, 0.0);
        assert_relative_eq!(g, expected, epsilon = 1e-14);
    }

    #[test]
    fn heading_rotates_velocity() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let g = dynamics(&s, &ControlInput::default(), &p());
        assert!(g[0].abs() < 1e-15);
        assert_relative_eq!(g[1], 1.0);
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.2, 0.0, 2.5);
        assert_eq!(dynamics(&s, &ControlInput::default(), &p())[4], 2.5);
    }

    #[test]
    fn rear_tire_restores_lateral_slip() {
        // positive lateral velocity must produce a negative rear lateral force
        let s = VehicleState::new(0.0, 0.0, 2.0, 0.1, 0.0, 0.0);
        assert!(tire_forces(&s, &ControlInput::default(), &p()).fby < 0.0);
    }

    #[test]
    fn jacobians_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (s, u) = random_point(&mut rng);
            let (a, b) = dynamics_jacobians(&s, &u, &p());
            let h = 1e-6;
            let mut fd_a = Matrix6::zeros();
            for j in 0..6 {
                let mut plus = s.to_vector();
                let mut minus = s.to_vector();
                plus[j] += h;
                minus[j] -= h;
                let col = (dynamics(&VehicleState::from_slice(plus.as_slice()), &u, &p())
                    - dynamics(&VehicleState::from_slice(minus.as_slice()), &u, &p()))
                    / (2.0 * h);
                fd_a.set_column(j, &col);
            }
            let mut fd_b = Matrix6x2::zeros();
            for j in 0..2 {
                let mut plus = u.to_vector();
                let mut minus = u.to_vector();
                plus[j] += h;
                minus[j] -= h;
                let col = (dynamics(&s, &ControlInput::from_slice(plus.as_slice()), &p())
                    - dynamics(&s, &ControlInput::from_slice(minus.as_slice()), &p()))
                    / (2.0 * h);
                fd_b.set_column(j, &col);
            }
            assert!((a - fd_a).norm() <= 1e-5 * fd_a.norm().max(1.0), "{a}\n{fd_a}");
            assert!((b - fd_b).norm() <= 1e-5 * fd_b.norm().max(1.0));
        }
    }

    #[test]
    fn straight_driving_position_rows() {
        let s = VehicleState::new(0.5, -0.2, 2.0, 0.0, 0.0, 0.0);
        let (a, _) = dynamics_jacobians(&s, &ControlInput::new(0.0, 0.3), &p());
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.0, -0.0, 0.0]);
        assert_eq!(a[(1, 4)], 2.0);
        assert_eq!(a[(1, 3)], 1.0);
    }

    #[test]
    fn affine_model_exact_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (s, u) = random_point(&mut rng);
            let m = linearize_discretize(&s, &u, &p(), 0.02);
            let euler = s.to_vector() + dynamics(&s, &u, &p()) * 0.02;
            assert_relative_eq!(m.predict(&s, &u), euler, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let s = VehicleState::new(0.0, 0.0, 2.0, 0.05, 0.3, 1.0);
        let u = ControlInput::new(0.1, 0.5);
        let reference = integrate_substeps(&s, &u, &p(), 0.01, 4096);
        let err = |n: usize| {
            (integrate_substeps(&s, &u, &p(), 0.01, n).to_vector() - reference.to_vector()).norm()
        };
        let ratio = err(4) / err(8);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn equilibrium_speed_advances_position_only() {
        // Fbx = 0 at fixed d: (cm1 − cm2 v)d − cr0 − cd v² = 0
        let pr = p();
        let d = 0.4;
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = (pr.cm1 - pr.cm2 * mid) * d - pr.cr0 - pr.cd * mid * mid;
            if f > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let v = 0.5 * (lo + hi);
        let s = VehicleState::new(1.0, 2.0, v, 0.0, 0.0, 0.0);
        let next = integrate(&s, &ControlInput::new(0.0, d), &pr, 0.02);
        assert_relative_eq!(next.x, 1.0 + v * 0.02, epsilon = 1e-12);
        assert_eq!(next.y, 2.0);
        assert_relative_eq!(next.vx, v, epsilon = 1e-12);
        assert_eq!((next.vy, next.phi, next.omega), (0.0, 0.0, 0.0));
    }

    #[test]
    fn heading_does_not_wrap() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0, 3.14, 5.0);
        let next = integrate(&s, &ControlInput::default(), &p(), 0.002);
        assert!(next.phi > 3.14 && next.phi < 3.16, "{}", next.phi);
    }

    #[test]
    fn euler_discretization_error_is_second_order() {
        let s = VehicleState::new(0.0, 0.0, 2.0, 0.02, 0.3, 0.5);
        let u = ControlInput::new(0.05, 0.4);
        let err = |ts: f64| {
            let m = linearize_discretize(&s, &u, &p(), ts);
            (integrate_substeps(&s, &u, &p(), ts, 64).to_vector() - m.predict(&s, &u)).norm()
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rk4_step_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scheme = Discretization::Rk4 { substeps: 4 };
        for _ in 0..30 {
            let (s, u) = random_point(&mut rng);
            let s = VehicleState { vx: s.vx.max(0.8), ..s };
            let (_, a, b) = discrete_step(&s, &u, &p(), 0.02, scheme);
            let h = 1e-6;
            for j in 0..8 {
                let mut sp = s.to_vector();
                let mut sm = s.to_vector();
                let mut up = u.to_vector();
                let mut um = u.to_vector();
                if j < 6 {
                    sp[j] += h;
                    sm[j] -= h;
                } else {
                    up[j - 6] += h;
                    um[j - 6] -= h;
                }
                let fp = discrete_step(&VehicleState::from_slice(sp.as_slice()), &ControlInput::from_slice(up.as_slice()), &p(), 0.02, scheme).0;
                let fm = discrete_step(&VehicleState::from_slice(sm.as_slice()), &ControlInput::from_slice(um.as_slice()), &p(), 0.02, scheme).0;
                let fd = (fp - fm) / (2.0 * h);
                let an = if j < 6 { a.column(j).into_owned() } else { b.column(j - 6).into_owned() };
                assert!((an - fd).norm() <= 1e-5 * fd.norm().max(1.0), "col {j}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn lateral_forces_odd_under_mirror() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (s, u) = random_point(&mut rng);
            let m = VehicleState { vy: -s.vy, omega: -s.omega, ..s };
            let mu = ControlInput { delta: -u.delta, ..u };
            let a = tire_forces(&s, &u, &p());
            let b = tire_forces(&m, &mu, &p());
            assert_relative_eq!(a.ffy, -b.ffy, epsilon = 1e-14);
            assert_relative_eq!(a.fby, -b.fby, epsilon = 1e-14);
            assert!(a.ffy.abs() <= 0.192 && a.fby.abs() <= 1.737);
        }
    }

    #[test]
    fn velocity_rows_independent_of_pose() {
        let s = VehicleState::new(0.0, 0.0, 1.5, 0.1, 0.0, 0.7);
        let t = VehicleState { x: 3.0, y: -1.0, phi: 2.2, ..s };
        let u = ControlInput::new(0.1, 0.5);
        let a = dynamics(&s, &u, &p());
        let b = dynamics(&t, &u, &p());
        assert_eq!(a.rows(2, 4), b.rows(2, 4));
        assert_relative_eq!(a.rows(0, 2).norm(), b.rows(0, 2).norm(), epsilon = 1e-14);
    }
}
