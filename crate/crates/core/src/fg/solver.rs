use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cholesky::EnvelopeCholesky;
use super::{FactorGraph, FgError, Values};

const LAMBDA_MAX: f64 = 1e16;
const LAMBDA_MIN: f64 = 1e-12;
const DIAG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Convergence threshold on `‖Δ‖∞`.
    pub eta: f64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub max_iterations: usize,
    /// Stop once a lightly damped step (`λ ≤ lambda_init`) after the first
    /// accepted one lowers the objective by less than this fraction of its
    /// value. Zero disables the test.
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            lambda_init: 1e-4,
            lambda_factor: 10.0,
            max_iterations: 100,
            rel_tol: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), FgError> {
        let ok = self.eta > 0.0
            && self.lambda_init > 0.0
            && self.lambda_factor > 1.0
            && self.max_iterations >= 1
            && self.eta.is_finite()
            && self.lambda_init.is_finite()
            && self.lambda_factor.is_finite()
            && (0.0..1.0).contains(&self.rel_tol);
        if ok {
            Ok(())
        } else {
            Err(FgError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Update norm fell below `eta`.
    Converged,
    MaxIterations,
    /// A lightly damped step improved the objective by less than `rel_tol`.
    SmallDecrease,
    /// Damping grew past its cap without finding a descent step.
    DampingCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub converged: bool,
    pub termination: Termination,
    /// Seconds.
    pub wall_time: f64,
    pub last_update_norm: f64,
    /// Trial steps that did not lower the objective.
    pub rejected_steps: usize,
    pub final_lambda: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
}

/// Levenberg–Marquardt on the whitened normal equations.
///
/// Damping is Marquardt-style: `H + λ·diag(H)` with the diagonal floored at
/// a small constant so directions without curvature still get regularized.
/// Trial points are projected onto the variable boxes declared on the graph.
pub fn solve_lm(
    graph: &FactorGraph,
    initial: &Values,
    config: &SolverConfig,
) -> Result<(Values, SolveStats), FgError> {
    solve_lm_with(graph, initial, config, None)
}

/// Map tried on the initial values and on every trial point after the box
/// projection, e.g. to restore constraints the linearization only satisfies
/// to first order. The retracted point replaces the original only when it
/// evaluates and has the lower objective.
pub trait Retraction {
    fn retract(&self, values: &mut Values) -> Result<(), FgError>;
}

/// [`solve_lm`] with an optional [`Retraction`].
pub fn solve_lm_with(
    graph: &FactorGraph,
    initial: &Values,
    config: &SolverConfig,
    retraction: Option<&dyn Retraction>,
) -> Result<(Values, SolveStats), FgError> {
    config.validate()?;
    graph.check_values(initial)?;
    if !graph.is_connected() {
        return Err(FgError::Disconnected);
    }
    let start = Instant::now();
    let mut values = initial.clone();
    let mut objective = graph.objective(&values)?;
    if let Some(r) = retraction {
        let mut retracted = values.clone();
        if r.retract(&mut retracted).is_ok() {
            if let Ok(o) = graph.objective(&retracted) {
                if o < objective {
                    values = retracted;
                    objective = o;
                }
            }
        }
    }
    let mut history = vec![objective];
    let mut lambda = config.lambda_init;
    let mut iterations = 0;
    let mut last_update_norm = f64::INFINITY;
    let mut termination = Termination::MaxIterations;
    let mut rejected_steps = 0;

    'outer: while iterations < config.max_iterations {
        iterations += 1;
        let system = graph.linearize(&values)?;
        let (mut h, g) = system.normal_equations();
        let mut rhs = -&g;
        for i in active_bounds(graph, &values, &g, &system.variable_offsets) {
            h.row_mut(i).fill(0.0);
            h.column_mut(i).fill(0.0);
            h[(i, i)] = 1.0;
            rhs[i] = 0.0;
        }
        let envelope = system.envelope();
        let diag: DVector<f64> = h.diagonal().map(|d| d.max(DIAG_FLOOR));

        loop {
            let mut damped = h.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * diag[i];
            }
            let Some(chol) = EnvelopeCholesky::factor(&damped, &envelope) else {
                lambda *= config.lambda_factor;
                if lambda > LAMBDA_MAX {
                    termination = Termination::DampingCap;
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&rhs);
            let mut trial = step(graph, &values, &delta, &system.variable_offsets);
            // Trial points where a factor cannot be evaluated count as rejected.
            let mut trial_objective = graph.objective(&trial).unwrap_or(f64::INFINITY);
            if let Some(r) = retraction {
                let mut retracted = trial.clone();
                if r.retract(&mut retracted).is_ok() {
                    let o = graph.objective(&retracted).unwrap_or(f64::INFINITY);
                    if o < trial_objective {
                        trial = retracted;
                        trial_objective = o;
                    }
                }
            }
            let norm = update_norm(&values, &trial);
            last_update_norm = norm;
            let small = norm < config.eta;
            if trial_objective < objective || (small && trial_objective <= objective) {
                let decrease = objective - trial_objective;
                let light = lambda <= config.lambda_init;
                values = trial;
                objective = trial_objective;
                history.push(objective);
                lambda = (lambda / config.lambda_factor).max(LAMBDA_MIN);
                if small {
                    termination = Termination::Converged;
                    break 'outer;
                }
                if light && history.len() > 2 && decrease <= config.rel_tol * (objective + decrease) {
                    termination = Termination::SmallDecrease;
                    break 'outer;
                }
                break;
            }
            rejected_steps += 1;
            if small {
                termination = Termination::Converged;
                break 'outer;
            }
            lambda *= config.lambda_factor;
            if lambda > LAMBDA_MAX {
                termination = Termination::DampingCap;
                break 'outer;
            }
        }
    }

    let stats = SolveStats {
        iterations,
        initial_objective: history[0],
        final_objective: objective,
        converged: termination == Termination::Converged,
        termination,
        wall_time: start.elapsed().as_secs_f64(),
        last_update_norm,
        rejected_steps,
        final_lambda: lambda,
        objective_history: history,
    };
    Ok((values, stats))
}

/// Columns of boxed components that sit on a bound while the descent
/// direction points out of the box; they are held fixed for the iteration.
fn active_bounds(graph: &FactorGraph, values: &Values, gradient: &DVector<f64>, offsets: &[usize]) -> Vec<usize> {
    let mut active = Vec::new();
    for (key, &off) in graph.variables().iter().zip(offsets) {
        let (Some((lo, hi)), Some(v)) = (graph.variable_box(*key), values.get(*key)) else {
            continue;
        };
        for i in 0..key.dim {
            let g = gradient[off + i];
            if (v[i] <= lo[i] && g > 0.0) || (v[i] >= hi[i] && g < 0.0) {
                active.push(off + i);
            }
        }
    }
    active
}

/// `values + Δ` projected onto the variable boxes.
fn step(graph: &FactorGraph, values: &Values, delta: &DVector<f64>, offsets: &[usize]) -> Values {
    let mut out = values.clone();
    for (key, &off) in graph.variables().iter().zip(offsets) {
        let Some(v) = out.get_mut(*key) else { continue };
        *v += delta.rows(off, key.dim);
        if let Some((lo, hi)) = graph.variable_box(*key) {
            for i in 0..key.dim {
                v[i] = v[i].clamp(lo[i], hi[i]);
            }
        }
    }
    out
}

/// Infinity norm of the change between two value sets over the same keys.
fn update_norm(a: &Values, b: &Values) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|((_, x), (_, y))| (x - y).amax())
        .fold(0.0, f64::max)
}
