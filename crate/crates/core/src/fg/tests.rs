use nalgebra::{dvector, DMatrix, DVector};

use super::*;

/// `r = x − μ` on a whole variable.
struct Prior {
    keys: [VariableKey; 1],
    mean: DVector<f64>,
    sigma: f64,
}

impl Factor for Prior {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        self.mean.len()
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        Ok(b[0] - &self.mean)
    }
    fn jacobians(&self, _: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        Ok(vec![DMatrix::identity(self.mean.len(), self.mean.len())])
    }
}

/// `r = x_{k+1} − x_k − u_k`, a linear stand-in for a dynamics chain.
struct Between {
    keys: [VariableKey; 3],
}

impl Factor for Between {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn residual_dim(&self) -> usize {
        2
    }
    fn sigma(&self) -> f64 {
        1.0
    }
    fn residual(&self, b: &[&DVector<f64>]) -> Result<DVector<f64>, FgError> {
        Ok(b[2] - b[0] - b[1])
    }
    fn jacobians(&self, _: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        let i = DMatrix::identity(2, 2);
        Ok(vec![-&i, -&i, i])
    }
}

/// Rosenbrock residuals `(1 − x, 10(y − x²))`.
struct Rosenbrock {
    keys: [VariableKey; 1],
    sigma: f64,
}

impl Factor for Rosenbrock {
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
        let (x, y) = (b[0][0], b[0][1]);
        Ok(dvector![1.0 - x, 10.0 * (y - x * x)])
    }
    fn jacobians(&self, b: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError> {
        let x = b[0][0];
        Ok(vec![DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x, 10.0])])
    }
}

fn prior(key: VariableKey, mean: DVector<f64>, sigma: f64) -> Box<dyn Factor> {
    Box::new(Prior {
        keys: [key],
        mean,
        sigma,
    })
}

fn single_prior_graph(mean: DVector<f64>, sigma: f64) -> (FactorGraph, VariableKey) {
    let key = VariableKey::new(0, mean.len());
    let mut g = FactorGraph::new();
    g.add_variable(key).unwrap();
    g.add_factor(prior(key, mean, sigma)).unwrap();
    (g, key)
}

fn zero_values(g: &FactorGraph) -> Values {
    let mut v = Values::new();
    for k in g.variables() {
        v.insert(*k, DVector::zeros(k.dim)).unwrap();
    }
    v
}

#[test]
fn objective_zero_residual() {
    let (g, _) = single_prior_graph(dvector![0.0, 0.0], 1.0);
    assert_eq!(g.objective(&zero_values(&g)).unwrap(), 0.0);
}

#[test]
fn objective_hand_values() {
    let (g, _) = single_prior_graph(dvector![-2.0], 1.0);
    assert_eq!(g.objective(&zero_values(&g)).unwrap(), 2.0);
    let (g, _) = single_prior_graph(dvector![-3.0, -4.0], 2.0);
    assert_eq!(g.objective(&zero_values(&g)).unwrap(), 3.125);
}

#[test]
fn objective_missing_variable_is_structural_error() {
    let (g, key) = single_prior_graph(dvector![1.0], 1.0);
    assert_eq!(
        g.objective(&Values::new()),
        Err(FgError::MissingVariable(key))
    );
}

#[test]
fn rejects_bad_structure() {
    let mut g = FactorGraph::new();
    let k = VariableKey::new(0, 2);
    assert_eq!(
        g.add_factor(prior(k, dvector![0.0, 0.0], 1.0)).err(),
        Some(FgError::UndeclaredVariable(k))
    );
    g.add_variable(k).unwrap();
    assert!(g.add_variable(VariableKey::new(0, 3)).is_err());
    assert!(g.add_factor(prior(k, dvector![0.0, 0.0], 0.0)).is_err());
    let mut v = Values::new();
    assert!(v.insert(k, dvector![1.0]).is_err());
}

#[test]
fn unary_factor_has_single_block() {
    let mut g = FactorGraph::new();
    let a = VariableKey::new(0, 2);
    let b = VariableKey::new(1, 2);
    g.add_variable(a).unwrap();
    g.add_variable(b).unwrap();
    g.add_factor(prior(a, dvector![1.0, 2.0], 1.0)).unwrap();
    let sys = g.linearize(&zero_values(&g)).unwrap();
    assert_eq!(sys.blocks.len(), 1);
    let j = sys.dense_jacobian();
    assert_eq!(j.shape(), (2, 4));
    assert_eq!(j.columns(2, 2).amax(), 0.0);
    assert_eq!(j.columns(0, 2), DMatrix::identity(2, 2));
}

#[test]
fn whitening_scales_blocks() {
    let (g1, _) = single_prior_graph(dvector![1.0, 1.0], 1.0);
    let (g2, _) = single_prior_graph(dvector![1.0, 1.0], 0.5);
    let j1 = g1.linearize(&zero_values(&g1)).unwrap().dense_jacobian();
    let j2 = g2.linearize(&zero_values(&g2)).unwrap().dense_jacobian();
    assert_eq!(j2, j1 * 2.0);
}

fn chain_graph(n: usize) -> FactorGraph {
    let mut g = FactorGraph::new();
    let state = |k: usize| VariableKey::new(2 * k as u32, 2);
    let control = |k: usize| VariableKey::new(2 * k as u32 + 1, 2);
    for k in 0..n {
        g.add_variable(state(k)).unwrap();
        g.add_variable(control(k)).unwrap();
    }
    g.add_variable(state(n)).unwrap();
    g.add_factor(prior(state(0), dvector![0.0, 0.0], 1.0)).unwrap();
    for k in 0..n {
        g.add_factor(Box::new(Between {
            keys: [state(k), control(k), state(k + 1)],
        }))
        .unwrap();
    }
    g
}

#[test]
fn chain_normal_equations_are_block_tridiagonal() {
    let n = 4;
    let g = chain_graph(n);
    let sys = g.linearize(&zero_values(&g)).unwrap();
    assert_eq!(
        sys.blocks.len(),
        g.factors().iter().map(|f| f.keys().len()).sum::<usize>()
    );
    let (h, _) = sys.normal_equations();
    // stage k = (x_k, u_k), each 4 columns wide; the last stage is x_n alone.
    let stage = |col: usize| col / 4;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            if stage(i).abs_diff(stage(j)) > 1 {
                assert_eq!(h[(i, j)], 0.0, "fill at ({i},{j})");
            }
        }
    }
    // adjacent stages do couple
    assert!(h.view((0, 4), (4, 4)).amax() > 0.0);
}

#[test]
fn normal_equations_match_dense_product() {
    let g = chain_graph(3);
    let mut v = zero_values(&g);
    for (k, _) in g.variables().iter().enumerate() {
        let key = g.variables()[k];
        *v.get_mut(key).unwrap() = DVector::from_fn(key.dim, |i, _| (k * 3 + i) as f64 * 0.1);
    }
    let sys = g.linearize(&v).unwrap();
    let j = sys.dense_jacobian();
    let (h, grad) = sys.normal_equations();
    assert!((h - j.transpose() * &j).amax() < 1e-12);
    assert!((grad - j.transpose() * &sys.rhs).amax() < 1e-12);
}

#[test]
fn linear_problem_solves_in_one_step() {
    let (g, key) = single_prior_graph(dvector![3.0], 0.1);
    let (vals, stats) = solve_lm(&g, &zero_values(&g), &SolverConfig::default()).unwrap();
    assert!((vals.get(key).unwrap()[0] - 3.0).abs() < 1e-3);
    // the first accepted step lands on the minimizer up to the λ-relative shrink
    let h = &stats.objective_history;
    assert!(h[1] / h[0] <= 1.1e-8, "{h:?}");
    assert!(stats.converged);
}

fn rosenbrock_graph(sigma: f64) -> (FactorGraph, VariableKey, Values) {
    let key = VariableKey::new(7, 2);
    let mut g = FactorGraph::new();
    g.add_variable(key).unwrap();
    g.add_factor(Box::new(Rosenbrock { keys: [key], sigma }))
        .unwrap();
    let mut v = Values::new();
    v.insert(key, dvector![-1.2, 1.0]).unwrap();
    (g, key, v)
}

/// Gradient descent with Armijo backtracking on `½‖r‖²`.
fn rosenbrock_gradient_descent() -> (f64, f64) {
    let f = |x: f64, y: f64| 0.5 * ((1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2));
    let grad = |x: f64, y: f64| {
        (
            -(1.0 - x) - 200.0 * x * (y - x * x),
            100.0 * (y - x * x),
        )
    };
    let (mut x, mut y) = (-1.2, 1.0);
    for _ in 0..2_000_000 {
        let (gx, gy) = grad(x, y);
        let gn2 = gx * gx + gy * gy;
        if gn2 < 1e-26 {
            break;
        }
        let mut t = 1.0;
        let f0 = f(x, y);
        while f(x - t * gx, y - t * gy) > f0 - 0.5 * t * gn2 {
            t *= 0.5;
        }
        x -= t * gx;
        y -= t * gy;
    }
    (x, y)
}

#[test]
fn rosenbrock_converges_and_agrees_with_gradient_descent() {
    let (gx, gy) = rosenbrock_gradient_descent();
    assert!((gx - 1.0).abs() < 1e-8 && (gy - 1.0).abs() < 1e-8);

    let (g, key, init) = rosenbrock_graph(1.0);
    let config = SolverConfig {
        eta: 1e-10,
        ..SolverConfig::default()
    };
    let (vals, stats) = solve_lm(&g, &init, &config).unwrap();
    let p = vals.get(key).unwrap();
    assert!(stats.converged, "{stats:?}");
    assert!((p[0] - gx).abs() < 1e-6 && (p[1] - gy).abs() < 1e-6);
    assert!((p - dvector![1.0, 1.0]).norm() <= 1e-6);
    for w in stats.objective_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn solving_twice_is_bit_identical() {
    let (g, key, init) = rosenbrock_graph(1.0);
    let cfg = SolverConfig::default();
    let (a, sa) = solve_lm(&g, &init, &cfg).unwrap();
    let (b, sb) = solve_lm(&g, &init, &cfg).unwrap();
    assert_eq!(a.get(key), b.get(key));
    assert_eq!(sa.objective_history, sb.objective_history);
}

#[test]
fn common_sigma_scaling_keeps_minimizer() {
    let cfg = SolverConfig {
        eta: 1e-10,
        ..SolverConfig::default()
    };
    let (g1, key, init) = rosenbrock_graph(1.0);
    let (g3, _, _) = rosenbrock_graph(3.0);
    let (a, sa) = solve_lm(&g1, &init, &cfg).unwrap();
    let (b, sb) = solve_lm(&g3, &init, &cfg).unwrap();
    assert!((a.get(key).unwrap() - b.get(key).unwrap()).amax() < 1e-8);
    assert!((sa.initial_objective / 9.0 - sb.initial_objective).abs() < 1e-12);
}

#[test]
fn max_iterations_returns_best_so_far() {
    let (g, _, init) = rosenbrock_graph(1.0);
    let cfg = SolverConfig {
        max_iterations: 2,
        ..SolverConfig::default()
    };
    let (_, stats) = solve_lm(&g, &init, &cfg).unwrap();
    assert!(!stats.converged);
    assert_eq!(stats.termination, Termination::MaxIterations);
    assert!(stats.final_objective <= stats.initial_objective);
}

#[test]
fn disconnected_graph_is_rejected() {
    let mut g = FactorGraph::new();
    let a = VariableKey::new(0, 1);
    let b = VariableKey::new(1, 1);
    g.add_variable(a).unwrap();
    g.add_variable(b).unwrap();
    g.add_factor(prior(a, dvector![0.0], 1.0)).unwrap();
    g.add_factor(prior(b, dvector![0.0], 1.0)).unwrap();
    let v = zero_values(&g);
    assert_eq!(
        solve_lm(&g, &v, &SolverConfig::default()).err(),
        Some(FgError::Disconnected)
    );
}

#[test]
fn invalid_config_is_rejected() {
    let (g, _, init) = rosenbrock_graph(1.0);
    let cfg = SolverConfig {
        lambda_factor: 1.0,
        ..SolverConfig::default()
    };
    assert!(matches!(
        solve_lm(&g, &init, &cfg),
        Err(FgError::InvalidConfig(_))
    ));
}

#[test]
fn locality_of_residuals() {
    let g = chain_graph(4);
    let base = zero_values(&g);
    let before: Vec<_> = (0..g.factors().len())
        .map(|i| g.factor_residual(i, &base).unwrap())
        .collect();
    for key in g.variables() {
        let mut moved = base.clone();
        moved.get_mut(*key).unwrap().add_scalar_mut(0.3);
        for (i, f) in g.factors().iter().enumerate() {
            let changed = g.factor_residual(i, &moved).unwrap() != before[i];
            assert_eq!(changed, f.keys().contains(key));
        }
    }
}

#[test]
fn box_holds_minimizer_on_the_bound() {
    let (mut g, key) = single_prior_graph(dvector![3.0, -0.5], 0.1);
    g.set_box(key, dvector![0.0, -1.0], dvector![1.0, 1.0]).unwrap();
    let (vals, stats) = solve_lm(&g, &zero_values(&g), &SolverConfig::default()).unwrap();
    let v = vals.get(key).unwrap();
    assert_eq!(v[0], 1.0);
    assert!((v[1] + 0.5).abs() < 1e-6);
    assert!(stats.converged, "{stats:?}");
}

#[test]
fn box_rejects_bad_shapes() {
    let (mut g, key) = single_prior_graph(dvector![0.0, 0.0], 1.0);
    assert!(matches!(
        g.set_box(key, dvector![0.0], dvector![1.0]),
        Err(FgError::DimensionMismatch { .. })
    ));
    assert!(matches!(
        g.set_box(key, dvector![0.0, 2.0], dvector![1.0, 1.0]),
        Err(FgError::InvalidConfig(_))
    ));
    let stranger = VariableKey::new(9, 2);
    assert!(g.set_box(stranger, dvector![0.0, 0.0], dvector![1.0, 1.0]).is_err());
}

/// Snaps the second coordinate onto the first.
struct Tie(VariableKey);

impl Retraction for Tie {
    fn retract(&self, values: &mut Values) -> Result<(), FgError> {
        let v = values.get_mut(self.0).ok_or(FgError::MissingVariable(self.0))?;
        v[1] = v[0];
        Ok(())
    }
}

#[test]
fn retraction_applies_to_start_and_iterates() {
    let (g, key) = single_prior_graph(dvector![2.0, 2.0], 1.0);
    let mut init = zero_values(&g);
    init.get_mut(key).unwrap()[1] = 5.0;
    let (vals, stats) = solve_lm_with(&g, &init, &SolverConfig::default(), Some(&Tie(key))).unwrap();
    let v = vals.get(key).unwrap();
    assert_eq!(v[0], v[1]);
    assert!((v[0] - 2.0).abs() < 1e-6);
    // the objective of the retracted start, not of the raw one
    assert_eq!(stats.initial_objective, 4.0);
}

#[test]
fn small_decrease_is_not_convergence() {
    // two priors in conflict: the minimum objective is 9, reached at 0
    let (mut g, key) = single_prior_graph(dvector![3.0], 1.0);
    g.add_factor(prior(key, dvector![-3.0], 1.0)).unwrap();
    let mut init = zero_values(&g);
    init.get_mut(key).unwrap()[0] = 1.0;
    let cfg = SolverConfig {
        eta: 1e-14,
        rel_tol: 1e-3,
        ..SolverConfig::default()
    };
    let (vals, stats) = solve_lm(&g, &init, &cfg).unwrap();
    assert_eq!(stats.termination, Termination::SmallDecrease, "{stats:?}");
    assert!(!stats.converged);
    assert_eq!(stats.objective_history.len(), 3);
    assert!(vals.get(key).unwrap()[0].abs() < 1e-3);

    let off = SolverConfig { rel_tol: 0.0, ..cfg };
    let (_, stats) = solve_lm(&g, &init, &off).unwrap();
    assert_eq!(stats.termination, Termination::Converged);
    assert!(stats.last_update_norm < off.eta);
}
