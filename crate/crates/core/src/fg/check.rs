use nalgebra::{DMatrix, DVector};

use super::{Factor, FgError};

/// Central-difference Jacobians of a factor's residual, one per key.
pub fn numerical_jacobians(
    factor: &dyn Factor,
    blocks: &[&DVector<f64>],
    step: f64,
) -> Result<Vec<DMatrix<f64>>, FgError> {
    let m = factor.residual_dim();
    let mut out = Vec::with_capacity(blocks.len());
    for (b, block) in blocks.iter().enumerate() {
        let mut jac = DMatrix::zeros(m, block.len());
        for c in 0..block.len() {
            let mut plus = (*block).clone();
            let mut minus = (*block).clone();
            plus[c] += step;
            minus[c] -= step;
            let eval = |v: &DVector<f64>| {
                let mut args: Vec<&DVector<f64>> = blocks.to_vec();
                args[b] = v;
                factor.residual(&args)
            };
            let diff = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            jac.set_column(c, &diff);
        }
        out.push(jac);
    }
    Ok(out)
}

/// Largest relative deviation between analytic and central-difference
/// Jacobians, measured per block as `‖J − J_fd‖ / max(‖J_fd‖, 1)`.
pub fn jacobian_error(factor: &dyn Factor, blocks: &[&DVector<f64>], step: f64) -> Result<f64, FgError> {
    let analytic = factor.jacobians(blocks)?;
    let numeric = numerical_jacobians(factor, blocks, step)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).norm() / n.norm().max(1.0))
        .fold(0.0, f64::max))
}
