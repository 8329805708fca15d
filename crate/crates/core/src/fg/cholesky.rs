//! Profile (envelope) Cholesky factorization.
//!
//! Row `i` of the factor only has nonzeros in columns `first[i]..=i`, where
//! `first` is the envelope of the input matrix. Fill-in never leaves the
//! envelope, so chain-structured normal equations factor in time linear in
//! the chain length.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    // Dense row-major storage; only the envelope is touched.
    l: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors the symmetric matrix `a`, reading only its lower envelope.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: &DMatrix<f64>, first: &[usize]) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(a.ncols(), n);
        assert_eq!(first.len(), n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j].max(fi);
                let mut sum = a[(i, j)];
                let (row_i, row_j) = (&l[i * n..i * n + n], &l[j * n..j * n + n]);
                for k in fj..j {
                    sum -= row_i[k] * row_j[k];
                }
                if j == i {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Self {
            n,
            first: first.to_vec(),
            l,
        })
    }

    /// Solves `L·Lᵀ·x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y = b.clone();
        for i in 0..n {
            let row = &self.l[i * n..i * n + n];
            let mut s = y[i];
            for k in self.first[i]..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let row = &self.l[i * n..i * n + n];
            y[i] /= row[i];
            let xi = y[i];
            for k in self.first[i]..i {
                y[k] -= row[k] * xi;
            }
        }
        y
    }
}
