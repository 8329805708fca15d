use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::FgError;

/// Identifies one variable block of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableKey {
    pub id: u32,
    pub dim: usize,
}

impl VariableKey {
    pub fn new(id: u32, dim: usize) -> Self {
        assert!(dim > 0, "variable dimension must be positive");
        Self { id, dim }
    }
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}[{}]", self.id, self.dim)
    }
}

/// Assignment of a vector to each variable key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Values {
    entries: BTreeMap<u32, (VariableKey, DVector<f64>)>,
}

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: VariableKey, value: DVector<f64>) -> Result<(), FgError> {
        if value.len() != key.dim {
            return Err(FgError::DimensionMismatch {
                key,
                got: value.len(),
            });
        }
        self.entries.insert(key.id, (key, value));
        Ok(())
    }

    pub fn get(&self, key: VariableKey) -> Option<&DVector<f64>> {
        match self.entries.get(&key.id) {
            Some((k, v)) if *k == key => Some(v),
            _ => None,
        }
    }

    pub fn get_mut(&mut self, key: VariableKey) -> Option<&mut DVector<f64>> {
        match self.entries.get_mut(&key.id) {
            Some((k, v)) if *k == key => Some(v),
            _ => None,
        }
    }

    pub fn contains(&self, key: VariableKey) -> bool {
        self.get(key).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VariableKey, &DVector<f64>)> {
        self.entries.values().map(|(k, v)| (*k, v))
    }
}

/// A residual term attached to a handful of variables.
///
/// The residual is weighted by an isotropic noise model `σ²I`, so the
/// factor contributes `½‖r‖²/σ²` to the objective. `blocks` passed to
/// [`Factor::residual`] and [`Factor::jacobians`] follow the order of
/// [`Factor::keys`].
pub trait Factor: Send + Sync {
    fn keys(&self) -> &[VariableKey];
    fn residual_dim(&self) -> usize;
    fn sigma(&self) -> f64;
    fn residual(&self, blocks: &[&DVector<f64>]) -> Result<DVector<f64>, FgError>;
    /// One `residual_dim × key.dim` matrix per key.
    fn jacobians(&self, blocks: &[&DVector<f64>]) -> Result<Vec<DMatrix<f64>>, FgError>;

    fn linearize(
        &self,
        blocks: &[&DVector<f64>],
    ) -> Result<(DVector<f64>, Vec<DMatrix<f64>>), FgError> {
        Ok((self.residual(blocks)?, self.jacobians(blocks)?))
    }

    fn name(&self) -> &'static str {
        "factor"
    }
}

pub struct FactorGraph {
    variables: Vec<VariableKey>,
    index: HashMap<u32, usize>,
    factors: Vec<Box<dyn Factor>>,
    boxes: HashMap<u32, (DVector<f64>, DVector<f64>)>,
}

impl fmt::Debug for FactorGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactorGraph")
            .field("variables", &self.variables.len())
            .field("factors", &self.factors.len())
            .finish()
    }
}

impl Default for FactorGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl FactorGraph {
    pub fn new() -> Self {
        Self {
            variables: Vec::new(),
            index: HashMap::new(),
            factors: Vec::new(),
            boxes: HashMap::new(),
        }
    }

    /// Restricts a declared variable to `lower ≤ x ≤ upper` componentwise.
    /// The solver keeps trial points inside the box; the objective itself is
    /// unchanged.
    pub fn set_box(&mut self, key: VariableKey, lower: DVector<f64>, upper: DVector<f64>) -> Result<(), FgError> {
        match self.index.get(&key.id) {
            Some(&i) if self.variables[i] == key => {}
            _ => return Err(FgError::UndeclaredVariable(key)),
        }
        if lower.len() != key.dim || upper.len() != key.dim {
            return Err(FgError::DimensionMismatch {
                key,
                got: if lower.len() != key.dim { lower.len() } else { upper.len() },
            });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(FgError::InvalidConfig(format!("empty box for {key:?}")));
        }
        self.boxes.insert(key.id, (lower, upper));
        Ok(())
    }

    pub fn variable_box(&self, key: VariableKey) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.boxes.get(&key.id).map(|(l, u)| (l, u))
    }

    /// Declares a variable. Declaration order fixes the column ordering of
    /// the linear system, so chains should be declared in chain order.
    pub fn add_variable(&mut self, key: VariableKey) -> Result<(), FgError> {
        if let Some(&i) = self.index.get(&key.id) {
            if self.variables[i] != key {
                return Err(FgError::DuplicateVariable(key));
            }
            return Ok(());
        }
        self.index.insert(key.id, self.variables.len());
        self.variables.push(key);
        Ok(())
    }

    pub fn add_factor(&mut self, factor: Box<dyn Factor>) -> Result<(), FgError> {
        if !(factor.sigma() > 0.0 && factor.sigma().is_finite()) {
            return Err(FgError::InvalidSigma {
                factor: factor.name(),
                sigma: factor.sigma(),
            });
        }
        for key in factor.keys() {
            match self.index.get(&key.id) {
                Some(&i) if self.variables[i] == *key => {}
                _ => return Err(FgError::UndeclaredVariable(*key)),
            }
        }
        self.factors.push(factor);
        Ok(())
    }

    pub fn variables(&self) -> &[VariableKey] {
        &self.variables
    }

    pub fn factors(&self) -> &[Box<dyn Factor>] {
        &self.factors
    }

    pub fn variable_index(&self, key: VariableKey) -> Option<usize> {
        self.index
            .get(&key.id)
            .copied()
            .filter(|&i| self.variables[i] == key)
    }

    /// Column offset of each variable in declaration order, plus the total width.
    pub fn column_offsets(&self) -> (Vec<usize>, usize) {
        let mut offsets = Vec::with_capacity(self.variables.len());
        let mut col = 0;
        for key in &self.variables {
            offsets.push(col);
            col += key.dim;
        }
        (offsets, col)
    }

    pub fn check_values(&self, values: &Values) -> Result<(), FgError> {
        for key in &self.variables {
            if !values.contains(*key) {
                return Err(FgError::MissingVariable(*key));
            }
        }
        Ok(())
    }

    /// True when every variable is reachable from the first through factors.
    pub fn is_connected(&self) -> bool {
        let n = self.variables.len();
        if n <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for factor in &self.factors {
            let idx: Vec<usize> = factor
                .keys()
                .iter()
                .filter_map(|k| self.variable_index(*k))
                .collect();
            for w in idx.windows(2) {
                let a = find(&mut parent, w[0]);
                let b = find(&mut parent, w[1]);
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        (1..n).all(|i| find(&mut parent, i) == root)
    }

    fn blocks_for<'v>(
        &self,
        factor: &dyn Factor,
        values: &'v Values,
    ) -> Result<Vec<&'v DVector<f64>>, FgError> {
        factor
            .keys()
            .iter()
            .map(|k| values.get(*k).ok_or(FgError::MissingVariable(*k)))
            .collect()
    }

    /// Unweighted residual of factor `i`.
    pub fn factor_residual(&self, i: usize, values: &Values) -> Result<DVector<f64>, FgError> {
        let factor = self.factors[i].as_ref();
        let blocks = self.blocks_for(factor, values)?;
        factor.residual(&blocks)
    }

    /// Negative log posterior up to a constant: `Σ ½‖r_f‖²/σ_f²`.
    pub fn objective(&self, values: &Values) -> Result<f64, FgError> {
        let mut total = 0.0;
        for (i, factor) in self.factors.iter().enumerate() {
            let blocks = self.blocks_for(factor.as_ref(), values)?;
            let r = factor.residual(&blocks)?;
            let s = factor.sigma();
            let e = 0.5 * r.norm_squared() / (s * s);
            if !e.is_finite() {
                return Err(FgError::NonFinite {
                    factor: i,
                    name: factor.name(),
                });
            }
            total += e;
        }
        Ok(total)
    }

    /// Objective contribution summed per factor name.
    pub fn objective_by_name(&self, values: &Values) -> Result<BTreeMap<&'static str, f64>, FgError> {
        let mut out = BTreeMap::new();
        for factor in &self.factors {
            let blocks = self.blocks_for(factor.as_ref(), values)?;
            let r = factor.residual(&blocks)?;
            let s = factor.sigma();
            *out.entry(factor.name()).or_insert(0.0) += 0.5 * r.norm_squared() / (s * s);
        }
        Ok(out)
    }

    /// Whitened Jacobian and residual at `values`.
    pub fn linearize(&self, values: &Values) -> Result<LinearSystem, FgError> {
        let (offsets, cols) = self.column_offsets();
        let mut blocks = Vec::new();
        let mut rhs = Vec::new();
        let mut factor_rows = Vec::with_capacity(self.factors.len());
        let mut row = 0;
        for (fi, factor) in self.factors.iter().enumerate() {
            let vals = self.blocks_for(factor.as_ref(), values)?;
            let (r, jacs) = factor.linearize(&vals)?;
            let inv = 1.0 / factor.sigma();
            let m = factor.residual_dim();
            if r.len() != m || jacs.len() != factor.keys().len() {
                return Err(FgError::BadFactorShape {
                    factor: fi,
                    name: factor.name(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(FgError::NonFinite {
                    factor: fi,
                    name: factor.name(),
                });
            }
            for (key, jac) in factor.keys().iter().zip(jacs) {
                if jac.nrows() != m || jac.ncols() != key.dim {
                    return Err(FgError::BadFactorShape {
                        factor: fi,
                        name: factor.name(),
                    });
                }
                if jac.iter().any(|v| !v.is_finite()) {
                    return Err(FgError::NonFinite {
                        factor: fi,
                        name: factor.name(),
                    });
                }
                let var = self.variable_index(*key).expect("validated on insert");
                blocks.push(JacobianBlock {
                    factor: fi,
                    row,
                    variable: var,
                    col: offsets[var],
                    matrix: jac * inv,
                });
            }
            rhs.extend(r.iter().map(|v| v * inv));
            factor_rows.push(row);
            row += m;
        }
        Ok(LinearSystem {
            rows: row,
            cols,
            blocks,
            rhs: DVector::from_vec(rhs),
            factor_rows,
            variable_dims: self.variables.iter().map(|k| k.dim).collect(),
            variable_offsets: offsets,
        })
    }
}

/// One nonzero block of the stacked whitened Jacobian.
#[derive(Debug, Clone)]
pub struct JacobianBlock {
    pub factor: usize,
    pub row: usize,
    pub variable: usize,
    pub col: usize,
    pub matrix: DMatrix<f64>,
}

/// Whitened Gauss-Newton system `min ‖J·Δ + b‖²` in block form.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub rows: usize,
    pub cols: usize,
    pub blocks: Vec<JacobianBlock>,
    pub rhs: DVector<f64>,
    pub factor_rows: Vec<usize>,
    pub variable_dims: Vec<usize>,
    pub variable_offsets: Vec<usize>,
}

impl LinearSystem {
    pub fn dense_jacobian(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.rows, self.cols);
        for b in &self.blocks {
            j.view_mut((b.row, b.col), b.matrix.shape())
                .copy_from(&b.matrix);
        }
        j
    }

    /// Normal matrix `JᵀJ` and gradient `Jᵀb`, assembled block by block.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut h = DMatrix::zeros(self.cols, self.cols);
        let mut g = DVector::zeros(self.cols);
        let mut start = 0;
        while start < self.blocks.len() {
            let factor = self.blocks[start].factor;
            let mut end = start;
            while end < self.blocks.len() && self.blocks[end].factor == factor {
                end += 1;
            }
            let group = &self.blocks[start..end];
            for a in group {
                let m = a.matrix.nrows();
                let r = self.rhs.rows(a.row, m);
                let mut ga = g.rows_mut(a.col, a.matrix.ncols());
                ga.gemv_tr(1.0, &a.matrix, &r, 1.0);
                for b in group {
                    let mut hab = h.view_mut(
                        (a.col, b.col),
                        (a.matrix.ncols(), b.matrix.ncols()),
                    );
                    hab.gemm_tr(1.0, &a.matrix, &b.matrix, 1.0);
                }
            }
            start = end;
        }
        (h, g)
    }

    /// For every scalar column, the smallest column it couples with in `JᵀJ`.
    pub fn envelope(&self) -> Vec<usize> {
        let mut first: Vec<usize> = (0..self.cols).collect();
        let mut start = 0;
        while start < self.blocks.len() {
            let factor = self.blocks[start].factor;
            let mut end = start;
            while end < self.blocks.len() && self.blocks[end].factor == factor {
                end += 1;
            }
            let group = &self.blocks[start..end];
            let min_col = group.iter().map(|b| b.col).min().unwrap_or(0);
            for b in group {
                for c in b.col..b.col + b.matrix.ncols() {
                    first[c] = first[c].min(min_col);
                }
            }
            start = end;
        }
        first
    }
}
