//! Compressed-row matrices over a fixed nonzero pattern, and linear systems
//! with essential (Dirichlet) constraints.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed-row nonzero layout of the nodal coupling graph plus, per
/// element, the positions its 4×4 local matrix scatters to.
#[derive(Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<usize>,
    pub(crate) element_slots: Vec<[usize; 16]>,
    pub(crate) half_bandwidth: usize,
}

impl SparsityPattern {
    pub(crate) fn for_grid(nx: usize, ny: usize) -> Self {
        let stride = nx + 1;
        let n = stride * (ny + 1);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(9 * n);
        row_ptr.push(0);
        for j in 0..=ny {
            for i in 0..=nx {
                for jj in j.saturating_sub(1)..=(j + 1).min(ny) {
                    for ii in i.saturating_sub(1)..=(i + 1).min(nx) {
                        col_idx.push(ii + jj * stride);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        let slot = |r: usize, c: usize| -> usize {
            let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            row_ptr[r] + row.binary_search(&c).expect("coupled nodes share a slot")
        };
        let mut element_slots = Vec::with_capacity(nx * ny);
        for e in 0..nx * ny {
            let n0 = (e % nx) + (e / nx) * stride;
            let nodes = [n0, n0 + 1, n0 + 1 + stride, n0 + stride];
            let mut slots = [0usize; 16];
            for a in 0..4 {
                for b in 0..4 {
                    slots[4 * a + b] = slot(nodes[a], nodes[b]);
                }
            }
            element_slots.push(slots);
        }
        Self {
            row_ptr,
            col_idx,
            element_slots,
            half_bandwidth: stride + 1,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Pattern from explicit per-row column lists (no element scatter map).
    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut half_bandwidth = 0;
        for (r, cols) in rows.iter().enumerate() {
            let mut cols = cols.clone();
            cols.sort_unstable();
            cols.dedup();
            if cols.last().is_some_and(|&c| c >= n) {
                return Err(Error::InvalidArgument(format!(
                    "row {r} references a column outside the {n}×{n} matrix"
                )));
            }
            for &c in &cols {
                half_bandwidth = half_bandwidth.max(c.abs_diff(r));
            }
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            row_ptr,
            col_idx,
            element_slots: Vec::new(),
            half_bandwidth,
        })
    }

    pub fn diagonal(n: usize) -> Self {
        Self {
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            element_slots: Vec::new(),
            half_bandwidth: 0,
        }
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    pub(crate) fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub(crate) fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row_range(r);
        self.col_idx[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| range.start + k)
    }
}

/// Square sparse matrix in compressed-row layout.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pattern: Arc<SparsityPattern>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::diagonal(n));
        Self {
            pattern,
            values: vec![T::one(); n],
        }
    }

    pub fn from_parts(pattern: Arc<SparsityPattern>, values: Vec<T>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a pattern with {} nonzeros",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(Self { pattern, values })
    }

    pub fn n(&self) -> usize {
        self.pattern.n_rows()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let range = self.pattern.row_range(r);
        (&self.pattern.col_idx[range.clone()], &self.values[range])
    }

    /// Entry `(r, c)`, zero outside the pattern.
    pub fn get(&self, r: usize, c: usize) -> T {
        self.pattern
            .slot(r, c)
            .map_or(T::zero(), |k| self.values[k])
    }

    pub fn add_to(&mut self, r: usize, c: usize, v: T) -> Result<()> {
        let k = self.pattern.slot(r, c).ok_or_else(|| {
            Error::InvalidArgument(format!("entry ({r}, {c}) is outside the sparsity pattern"))
        })?;
        self.values[k] += v;
        Ok(())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n()).map(|r| self.get(r, r)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        let p = &*self.pattern;
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yr = acc;
        }
    }

    /// `Aᵀ x`.
    pub fn transpose_matvec(&self, x: &[T]) -> Vec<T> {
        let p = &*self.pattern;
        let mut y = vec![T::zero(); self.n()];
        for (r, &xr) in x.iter().enumerate() {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                y[p.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// Transpose; requires a structurally symmetric pattern.
    pub fn transpose(&self) -> Result<Self> {
        let p = &*self.pattern;
        let mut values = vec![T::zero(); self.values.len()];
        for r in 0..self.n() {
            for k in p.row_range(r) {
                let c = p.col_idx[k];
                let kt = p.slot(c, r).ok_or_else(|| {
                    Error::InvalidArgument("transpose needs a structurally symmetric pattern".into())
                })?;
                values[kt] = self.values[k];
            }
        }
        Ok(Self {
            pattern: self.pattern.clone(),
            values,
        })
    }

    /// `self += a · other` for matrices sharing one pattern.
    pub fn add_scaled(&mut self, a: T, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && *self.pattern != *other.pattern {
            return Err(Error::InvalidArgument(
                "matrices have different sparsity patterns".into(),
            ));
        }
        for (v, &o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: T) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.n() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }
}

/// Linear system `A x = b` with a record of which rows carry essential
/// constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub constrained: Vec<bool>,
    /// Whether the (constrained) matrix is symmetric, so that conjugate
    /// gradients applies.
    pub symmetric: bool,
}

impl<T: Real> SparseSystem<T> {
    pub fn new(matrix: CsrMatrix<T>, rhs: Vec<T>) -> Result<Self> {
        if rhs.len() != matrix.n() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {} for a {}×{} matrix",
                rhs.len(),
                matrix.n(),
                matrix.n()
            )));
        }
        let n = matrix.n();
        Ok(Self {
            matrix,
            rhs,
            constrained: vec![false; n],
            symmetric: false,
        })
    }

    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    /// Imposes `x[i] = value(i)` on every node with `mask[i]` by row
    /// replacement. Couplings from free rows into constrained columns are
    /// moved to the right-hand side so a symmetric matrix stays symmetric.
    pub fn apply_dirichlet(&mut self, mask: &[bool], value: impl Fn(usize) -> T) {
        let n = self.n();
        let prescribed: Vec<Option<T>> = (0..n)
            .map(|i| mask[i].then(|| value(i)))
            .collect();
        let pattern = self.matrix.pattern.clone();
        for r in 0..n {
            let range = pattern.row_range(r);
            if let Some(g) = prescribed[r] {
                for k in range {
                    self.matrix.values[k] = if pattern.col_idx[k] == r {
                        T::one()
                    } else {
                        T::zero()
                    };
                }
                self.rhs[r] = g;
                self.constrained[r] = true;
            } else {
                for k in range {
                    if let Some(g) = prescribed[pattern.col_idx[k]] {
                        self.rhs[r] -= self.matrix.values[k] * g;
                        self.matrix.values[k] = T::zero();
                    }
                }
            }
        }
    }

    pub fn residual_norm(&self, x: &[T]) -> T {
        let ax = self.matrix.matvec(x);
        ax.iter()
            .zip(&self.rhs)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix<f64> {
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|r| (r.saturating_sub(1)..=(r + 1).min(n - 1)).collect())
            .collect();
        let p = Arc::new(SparsityPattern::from_rows(&rows).unwrap());
        let mut m = CsrMatrix::zeros(p);
        for r in 0..n {
            m.add_to(r, r, 2.0).unwrap();
            if r > 0 {
                m.add_to(r, r - 1, -1.0).unwrap();
            }
            if r + 1 < n {
                m.add_to(r, r + 1, -0.5).unwrap();
            }
        }
        m
    }

    #[test]
    fn transpose_agrees_with_transpose_matvec() {
        let m = tridiag(6);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let a = m.transpose().unwrap().matvec(&x);
        let b = m.transpose_matvec(&x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
        assert_eq!(m.max_asymmetry(), 0.5);
    }

    #[test]
    fn dirichlet_rows_become_identity() {
        let mut m = tridiag(5);
        let t = m.transpose().unwrap();
        m.add_scaled(1.0, &t).unwrap();
        let mut sys = SparseSystem::new(m, vec![1.0; 5]).unwrap();
        let mask = [true, false, false, false, true];
        sys.apply_dirichlet(&mask, |i| i as f64);
        for r in [0, 4] {
            let (cols, vals) = sys.matrix.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                assert_eq!(v, if c == r { 1.0 } else { 0.0 });
            }
            assert_eq!(sys.rhs[r], r as f64);
        }
        assert_eq!(sys.matrix.max_asymmetry(), 0.0);
        // row 3 couples to node 4 with -1.5, moved to the rhs: 1 + 1.5·4
        assert_eq!(sys.rhs[3], 7.0);
    }

    #[test]
    fn rejects_out_of_pattern_entries() {
        let mut m = tridiag(4);
        assert!(m.add_to(0, 3, 1.0).is_err());
        assert_eq!(m.get(0, 3), 0.0);
    }
}
