//! Sparse storage: CSR for assembled operators, skyline `LDLᵀ` for direct solves.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse row matrix with a fixed, sorted pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Square matrix with the given per-row column sets (sorted and deduplicated here).
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![T::zero(); col_idx.len()];
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Same pattern, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![T::zero(); self.values.len()],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    /// Adds `v` at `(i, j)`; the entry must be part of the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside sparsity pattern"));
        self.values[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |p| self.values[p])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other`; both must share the pattern.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return Err(Error::Dimension("sparsity patterns differ".into()));
        }
        let mut out = self.clone();
        for (v, &w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        Ok(out)
    }

    /// `max |A_ij − A_ji| / max |A_ij|`.
    pub fn symmetry_defect(&self) -> T {
        let scale = self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return T::zero();
        }
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Symmetric matrix in skyline (variable band) storage, lower triangle by rows.
#[derive(Debug, Clone)]
pub struct SkylineMatrix<T> {
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SkylineMatrix<T> {
    /// `first[i]` is the leftmost stored column of row `i` (`first[i] <= i`).
    pub fn with_profile(first: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(first.len() + 1);
        offsets.push(0);
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile start beyond the diagonal");
            let last = *offsets.last().expect("non-empty");
            offsets.push(last + (i - f + 1));
        }
        let values = vec![T::zero(); *offsets.last().expect("non-empty")];
        Self {
            first,
            offsets,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored entries, diagonal included.
    pub fn stored(&self) -> usize {
        self.values.len()
    }

    /// Adds `v` to the lower-triangle entry `(i, j)`, `j <= i`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(j <= i && j >= self.first[i]);
        self.values[self.offsets[i] + j - self.first[i]] += v;
    }

    /// Symmetric matrix-vector product.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let f = self.first[i];
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            let mut acc = T::zero();
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
        y
    }

    /// In-place `LDLᵀ` without pivoting (Crout, row oriented).
    pub fn factor(mut self) -> Result<LdlFactor<T>> {
        let n = self.dim();
        let mut d = vec![T::zero(); n];
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            // U_ij = A_ij − Σ_k U_ik L_jk, stored in place; L_ij = U_ij / d_j afterwards
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let kstart = fi.max(fj);
                let mut s = self.values[oi + j - fi];
                if kstart < j {
                    let ri = &self.values[oi + kstart - fi..oi + j - fi];
                    let rj = &self.values[oj + kstart - fj..oj + j - fj];
                    s -= ri.iter().zip(rj).map(|(&a, &b)| a * b).sum::<T>();
                }
                self.values[oi + j - fi] = s;
            }
            let mut diag = self.values[oi + i - fi];
            for j in fi..i {
                let u = self.values[oi + j - fi];
                let l = u / d[j];
                diag -= u * l;
                self.values[oi + j - fi] = l;
            }
            if !diag.is_finite() {
                return Err(Error::InvalidMatrix(format!("non-finite pivot at row {i}")));
            }
            d[i] = diag;
            self.values[oi + i - fi] = T::one();
        }
        Ok(LdlFactor { l: self, d })
    }
}

/// `A = L D Lᵀ` with unit lower `L` stored in skyline form.
#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    l: SkylineMatrix<T>,
    d: Vec<T>,
}

impl<T: Real> LdlFactor<T> {
    pub fn pivots(&self) -> &[T] {
        &self.d
    }

    /// Number of negative pivots, equal to the number of negative eigenvalues of `A`.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < T::zero()).count()
    }

    /// `min |d_i| / max |d_i|`.
    pub fn pivot_ratio(&self) -> T {
        let (mut lo, mut hi) = (T::infinity(), T::zero());
        for v in &self.d {
            lo = lo.min(v.abs());
            hi = hi.max(v.abs());
        }
        if hi == T::zero() {
            T::zero()
        } else {
            lo / hi
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.d.len();
        let mut x = b.to_vec();
        // L y = b
        for i in 0..n {
            let f = self.l.first[i];
            let row = &self.l.values[self.l.offsets[i]..self.l.offsets[i + 1] - 1];
            let s: T = row.iter().zip(&x[f..i]).map(|(&a, &b)| a * b).sum();
            x[i] -= s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let f = self.l.first[i];
            let xi = x[i];
            let row = &self.l.values[self.l.offsets[i]..self.l.offsets[i + 1] - 1];
            for (k, &a) in row.iter().enumerate() {
                x[f + k] -= a * xi;
            }
        }
        x
    }
}
