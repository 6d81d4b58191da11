//! Inertia counting through Householder tridiagonalization and the Sturm
//! (tridiagonal `LDLᵀ`) recurrence. Independent of the Jacobi route in
//! [`super::eigen`]; the two are cross-checked in tests.

use super::dense::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric tridiagonal matrix: diagonal `d`, off-diagonal `e` (`len = n - 1`).
#[derive(Debug, Clone)]
pub struct Tridiagonal<T> {
    pub d: Vec<T>,
    pub e: Vec<T>,
}

/// Orthogonal similarity reduction `QᵀAQ = T` by Householder reflections.
pub fn tridiagonalize<T: Real>(a: &Matrix<T>) -> Result<Tridiagonal<T>> {
    if !a.is_square() {
        return Err(Error::Dimension(
            "tridiagonalize needs a square matrix".into(),
        ));
    }
    if !a.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entries".into()));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    for k in 0..n.saturating_sub(2) {
        let alpha_sq: T = ((k + 1)..n).map(|i| m[(i, k)] * m[(i, k)]).sum();
        let norm = alpha_sq.sqrt();
        if norm == T::zero() {
            continue;
        }
        let x0 = m[(k + 1, k)];
        let alpha = if x0 >= T::zero() { -norm } else { norm };
        let mut v = vec![T::zero(); n];
        v[k + 1] = x0 - alpha;
        for i in (k + 2)..n {
            v[i] = m[(i, k)];
        }
        let vnorm_sq: T = v.iter().map(|&x| x * x).sum();
        if vnorm_sq == T::zero() {
            continue;
        }
        // m <- H m H with H = I - 2 v vᵀ / (vᵀv)
        let beta = T::two() / vnorm_sq;
        let p: Vec<T> = (0..n)
            .map(|i| beta * (0..n).map(|j| m[(i, j)] * v[j]).sum::<T>())
            .collect();
        let kdot: T = v.iter().zip(&p).map(|(&a, &b)| a * b).sum::<T>() * beta * T::half();
        let w: Vec<T> = p.iter().zip(&v).map(|(&pi, &vi)| pi - kdot * vi).collect();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = m[(i, j)] - v[i] * w[j] - w[i] * v[j];
            }
        }
    }
    Ok(Tridiagonal {
        d: (0..n).map(|i| m[(i, i)]).collect(),
        e: (1..n).map(|i| m[(i, i - 1)]).collect(),
    })
}

impl<T: Real> Tridiagonal<T> {
    /// Number of eigenvalues strictly below `x`: negative pivots of `T − xI`.
    pub fn count_below(&self, x: T) -> usize {
        let n = self.d.len();
        if n == 0 {
            return 0;
        }
        let scale = self
            .d
            .iter()
            .chain(self.e.iter())
            .fold(x.abs(), |m, v| m.max(v.abs()));
        let pivmin = T::min_positive_value().max(scale * T::epsilon() * T::epsilon());
        let mut count = 0;
        let mut q = self.d[0] - x;
        // a zero pivot counts as non-negative: x itself is not "below"
        if q.abs() < pivmin {
            q = pivmin;
        }
        if q < T::zero() {
            count += 1;
        }
        for i in 1..n {
            q = self.d[i] - x - self.e[i - 1] * self.e[i - 1] / q;
            if q.abs() < pivmin {
                q = pivmin;
            }
            if q < T::zero() {
                count += 1;
            }
        }
        count
    }
}

/// `#{σ ∈ spec(A) : σ < x}` by Sylvester inertia of `A − xI`.
pub fn inertia_count_below<T: Real>(a: &Matrix<T>, x: T) -> Result<usize> {
    Ok(tridiagonalize(a)?.count_below(x))
}
