use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Interpolating cubic spline with zero second derivative at both ends,
/// continued linearly beyond them.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline<T> {
    knots: Vec<T>,
    values: Vec<T>,
    /// Second derivatives at the knots.
    curvature: Vec<T>,
}

pub const MIN_KNOTS: usize = 4;

impl<T: Real> NaturalSpline<T> {
    pub fn new(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::Dimension(format!(
                "{n} knots but {} values",
                values.len()
            )));
        }
        if n < MIN_KNOTS {
            return Err(Error::InsufficientData(format!(
                "spline needs at least {MIN_KNOTS} knots, got {n}"
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InsufficientData(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let h: Vec<T> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // tridiagonal system for the interior curvatures, solved by the Thomas algorithm
        let m = n - 2;
        let mut diag = vec![T::zero(); m];
        let mut upper = vec![T::zero(); m];
        let mut rhs = vec![T::zero(); m];
        let six = T::lit(6.0);
        for i in 0..m {
            diag[i] = T::two() * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = six
                * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
        }
        for i in 1..m {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] = rhs[i] - w * rhs[i - 1];
        }
        let mut curvature = vec![T::zero(); n];
        for i in (0..m).rev() {
            let next = if i + 1 < m {
                curvature[i + 2]
            } else {
                T::zero()
            };
            curvature[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }
        Ok(Self {
            knots,
            values,
            curvature,
        })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    fn slope_at_end(&self, last: bool) -> T {
        let n = self.knots.len();
        let six = T::lit(6.0);
        if last {
            let h = self.knots[n - 1] - self.knots[n - 2];
            (self.values[n - 1] - self.values[n - 2]) / h
                + h * (self.curvature[n - 2] + T::two() * self.curvature[n - 1]) / six
        } else {
            let h = self.knots[1] - self.knots[0];
            (self.values[1] - self.values[0]) / h
                - h * (T::two() * self.curvature[0] + self.curvature[1]) / six
        }
    }

    pub fn eval(&self, x: T) -> T {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return self.values[0] + (x - self.knots[0]) * self.slope_at_end(false);
        }
        if x >= self.knots[n - 1] {
            return self.values[n - 1] + (x - self.knots[n - 1]) * self.slope_at_end(true);
        }
        let i = self.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1;
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        let six = T::lit(6.0);
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.curvature[i] + (b * b * b - b) * self.curvature[i + 1])
                * h
                * h
                / six
    }

    pub fn second_derivative(&self, x: T) -> T {
        let n = self.knots.len();
        if x <= self.knots[0] || x >= self.knots[n - 1] {
            return T::zero();
        }
        let i = self.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1;
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        a * self.curvature[i] + (T::one() - a) * self.curvature[i + 1]
    }
}

/// Fills the `None` entries along one line of positions by natural-spline
/// interpolation of the real and imaginary parts over the known entries.
/// Known entries are returned unchanged.
pub fn interpolate_missing<T: Real>(
    positions: &[T],
    values: &[Option<Complex<T>>],
) -> Result<Vec<Complex<T>>> {
    if positions.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} positions but {} values",
            positions.len(),
            values.len()
        )));
    }
    if values.iter().all(Option::is_some) {
        return Ok(values.iter().map(|v| v.unwrap_or_default()).collect());
    }
    let mut order: Vec<usize> = (0..positions.len())
        .filter(|&i| values[i].is_some())
        .collect();
    order.sort_by(|&a, &b| {
        positions[a]
            .partial_cmp(&positions[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let knots: Vec<T> = order.iter().map(|&i| positions[i]).collect();
    let re = NaturalSpline::new(
        knots.clone(),
        order
            .iter()
            .map(|&i| values[i].unwrap_or_default().re)
            .collect(),
    )?;
    let im = NaturalSpline::new(
        knots,
        order
            .iter()
            .map(|&i| values[i].unwrap_or_default().im)
            .collect(),
    )?;
    Ok(positions
        .iter()
        .zip(values)
        .map(|(&x, v)| v.unwrap_or_else(|| Complex::new(re.eval(x), im.eval(x))))
        .collect())
}
