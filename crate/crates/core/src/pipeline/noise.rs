use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_symmetric, Matrix};
use crate::ntd::NtdMatrix;
use crate::scalar::Real;

pub const NOISE_SAFETY_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate<T> {
    /// Spectral-norm bound on the deviation of a single measurement from the exact operator.
    pub delta: T,
    pub method: String,
    pub repeats_used: usize,
}

/// Entrywise mean of repeated measurements.
pub fn mean_matrix<T: Real>(repeats: &[NtdMatrix<T>]) -> Result<Matrix<T>> {
    let first = repeats
        .first()
        .ok_or_else(|| Error::InsufficientData("no repeated measurement".into()))?;
    let mut mean = Matrix::zeros(first.dim(), first.dim());
    for r in repeats {
        first.check_compatible(r)?;
        mean.add_scaled_assign(T::one(), &r.entries);
    }
    Ok(mean.scale(T::one() / T::from_count(repeats.len())))
}

/// `1.5 · max_r ‖L_r − mean‖₂` over at least two repeats.
pub fn estimate_noise<T: Real>(repeats: &[NtdMatrix<T>]) -> Result<NoiseEstimate<T>> {
    if repeats.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "noise estimation needs at least two repeats, got {}",
            repeats.len()
        )));
    }
    let mean = mean_matrix(repeats)?;
    let mut worst = T::zero();
    for r in repeats {
        let dev = r.entries.sub(&mean)?.symmetrized();
        worst = worst.max(spectral_norm_symmetric(&dev)?);
    }
    Ok(NoiseEstimate {
        delta: worst * T::lit(NOISE_SAFETY_FACTOR),
        method: format!("{NOISE_SAFETY_FACTOR} x max spectral deviation from the repeat mean"),
        repeats_used: repeats.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntd::NtdKind;

    fn ntd(m: Matrix<f64>) -> NtdMatrix<f64> {
        NtdMatrix {
            entries: m,
            omega: 10.0,
            kind: NtdKind::Measured,
        }
    }

    #[test]
    fn identical_repeats_give_zero() {
        let a = Matrix::from_fn(3, 3, |i, j| (i + j) as f64);
        let est = estimate_noise(&[ntd(a.clone()), ntd(a)]).unwrap();
        assert_eq!(est.delta, 0.0);
        assert_eq!(est.repeats_used, 2);
    }

    #[test]
    fn alternating_perturbation() {
        let m = Matrix::from_fn(3, 3, |i, j| 1.0 / (1 + i + j) as f64);
        let e = Matrix::diagonal(&[0.2, -0.5, 0.1]);
        let reps = [ntd(m.add(&e).unwrap()), ntd(m.sub(&e).unwrap())];
        let est = estimate_noise(&reps).unwrap();
        assert!((est.delta - 1.5 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_repeat_fails() {
        let a = Matrix::identity(2);
        assert!(matches!(
            estimate_noise(&[ntd(a)]),
            Err(Error::InsufficientData(_))
        ));
    }
}
