use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Mat3, Real};

/// Isotropic Hooke law: `2μA + λ tr(A) I`.
pub fn apply_hooke<T: Real>(strain: &Mat3<T>, lambda: T, mu: T) -> Mat3<T> {
    let tr = strain[0][0] + strain[1][1] + strain[2][2];
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let d = if i == j { lambda * tr } else { T::zero() };
            T::two() * mu * strain[i][j] + d
        })
    })
}

/// Lamé parameters and density of one homogeneous material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    pub lambda: T,
    pub mu: T,
    pub rho: T,
}

impl<T: Real> Material<T> {
    pub fn new(lambda: T, mu: T, rho: T) -> Self {
        Self { lambda, mu, rho }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("rho", self.rho)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidMaterial(format!(
                    "{name} = {v} must be positive and finite"
                )));
            }
        }
        Ok(())
    }

    /// Component-wise `self − other`.
    pub fn minus(&self, other: &Self) -> Self {
        Self::new(
            self.lambda - other.lambda,
            self.mu - other.mu,
            self.rho - other.rho,
        )
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.lambda * s, self.mu * s, self.rho * s)
    }
}

/// Element-wise material coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField<T> {
    pub lambda: Vec<T>,
    pub mu: Vec<T>,
    pub rho: Vec<T>,
}

impl<T: Real> MaterialField<T> {
    pub fn uniform(elements: usize, m: Material<T>) -> Self {
        Self {
            lambda: vec![m.lambda; elements],
            mu: vec![m.mu; elements],
            rho: vec![m.rho; elements],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn get(&self, e: usize) -> Material<T> {
        Material::new(self.lambda[e], self.mu[e], self.rho[e])
    }

    pub fn set(&mut self, e: usize, m: Material<T>) {
        self.lambda[e] = m.lambda;
        self.mu[e] = m.mu;
        self.rho[e] = m.rho;
    }

    /// Checks the element count and strict positivity of every coefficient.
    pub fn validate(&self, elements: usize) -> Result<()> {
        if self.mu.len() != self.lambda.len() || self.rho.len() != self.lambda.len() {
            return Err(Error::Dimension("material arrays differ in length".into()));
        }
        if self.lambda.len() != elements {
            return Err(Error::Dimension(format!(
                "{} material entries for {elements} elements",
                self.lambda.len()
            )));
        }
        for e in 0..elements {
            self.get(e)
                .validate()
                .map_err(|err| Error::InvalidMaterial(format!("element {e}: {err}")))?;
        }
        Ok(())
    }

    /// Element-wise difference `self − other`; not necessarily positive.
    pub fn difference(&self, other: &Self) -> Result<Coefficients<T>> {
        if self.len() != other.len() {
            return Err(Error::Dimension("material fields differ in length".into()));
        }
        let sub = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        Ok(Coefficients {
            lambda: sub(&self.lambda, &other.lambda),
            mu: sub(&self.mu, &other.mu),
            rho: sub(&self.rho, &other.rho),
        })
    }

    pub fn as_coefficients(&self) -> Coefficients<T> {
        Coefficients {
            lambda: self.lambda.clone(),
            mu: self.mu.clone(),
            rho: self.rho.clone(),
        }
    }
}

/// Signed element-wise coefficient perturbation (`h_λ`, `h_μ`, `h_ρ`).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients<T> {
    pub lambda: Vec<T>,
    pub mu: Vec<T>,
    pub rho: Vec<T>,
}

impl<T: Real> Coefficients<T> {
    pub fn zeros(elements: usize) -> Self {
        Self {
            lambda: vec![T::zero(); elements],
            mu: vec![T::zero(); elements],
            rho: vec![T::zero(); elements],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// `base + t·self`, validated as a material field.
    pub fn perturb(&self, base: &MaterialField<T>, t: T) -> Result<MaterialField<T>> {
        let add = |a: &[T], h: &[T]| a.iter().zip(h).map(|(&x, &y)| x + t * y).collect();
        let m = MaterialField {
            lambda: add(&base.lambda, &self.lambda),
            mu: add(&base.mu, &self.mu),
            rho: add(&base.rho, &self.rho),
        };
        m.validate(base.len())?;
        Ok(m)
    }
}

/// Angular frequency of the time-harmonic problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConfig<T> {
    /// rad/s
    pub omega: T,
}

impl<T: Real> FrequencyConfig<T> {
    /// `value` is in Hz when `interpret_hz`, otherwise rad/s.
    pub fn new(value: T, interpret_hz: bool) -> Result<Self> {
        if value == T::zero() || !value.is_finite() {
            return Err(Error::InvalidMaterial(format!(
                "frequency must be non-zero and finite, got {value}"
            )));
        }
        let omega = if interpret_hz {
            T::two() * T::lit(std::f64::consts::PI) * value
        } else {
            value
        };
        Ok(Self { omega })
    }

    pub fn hz(f: T) -> Self {
        Self::new(f, true).expect("non-zero frequency")
    }

    pub fn rad_s(omega: T) -> Self {
        Self::new(omega, false).expect("non-zero frequency")
    }

    pub fn omega_sq(&self) -> T {
        self.omega * self.omega
    }

    pub fn hertz(&self) -> T {
        self.omega / (T::two() * T::lit(std::f64::consts::PI))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hooke_identity_and_traceless() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let c = apply_hooke(&id, 1.0, 1.0);
        assert_eq!(c[0][0], 5.0);
        assert_eq!(c[0][1], 0.0);
        let a = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]];
        let c = apply_hooke(&a, 7.0, 3.0);
        assert_eq!(c, [[6.0, 0.0, 0.0], [0.0, -6.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn frequency_conversion() {
        let f = FrequencyConfig::<f64>::new(21.0, true).unwrap();
        assert!((f.omega - 131.946891450771).abs() < 1e-9);
        assert!((f.hertz() - 21.0).abs() < 1e-12);
        assert_eq!(FrequencyConfig::new(21.0, false).unwrap().omega, 21.0);
        assert!(FrequencyConfig::<f64>::new(0.0, true).is_err());
    }

    #[test]
    fn material_validation() {
        let mut m = MaterialField::uniform(3, Material::new(1.0, 1.0, 1.0));
        assert!(m.validate(3).is_ok());
        assert!(matches!(m.validate(4), Err(Error::Dimension(_))));
        m.mu[1] = 0.0;
        assert!(matches!(m.validate(3), Err(Error::InvalidMaterial(_))));
    }
}
