//! Multivariate normal policy parameterized by a mean and a lower-triangular
//! scale factor `L` with `L Lᵀ = Σ`.
//!
//! Matrices are dense row-major `k × k` slices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Smallest admissible diagonal entry of `L`.
pub const PD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("scale factor must be lower triangular")]
    NotLowerTriangular,
    #[error("scale factor diagonal entry {index} is {value}, below the positive-definite floor")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite parameters")]
    NonFinite,
}

/// Which derivative formulas [`grad_log_density`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientForm {
    /// `Σ⁻¹(x-μ)` and `½(Σ⁻¹ r rᵀ Σ⁻¹ - Σ⁻¹)`.
    #[default]
    Exact,
    /// The same expressions with `Σ` in place of `Σ⁻¹`; agrees with the
    /// exact form only at `Σ = I`. Kept for ablations.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicyHead<T> {
    pub mean: Vec<T>,
    pub scale_tril: Vec<T>,
}

impl<T: Scalar> GaussianPolicyHead<T> {
    pub fn new(mean: Vec<T>, scale_tril: Vec<T>) -> Result<Self, GaussianError> {
        let head = Self { mean, scale_tril };
        head.validate()?;
        Ok(head)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<(), GaussianError> {
        let k = self.dim();
        if self.scale_tril.len() != k * k {
            return Err(GaussianError::Dimension { expected: k * k, got: self.scale_tril.len() });
        }
        if !self.mean.iter().chain(&self.scale_tril).all(|x| x.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        for i in 0..k {
            for j in i + 1..k {
                if self.scale_tril[i * k + j] != T::zero() {
                    return Err(GaussianError::NotLowerTriangular);
                }
            }
            let d = self.scale_tril[i * k + i];
            if d < T::lit(PD_FLOOR) {
                return Err(GaussianError::NotPositiveDefinite { index: i, value: d.to_f64_lossy() });
            }
        }
        Ok(())
    }

    /// `Σ = L Lᵀ`.
    pub fn covariance(&self) -> Vec<T> {
        let k = self.dim();
        let l = &self.scale_tril;
        let mut s = vec![T::zero(); k * k];
        for i in 0..k {
            for j in 0..k {
                s[i * k + j] = (0..=i.min(j)).map(|m| l[i * k + m] * l[j * k + m]).sum();
            }
        }
        s
    }

    /// Solves `L z = r`.
    fn forward_solve(&self, r: &[T]) -> Vec<T> {
        let k = self.dim();
        let l = &self.scale_tril;
        let mut z = vec![T::zero(); k];
        for i in 0..k {
            let acc: T = (0..i).map(|m| l[i * k + m] * z[m]).sum();
            z[i] = (r[i] - acc) / l[i * k + i];
        }
        z
    }

    /// Solves `Lᵀ w = z`.
    fn backward_solve(&self, z: &[T]) -> Vec<T> {
        let k = self.dim();
        let l = &self.scale_tril;
        let mut w = vec![T::zero(); k];
        for i in (0..k).rev() {
            let acc: T = (i + 1..k).map(|m| l[m * k + i] * w[m]).sum();
            w[i] = (z[i] - acc) / l[i * k + i];
        }
        w
    }

    pub fn precision(&self) -> Vec<T> {
        let k = self.dim();
        let mut p = vec![T::zero(); k * k];
        for c in 0..k {
            let mut e = vec![T::zero(); k];
            e[c] = T::one();
            let col = self.backward_solve(&self.forward_solve(&e));
            for r in 0..k {
                p[r * k + c] = col[r];
            }
        }
        p
    }

    fn check_point(&self, x: &[T]) -> Result<(), GaussianError> {
        self.validate()?;
        if x.len() != self.dim() {
            return Err(GaussianError::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }
}

/// Log of the full normal density, normalizer included.
pub fn gaussian_log_density<T: Scalar>(x: &[T], head: &GaussianPolicyHead<T>) -> Result<T, GaussianError> {
    head.check_point(x)?;
    let k = head.dim();
    let r: Vec<T> = x.iter().zip(&head.mean).map(|(a, m)| *a - *m).collect();
    let z = head.forward_solve(&r);
    let maha: T = z.iter().map(|v| *v * *v).sum();
    let log_det: T = (0..k).map(|i| head.scale_tril[i * k + i].ln()).sum::<T>() * T::lit(2.0);
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    Ok(-T::lit(0.5) * (T::from_usize_lossy(k) * two_pi.ln() + log_det + maha))
}

/// `μ + L y` with `y` standard normal.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(head: &GaussianPolicyHead<T>, rng: &mut R) -> Vec<T> {
    let k = head.dim();
    let y: Vec<T> = (0..k).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
    (0..k)
        .map(|i| head.mean[i] + (0..=i).map(|j| head.scale_tril[i * k + j] * y[j]).sum::<T>())
        .collect()
}

/// `(∂ log F / ∂μ, ∂ log F / ∂Σ)` at `x`; the second is a dense `k × k`
/// matrix treating every entry of `Σ` as independent.
pub fn grad_log_density<T: Scalar>(
    x: &[T],
    head: &GaussianPolicyHead<T>,
    form: GradientForm,
) -> Result<(Vec<T>, Vec<T>), GaussianError> {
    head.check_point(x)?;
    let k = head.dim();
    let r: Vec<T> = x.iter().zip(&head.mean).map(|(a, m)| *a - *m).collect();
    let m = match form {
        GradientForm::Exact => head.precision(),
        GradientForm::Literal => head.covariance(),
    };
    let mr: Vec<T> = (0..k).map(|i| (0..k).map(|j| m[i * k + j] * r[j]).sum()).collect();
    let half = T::lit(0.5);
    let d_sigma = (0..k * k).map(|idx| half * (mr[idx / k] * mr[idx % k] - m[idx])).collect();
    Ok((mr, d_sigma))
}

/// Pulls `∂f/∂Σ` back to the lower-triangular factor: `(G + Gᵀ) L`,
/// restricted to the lower triangle.
pub fn scale_tril_gradient<T: Scalar>(head: &GaussianPolicyHead<T>, d_sigma: &[T]) -> Vec<T> {
    let k = head.dim();
    let l = &head.scale_tril;
    let mut out = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            out[i * k + j] = (0..k).map(|m| (d_sigma[i * k + m] + d_sigma[m * k + i]) * l[m * k + j]).sum();
        }
    }
    out
}
