//! Gaussian densities, uniform priors over boxes, and the shared-covariance
//! Gaussian mixtures that approximate the measurement marginal.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::IntervalBox;

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric positive-definite matrix with its Cholesky factor cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_det: f64,
}

impl Covariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("covariance must be square"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance"));
        }
        let scale = matrix.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let chol = matrix.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            matrix,
            chol_l,
            log_det,
        })
    }

    /// `σ² I` in dimension `d`.
    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(d, d, variance))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = Σ`.
    pub fn cholesky_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `L⁻¹ v`, so that `vᵀ Σ⁻¹ v = ‖L⁻¹ v‖²`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol_l
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Mahalanobis form `vᵀ Σ⁻¹ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.whiten(v).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: Covariance,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: Covariance) -> Result<Self> {
        check_dim("gaussian mean", cov.dim(), mean.len())?;
        Ok(Self { mean, cov })
    }

    pub fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        check_dim("gaussian argument", self.mean.len(), y.len())?;
        let d = self.mean.len() as f64;
        Ok(-0.5 * (d * LN_2PI + self.cov.log_det + self.cov.quad_form(&(y - &self.mean))))
    }
}

/// `ln N(μ_i; μ_l, 2Σ)`.
pub fn log_cross_term(mu_i: &DVector<f64>, mu_l: &DVector<f64>, sigma: &Covariance) -> Result<f64> {
    check_dim("cross term", mu_i.len(), mu_l.len())?;
    check_dim("cross term covariance", sigma.dim(), mu_i.len())?;
    let d = mu_i.len() as f64;
    let q = sigma.quad_form(&(mu_i - mu_l));
    Ok(log_cross_from_whitened_sq(d, sigma.log_det, q))
}

/// `N(μ_i; μ_l, 2Σ) = ∫ N(y; μ_i, Σ) N(y; μ_l, Σ) dy`.
pub fn cross_term(mu_i: &DVector<f64>, mu_l: &DVector<f64>, sigma: &Covariance) -> Result<f64> {
    log_cross_term(mu_i, mu_l, sigma).map(libm::exp)
}

/// Cross term from `q = (μ_i − μ_l)ᵀ Σ⁻¹ (μ_i − μ_l)`.
pub(crate) fn log_cross_from_whitened_sq(d: f64, log_det: f64, q: f64) -> f64 {
    -0.5 * (d * (LN_2PI + LN_2) + log_det + 0.5 * q)
}

/// `c = −½ (ln((2π)^d det Σ) + d)`, the negative entropy of `N(·, Σ)`.
pub fn entropy_const(sigma: &Covariance) -> f64 {
    let d = sigma.dim() as f64;
    -0.5 * (d * LN_2PI + sigma.log_det + d)
}

/// `ln Σ exp(v_i)` with max shift. Returns −∞ for an empty slice or all −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(s)
}

/// Gaussian mixture whose components share one covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    means: Vec<DVector<f64>>,
    weights: Vec<f64>,
    cov: Covariance,
}

impl GaussianMixture {
    pub fn new(means: Vec<DVector<f64>>, weights: Vec<f64>, cov: Covariance) -> Result<Self> {
        check_dim("mixture weights", means.len(), weights.len())?;
        if means.is_empty() {
            return Err(invalid("mixture needs at least one component"));
        }
        for m in &means {
            check_dim("mixture component", cov.dim(), m.len())?;
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(alloc::format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self {
            means,
            weights,
            cov,
        })
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    pub fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        check_dim("mixture argument", self.cov.dim(), y.len())?;
        let d = y.len() as f64;
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| {
                libm::log(*w) - 0.5 * (d * LN_2PI + self.cov.log_det + self.cov.quad_form(&(y - m)))
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }
}

/// A prior density over a bounded parameter box.
pub trait Prior: Sync + Send {
    fn support(&self) -> &IntervalBox;
    /// Density at `theta`, 0 outside the support.
    fn density(&self, theta: &[f64]) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// `U(box)`. Zero-width axes are point masses and do not enter the volume.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBoxPrior {
    support: IntervalBox,
}

impl UniformBoxPrior {
    pub fn new(support: IntervalBox) -> Self {
        Self { support }
    }
}

impl Prior for UniformBoxPrior {
    fn support(&self) -> &IntervalBox {
        &self.support
    }

    fn density(&self, theta: &[f64]) -> f64 {
        if self.support.contains(theta) {
            1.0 / self.support.volume()
        } else {
            0.0
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.support.dim())
            .map(|i| {
                let u: f64 = rng.random();
                self.support.lower()[i] + u * self.support.width(i)
            })
            .collect()
    }
}
