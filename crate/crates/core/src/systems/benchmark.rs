use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Result};
use crate::geometry::IntervalBox;
use crate::probability::Covariance;
use crate::simulate::Schedule;

use super::MeasurementModel;

/// Scalar benchmark `y = θ³u² + exp(−|0.2 − u|) + ω` with `θ, u ∈ [0, 1]`.
///
/// With `theta_scales_exp` the exponential term is multiplied by `θ`, which
/// makes small inputs informative as well and produces a second local
/// maximum of the information gain near `u = 0.2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    param_box: IntervalBox,
    k_box: IntervalBox,
    noise: Covariance,
    theta_scales_exp: bool,
}

impl Benchmark {
    pub fn new(noise_variance: f64, theta_scales_exp: bool) -> Result<Self> {
        Ok(Self {
            param_box: IntervalBox::new(vec![0.0], vec![1.0])?,
            k_box: IntervalBox::new(vec![0.0], vec![1.0])?,
            noise: Covariance::isotropic(1, noise_variance)?,
            theta_scales_exp,
        })
    }

    /// The standard configuration with noise variance `1e-4`.
    pub fn standard() -> Self {
        Self::new(1e-4, false).expect("constant configuration is valid")
    }

    /// Restricts the admissible inputs to a sub-interval of `[0, 1]`.
    pub fn with_k_box(mut self, k_box: IntervalBox) -> Result<Self> {
        check_dim("benchmark input box", 1, k_box.dim())?;
        if k_box.lower()[0] < 0.0 || k_box.upper()[0] > 1.0 {
            return Err(crate::error::invalid("benchmark inputs must lie in [0, 1]"));
        }
        self.k_box = k_box;
        Ok(self)
    }

    pub fn mean(&self, theta: f64, u: f64) -> f64 {
        let e = libm::exp(-libm::fabs(0.2 - u));
        let e = if self.theta_scales_exp { theta * e } else { e };
        theta * theta * theta * u * u + e
    }
}

impl MeasurementModel for Benchmark {
    fn measurement_dim(&self) -> usize {
        1
    }

    fn param_box(&self) -> &IntervalBox {
        &self.param_box
    }

    fn k_box(&self) -> &IntervalBox {
        &self.k_box
    }

    fn noise(&self) -> &Covariance {
        &self.noise
    }

    fn means(&self, k: &[f64], theta: &[f64], schedule: &Schedule) -> Result<Vec<f64>> {
        check_dim("benchmark input", 1, k.len())?;
        check_dim("benchmark parameter", 1, theta.len())?;
        Ok(vec![self.mean(theta[0], k[0]); schedule.len()])
    }
}
