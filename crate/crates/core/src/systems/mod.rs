//! Model abstractions and the two concrete systems: a static nonlinear
//! benchmark and a front-wheel-drive vehicle under a parameterized
//! closed-loop maneuver.

mod benchmark;
mod vehicle;

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{check_dim, Result};
use crate::geometry::{IntervalBox, Zonotope};
use crate::probability::Covariance;
use crate::simulate::Schedule;

pub use benchmark::Benchmark;
pub use vehicle::{
    default_footprint, DesiredState, Maneuver, TireForces, Vehicle, VehicleParams, NOMINAL_THETA,
};

/// Dynamics regime. Models without switching always run in `High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    High,
    Low,
}

/// Closed-loop dynamics `ẋ = f(t, x, k, θ)` with a measurement map `g(x)`.
pub trait SystemModel: Sync + Send {
    fn state_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    fn param_box(&self) -> &IntervalBox;
    fn k_box(&self) -> &IntervalBox;
    fn noise(&self) -> &Covariance;
    fn initial_state(&self) -> &[f64];

    fn derivative(
        &self,
        t: f64,
        x: &[f64],
        k: &[f64],
        theta: &[f64],
        regime: Regime,
        dx: &mut [f64],
    ) -> Result<()>;

    fn measure(&self, x: &[f64], y: &mut [f64]);

    /// Signed distance to the regime switching surface: `≥ 0` is `High`.
    fn switching_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn regime(&self, x: &[f64]) -> Regime {
        match self.switching_value(x) {
            Some(v) if v < 0.0 => Regime::Low,
            _ => Regime::High,
        }
    }

    /// Times at which the closed-loop right-hand side is not smooth in `t`.
    fn breakpoints(&self, _k: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Time by which the maneuver `k` is required to be at rest.
    fn stop_time(&self, _k: &[f64]) -> Option<f64> {
        None
    }

    fn speed(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// World-frame region covered by `footprint` at state `x`. The default
    /// translates the footprint by the leading state coordinates.
    fn occupancy(&self, x: &[f64], footprint: &Zonotope) -> Result<Zonotope> {
        let w = footprint.dim();
        check_dim("occupancy world dimension", w, w.min(x.len()))?;
        footprint.translate(&DVector::from_row_slice(&x[..w]))
    }
}

/// Anything that yields the measurement means `g(x(t_j; k, θ))` on a schedule.
pub trait MeasurementModel: Sync + Send {
    fn measurement_dim(&self) -> usize;
    fn param_box(&self) -> &IntervalBox;
    fn k_box(&self) -> &IntervalBox;
    fn noise(&self) -> &Covariance;

    /// Means for every schedule time, time-major: `out[j * d + r]`.
    fn means(&self, k: &[f64], theta: &[f64], schedule: &Schedule) -> Result<Vec<f64>>;
}

type MeanFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Sync + Send;

/// Time-invariant measurement model `y = g(k, θ) + ω`, repeated at every
/// schedule time.
pub struct StaticModel {
    param_box: IntervalBox,
    k_box: IntervalBox,
    noise: Covariance,
    mean: Box<MeanFn>,
}

impl StaticModel {
    pub fn new<F>(param_box: IntervalBox, k_box: IntervalBox, noise: Covariance, mean: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Sync + Send + 'static,
    {
        Self {
            param_box,
            k_box,
            noise,
            mean: Box::new(mean),
        }
    }
}

impl core::fmt::Debug for StaticModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("StaticModel")
            .field("param_box", &self.param_box)
            .field("k_box", &self.k_box)
            .finish_non_exhaustive()
    }
}

impl MeasurementModel for StaticModel {
    fn measurement_dim(&self) -> usize {
        self.noise.dim()
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
        check_dim("static model k", self.k_box.dim(), k.len())?;
        check_dim("static model theta", self.param_box.dim(), theta.len())?;
        let d = self.noise.dim();
        let mut one = alloc::vec![0.0; d];
        (self.mean)(k, theta, &mut one);
        Ok(one.iter().copied().cycle().take(d * schedule.len()).collect())
    }
}
