use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{IntervalBox, Zonotope};
use crate::probability::Covariance;

use super::{Regime, SystemModel};

/// Nominal mass, front and rear axle distances.
pub const NOMINAL_THETA: [f64; 3] = [1500.0, 1.13, 1.67];

/// Vehicle constants that are not estimated, plus controller gains and
/// maneuver timing.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    pub izz: f64,
    pub c_alpha_f: f64,
    pub c_alpha_r: f64,
    pub k_u: f64,
    pub k_h: f64,
    pub k_r: f64,
    pub kappa_1u: f64,
    pub kappa_2u: f64,
    pub phi_1u: f64,
    pub phi_2u: f64,
    pub kappa_1r: f64,
    pub kappa_2r: f64,
    pub phi_1r: f64,
    pub phi_2r: f64,
    pub m_u: f64,
    pub m_r: f64,
    pub a_decel: f64,
    pub x4_crit: f64,
    pub h1: f64,
    pub h2: f64,
    /// Driving-phase duration.
    pub t_m: f64,
    pub t_plan: f64,
}

impl VehicleParams {
    /// Defaults for `maneuver` (driving phase 6 s for a lane change, 4 s for a turn).
    pub fn defaults(maneuver: Maneuver) -> Self {
        Self {
            izz: 2500.0,
            c_alpha_f: 8e4,
            c_alpha_r: 8e4,
            k_u: 4.0,
            k_h: 4.0,
            k_r: 4.0,
            kappa_1u: 1.0,
            kappa_2u: 0.5,
            phi_1u: 1.0,
            phi_2u: 0.5,
            kappa_1r: 1.0,
            kappa_2r: 0.5,
            phi_1r: 1.0,
            phi_2r: 0.5,
            m_u: 1.0,
            m_r: 1.0,
            a_decel: -5.0,
            x4_crit: 5.0,
            h1: 0.2,
            h2: 1.0,
            t_m: match maneuver {
                Maneuver::LaneChange => 6.0,
                Maneuver::LeftTurn => 4.0,
            },
            t_plan: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("izz", self.izz),
            ("c_alpha_f", self.c_alpha_f),
            ("c_alpha_r", self.c_alpha_r),
            ("k_u", self.k_u),
            ("k_h", self.k_h),
            ("k_r", self.k_r),
            ("kappa_1u", self.kappa_1u),
            ("kappa_2u", self.kappa_2u),
            ("phi_1u", self.phi_1u),
            ("phi_2u", self.phi_2u),
            ("kappa_1r", self.kappa_1r),
            ("kappa_2r", self.kappa_2r),
            ("phi_1r", self.phi_1r),
            ("phi_2r", self.phi_2r),
            ("m_u", self.m_u),
            ("m_r", self.m_r),
            ("x4_crit", self.x4_crit),
            ("t_m", self.t_m),
            ("t_plan", self.t_plan),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(alloc::format!("vehicle parameter {name} must be positive, got {v}")));
            }
        }
        if !(self.a_decel.is_finite() && self.a_decel < 0.0) {
            return Err(invalid(alloc::format!(
                "vehicle parameter a_decel must be negative, got {}",
                self.a_decel
            )));
        }
        if !(self.h1.is_finite() && self.h2.is_finite() && self.h2 >= 0.0) {
            return Err(invalid("lane-change shape constants h1, h2 must be finite with h2 >= 0"));
        }
        Ok(())
    }

    /// Braking duration `t_b`.
    pub fn braking_time(&self, k1: f64) -> f64 {
        if k1 > self.x4_crit {
            1.5 + (self.x4_crit - k1) / self.a_decel
        } else {
            1.5
        }
    }

    /// Time at which the braking reference speed reaches zero.
    pub fn zero_speed_time(&self, k1: f64) -> f64 {
        self.t_m + k1 / -self.a_decel
    }

    /// Time `t_s = t_m + t_b` at which the maneuver ends at rest.
    pub fn stop_time(&self, k1: f64) -> f64 {
        self.t_m + self.braking_time(k1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Maneuver {
    LaneChange,
    LeftTurn,
}

/// Reference values and their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredState {
    pub x3: f64,
    pub x4: f64,
    pub x6: f64,
    pub dx4: f64,
    pub dx6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireForces {
    pub fxf: f64,
    pub fyf: f64,
    pub fxr: f64,
    pub fyr: f64,
}

/// Front-wheel-drive vehicle tracking a parameterized reference.
///
/// State: `[x, y, ψ, u, v, r, I_u, I_r]`, where the last two entries are the
/// running squared tracking-error integrals driving gain adaptation.
/// Parameters: `θ = [m, l_f, l_r]`. Trajectory parameter: `k = [k1, k2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    params: VehicleParams,
    maneuver: Maneuver,
    x0: Vec<f64>,
    k_box: IntervalBox,
    param_box: IntervalBox,
    noise: Covariance,
    heading_window: Option<f64>,
    turn_launch_guard: bool,
}

impl Vehicle {
    /// Vehicle with the default trajectory-parameter box for `maneuver`,
    /// a ±5 % prior box around the nominal parameters and measurement
    /// noise `0.01 I`.
    pub fn new(params: VehicleParams, maneuver: Maneuver, x0: &[f64]) -> Result<Self> {
        params.validate()?;
        check_dim("vehicle initial state", 6, x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vehicle initial state"));
        }
        let mut state = x0.to_vec();
        state.extend_from_slice(&[0.0, 0.0]);
        let k_box = match maneuver {
            Maneuver::LaneChange => IntervalBox::new(vec![8.0, -1.0], vec![10.0, 1.0])?,
            Maneuver::LeftTurn => IntervalBox::new(vec![8.0, 0.1], vec![10.0, 1.0])?,
        };
        let param_box = IntervalBox::new(
            NOMINAL_THETA.iter().map(|v| 0.95 * v).collect(),
            NOMINAL_THETA.iter().map(|v| 1.05 * v).collect(),
        )?;
        Ok(Self {
            params,
            maneuver,
            x0: state,
            k_box,
            param_box,
            noise: Covariance::isotropic(2, 0.01)?,
            heading_window: None,
            turn_launch_guard: true,
        })
    }

    pub fn with_k_box(mut self, k_box: IntervalBox) -> Result<Self> {
        check_dim("vehicle k box", 2, k_box.dim())?;
        self.k_box = k_box;
        Ok(self)
    }

    pub fn with_param_box(mut self, param_box: IntervalBox) -> Result<Self> {
        check_dim("vehicle parameter box", 3, param_box.dim())?;
        if param_box.lower().iter().any(|v| *v <= 0.0) {
            return Err(invalid("vehicle mass and axle distances must be positive"));
        }
        self.param_box = param_box;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: Covariance) -> Result<Self> {
        check_dim("vehicle measurement noise", 2, noise.dim())?;
        self.noise = noise;
        Ok(self)
    }

    /// End of the lane-change heading window; defaults to the braking time `t_b`.
    pub fn with_heading_window(mut self, window: Option<f64>) -> Result<Self> {
        if let Some(w) = window {
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid("heading window must be positive"));
            }
        }
        self.heading_window = window;
        Ok(self)
    }

    /// Whether the turn's launch ramp is enabled when `11/8 t_m < k1`.
    /// When disabled the reference speed is `k1` from the start.
    pub fn with_turn_launch_guard(mut self, enabled: bool) -> Self {
        self.turn_launch_guard = enabled;
        self
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn maneuver(&self) -> Maneuver {
        self.maneuver
    }

    fn brake(&self, t: f64, k1: f64) -> (f64, f64) {
        let p = &self.params;
        if t < p.stop_time(k1) && t < p.zero_speed_time(k1) {
            let v = k1 + (t - p.t_m) * p.a_decel;
            (v.max(0.0), p.a_decel)
        } else {
            (0.0, 0.0)
        }
    }

    /// Reference trajectory at time `t` for parameter `k`.
    pub fn desired(&self, t: f64, k: &[f64]) -> DesiredState {
        let p = &self.params;
        let (k1, k2) = (k[0], k[1]);
        let x30 = self.x0[2];
        let tm = p.t_m;
        match self.maneuver {
            Maneuver::LaneChange => {
                let (x4, dx4) = if t < tm {
                    let x40 = self.x0[3];
                    (x40 + (k1 - x40) * t / tm, (k1 - x40) / tm)
                } else {
                    self.brake(t, k1)
                };
                let tb = p.braking_time(k1);
                let window = self.heading_window.unwrap_or(tb);
                let (x3, x6, dx6) = if t < window {
                    let s = t - 0.5 * tb;
                    let amp = p.h1 * k2 * libm::exp(-p.h2 * s * s);
                    (
                        x30 + amp,
                        -2.0 * p.h2 * s * amp,
                        amp * (4.0 * p.h2 * p.h2 * s * s - 2.0 * p.h2),
                    )
                } else {
                    (x30, 0.0, 0.0)
                };
                DesiredState {
                    x3,
                    x4,
                    x6,
                    dx4,
                    dx6,
                }
            }
            Maneuver::LeftTurn => {
                let (x4, dx4) = if t < 0.25 * tm {
                    if self.turn_launch_guard && 11.0 / 8.0 * tm < k1 {
                        (5.5 * t, 5.5)
                    } else {
                        (k1, 0.0)
                    }
                } else if t < tm {
                    (k1, 0.0)
                } else {
                    self.brake(t, k1)
                };
                let w = 4.0 * PI / tm;
                let (x3, x6, dx6) = if t < 0.25 * tm {
                    let (s, c) = (libm::sin(w * t), libm::cos(w * t));
                    (
                        x30 + 0.5 * k2 * (t - s / w),
                        0.5 * k2 * (1.0 - c),
                        0.5 * k2 * w * s,
                    )
                } else if t < 0.75 * tm {
                    (x30 + k2 * tm / 8.0 + k2 * (t - 0.25 * tm), k2, 0.0)
                } else if t < tm {
                    let (s, c) = (libm::sin(w * t), libm::cos(w * t));
                    (
                        x30 + 5.0 * k2 * tm / 8.0 + 0.5 * k2 * ((t - 0.75 * tm) - s / w),
                        0.5 * k2 * (1.0 - c),
                        0.5 * k2 * w * s,
                    )
                } else {
                    (x30 + 0.75 * k2 * tm, 0.0, 0.0)
                };
                DesiredState {
                    x3,
                    x4,
                    x6,
                    dx4,
                    dx6,
                }
            }
        }
    }

    /// Closed-loop tire forces. `integ = [I_u, I_r]`.
    pub fn tire_forces(
        &self,
        t: f64,
        x: &[f64],
        k: &[f64],
        theta: &[f64],
        integ: [f64; 2],
        regime: Regime,
    ) -> Result<TireForces> {
        let p = &self.params;
        let (m, lf, lr) = (theta[0], theta[1], theta[2]);
        let des = self.desired(t, k);
        let e_u = x[3] - des.x4;
        let e6 = x[5] - des.x6;
        let e3 = x[2] - des.x3;

        let kappa_u = p.kappa_1u + p.kappa_2u * integ[0];
        let phi_u = p.phi_1u + p.phi_2u * integ[0];
        let tau_u = -(kappa_u * p.m_u + phi_u) * e_u;
        let kappa_r = p.kappa_1r + p.kappa_2r * integ[1];
        let phi_r = p.phi_1r + p.phi_2r * integ[1];
        let e_r = p.k_r * e6 + p.k_h * e3;
        let tau_r = -(kappa_r * p.m_r + phi_r) * e_r;

        let fxr = 0.0;
        let fyr = match regime {
            Regime::High => {
                if x[3].abs() < 1e-6 {
                    return Err(Error::SpeedGuard { speed: x[3] });
                }
                let alpha_r = -(x[4] - lr * x[5]) / x[3];
                p.c_alpha_r * alpha_r
            }
            Regime::Low => 0.0,
        };
        let fxf = -m * p.k_u * e_u + m * des.dx4 - fxr - m * x[4] * x[5] + m * tau_u;
        let fyf = p.izz / lf * (-p.k_r * e6 + des.dx6 - p.k_h * e3 + tau_r) + lr / lf * fyr;
        Ok(TireForces { fxf, fyf, fxr, fyr })
    }
}

impl SystemModel for Vehicle {
    fn state_dim(&self) -> usize {
        8
    }

    fn measurement_dim(&self) -> usize {
        2
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

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn derivative(
        &self,
        t: f64,
        x: &[f64],
        k: &[f64],
        theta: &[f64],
        regime: Regime,
        dx: &mut [f64],
    ) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vehicle state"));
        }
        let p = &self.params;
        let (m, lf, lr) = (theta[0], theta[1], theta[2]);
        let f = self.tire_forces(t, x, k, theta, [x[6], x[7]], regime)?;
        let des = self.desired(t, k);
        let (s3, c3) = (libm::sin(x[2]), libm::cos(x[2]));

        dx[0] = x[3] * c3 - x[4] * s3;
        dx[1] = x[3] * s3 + x[4] * c3;
        dx[2] = x[5];
        dx[3] = (f.fxf + f.fxr) / m + x[4] * x[5];
        match regime {
            Regime::High => {
                dx[4] = (f.fyf + f.fyr) / m - x[3] * x[5];
                dx[5] = (lf * f.fyf - lr * f.fyr) / p.izz;
            }
            Regime::Low => {
                let l = lf + lr;
                let c_us = m / l * (lr / p.c_alpha_f - lf / p.c_alpha_r);
                let delta = f.fyf / p.c_alpha_f + (x[4] + lf * x[5]) / x[3].max(0.1);
                dx[4] = lr * x[5] - m * lf / (p.c_alpha_r * l) * x[3] * x[3] * x[5];
                dx[5] = delta * x[3] / (l + c_us * x[3] * x[3]);
            }
        }
        let e_u = x[3] - des.x4;
        let e6 = x[5] - des.x6;
        let e3 = x[2] - des.x3;
        dx[6] = e_u * e_u;
        dx[7] = e6 * e6 + e3 * e3;
        Ok(())
    }

    fn measure(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[3];
        y[1] = x[4];
    }

    fn switching_value(&self, x: &[f64]) -> Option<f64> {
        Some(x[3] - self.params.x4_crit)
    }

    fn breakpoints(&self, k: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let k1 = k[0];
        let tm = p.t_m;
        let ts = p.stop_time(k1);
        let t_zero = p.zero_speed_time(k1);
        let mut out = match self.maneuver {
            Maneuver::LaneChange => {
                vec![self.heading_window.unwrap_or(p.braking_time(k1)), tm]
            }
            Maneuver::LeftTurn => vec![0.25 * tm, 0.75 * tm, tm],
        };
        if t_zero < ts {
            out.push(t_zero);
        }
        out.push(ts);
        out.retain(|t| *t > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn stop_time(&self, k: &[f64]) -> Option<f64> {
        Some(self.params.stop_time(k[0]))
    }

    fn speed(&self, x: &[f64]) -> Option<f64> {
        Some(x[3])
    }

    /// Footprint rotated by the heading and translated to the position.
    fn occupancy(&self, x: &[f64], footprint: &Zonotope) -> Result<Zonotope> {
        check_dim("vehicle footprint", 2, footprint.dim())?;
        let (s, c) = (libm::sin(x[2]), libm::cos(x[2]));
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        footprint
            .linear_map(&rot)?
            .translate(&DVector::from_row_slice(&x[..2]))
    }
}

/// Vehicle footprint: a 2.4 m × 1.1 m box centered on the reference point.
pub fn default_footprint() -> Zonotope {
    Zonotope::new(
        DVector::zeros(2),
        DMatrix::from_diagonal(&DVector::from_row_slice(&[1.2, 0.55])),
    )
    .expect("constant footprint is valid")
}
