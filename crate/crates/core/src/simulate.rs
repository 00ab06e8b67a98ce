//! Fixed-step RK4 integration with step clamping to schedule and phase
//! boundaries, regime-switch localization, and noisy measurement sampling.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, invalid, Error, Result};
use crate::probability::Covariance;
use crate::rng::{self, Stream};
use crate::systems::{MeasurementModel, Regime, SystemModel};

/// Measurement times `t_j = j Δt` for `j = 1..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    dt: f64,
    n: usize,
}

impl Schedule {
    /// Schedule over `[0, t_f]`; `t_f / Δt` must be a positive integer.
    pub fn new(dt: f64, t_f: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0 && t_f.is_finite() && t_f > 0.0) {
            return Err(invalid("schedule step and horizon must be positive"));
        }
        let ratio = t_f / dt;
        let n = libm::round(ratio);
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(alloc::format!(
                "horizon {t_f} is not a positive integer multiple of the step {dt}"
            )));
        }
        Ok(Self { dt, n: n as usize })
    }

    /// `n` measurements spaced `Δt` apart; `n = 0` is allowed.
    pub fn from_count(dt: f64, n: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("schedule step must be positive"));
        }
        Ok(Self { dt, n })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn t_f(&self) -> f64 {
        self.n as f64 * self.dt
    }

    /// Time of measurement `j` (zero-based), i.e. `(j + 1) Δt`.
    pub fn time(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.time(j)).collect()
    }

    /// Interval `T_j = [j Δt, (j + 1) Δt]` ending at measurement `j`.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        (j as f64 * self.dt, self.time(j))
    }

    /// Same spacing, covering at least `[0, t_end]`.
    pub fn extended_to(&self, t_end: f64) -> Self {
        let n = libm::ceil(t_end / self.dt - 1e-9).max(self.n as f64) as usize;
        Self { dt: self.dt, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Step end times, starting at 0. Empty unless states were recorded.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `g(x(t_j))` for each schedule time, time-major.
    pub means: Vec<f64>,
    pub measurement_dim: usize,
    /// State at the end of integration.
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn mean(&self, j: usize) -> &[f64] {
        let d = self.measurement_dim;
        &self.means[j * d..(j + 1) * d]
    }

    /// Recorded state closest to `t` from below.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        let i = self.times.partition_point(|s| *s <= t + 1e-12);
        i.checked_sub(1).map(|i| self.states[i].as_slice())
    }
}

struct Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

struct Stepper<'a, M: SystemModel + ?Sized> {
    model: &'a M,
    k: &'a [f64],
    theta: &'a [f64],
}

impl<M: SystemModel + ?Sized> Stepper<'_, M> {
    /// One RK4 step of length `h`. The last stage is evaluated at `t_last`,
    /// which is `t + h` except at a breakpoint, where the left limit is used.
    #[allow(clippy::too_many_arguments)]
    fn rk4(
        &self,
        t: f64,
        x: &[f64],
        h: f64,
        t_last: f64,
        regime: Regime,
        w: &mut Work,
        out: &mut [f64],
    ) -> Result<()> {
        let n = x.len();
        let f = |t: f64, x: &[f64], dx: &mut [f64]| {
            self.model.derivative(t, x, self.k, self.theta, regime, dx)
        };
        f(t, x, &mut w.k1)?;
        for i in 0..n {
            w.tmp[i] = x[i] + 0.5 * h * w.k1[i];
        }
        f(t + 0.5 * h, &w.tmp, &mut w.k2)?;
        for i in 0..n {
            w.tmp[i] = x[i] + 0.5 * h * w.k2[i];
        }
        f(t + 0.5 * h, &w.tmp, &mut w.k3)?;
        for i in 0..n {
            w.tmp[i] = x[i] + h * w.k3[i];
        }
        f(t_last, &w.tmp, &mut w.k4)?;
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
        }
        Ok(())
    }

    /// Smallest step length within `(0, h]` after which the regime differs
    /// from `regime`, located to `1e-13` s by the Illinois method.
    #[allow(clippy::too_many_arguments)]
    fn locate_switch(
        &self,
        t: f64,
        x: &[f64],
        h: f64,
        t_last: f64,
        regime: Regime,
        w: &mut Work,
        out: &mut [f64],
    ) -> Result<f64> {
        let value = |s: &[f64]| self.model.switching_value(s).unwrap_or(0.0);
        let (mut lo, mut hi) = (0.0, h);
        let mut f_lo = value(x);
        self.rk4(t, x, h, t_last, regime, w, out)?;
        let mut f_hi = value(out);
        let mut side = 0i8;
        for _ in 0..200 {
            if hi - lo <= 1e-13 {
                break;
            }
            let mut c = if f_hi != f_lo {
                hi - f_hi * (hi - lo) / (f_hi - f_lo)
            } else {
                0.5 * (lo + hi)
            };
            if !(c > lo && c < hi) {
                c = 0.5 * (lo + hi);
            }
            self.rk4(t, x, c, t + c, regime, w, out)?;
            let f_c = value(out);
            if self.model.regime(out) == regime {
                lo = c;
                f_lo = f_c;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = c;
                f_hi = f_c;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        let last = if hi == h { t_last } else { t + hi };
        self.rk4(t, x, hi, last, regime, w, out)?;
        Ok(hi)
    }
}

/// Largest float below a positive `t`.
fn left_limit(t: f64) -> f64 {
    f64::from_bits(t.to_bits() - 1)
}

fn check_step(schedule: &Schedule, step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid("integration step must be positive"));
    }
    let ratio = schedule.dt() / step;
    if (ratio - libm::round(ratio)).abs() > 1e-9 * ratio.max(1.0) || ratio < 1.0 - 1e-9 {
        return Err(invalid(alloc::format!(
            "integration step {step} does not divide the measurement spacing {}",
            schedule.dt()
        )));
    }
    Ok(())
}

/// Integrates `model` from its initial state over `[0, t_end]` with
/// classical RK4 and fixed step `step`.
///
/// Steps never straddle a schedule time or a model breakpoint. A crossing
/// of the regime switching surface ends the step at the crossing, and the
/// integration continues in the new regime.
pub fn simulate<M: SystemModel + ?Sized>(
    model: &M,
    k: &[f64],
    theta: &[f64],
    schedule: &Schedule,
    step: f64,
    t_end: f64,
    record: bool,
) -> Result<Trajectory> {
    check_dim("trajectory parameter", model.k_box().dim(), k.len())?;
    check_dim("system parameter", model.param_box().dim(), theta.len())?;
    check_step(schedule, step)?;
    if !(t_end >= schedule.t_f() - 1e-12) {
        return Err(invalid("integration end precedes the last measurement"));
    }

    // (time, schedule index, is breakpoint)
    let mut events: Vec<(f64, Option<usize>, bool)> =
        (0..schedule.len()).map(|j| (schedule.time(j), Some(j), false)).collect();
    for b in model.breakpoints(k) {
        if b > 0.0 && b < t_end {
            events.push((b, None, true));
        }
    }
    events.push((t_end, None, false));
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, Option<usize>, bool)> = Vec::with_capacity(events.len());
    for (t, j, brk) in events {
        match merged.last_mut() {
            Some(last) if (t - last.0).abs() <= 1e-12 * t.max(1.0) => {
                // breakpoint times are kept exactly so phases never overlap a step
                if brk {
                    last.0 = t;
                    last.2 = true;
                }
                if j.is_some() {
                    last.1 = j;
                }
            }
            _ => merged.push((t, j, brk)),
        }
    }

    let n = model.state_dim();
    let d = model.measurement_dim();
    let mut x = model.initial_state().to_vec();
    check_dim("initial state", n, x.len())?;
    let mut next = vec![0.0; n];
    let mut work = Work::new(n);
    let stepper = Stepper { model, k, theta };
    let mut regime = model.regime(&x);
    let mut t = 0.0;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        means: vec![0.0; schedule.len() * d],
        measurement_dim: d,
        final_state: Vec::new(),
    };
    if record {
        traj.times.push(0.0);
        traj.states.push(x.clone());
    }

    for (b, sched, brk) in merged {
        let b_left = if brk { left_limit(b) } else { b };
        let mut seg_start = t;
        let mut i = 0usize;
        while b - t > 1e-12 * b.max(1.0) {
            let mut t_next = seg_start + (i + 1) as f64 * step;
            if t_next >= b - 1e-9 * step {
                t_next = b;
            }
            let h = t_next - t;
            let t_last = if t_next == b { b_left } else { t_next };
            stepper.rk4(t, &x, h, t_last, regime, &mut work, &mut next)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time: t_next });
            }
            if model.switching_value(&next).is_some() && model.regime(&next) != regime {
                let tau = stepper.locate_switch(t, &x, h, t_last, regime, &mut work, &mut next)?;
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { time: t + tau });
                }
                t = if tau == h { t_next } else { t + tau };
                regime = model.regime(&next);
                seg_start = t;
                i = 0;
            } else {
                t = t_next;
                i += 1;
            }
            core::mem::swap(&mut x, &mut next);
            if record {
                traj.times.push(t);
                traj.states.push(x.clone());
            }
        }
        t = b;
        if let Some(j) = sched {
            model.measure(&x, &mut traj.means[j * d..(j + 1) * d]);
        }
    }
    traj.final_state = x;
    Ok(traj)
}

/// [`simulate`] over the schedule horizon, recording every step.
pub fn integrate_rk4<M: SystemModel + ?Sized>(
    model: &M,
    k: &[f64],
    theta: &[f64],
    schedule: &Schedule,
    step: f64,
) -> Result<Trajectory> {
    simulate(model, k, theta, schedule, step, schedule.t_f(), true)
}

/// `y_j = g(x(t_j)) + L z_j` with `L Lᵀ = Σ` and standard normal `z_j`.
pub fn sample_measurements_with(
    means: &[f64],
    noise: &Covariance,
    rng: &mut dyn RngCore,
) -> Vec<DVector<f64>> {
    let d = noise.dim();
    means
        .chunks(d)
        .map(|mu| {
            let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
            DVector::from_row_slice(mu) + noise.cholesky_l() * z
        })
        .collect()
}

/// Noisy measurements along `traj` from the measurement stream of `seed`.
pub fn sample_measurements(traj: &Trajectory, noise: &Covariance, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = rng::stream(seed, Stream::Measurement);
    sample_measurements_with(&traj.means, noise, &mut rng)
}

/// A dynamical model viewed as a measurement model by integration with a fixed step.
#[derive(Debug, Clone)]
pub struct Simulated<M> {
    pub model: M,
    pub step: f64,
}

impl<M: SystemModel> MeasurementModel for Simulated<M> {
    fn measurement_dim(&self) -> usize {
        self.model.measurement_dim()
    }

    fn param_box(&self) -> &crate::geometry::IntervalBox {
        self.model.param_box()
    }

    fn k_box(&self) -> &crate::geometry::IntervalBox {
        self.model.k_box()
    }

    fn noise(&self) -> &Covariance {
        self.model.noise()
    }

    fn means(&self, k: &[f64], theta: &[f64], schedule: &Schedule) -> Result<Vec<f64>> {
        simulate(&self.model, k, theta, schedule, self.step, schedule.t_f(), false).map(|tr| tr.means)
    }
}
