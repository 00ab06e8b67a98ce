//! Expected information gain of a trajectory parameter.
//!
//! The evidence `p(y_j; k)` is replaced by a Gaussian mixture whose components
//! sit at the measurement means of the cubature points over Θ. The KL between
//! each likelihood and that mixture is then bounded from below in closed form
//! using pairwise Gaussian overlaps, which gives a smooth, cheap surrogate
//! `J̃(k)`. Nested Monte Carlo and exact grid Bayes are provided as references.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::cubature::{tensor_rule, trapezoid_rule, CubatureRule};
use crate::error::{check_dim, invalid, Error, Result};
use crate::par;
use crate::probability::{
    entropy_const, log_cross_from_whitened_sq, log_sum_exp, Covariance, GaussianMixture, Prior,
    LN_2PI,
};
use crate::rng::{self, Stream};
use crate::simulate::Schedule;
use crate::systems::MeasurementModel;

/// Weights multiplying the outer sum of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OuterWeights {
    /// `ᾱ_i = w_i p(θ_i) / Σ_l w_l p(θ_l)`; the bound is an expectation under
    /// the discretized prior.
    #[default]
    Normalized,
    /// `w_i p(θ_i)` as is. Coincides with `Normalized` when the rule integrates
    /// the prior exactly.
    Raw,
}

/// Everything needed to evaluate `J̃` for any `k`.
pub struct EigContext<'a> {
    model: &'a dyn MeasurementModel,
    prior: &'a dyn Prior,
    rule: CubatureRule,
    schedule: Schedule,
    alpha: Vec<f64>,
    raw: Vec<f64>,
    outer: OuterWeights,
}

impl core::fmt::Debug for EigContext<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("EigContext")
            .field("points", &self.rule.len())
            .field("schedule", &self.schedule)
            .field("outer", &self.outer)
            .finish_non_exhaustive()
    }
}

/// Measurement means for every cubature point and schedule time, computed once
/// per `k`. `whitened` holds `L⁻¹ μ` so pairwise Mahalanobis distances are plain
/// squared norms.
#[derive(Debug, Clone)]
pub struct MeanTable {
    n_points: usize,
    n_times: usize,
    d: usize,
    raw: Vec<f64>,
    whitened: Vec<f64>,
}

impl MeanTable {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn mean(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.n_times + j) * self.d;
        &self.raw[o..o + self.d]
    }

    fn whitened(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.n_times + j) * self.d;
        &self.whitened[o..o + self.d]
    }
}

/// Finite-difference gradient. `one_sided` is set when some axis touched the
/// boundary of K and a forward or backward difference was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: Vec<f64>,
    pub one_sided: bool,
}

impl<'a> EigContext<'a> {
    pub fn new(
        model: &'a dyn MeasurementModel,
        prior: &'a dyn Prior,
        rule: CubatureRule,
        schedule: Schedule,
    ) -> Result<Self> {
        let p = model.param_box().dim();
        check_dim("cubature rule dimension", p, rule.domain().dim())?;
        check_dim("prior dimension", p, prior.support().dim())?;
        check_dim("noise dimension", model.measurement_dim(), model.noise().dim())?;
        let raw: Vec<f64> = rule
            .points()
            .iter()
            .zip(rule.weights())
            .map(|(th, w)| w * prior.density(th))
            .collect();
        let z: f64 = raw.iter().sum();
        if !(z.is_finite() && z > 0.0) {
            return Err(invalid("prior has no mass at the cubature points"));
        }
        let alpha = raw.iter().map(|r| r / z).collect();
        Ok(Self {
            model,
            prior,
            rule,
            schedule,
            alpha,
            raw,
            outer: OuterWeights::Normalized,
        })
    }

    /// Tensor Clenshaw–Curtis rule over the prior support.
    pub fn with_clenshaw_curtis(
        model: &'a dyn MeasurementModel,
        prior: &'a dyn Prior,
        n_per_dim: &[usize],
        schedule: Schedule,
    ) -> Result<Self> {
        let rule = tensor_rule(prior.support(), n_per_dim)?;
        Self::new(model, prior, rule, schedule)
    }

    pub fn with_outer_weights(mut self, outer: OuterWeights) -> Self {
        self.outer = outer;
        self
    }

    pub fn model(&self) -> &'a dyn MeasurementModel {
        self.model
    }

    pub fn prior(&self) -> &'a dyn Prior {
        self.prior
    }

    pub fn rule(&self) -> &CubatureRule {
        &self.rule
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Normalized weights `ᾱ`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Normalizing constant `Σ w_l p(θ_l)`.
    pub fn evidence_normalizer(&self) -> f64 {
        self.raw.iter().sum()
    }

    pub fn outer_weights(&self) -> OuterWeights {
        self.outer
    }

    /// Integrates every cubature point at `k`.
    pub fn mean_table(&self, k: &[f64]) -> Result<MeanTable> {
        check_dim("trajectory parameter", self.model.k_box().dim(), k.len())?;
        let d = self.model.measurement_dim();
        let n_times = self.schedule.len();
        let noise = self.model.noise();
        let points = self.rule.points();
        let rows = par::try_map_indexed(points.len(), |i| {
            let means = self
                .model
                .means(k, &points[i], &self.schedule)
                .map_err(|e| match e {
                    Error::Divergence { time } => Error::CubatureDivergence { index: i, time },
                    other => other,
                })?;
            check_dim("model means", d * n_times, means.len())?;
            let mut white: Vec<f64> = Vec::with_capacity(means.len());
            for block in means.chunks(d.max(1)) {
                white.extend(noise.whiten(&DVector::from_row_slice(block)).iter());
            }
            Ok::<_, Error>((means, white))
        })?;
        let mut raw = Vec::with_capacity(points.len() * n_times * d);
        let mut whitened = Vec::with_capacity(raw.capacity());
        for (m, w) in rows {
            raw.extend(m);
            whitened.extend(w);
        }
        Ok(MeanTable {
            n_points: points.len(),
            n_times,
            d,
            raw,
            whitened,
        })
    }

    /// Cubature mixture approximation of the evidence at schedule index `j`.
    pub fn approximate_marginal(&self, k: &[f64], j: usize) -> Result<GaussianMixture> {
        self.check_time(j)?;
        let table = self.mean_table(k)?;
        let means = (0..table.n_points)
            .map(|i| DVector::from_row_slice(table.mean(i, j)))
            .collect();
        GaussianMixture::new(means, self.alpha.clone(), self.model.noise().clone())
    }

    /// `J̃(k, t_j)` from a precomputed table.
    pub fn eig_at_time_from(&self, table: &MeanTable, j: usize) -> f64 {
        let noise = self.model.noise();
        let d = table.d as f64;
        let c = entropy_const(noise);
        let log_det = noise.log_det();
        let ln_alpha: Vec<f64> = self.alpha.iter().map(|a| libm::log(*a)).collect();
        let outer = match self.outer {
            OuterWeights::Normalized => &self.alpha,
            OuterWeights::Raw => &self.raw,
        };
        let mut terms = vec![0.0; table.n_points];
        let mut total = 0.0;
        for i in 0..table.n_points {
            if outer[i] == 0.0 {
                continue;
            }
            let wi = table.whitened(i, j);
            for (l, t) in terms.iter_mut().enumerate() {
                let q: f64 = wi
                    .iter()
                    .zip(table.whitened(l, j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                *t = ln_alpha[l] + log_cross_from_whitened_sq(d, log_det, q);
            }
            total += outer[i] * (c - log_sum_exp(&terms));
        }
        total
    }

    pub fn eig_at_time(&self, k: &[f64], j: usize) -> Result<f64> {
        self.check_time(j)?;
        let table = self.mean_table(k)?;
        Ok(self.eig_at_time_from(&table, j))
    }

    /// Per-time terms of `J̃(k)`.
    pub fn eig_terms(&self, k: &[f64]) -> Result<Vec<f64>> {
        let table = self.mean_table(k)?;
        Ok((0..table.n_times).map(|j| self.eig_at_time_from(&table, j)).collect())
    }

    /// `J̃(k) = Σ_j J̃(k, t_j)`, summed in schedule order.
    pub fn eig_total(&self, k: &[f64]) -> Result<f64> {
        Ok(self.eig_terms(k)?.iter().sum())
    }

    /// Central differences of [`eig_total`](Self::eig_total) with step
    /// `1e-4 · width(K_i)`.
    pub fn eig_gradient(&self, k: &[f64]) -> Result<Gradient> {
        finite_difference(self.model.k_box(), k, 1e-4, |kk| self.eig_total(kk))
    }

    fn check_time(&self, j: usize) -> Result<()> {
        if j < self.schedule.len() {
            Ok(())
        } else {
            Err(invalid(alloc::format!(
                "time index {j} outside a schedule of {} times",
                self.schedule.len()
            )))
        }
    }
}

/// Componentwise finite differences of `f` at `k` inside `bounds`, relative
/// step `rel`. Axes with zero width get a zero partial.
pub(crate) fn finite_difference<F>(
    bounds: &crate::geometry::IntervalBox,
    k: &[f64],
    rel: f64,
    f: F,
) -> Result<Gradient>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    check_dim("gradient point", bounds.dim(), k.len())?;
    let n = k.len();
    let probes: Vec<(usize, f64, f64)> = (0..n)
        .map(|i| {
            let eps = rel * bounds.width(i);
            let minus = if k[i] - eps < bounds.lower()[i] { k[i] } else { k[i] - eps };
            let plus = if k[i] + eps > bounds.upper()[i] { k[i] } else { k[i] + eps };
            (i, minus, plus)
        })
        .collect();
    // Both probes of every axis go out as one batch.
    let values = par::try_map_indexed(2 * n, |idx| {
        let (i, minus, plus) = probes[idx / 2];
        let mut kk = k.to_vec();
        kk[i] = if idx % 2 == 0 { minus } else { plus };
        if plus == minus {
            return Ok(0.0);
        }
        f(&kk)
    })?;
    let mut one_sided = false;
    let value = probes
        .iter()
        .map(|&(i, minus, plus)| {
            if plus == minus {
                return 0.0;
            }
            if minus == k[i] || plus == k[i] {
                one_sided = true;
            }
            (values[2 * i + 1] - values[2 * i]) / (plus - minus)
        })
        .collect();
    Ok(Gradient { value, one_sided })
}

/// Nested Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Nested Monte Carlo EIG at schedule index `j`: the mean over outer draws
/// `θ ~ p, y ~ p(y|θ)` of `ln p(y|θ) − ln(1/M Σ_m p(y|θ_m))` with fresh inner
/// draws `θ_m ~ p` per outer sample.
#[allow(clippy::too_many_arguments)]
pub fn mc_eig(
    model: &dyn MeasurementModel,
    prior: &dyn Prior,
    k: &[f64],
    schedule: &Schedule,
    j: usize,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_outer == 0 || n_inner == 0 {
        return Err(invalid("Monte Carlo sample counts must be positive"));
    }
    if j >= schedule.len() {
        return Err(invalid("time index outside the schedule"));
    }
    let noise = model.noise();
    let d = model.measurement_dim();
    let mean_at = |theta: &[f64]| -> Result<DVector<f64>> {
        let m = model.means(k, theta, schedule)?;
        Ok(DVector::from_row_slice(&m[j * d..(j + 1) * d]))
    };
    let samples = par::try_map_indexed(n_outer, |o| {
        let mut rng = rng::substream(seed, Stream::MonteCarlo, o as u64);
        let theta = prior.sample(&mut rng);
        let mu = mean_at(&theta)?;
        let y = &mu + noise.cholesky_l() * standard_normal(d, &mut rng);
        let outer = log_likelihood(&y, &mu, noise);
        let mut inner = Vec::with_capacity(n_inner);
        for _ in 0..n_inner {
            let th = prior.sample(&mut rng);
            inner.push(log_likelihood(&y, &mean_at(&th)?, noise));
        }
        let max = inner.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = inner.iter().map(|v| libm::exp(v - max)).sum();
        Ok::<_, Error>(outer - (max + libm::log(s / n_inner as f64)))
    })?;
    let n = n_outer as f64;
    let value = samples.iter().sum::<f64>() / n;
    let var = if n_outer > 1 {
        samples.iter().map(|s| (s - value) * (s - value)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        value,
        std_err: libm::sqrt(var / n),
    })
}

fn standard_normal(d: usize, rng: &mut dyn RngCore) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)))
}

fn log_likelihood(y: &DVector<f64>, mu: &DVector<f64>, noise: &Covariance) -> f64 {
    let d = y.len() as f64;
    -0.5 * (d * LN_2PI + noise.log_det() + noise.quad_form(&(y - mu)))
}

/// Exact Bayes over a trapezoidal tensor grid on the prior support. The
/// measurement means at every grid node are computed once, so many trials
/// with the same `k` share the cost of simulation.
pub struct PosteriorGrid<'a> {
    model: &'a dyn MeasurementModel,
    rule: CubatureRule,
    log_prior: Vec<f64>,
    /// Log of the grid-normalized prior density.
    log_q: Vec<f64>,
    means: Vec<f64>,
    n_times: usize,
}

impl<'a> PosteriorGrid<'a> {
    pub fn new(
        model: &'a dyn MeasurementModel,
        prior: &dyn Prior,
        k: &[f64],
        schedule: &Schedule,
        grid_n: usize,
    ) -> Result<Self> {
        let dim = prior.support().dim();
        check_dim("grid prior dimension", model.param_box().dim(), dim)?;
        let rule = trapezoid_rule(prior.support(), &vec![grid_n; dim])?;
        let log_prior: Vec<f64> = rule
            .points()
            .iter()
            .map(|th| libm::log(prior.density(th)))
            .collect();
        let ln_w: Vec<f64> = rule.weights().iter().map(|w| libm::log(*w)).collect();
        let shifted: Vec<f64> = log_prior.iter().zip(&ln_w).map(|(a, b)| a + b).collect();
        let ln_z = log_sum_exp(&shifted);
        if !ln_z.is_finite() {
            return Err(invalid("prior has no mass on the evaluation grid"));
        }
        let log_q = log_prior.iter().map(|lp| lp - ln_z).collect();
        let points = rule.points();
        let d = model.measurement_dim();
        let rows = par::try_map_indexed(points.len(), |i| {
            let m = model.means(k, &points[i], schedule).map_err(|e| match e {
                Error::Divergence { time } => Error::CubatureDivergence { index: i, time },
                other => other,
            })?;
            check_dim("model means", d * schedule.len(), m.len())?;
            Ok::<_, Error>(m)
        })?;
        Ok(Self {
            model,
            rule,
            log_prior,
            log_q,
            means: rows.concat(),
            n_times: schedule.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    /// Posterior density at every grid node, normalized so that the grid
    /// weights integrate it to 1.
    pub fn log_posterior(&self, measurements: &[DVector<f64>]) -> Result<Vec<f64>> {
        check_dim("measurement count", self.n_times, measurements.len())?;
        let noise = self.model.noise();
        let d = noise.dim();
        for y in measurements {
            check_dim("measurement", d, y.len())?;
        }
        let stride = self.n_times * d;
        let mut lp: Vec<f64> = (0..self.rule.len())
            .map(|g| {
                let mut acc = self.log_prior[g];
                if acc == f64::NEG_INFINITY {
                    return acc;
                }
                for (j, y) in measurements.iter().enumerate() {
                    let o = g * stride + j * d;
                    let mu = DVector::from_row_slice(&self.means[o..o + d]);
                    acc += log_likelihood(y, &mu, noise);
                }
                acc
            })
            .collect();
        let shifted: Vec<f64> = lp
            .iter()
            .zip(self.rule.weights())
            .map(|(a, w)| a + libm::log(*w))
            .collect();
        let ln_z = log_sum_exp(&shifted);
        if !ln_z.is_finite() {
            return Err(Error::PosteriorUnderflow);
        }
        for v in &mut lp {
            *v -= ln_z;
        }
        Ok(lp)
    }

    /// `KL(posterior ‖ prior)` on the grid.
    pub fn realized_gain(&self, measurements: &[DVector<f64>]) -> Result<f64> {
        let lp = self.log_posterior(measurements)?;
        Ok(lp
            .iter()
            .zip(&self.log_q)
            .zip(self.rule.weights())
            .filter(|((p, _), _)| p.is_finite())
            .map(|((p, q), w)| w * libm::exp(*p) * (p - q))
            .sum())
    }
}

/// Realized information gain of one measurement record at `k`.
pub fn realized_info_gain(
    model: &dyn MeasurementModel,
    prior: &dyn Prior,
    k: &[f64],
    schedule: &Schedule,
    measurements: &[DVector<f64>],
    grid_n: usize,
) -> Result<f64> {
    PosteriorGrid::new(model, prior, k, schedule, grid_n)?.realized_gain(measurements)
}

/// Reference EIG at time `j` for a scalar parameter and scalar measurement:
/// `H[p(y)] − ½ ln(2πeσ²)`, with the evidence tabulated on a dense `y` grid.
pub fn dense_eig_1d(
    model: &dyn MeasurementModel,
    prior: &dyn Prior,
    k: &[f64],
    schedule: &Schedule,
    j: usize,
    n_theta: usize,
    n_y: usize,
) -> Result<f64> {
    check_dim("dense oracle parameter dimension", 1, prior.support().dim())?;
    check_dim("dense oracle measurement dimension", 1, model.measurement_dim())?;
    if j >= schedule.len() || n_theta < 2 || n_y < 2 {
        return Err(invalid("dense oracle needs a valid time and at least two nodes per grid"));
    }
    let var = model.noise().matrix()[(0, 0)];
    let sd = libm::sqrt(var);
    let rule = trapezoid_rule(prior.support(), &[n_theta])?;
    let mut mus = Vec::with_capacity(rule.len());
    let mut wts = Vec::with_capacity(rule.len());
    for (th, w) in rule.points().iter().zip(rule.weights()) {
        mus.push(model.means(k, th, schedule)?[j]);
        wts.push(w * prior.density(th));
    }
    let z: f64 = wts.iter().sum();
    let lo = mus.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * sd;
    let hi = mus.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd;
    let dy = (hi - lo) / (n_y - 1) as f64;
    let norm = 1.0 / (sd * libm::sqrt(2.0 * core::f64::consts::PI));
    let mut h = 0.0;
    for a in 0..n_y {
        let y = lo + a as f64 * dy;
        let p: f64 = mus
            .iter()
            .zip(&wts)
            .map(|(m, w)| w * norm * libm::exp(-0.5 * (y - m) * (y - m) / var))
            .sum::<f64>()
            / z;
        if p > 0.0 {
            let end = if a == 0 || a == n_y - 1 { 0.5 } else { 1.0 };
            h -= end * dy * p * libm::log(p);
        }
    }
    Ok(h - 0.5 * (LN_2PI + 1.0 + libm::log(var)))
}
