//! Reach sets affine in the trajectory parameter and collision margins.
//!
//! Interval `j` of an atlas holds `ξ_j(k) = ⟨c_j + A_j k, G_j⟩`, a zonotope
//! that must contain the agent's footprint throughout `T_j` for every
//! admissible `k` and θ. The margin against an obstacle is the gauge scale
//! from [`Zonotope::intersection_gauge`]: the pair is separated iff it
//! exceeds 1. Because the center is affine in `k`, its gradient is
//! `A_jᵀ ∂s/∂c`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::eig::{finite_difference, Gradient};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{IntervalBox, Zonotope, SCALE_TOLERANCE};
use crate::par;
use crate::simulate::{simulate, Schedule};
use crate::systems::SystemModel;

/// Where an atlas came from. Empirical atlases are fitted to samples and
/// carry no formal containment guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtlasSource {
    File,
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachInterval {
    pub j: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub c: DVector<f64>,
    /// `n_world × dim_k`.
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachAtlas {
    n_world: usize,
    dim_k: usize,
    intervals: Vec<ReachInterval>,
    source: AtlasSource,
    bloat: f64,
}

impl ReachAtlas {
    pub fn new(
        n_world: usize,
        dim_k: usize,
        intervals: Vec<ReachInterval>,
        source: AtlasSource,
        bloat: f64,
    ) -> Result<Self> {
        if !(bloat.is_finite() && bloat >= 0.0) {
            return Err(invalid("atlas bloat must be finite and nonnegative"));
        }
        for (pos, iv) in intervals.iter().enumerate() {
            check_dim("atlas center", n_world, iv.c.len())?;
            check_dim("atlas sensitivity rows", n_world, iv.a.nrows())?;
            check_dim("atlas sensitivity columns", dim_k, iv.a.ncols())?;
            check_dim("atlas generator rows", n_world, iv.g.nrows())?;
            let finite = iv.t_start.is_finite()
                && iv.t_end.is_finite()
                && iv.c.iter().chain(iv.a.iter()).chain(iv.g.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite("reach atlas"));
            }
            if iv.t_end < iv.t_start {
                return Err(invalid(alloc::format!("atlas interval {} ends before it starts", iv.j)));
            }
            if pos > 0 && iv.j <= intervals[pos - 1].j {
                return Err(invalid("atlas interval indices must be strictly increasing"));
            }
        }
        Ok(Self {
            n_world,
            dim_k,
            intervals,
            source,
            bloat,
        })
    }

    pub fn n_world(&self) -> usize {
        self.n_world
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn intervals(&self) -> &[ReachInterval] {
        &self.intervals
    }

    pub fn source(&self) -> AtlasSource {
        self.source
    }

    pub fn bloat(&self) -> f64 {
        self.bloat
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// `ξ(k)` for the interval at position `pos`.
    pub fn reach_set(&self, pos: usize, k: &[f64]) -> Result<Zonotope> {
        check_dim("reach set parameter", self.dim_k, k.len())?;
        let iv = &self.intervals[pos];
        Zonotope::new(&iv.c + &iv.a * DVector::from_row_slice(k), iv.g.clone())
    }
}

/// An obstacle active on the inclusive interval index range `first..=last`.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub shape: Zonotope,
    pub first: usize,
    pub last: usize,
}

impl Obstacle {
    /// Present over every interval.
    pub fn stationary(shape: Zonotope) -> Self {
        Self {
            shape,
            first: 0,
            last: usize::MAX,
        }
    }

    pub fn active(&self, j: usize) -> bool {
        (self.first..=self.last).contains(&j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    /// Interval index `j`.
    pub j: usize,
    pub obstacle: usize,
    pub scale: f64,
}

impl Margin {
    pub fn is_safe(&self) -> bool {
        self.scale > 1.0 + SCALE_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginGradient {
    pub j: usize,
    pub obstacle: usize,
    pub scale: f64,
    pub gradient: Vec<f64>,
    /// The LP dual was not unique and finite differences were used instead.
    pub finite_difference: bool,
}

fn active_pairs(atlas: &ReachAtlas, obstacles: &[Obstacle]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (pos, iv) in atlas.intervals.iter().enumerate() {
        for (i, o) in obstacles.iter().enumerate() {
            if o.active(iv.j) {
                pairs.push((pos, i));
            }
        }
    }
    pairs
}

fn check_obstacles(atlas: &ReachAtlas, obstacles: &[Obstacle]) -> Result<()> {
    for o in obstacles {
        check_dim("obstacle dimension", atlas.n_world, o.shape.dim())?;
    }
    Ok(())
}

/// Margins `s_{j,i}` for every interval and every obstacle active on it,
/// ordered by interval then obstacle.
pub fn constraint_margins(atlas: &ReachAtlas, obstacles: &[Obstacle], k: &[f64]) -> Result<Vec<Margin>> {
    check_obstacles(atlas, obstacles)?;
    let pairs = active_pairs(atlas, obstacles);
    par::try_map_indexed(pairs.len(), |p| {
        let (pos, i) = pairs[p];
        let (_, scale) = atlas.reach_set(pos, k)?.intersection_empty(&obstacles[i].shape)?;
        Ok(Margin {
            j: atlas.intervals[pos].j,
            obstacle: i,
            scale,
        })
    })
}

/// Gradients of the margins below `threshold` with respect to `k`.
pub fn constraint_gradient(
    atlas: &ReachAtlas,
    obstacles: &[Obstacle],
    k: &[f64],
    k_box: &IntervalBox,
    threshold: f64,
) -> Result<Vec<MarginGradient>> {
    check_obstacles(atlas, obstacles)?;
    check_dim("constraint gradient box", atlas.dim_k, k_box.dim())?;
    let pairs = active_pairs(atlas, obstacles);
    let all = par::try_map_indexed(pairs.len(), |p| {
        let (pos, i) = pairs[p];
        let reach = atlas.reach_set(pos, k)?;
        let sol = reach.intersection_gauge(&obstacles[i].shape)?;
        if !(sol.scale < threshold) {
            return Ok(None);
        }
        let j = atlas.intervals[pos].j;
        let (gradient, fd) = match sol.gradient {
            Some(dual) if !sol.degenerate => {
                (atlas.intervals[pos].a.tr_mul(&dual).iter().copied().collect(), false)
            }
            _ => {
                let Gradient { value, .. } = finite_difference(k_box, k, 1e-6, |kk| {
                    let z = atlas.reach_set(pos, kk)?;
                    Ok(z.intersection_gauge(&obstacles[i].shape)?.scale)
                })?;
                (value, true)
            }
        };
        Ok::<_, Error>(Some(MarginGradient {
            j,
            obstacle: i,
            scale: sol.scale,
            gradient,
            finite_difference: fd,
        }))
    })?;
    Ok(all.into_iter().flatten().collect())
}

/// Settings for fitting an atlas to simulated occupancies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtlasSampling {
    /// Grid nodes per axis of K.
    pub n_k: usize,
    /// Grid nodes per axis of Θ.
    pub n_theta: usize,
    pub bloat: f64,
    /// Integration step.
    pub step: f64,
}

impl Default for AtlasSampling {
    fn default() -> Self {
        Self {
            n_k: 5,
            n_theta: 3,
            bloat: 0.05,
            step: 1e-3,
        }
    }
}

/// Uniform tensor grid with `n` nodes per axis; zero-width axes get one node.
pub fn box_grid(bx: &IntervalBox, n: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..bx.dim())
        .map(|i| {
            let (lo, w) = (bx.lower()[i], bx.width(i));
            if w == 0.0 || n < 2 {
                vec![lo + 0.5 * w]
            } else {
                (0..n).map(|a| lo + w * a as f64 / (n - 1) as f64).collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Interval index horizon an atlas must cover: through the schedule and the
/// latest stop over the grid.
fn atlas_schedule<M: SystemModel + ?Sized>(model: &M, schedule: &Schedule, ks: &[Vec<f64>]) -> Schedule {
    let stop = ks
        .iter()
        .filter_map(|k| model.stop_time(k))
        .fold(schedule.t_f(), f64::max);
    schedule.extended_to(stop)
}

/// Interval hull of the footprint over every recorded state in each interval.
fn interval_hulls<M: SystemModel + ?Sized>(
    model: &M,
    k: &[f64],
    theta: &[f64],
    sched: &Schedule,
    footprint: &Zonotope,
    step: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let w = footprint.dim();
    let traj = simulate(model, k, theta, sched, step, sched.t_f(), true).map_err(|e| match e {
        Error::Divergence { time } => Error::SampleDivergence {
            k: k.to_vec(),
            theta: theta.to_vec(),
            interval: (time / sched.dt()) as usize,
        },
        other => other,
    })?;
    let mut hulls = vec![(vec![f64::INFINITY; w], vec![f64::NEG_INFINITY; w]); sched.len()];
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let hb = model.occupancy(x, footprint)?.interval_hull();
        // A state on an interval boundary belongs to both neighbours.
        let pos = *t / sched.dt();
        let lo_j = (libm::ceil(pos - 1e-9) as usize).saturating_sub(1);
        let hi_j = (libm::floor(pos + 1e-9) as usize).min(sched.len() - 1);
        for (lo, hi) in &mut hulls[lo_j..=hi_j] {
            for a in 0..w {
                lo[a] = lo[a].min(hb.lower()[a]);
                hi[a] = hi[a].max(hb.upper()[a]);
            }
        }
    }
    Ok(hulls)
}

/// Fits an empirical atlas: for every `k` on a grid over K, the interval hull
/// of the footprint over all θ grid nodes and all steps in `T_j`; then a least
/// squares fit of the hull centers as `c_j + A_j k`, and box generators large
/// enough to cover every hull plus `bloat`.
pub fn sample_reach_atlas<M: SystemModel + ?Sized>(
    model: &M,
    schedule: &Schedule,
    footprint: &Zonotope,
    opts: &AtlasSampling,
) -> Result<ReachAtlas> {
    if opts.n_k < 2 || opts.n_theta < 2 {
        return Err(invalid("atlas sampling needs at least two grid nodes per axis"));
    }
    if !(opts.bloat.is_finite() && opts.bloat >= 0.0) {
        return Err(invalid("atlas bloat must be finite and nonnegative"));
    }
    let w = footprint.dim();
    let k_box = model.k_box();
    let ks = box_grid(k_box, opts.n_k);
    let thetas = box_grid(model.param_box(), opts.n_theta);
    let sched = atlas_schedule(model, schedule, &ks);
    if sched.is_empty() {
        return Err(invalid("atlas horizon is empty"));
    }

    // hulls[m][j] for grid point k_m, merged over θ
    let hulls = par::try_map_indexed(ks.len(), |m| {
        let mut acc: Option<Vec<(Vec<f64>, Vec<f64>)>> = None;
        for th in &thetas {
            let h = interval_hulls(model, &ks[m], th, &sched, footprint, opts.step)?;
            acc = Some(match acc {
                None => h,
                Some(mut a) => {
                    for ((alo, ahi), (lo, hi)) in a.iter_mut().zip(h) {
                        for i in 0..w {
                            alo[i] = alo[i].min(lo[i]);
                            ahi[i] = ahi[i].max(hi[i]);
                        }
                    }
                    a
                }
            });
        }
        Ok::<_, Error>(acc.expect("θ grid is never empty"))
    })?;

    let p = k_box.dim();
    let mid = k_box.midpoint();
    let mut design = DMatrix::zeros(ks.len(), p + 1);
    for (m, k) in ks.iter().enumerate() {
        design[(m, 0)] = 1.0;
        for a in 0..p {
            design[(m, a + 1)] = k[a] - mid[a];
        }
    }
    let svd = design.clone().svd(true, true);

    let mut intervals = Vec::with_capacity(sched.len());
    for j in 0..sched.len() {
        let centers = DMatrix::from_fn(ks.len(), w, |m, a| 0.5 * (hulls[m][j].0[a] + hulls[m][j].1[a]));
        let coef = svd
            .solve(&centers, 1e-12)
            .map_err(|_| invalid("least-squares fit of the atlas failed"))?;
        let fitted = &design * &coef;
        let a_j = DMatrix::from_fn(w, p, |r, col| coef[(col + 1, r)]);
        let offset = DVector::from_fn(w, |r, _| coef[(0, r)]);
        let c = &offset - &a_j * DVector::from_row_slice(&mid);
        let radius = DVector::from_fn(w, |r, _| {
            (0..ks.len())
                .map(|m| {
                    let half = 0.5 * (hulls[m][j].1[r] - hulls[m][j].0[r]);
                    half + (centers[(m, r)] - fitted[(m, r)]).abs()
                })
                .fold(0.0, f64::max)
                + opts.bloat
        });
        let (t_start, t_end) = sched.interval(j);
        intervals.push(ReachInterval {
            j,
            t_start,
            t_end,
            c,
            a: a_j,
            g: DMatrix::from_diagonal(&radius),
        });
    }
    ReachAtlas::new(w, p, intervals, AtlasSource::Empirical, opts.bloat)
}

/// Number of recorded footprints at `(k, θ)` that escape the matching reach
/// set. Containment is checked on the footprint's vertex candidates.
pub fn containment_violations<M: SystemModel + ?Sized>(
    model: &M,
    atlas: &ReachAtlas,
    footprint: &Zonotope,
    k: &[f64],
    theta: &[f64],
    dt: f64,
    step: f64,
) -> Result<usize> {
    let Some(last) = atlas.intervals.last() else {
        return Ok(0);
    };
    let sched = Schedule::from_count(dt, last.j + 1)?;
    let traj = simulate(model, k, theta, &sched, step, sched.t_f(), true)?;
    let reach: Vec<(usize, Zonotope)> = atlas
        .intervals
        .iter()
        .enumerate()
        .map(|(pos, iv)| Ok((iv.j, atlas.reach_set(pos, k)?)))
        .collect::<Result<_>>()?;
    let mut bad = 0;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let pos = *t / dt;
        let lo_j = (libm::ceil(pos - 1e-9) as usize).saturating_sub(1);
        let hi_j = libm::floor(pos + 1e-9) as usize;
        let occ = model.occupancy(x, footprint)?;
        let verts = occ.vertex_candidates()?;
        // Inside if any interval covering this instant contains it.
        let mut covered = false;
        for (_, z) in reach.iter().filter(|(j, _)| (lo_j..=hi_j).contains(j)) {
            let mut all = true;
            for v in &verts {
                if !z.contains_point(v)?.contains {
                    all = false;
                    break;
                }
            }
            if all {
                covered = true;
                break;
            }
        }
        if !covered {
            bad += 1;
        }
    }
    Ok(bad)
}
