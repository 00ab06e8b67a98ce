//! Safe information-maximizing planning over the trajectory-parameter box.
//!
//! Maximizes `J̃(k) − ρ Σ max(0, 1 + m − s_{j,i}(k))²` by projected gradient
//! ascent with Armijo backtracking, from several starts. Iterates live in the
//! unit cube `z ∈ [0,1]^p` so step sizes and tolerances are relative to K.
//! When no start finds a feasible point the plan falls back to braking along
//! the previous plan, or to staying put.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::eig::{EigContext, Gradient};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{IntervalBox, Zonotope};
use crate::par;
use crate::rng::{self, Stream};
use crate::safety::{constraint_gradient, constraint_margins, Margin, Obstacle, ReachAtlas};
use crate::simulate::{simulate, Schedule};
use crate::systems::SystemModel;

/// Scalar objective to maximize over a box.
pub trait Objective: Sync {
    fn bounds(&self) -> &IntervalBox;
    fn value(&self, k: &[f64]) -> Result<f64>;
    fn gradient(&self, k: &[f64]) -> Result<Gradient>;
}

impl Objective for EigContext<'_> {
    fn bounds(&self) -> &IntervalBox {
        self.model().k_box()
    }

    fn value(&self, k: &[f64]) -> Result<f64> {
        self.eig_total(k)
    }

    fn gradient(&self, k: &[f64]) -> Result<Gradient> {
        self.eig_gradient(k)
    }
}

/// Collision constraints `s_{j,i}(k) > 1`.
#[derive(Debug, Clone, Copy)]
pub struct SafetyConstraints<'a> {
    pub atlas: &'a ReachAtlas,
    pub obstacles: &'a [Obstacle],
}

/// Monotone time source, in seconds.
pub trait Clock: Sync {
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerOptions {
    pub n_starts: usize,
    pub max_iterations: usize,
    /// Penalty buffer `m`: the penalty is active while `s < 1 + m`.
    pub margin_buffer: f64,
    pub rho: f64,
    pub rho_growth: f64,
    pub max_escalations: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Convergence threshold on the step ∞-norm, relative to the width of K.
    pub tolerance: f64,
    /// First step, as a fraction of K along the largest gradient component.
    pub initial_step: f64,
    pub max_step: f64,
    pub active_threshold: f64,
    pub seed: u64,
    /// Wall-clock budget in seconds, enforced only when a clock is supplied.
    pub budget: Option<f64>,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iterations: 200,
            margin_buffer: 0.05,
            rho: 10.0,
            rho_growth: 10.0,
            max_escalations: 3,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 20,
            tolerance: 1e-6,
            initial_step: 0.1,
            max_step: 0.5,
            active_threshold: 2.0,
            seed: 0,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Optimal,
    FeasibleSuboptimal,
    FallbackBrake,
    FallbackStay,
}

impl PlanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanStatus::Optimal => "optimal",
            PlanStatus::FeasibleSuboptimal => "feasible-suboptimal",
            PlanStatus::FallbackBrake => "fallback-brake",
            PlanStatus::FallbackStay => "fallback-stay",
        }
    }

    pub fn is_fallback(self) -> bool {
        matches!(self, PlanStatus::FallbackBrake | PlanStatus::FallbackStay)
    }
}

/// What the agent does next.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Execute(Vec<f64>),
    /// Continue the braking phase of the previous plan's parameter.
    Brake(Vec<f64>),
    Stay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub start: usize,
    pub iteration: usize,
    pub eig: f64,
    pub max_penalty: f64,
    pub step: f64,
    pub best_feasible: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub action: Action,
    /// `J̃(k*)`; `None` on fallback.
    pub eig: Option<f64>,
    pub margins: Vec<Margin>,
    pub iterations: usize,
    pub starts: usize,
    pub wall_time: Option<f64>,
    pub trace: Vec<TraceRow>,
}

impl PlanResult {
    pub fn k_star(&self) -> Option<&[f64]> {
        match &self.action {
            Action::Execute(k) => Some(k),
            _ => None,
        }
    }
}

/// Algorithm fallback: brake along the previous plan if there is one.
pub fn fallback(previous: Option<&[f64]>) -> Action {
    match previous {
        Some(k) => Action::Brake(k.to_vec()),
        None => Action::Stay,
    }
}

struct Eval {
    eig: f64,
    penalty: f64,
    phi: f64,
    feasible: bool,
}

struct Problem<'a> {
    objective: &'a dyn Objective,
    constraints: Option<SafetyConstraints<'a>>,
    opts: &'a PlannerOptions,
    bounds: &'a IntervalBox,
}

impl Problem<'_> {
    fn to_k(&self, z: &[f64]) -> Vec<f64> {
        self.bounds.from_unit(z)
    }

    fn margins(&self, k: &[f64]) -> Result<Vec<Margin>> {
        match self.constraints {
            Some(c) => constraint_margins(c.atlas, c.obstacles, k),
            None => Ok(Vec::new()),
        }
    }

    fn evaluate(&self, z: &[f64], rho: f64) -> Result<Eval> {
        let k = self.to_k(z);
        let eig = self.objective.value(&k)?;
        let margins = self.margins(&k)?;
        let limit = 1.0 + self.opts.margin_buffer;
        let penalty: f64 = margins
            .iter()
            .map(|m| {
                let v = (limit - m.scale).max(0.0);
                v * v
            })
            .sum();
        let feasible = margins.iter().all(Margin::is_safe);
        Ok(Eval {
            eig,
            penalty,
            phi: eig - rho * penalty,
            feasible,
        })
    }

    /// Gradient of the penalized objective in unit coordinates.
    fn gradient(&self, z: &[f64], rho: f64) -> Result<Vec<f64>> {
        let k = self.to_k(z);
        let mut g = self.objective.gradient(&k)?.value;
        if let Some(c) = self.constraints {
            let limit = 1.0 + self.opts.margin_buffer;
            let threshold = self.opts.active_threshold.max(limit);
            for mg in constraint_gradient(c.atlas, c.obstacles, &k, self.bounds, threshold)? {
                let viol = (limit - mg.scale).max(0.0);
                for (gi, si) in g.iter_mut().zip(&mg.gradient) {
                    *gi += 2.0 * rho * viol * si;
                }
            }
        }
        for (i, gi) in g.iter_mut().enumerate() {
            *gi *= self.bounds.width(i);
        }
        Ok(g)
    }
}

struct StartOutcome {
    best: Option<(f64, Vec<f64>)>,
    converged: bool,
    iterations: usize,
    trace: Vec<TraceRow>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn run_start(
    p: &Problem<'_>,
    start: usize,
    z0: Vec<f64>,
    clock: Option<&dyn Clock>,
    t0: f64,
) -> StartOutcome {
    let opts = p.opts;
    let mut out = StartOutcome {
        best: None,
        converged: false,
        iterations: 0,
        trace: Vec::new(),
    };
    let over_budget = || match (clock, opts.budget) {
        (Some(c), Some(b)) => c.now() - t0 > b,
        _ => false,
    };
    let mut z = z0;
    let mut rho = opts.rho;
    let mut escalations = 0;
    let Ok(mut cur) = p.evaluate(&z, rho) else {
        return out;
    };
    let record = |out: &mut StartOutcome, z: &[f64], e: &Eval| {
        if e.feasible && out.best.as_ref().is_none_or(|(b, _)| e.eig > *b) {
            out.best = Some((e.eig, p.to_k(z)));
        }
    };
    record(&mut out, &z, &cur);
    out.trace.push(TraceRow {
        start,
        iteration: 0,
        eig: cur.eig,
        max_penalty: cur.penalty,
        step: 0.0,
        best_feasible: out.best.as_ref().map(|b| b.0),
    });
    let mut alpha: Option<f64> = None;

    while out.iterations < opts.max_iterations {
        if over_budget() {
            return out;
        }
        let Ok(g) = p.gradient(&z, rho) else {
            return out;
        };
        let gnorm = inf_norm(&g);
        let mut accepted = None;
        if gnorm > 0.0 {
            let cap = opts.max_step / gnorm;
            let mut a = alpha.unwrap_or(opts.initial_step / gnorm).min(cap);
            for _ in 0..=opts.max_backtracks {
                let zn: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| (zi + a * gi).clamp(0.0, 1.0)).collect();
                let step: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
                if inf_norm(&step) < opts.tolerance {
                    break;
                }
                let decrease: f64 = g.iter().zip(&step).map(|(gi, si)| gi * si).sum();
                match p.evaluate(&zn, rho) {
                    Ok(e) if e.phi >= cur.phi + opts.armijo * decrease => {
                        accepted = Some((zn, e, inf_norm(&step), a));
                        break;
                    }
                    _ => a *= opts.shrink,
                }
            }
        }
        out.iterations += 1;
        match accepted {
            Some((zn, e, step, a)) => {
                z = zn;
                cur = e;
                alpha = Some((2.0 * a).min(opts.max_step / gnorm.max(f64::MIN_POSITIVE)));
                record(&mut out, &z, &cur);
                out.trace.push(TraceRow {
                    start,
                    iteration: out.iterations,
                    eig: cur.eig,
                    max_penalty: cur.penalty,
                    step,
                    best_feasible: out.best.as_ref().map(|b| b.0),
                });
                if step < opts.tolerance {
                    out.converged = true;
                }
            }
            None => out.converged = true,
        }
        if out.converged {
            if cur.feasible || escalations >= opts.max_escalations {
                return out;
            }
            escalations += 1;
            rho *= opts.rho_growth;
            out.converged = false;
            alpha = None;
            match p.evaluate(&z, rho) {
                Ok(e) => cur = e,
                Err(_) => return out,
            }
        }
    }
    out
}

/// Starting points in unit coordinates: `k₀` followed by a Latin hypercube.
pub fn start_points(bounds: &IntervalBox, k0: &[f64], n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let p = bounds.dim();
    let unit = |k: &[f64]| -> Vec<f64> {
        (0..p)
            .map(|i| {
                let w = bounds.width(i);
                if w == 0.0 {
                    0.5
                } else {
                    ((k[i] - bounds.lower()[i]) / w).clamp(0.0, 1.0)
                }
            })
            .collect()
    };
    let mut starts = vec![unit(k0)];
    let n = n_starts.saturating_sub(1);
    if n == 0 {
        return starts;
    }
    let mut rng = rng::stream(seed, Stream::PlannerStarts);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        cols.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.random::<f64>()) / n as f64)
                .collect(),
        );
    }
    for r in 0..n {
        starts.push((0..p).map(|i| cols[i][r]).collect());
    }
    starts
}

/// Multi-start penalized projected gradient ascent. The best feasible
/// iterate over all starts wins; ties within `1e-12` go to the lower start.
pub fn optimize(
    objective: &dyn Objective,
    constraints: Option<SafetyConstraints<'_>>,
    k0: &[f64],
    opts: &PlannerOptions,
    clock: Option<&dyn Clock>,
    previous: Option<&[f64]>,
) -> Result<PlanResult> {
    let bounds = objective.bounds();
    check_dim("initial parameter", bounds.dim(), k0.len())?;
    if !bounds.contains(k0) {
        return Err(invalid("initial parameter lies outside K"));
    }
    if opts.n_starts == 0 {
        return Err(invalid("at least one start is required"));
    }
    if let Some(c) = constraints {
        check_dim("atlas parameter dimension", bounds.dim(), c.atlas.dim_k())?;
    }
    let t0 = clock.map_or(0.0, |c| c.now());
    let problem = Problem {
        objective,
        constraints,
        opts,
        bounds,
    };
    let starts = start_points(bounds, k0, opts.n_starts, opts.seed);
    let outcomes = par::map_indexed(starts.len(), |s| run_start(&problem, s, starts[s].clone(), clock, t0));

    let mut winner: Option<(usize, f64, Vec<f64>)> = None;
    for (s, o) in outcomes.iter().enumerate() {
        if let Some((v, k)) = &o.best {
            if winner.as_ref().is_none_or(|w| *v > w.1 + 1e-12) {
                winner = Some((s, *v, k.clone()));
            }
        }
    }
    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    let converged: Vec<bool> = outcomes.iter().map(|o| o.converged).collect();
    let trace = outcomes.into_iter().flat_map(|o| o.trace).collect();
    let wall_time = clock.map(|c| c.now() - t0);

    Ok(match winner {
        Some((s, eig, k)) => PlanResult {
            status: if converged[s] {
                PlanStatus::Optimal
            } else {
                PlanStatus::FeasibleSuboptimal
            },
            margins: problem.margins(&k)?,
            action: Action::Execute(k),
            eig: Some(eig),
            iterations,
            starts: starts.len(),
            wall_time,
            trace,
        },
        None => {
            let action = fallback(previous);
            PlanResult {
                status: match action {
                    Action::Brake(_) => PlanStatus::FallbackBrake,
                    _ => PlanStatus::FallbackStay,
                },
                action,
                eig: None,
                margins: Vec::new(),
                iterations,
                starts: starts.len(),
                wall_time,
                trace,
            }
        }
    })
}

/// Outcome of replaying a plan under random parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub trials: usize,
    /// `(trial, time, obstacle)` for each footprint that met an obstacle while moving.
    pub collisions: Vec<(usize, f64, usize)>,
    /// Trials whose speed at the stop time was not below `0.05`.
    pub not_stopped: Vec<usize>,
    pub max_terminal_speed: f64,
    /// Trials whose simulation failed.
    pub failed: Vec<usize>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.collisions.is_empty() && self.not_stopped.is_empty() && self.failed.is_empty()
    }
}

/// Threshold below which the agent counts as stopped.
pub const STOP_SPEED: f64 = 0.05;

/// Simulates `n_check` parameters drawn uniformly from Θ at `k` and checks
/// every recorded footprint against the obstacles active at that time, and
/// the speed at the stop time.
#[allow(clippy::too_many_arguments)]
pub fn verify_plan<M: SystemModel + ?Sized>(
    model: &M,
    k: &[f64],
    schedule: &Schedule,
    obstacles: &[Obstacle],
    footprint: &Zonotope,
    step: f64,
    n_check: usize,
    seed: u64,
) -> Result<VerifyReport> {
    let t_stop = model.stop_time(k);
    let t_end = t_stop.unwrap_or(0.0).max(schedule.t_f());
    let sched = schedule.extended_to(t_end);
    let dt = sched.dt();
    let pbox = model.param_box();
    let trials = par::map_indexed(n_check, |trial| {
        let mut rng = rng::substream(seed, Stream::Verification, trial as u64);
        let theta: Vec<f64> = (0..pbox.dim())
            .map(|i| pbox.lower()[i] + rng.random::<f64>() * pbox.width(i))
            .collect();
        let traj = simulate(model, k, &theta, &sched, step, sched.t_f(), true)?;
        let mut hits = Vec::new();
        let mut terminal: Option<f64> = None;
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let speed = model.speed(x);
            if let (Some(ts), Some(v), None) = (t_stop, speed, terminal) {
                if *t >= ts - 1e-9 {
                    terminal = Some(v.abs());
                }
            }
            if speed.is_some_and(|v| v.abs() <= 1e-9) {
                continue;
            }
            let pos = *t / dt;
            let lo_j = (libm::ceil(pos - 1e-9) as usize).saturating_sub(1);
            let hi_j = libm::floor(pos + 1e-9) as usize;
            let occ = model.occupancy(x, footprint)?;
            for (i, o) in obstacles.iter().enumerate() {
                if (lo_j..=hi_j).any(|j| o.active(j)) && !occ.intersection_empty(&o.shape)?.0 {
                    hits.push((trial, *t, i));
                    break;
                }
            }
        }
        Ok::<_, Error>((hits, terminal.unwrap_or(0.0)))
    });
    let mut report = VerifyReport {
        trials: n_check,
        collisions: Vec::new(),
        not_stopped: Vec::new(),
        max_terminal_speed: 0.0,
        failed: Vec::new(),
    };
    for (trial, r) in trials.into_iter().enumerate() {
        match r {
            Ok((hits, terminal)) => {
                report.collisions.extend(hits);
                report.max_terminal_speed = report.max_terminal_speed.max(terminal);
                if terminal >= STOP_SPEED {
                    report.not_stopped.push(trial);
                }
            }
            Err(_) => report.failed.push(trial),
        }
    }
    Ok(report)
}
