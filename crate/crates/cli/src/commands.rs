use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use infoplan_core::eig::{dense_eig_1d, mc_eig, EigContext, PosteriorGrid};
use infoplan_core::planner::{optimize, verify_plan, Action, Clock, PlanResult, PlanStatus, SafetyConstraints, VerifyReport};
use infoplan_core::probability::Prior;
use infoplan_core::rng::{substream, Stream};
use infoplan_core::safety::{box_grid, sample_reach_atlas, AtlasSampling, AtlasSource, ReachAtlas};
use infoplan_core::simulate::sample_measurements_with;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::atlas_io::load_atlas;
use crate::scenario::{AtlasSpec, Scenario};

fn context(sc: &Scenario) -> Result<EigContext<'_>> {
    Ok(EigContext::with_clenshaw_curtis(
        sc.system.measurement_model(),
        &sc.prior,
        &sc.cubature,
        sc.schedule,
    )?)
}

/// The reach atlas a scenario asks for, if any.
pub fn build_atlas(sc: &Scenario) -> Result<Option<ReachAtlas>> {
    let atlas = match &sc.atlas {
        None => return Ok(None),
        Some(AtlasSpec::File(path)) => load_atlas(path)?,
        Some(AtlasSpec::Sample(opts)) => sample_atlas(sc, opts)?,
    };
    let k_dim = sc.k_box().dim();
    if atlas.dim_k() != k_dim || atlas.n_world() != 2 {
        bail!(
            "atlas dimensions ({} world, {} parameter) do not match the scenario (2 world, {k_dim} parameter)",
            atlas.n_world(),
            atlas.dim_k()
        );
    }
    Ok(Some(atlas))
}

pub fn sample_atlas(sc: &Scenario, opts: &AtlasSampling) -> Result<ReachAtlas> {
    let (Some(v), Some(fp)) = (sc.system.vehicle(), &sc.footprint) else {
        bail!("reach atlases can only be sampled for vehicle scenarios");
    };
    Ok(sample_reach_atlas(&v.model, &sc.schedule, fp, opts)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub points: usize,
    pub mc: Option<(usize, usize)>,
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub k: Vec<f64>,
    pub eig: f64,
    pub mc: Option<(f64, f64)>,
    pub oracle: Option<f64>,
}

/// `J̃` over a uniform grid of K, optionally next to nested Monte Carlo and
/// dense-quadrature estimates of the same horizon sum.
pub fn eig_curve(sc: &Scenario, opts: &CurveOptions) -> Result<Vec<CurveRow>> {
    let k_box = sc.k_box();
    if k_box.dim() > 2 {
        bail!("eig-curve grids cover at most 2 parameter axes, the scenario has {}", k_box.dim());
    }
    if opts.points == 0 {
        bail!("the curve needs at least one grid point per axis");
    }
    let model = sc.system.measurement_model();
    if opts.oracle && (sc.prior.support().dim() != 1 || model.measurement_dim() != 1) {
        bail!("the dense oracle needs a scalar parameter and a scalar measurement");
    }
    let ctx = context(sc)?;
    let grid = box_grid(k_box, opts.points);
    let n_times = sc.schedule.len();
    grid.into_iter()
        .map(|k| {
            let eig = ctx.eig_total(&k)?;
            let mc = match opts.mc {
                Some((outer, inner)) => {
                    let mut value = 0.0;
                    let mut var = 0.0;
                    for j in 0..n_times {
                        let e = mc_eig(model, &sc.prior, &k, &sc.schedule, j, outer, inner, sc.seed)?;
                        value += e.value;
                        var += e.std_err * e.std_err;
                    }
                    Some((value, var.sqrt()))
                }
                None => None,
            };
            let oracle = if opts.oracle {
                let mut total = 0.0;
                for j in 0..n_times {
                    total += dense_eig_1d(model, &sc.prior, &k, &sc.schedule, j, 1001, 2001)?;
                }
                Some(total)
            } else {
                None
            };
            Ok(CurveRow { k, eig, mc, oracle })
        })
        .collect()
}

pub fn curve_csv(rows: &[CurveRow], opts: &CurveOptions) -> String {
    let dim = rows.first().map_or(1, |r| r.k.len());
    let mut s = String::new();
    let cols: Vec<String> = (1..=dim).map(|i| format!("k{i}")).collect();
    s.push_str(&cols.join(","));
    s.push_str(",eig");
    if opts.mc.is_some() {
        s.push_str(",mc,mc_std_err");
    }
    if opts.oracle {
        s.push_str(",oracle");
    }
    s.push('\n');
    for r in rows {
        for v in &r.k {
            write!(s, "{v},").unwrap();
        }
        write!(s, "{}", r.eig).unwrap();
        if let Some((m, e)) = r.mc {
            write!(s, ",{m},{e}").unwrap();
        }
        if let Some(o) = r.oracle {
            write!(s, ",{o}").unwrap();
        }
        s.push('\n');
    }
    s
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub result: PlanResult,
    pub verify: Option<VerifyReport>,
    /// Parameter the optimizer chose but the verifier rejected.
    pub rejected: Option<Vec<f64>>,
    pub atlas_source: Option<AtlasSource>,
}

impl PlanOutput {
    pub fn is_fallback(&self) -> bool {
        self.result.status.is_fallback()
    }
}

/// Optimizes, then replays the plan under sampled parameters. A plan the
/// replay rejects is replaced by the fallback action.
pub fn plan(sc: &Scenario, timing: bool) -> Result<PlanOutput> {
    let atlas = if sc.obstacles.is_empty() { None } else { build_atlas(sc)? };
    let ctx = context(sc)?;
    let constraints = atlas.as_ref().map(|a| SafetyConstraints {
        atlas: a,
        obstacles: &sc.obstacles,
    });
    let clock = WallClock(Instant::now());
    let clock_ref: Option<&dyn Clock> = if timing { Some(&clock) } else { None };
    let mut result = optimize(&ctx, constraints, &sc.k0, &sc.planner, clock_ref, None)?;
    let mut verify = None;
    let mut rejected = None;
    if let (Some(v), Some(fp), Some(k)) = (sc.system.vehicle(), &sc.footprint, result.k_star()) {
        let report = verify_plan(&v.model, k, &sc.schedule, &sc.obstacles, fp, v.step, sc.verify_trials, sc.seed)?;
        if !report.passed() {
            rejected = Some(k.to_vec());
            result.status = PlanStatus::FallbackStay;
            result.action = Action::Stay;
            result.eig = None;
        }
        verify = Some(report);
    }
    Ok(PlanOutput {
        result,
        verify,
        rejected,
        atlas_source: atlas.map(|a| a.source()),
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn plan_document(out: &PlanOutput, timing: bool) -> String {
    let r = &out.result;
    let action = match &r.action {
        Action::Execute(k) => json!({"kind": "execute", "k": k}),
        Action::Brake(k) => json!({"kind": "brake", "k": k}),
        Action::Stay => json!({"kind": "stay"}),
    };
    let margins: Vec<Value> = r
        .margins
        .iter()
        .map(|m| json!({"interval": m.j, "obstacle": m.obstacle, "scale": finite_or_null(m.scale)}))
        .collect();
    let min_margin = r.margins.iter().map(|m| m.scale).fold(f64::INFINITY, f64::min);
    let verification = out.verify.as_ref().map(|v| {
        json!({
            "trials": v.trials,
            "passed": v.passed(),
            "collisions": v.collisions.iter().map(|(trial, t, o)| json!({"trial": trial, "time": t, "obstacle": o})).collect::<Vec<_>>(),
            "not_stopped": v.not_stopped,
            "failed": v.failed,
            "max_terminal_speed": v.max_terminal_speed,
        })
    });
    let mut doc = json!({
        "status": r.status.as_str(),
        "action": action,
        "k_star": r.k_star(),
        "eig": r.eig,
        "margins": margins,
        "min_margin": if r.margins.is_empty() { Value::Null } else { finite_or_null(min_margin) },
        "iterations": r.iterations,
        "starts": r.starts,
        "verification": verification,
        "rejected_k": out.rejected,
        "atlas_source": out.atlas_source.map(|s| match s {
            AtlasSource::File => "file",
            AtlasSource::Empirical => "empirical",
        }),
    });
    if timing {
        doc["wall_time"] = json!(r.wall_time);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("plan document serializes");
    s.push('\n');
    s
}

pub fn trace_csv(r: &PlanResult) -> String {
    let mut s = String::from("start,iteration,eig,max_penalty,step,best_feasible\n");
    for t in &r.trace {
        let best = t.best_feasible.map_or(String::new(), |b| b.to_string());
        writeln!(s, "{},{},{},{},{},{}", t.start, t.iteration, t.eig, t.max_penalty, t.step, best).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub theta: Vec<f64>,
    pub gain: Option<f64>,
    pub error: Option<String>,
}

/// Realized information gain of `k` over seeded trials: each trial draws θ
/// from the prior, simulates, samples noisy measurements and runs grid Bayes.
pub fn evaluate(sc: &Scenario, k: &[f64], trials: usize, grid_n: usize) -> Result<Vec<TrialRow>> {
    if !sc.k_box().contains(k) {
        bail!("k = {k:?} lies outside the K box");
    }
    let model = sc.system.measurement_model();
    let grid = PosteriorGrid::new(model, &sc.prior, k, &sc.schedule, grid_n).context("building the posterior grid")?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(sc.seed, Stream::EvaluationTrials, t as u64);
            let theta = sc.prior.sample(&mut rng);
            let outcome = model
                .means(k, &theta, &sc.schedule)
                .and_then(|means| grid.realized_gain(&sample_measurements_with(&means, model.noise(), &mut rng)));
            match outcome {
                Ok(g) => TrialRow {
                    trial: t,
                    theta,
                    gain: Some(g),
                    error: None,
                },
                Err(e) => TrialRow {
                    trial: t,
                    theta,
                    gain: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Mean and sample standard deviation over the successful trials.
pub fn summarize(rows: &[TrialRow]) -> (usize, f64, f64) {
    let gains: Vec<f64> = rows.iter().filter_map(|r| r.gain).collect();
    let n = gains.len();
    if n == 0 {
        return (0, f64::NAN, f64::NAN);
    }
    let mean = gains.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (gains.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (n, mean, std)
}

pub fn evaluate_csv(rows: &[TrialRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.theta.len());
    let mut s = String::from("trial");
    for i in 1..=dim {
        write!(s, ",theta{i}").unwrap();
    }
    s.push_str(",gain,status\n");
    for r in rows {
        write!(s, "{}", r.trial).unwrap();
        for v in &r.theta {
            write!(s, ",{v}").unwrap();
        }
        match (r.gain, &r.error) {
            (Some(g), _) => writeln!(s, ",{g},ok").unwrap(),
            // error text may contain commas; the flag column keeps the file rectangular
            (None, _) => s.push_str(",,diverged\n"),
        }
    }
    s
}

pub fn summary_csv(rows: &[TrialRow]) -> String {
    let (n, mean, std) = summarize(rows);
    format!("n_ok,n_failed,mean,std\n{n},{},{mean},{std}\n", rows.len() - n)
}
