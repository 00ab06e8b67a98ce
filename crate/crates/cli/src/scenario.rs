//! Scenario files: versioned TOML, unknown keys rejected, every field checked
//! before any computation starts.

use std::fmt;
use std::path::{Path, PathBuf};

use infoplan_core::geometry::{IntervalBox, Zonotope};
use infoplan_core::planner::PlannerOptions;
use infoplan_core::probability::{Covariance, UniformBoxPrior};
use infoplan_core::safety::{AtlasSampling, Obstacle};
use infoplan_core::simulate::{Schedule, Simulated};
use infoplan_core::systems::{Benchmark, Maneuver, MeasurementModel, SystemModel, Vehicle, VehicleParams};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

pub const SCENARIO_VERSION: u32 = 1;

/// A rejected scenario, with the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ScenarioError {}

fn fail<T>(field: impl Into<String>, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError {
        field: field.into(),
        message: message.into(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: Option<u32>,
    seed: Option<u64>,
    model: RawModel,
    prior: Option<RawBox>,
    k_box: Option<RawBox>,
    cubature: Option<RawCubature>,
    schedule: Option<RawSchedule>,
    #[serde(default)]
    obstacles: Vec<RawObstacle>,
    atlas: Option<RawAtlas>,
    planner: Option<RawPlanner>,
    evaluate: Option<RawEvaluate>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
enum RawModel {
    StaticBenchmark {
        noise_variance: Option<f64>,
        #[serde(default)]
        theta_scales_exp: bool,
    },
    Vehicle {
        maneuver: RawManeuver,
        x0: Option<Vec<f64>>,
        noise_variance: Option<f64>,
        step: Option<f64>,
        heading_window: Option<f64>,
        turn_launch_guard: Option<bool>,
        /// Half length and half width of the body.
        footprint: Option<[f64; 2]>,
        params: Option<RawVehicleParams>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RawManeuver {
    LaneChange,
    LeftTurn,
}

macro_rules! vehicle_params {
    ($($name:ident),* $(,)?) => {
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawVehicleParams {
            $($name: Option<f64>,)*
        }

        impl RawVehicleParams {
            fn apply(&self, p: &mut VehicleParams) {
                $(if let Some(v) = self.$name { p.$name = v; })*
            }
        }
    };
}

vehicle_params!(
    izz, c_alpha_f, c_alpha_r, k_u, k_h, k_r, kappa_1u, kappa_2u, phi_1u, phi_2u, kappa_1r, kappa_2r, phi_1r,
    phi_2r, m_u, m_r, a_decel, x4_crit, h1, h2, t_m, t_plan,
);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCubature {
    n: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    dt: f64,
    t_f: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    center: Vec<f64>,
    /// Generator columns.
    generators: Vec<Vec<f64>>,
    first: Option<usize>,
    last: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
enum RawAtlas {
    File {
        path: PathBuf,
    },
    Sample {
        n_k: Option<usize>,
        n_theta: Option<usize>,
        bloat: Option<f64>,
        step: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    k0: Option<Vec<f64>>,
    n_starts: Option<usize>,
    max_iterations: Option<usize>,
    margin_buffer: Option<f64>,
    rho: Option<f64>,
    budget: Option<f64>,
    verify_trials: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluate {
    k: Option<Vec<f64>>,
    trials: Option<usize>,
    grid_n: Option<usize>,
}

/// The measurement model a scenario describes.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum System {
    Benchmark(Benchmark),
    Vehicle(Simulated<Vehicle>),
}

impl System {
    pub fn measurement_model(&self) -> &dyn MeasurementModel {
        match self {
            System::Benchmark(b) => b,
            System::Vehicle(v) => v,
        }
    }

    pub fn vehicle(&self) -> Option<&Simulated<Vehicle>> {
        match self {
            System::Vehicle(v) => Some(v),
            System::Benchmark(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtlasSpec {
    File(PathBuf),
    Sample(AtlasSampling),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSpec {
    pub k: Option<Vec<f64>>,
    pub trials: usize,
    pub grid_n: usize,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub system: System,
    pub prior: UniformBoxPrior,
    pub cubature: Vec<usize>,
    pub schedule: Schedule,
    pub obstacles: Vec<Obstacle>,
    pub footprint: Option<Zonotope>,
    pub atlas: Option<AtlasSpec>,
    pub planner: PlannerOptions,
    pub k0: Vec<f64>,
    pub verify_trials: usize,
    pub evaluate: EvaluateSpec,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).or_else(|e| fail("file", format!("{}: {e}", path.display())))?;
        let mut s = Self::from_toml(&text)?;
        // relative atlas paths are resolved against the scenario's directory
        if let Some(AtlasSpec::File(p)) = &mut s.atlas {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).or_else(|e| fail("toml", e.message().trim().to_string()))?;
        build(raw)
    }

    pub fn k_box(&self) -> &IntervalBox {
        self.system.measurement_model().k_box()
    }

    pub fn prior_dim(&self) -> usize {
        use infoplan_core::probability::Prior;
        self.prior.support().dim()
    }
}

fn finite(field: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() {
        Ok(v)
    } else {
        fail(field, format!("must be finite, got {v}"))
    }
}

fn positive(field: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        fail(field, format!("must be positive, got {v}"))
    }
}

fn interval_box(field: &str, raw: &RawBox, dim: usize) -> Result<IntervalBox, ScenarioError> {
    if raw.lower.len() != dim || raw.upper.len() != dim {
        return fail(
            field,
            format!(
                "expected {dim} bounds per side, got {} lower and {} upper",
                raw.lower.len(),
                raw.upper.len()
            ),
        );
    }
    for (i, (lo, hi)) in raw.lower.iter().zip(&raw.upper).enumerate() {
        finite(&format!("{field}.lower[{i}]"), *lo)?;
        finite(&format!("{field}.upper[{i}]"), *hi)?;
        if lo > hi {
            return fail(format!("{field}[{i}]"), format!("lower bound {lo} exceeds upper bound {hi}"));
        }
    }
    IntervalBox::new(raw.lower.clone(), raw.upper.clone()).or_else(|e| fail(field, e.to_string()))
}

fn within(field: &str, inner: &IntervalBox, outer: &IntervalBox, what: &str) -> Result<(), ScenarioError> {
    for i in 0..inner.dim() {
        if inner.lower()[i] < outer.lower()[i] || inner.upper()[i] > outer.upper()[i] {
            return fail(
                format!("{field}[{i}]"),
                format!(
                    "[{}, {}] leaves the {what} [{}, {}]",
                    inner.lower()[i],
                    inner.upper()[i],
                    outer.lower()[i],
                    outer.upper()[i]
                ),
            );
        }
    }
    Ok(())
}

fn build(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    match raw.version {
        None => return fail("version", "missing; this reader understands version 1"),
        Some(SCENARIO_VERSION) => {}
        Some(v) => return fail("version", format!("unsupported version {v}; expected {SCENARIO_VERSION}")),
    }

    let (system, footprint, default_schedule, default_cubature) = match &raw.model {
        RawModel::StaticBenchmark {
            noise_variance,
            theta_scales_exp,
        } => {
            let var = positive("model.noise_variance", noise_variance.unwrap_or(1e-4))?;
            let mut b = Benchmark::new(var, *theta_scales_exp).or_else(|e| fail("model", e.to_string()))?;
            let legal = b.k_box().clone();
            if let Some(k) = &raw.k_box {
                let kb = interval_box("k_box", k, 1)?;
                within("k_box", &kb, &legal, "benchmark input range")?;
                b = b.with_k_box(kb).or_else(|e| fail("k_box", e.to_string()))?;
            }
            if !raw.obstacles.is_empty() {
                return fail("obstacles", "the static benchmark has no world frame; remove the obstacles");
            }
            if raw.atlas.is_some() {
                return fail("atlas", "the static benchmark has no reachable sets");
            }
            let sched = Schedule::from_count(1.0, 1).expect("unit schedule");
            (System::Benchmark(b), None, sched, vec![100])
        }
        RawModel::Vehicle {
            maneuver,
            x0,
            noise_variance,
            step,
            heading_window,
            turn_launch_guard,
            footprint,
            params,
        } => {
            let man = match maneuver {
                RawManeuver::LaneChange => Maneuver::LaneChange,
                RawManeuver::LeftTurn => Maneuver::LeftTurn,
            };
            let mut p = VehicleParams::defaults(man);
            if let Some(over) = params {
                over.apply(&mut p);
            }
            p.validate().or_else(|e| fail("model.params", e.to_string()))?;
            let x0 = match x0 {
                Some(x) => x.clone(),
                None => match man {
                    Maneuver::LaneChange => vec![0.0, 0.0, 0.0, 8.0, 0.0, 0.0],
                    Maneuver::LeftTurn => vec![0.0, 0.0, 0.0, 0.1, 0.0, 0.0],
                },
            };
            if x0.len() != 6 {
                return fail("model.x0", format!("expected 6 entries [x, y, heading, u, v, r], got {}", x0.len()));
            }
            for (i, v) in x0.iter().enumerate() {
                finite(&format!("model.x0[{i}]"), *v)?;
            }
            let step = positive("model.step", step.unwrap_or(1e-2))?;
            let mut v = Vehicle::new(p, man, &x0).or_else(|e| fail("model", e.to_string()))?;
            let legal = v.k_box().clone();
            if let Some(k) = &raw.k_box {
                let kb = interval_box("k_box", k, 2)?;
                within("k_box", &kb, &legal, "maneuver's admissible range")?;
                v = v.with_k_box(kb).or_else(|e| fail("k_box", e.to_string()))?;
            }
            if let Some(var) = noise_variance {
                let var = positive("model.noise_variance", *var)?;
                let cov = Covariance::isotropic(2, var).or_else(|e| fail("model.noise_variance", e.to_string()))?;
                v = v.with_noise(cov).or_else(|e| fail("model.noise_variance", e.to_string()))?;
            }
            if let Some(w) = heading_window {
                positive("model.heading_window", *w)?;
            }
            v = v
                .with_heading_window(*heading_window)
                .or_else(|e| fail("model.heading_window", e.to_string()))?;
            if let Some(g) = turn_launch_guard {
                v = v.with_turn_launch_guard(*g);
            }
            let [hl, hw] = footprint.unwrap_or([1.2, 0.55]);
            positive("model.footprint[0]", hl)?;
            positive("model.footprint[1]", hw)?;
            let fp = Zonotope::from_box(&IntervalBox::new(vec![-hl, -hw], vec![hl, hw]).expect("positive extents"));
            let sched = match man {
                Maneuver::LaneChange => Schedule::new(0.5, 9.0),
                Maneuver::LeftTurn => Schedule::new(0.25, 5.0),
            }
            .expect("default schedule");
            (System::Vehicle(Simulated { model: v, step }), Some(fp), sched, vec![3, 3, 3])
        }
    };
    let model = system.measurement_model();
    let p_dim = model.param_box().dim();
    let k_dim = model.k_box().dim();

    let prior = match &raw.prior {
        Some(b) => {
            let pb = interval_box("prior", b, p_dim)?;
            match &system {
                System::Benchmark(_) => within("prior", &pb, model.param_box(), "benchmark parameter range")?,
                System::Vehicle(_) => {
                    if let Some(i) = (0..p_dim).find(|&i| pb.lower()[i] <= 0.0) {
                        return fail(format!("prior[{i}]"), "mass and axle distances must stay positive");
                    }
                }
            }
            pb
        }
        None => model.param_box().clone(),
    };
    // the vehicle integrates against its own prior box
    let system = match system {
        System::Vehicle(mut s) => {
            s.model = s.model.with_param_box(prior.clone()).or_else(|e| fail("prior", e.to_string()))?;
            System::Vehicle(s)
        }
        b => b,
    };

    let cubature = match &raw.cubature {
        Some(c) => {
            if c.n.len() != p_dim {
                return fail("cubature.n", format!("expected one count per parameter axis ({p_dim}), got {}", c.n.len()));
            }
            if let Some(i) = c.n.iter().position(|&n| n == 0) {
                return fail(format!("cubature.n[{i}]"), "needs at least one node");
            }
            c.n.clone()
        }
        None => default_cubature,
    };

    let schedule = match &raw.schedule {
        Some(s) => {
            let dt = positive("schedule.dt", s.dt)?;
            let t_f = finite("schedule.t_f", s.t_f)?;
            if t_f < 0.0 {
                return fail("schedule.t_f", format!("must be nonnegative, got {t_f}"));
            }
            if matches!(system, System::Benchmark(_)) && dt != 1.0 {
                return fail("schedule.dt", "the static benchmark measures once per unit step; use dt = 1");
            }
            if t_f == 0.0 {
                Schedule::from_count(dt, 0).expect("positive step")
            } else {
                Schedule::new(dt, t_f).or_else(|_| {
                    fail("schedule.t_f", format!("horizon {t_f} is not an integer multiple of dt = {dt}"))
                })?
            }
        }
        None => default_schedule,
    };

    let mut obstacles = Vec::with_capacity(raw.obstacles.len());
    for (n, o) in raw.obstacles.iter().enumerate() {
        let field = format!("obstacles[{n}]");
        if o.center.len() != 2 {
            return fail(format!("{field}.center"), format!("expected 2 world coordinates, got {}", o.center.len()));
        }
        if let Some(c) = o.generators.iter().position(|g| g.len() != 2) {
            return fail(
                format!("{field}.generators[{c}]"),
                format!("generator must have 2 entries, got {}", o.generators[c].len()),
            );
        }
        let flat: Vec<f64> = o.generators.iter().flatten().copied().collect();
        if o.center.iter().chain(&flat).any(|v| !v.is_finite()) {
            return fail(&field, "center and generators must be finite");
        }
        let (first, last) = (o.first.unwrap_or(0), o.last.unwrap_or(usize::MAX));
        if first > last {
            return fail(format!("{field}.first"), format!("first interval {first} is after last interval {last}"));
        }
        let shape = Zonotope::new(
            DVector::from_vec(o.center.clone()),
            DMatrix::from_column_slice(2, o.generators.len(), &flat),
        )
        .or_else(|e| fail(&field, e.to_string()))?;
        obstacles.push(Obstacle { shape, first, last });
    }

    let atlas = match &raw.atlas {
        None => None,
        Some(RawAtlas::File { path }) => {
            if path.as_os_str().is_empty() {
                return fail("atlas.path", "must name a file");
            }
            Some(AtlasSpec::File(path.clone()))
        }
        Some(RawAtlas::Sample {
            n_k,
            n_theta,
            bloat,
            step,
        }) => {
            let d = AtlasSampling::default();
            let opts = AtlasSampling {
                n_k: n_k.unwrap_or(d.n_k),
                n_theta: n_theta.unwrap_or(2),
                bloat: bloat.unwrap_or(d.bloat),
                step: step.unwrap_or(1e-2),
            };
            if opts.n_k < 2 {
                return fail("atlas.n_k", format!("needs at least 2 grid nodes, got {}", opts.n_k));
            }
            if opts.n_theta < 2 {
                return fail("atlas.n_theta", format!("needs at least 2 grid nodes, got {}", opts.n_theta));
            }
            if !(opts.bloat.is_finite() && opts.bloat >= 0.0) {
                return fail("atlas.bloat", format!("must be finite and nonnegative, got {}", opts.bloat));
            }
            positive("atlas.step", opts.step)?;
            Some(AtlasSpec::Sample(opts))
        }
    };
    if !obstacles.is_empty() && atlas.is_none() {
        return fail("atlas", "obstacles need a reach atlas; add an [atlas] section");
    }

    let k_box = model_k_box(&system);
    let mut planner = PlannerOptions::default();
    let mut k0 = k_box.midpoint();
    let mut verify_trials = 20;
    if let Some(p) = &raw.planner {
        if let Some(n) = p.n_starts {
            if n == 0 {
                return fail("planner.n_starts", "needs at least one start");
            }
            planner.n_starts = n;
        }
        if let Some(n) = p.max_iterations {
            if n == 0 {
                return fail("planner.max_iterations", "needs at least one iteration");
            }
            planner.max_iterations = n;
        }
        if let Some(m) = p.margin_buffer {
            if !(m.is_finite() && m >= 0.0) {
                return fail("planner.margin_buffer", format!("must be finite and nonnegative, got {m}"));
            }
            planner.margin_buffer = m;
        }
        if let Some(r) = p.rho {
            planner.rho = positive("planner.rho", r)?;
        }
        if let Some(b) = p.budget {
            planner.budget = Some(positive("planner.budget", b)?);
        }
        if let Some(n) = p.verify_trials {
            verify_trials = n;
        }
        if let Some(k) = &p.k0 {
            if k.len() != k_dim {
                return fail("planner.k0", format!("expected {k_dim} entries, got {}", k.len()));
            }
            if !k_box.contains(k) {
                return fail("planner.k0", format!("{k:?} lies outside the K box"));
            }
            k0 = k.clone();
        }
    }

    let mut evaluate = EvaluateSpec {
        k: None,
        trials: 10,
        grid_n: 11,
    };
    if let Some(e) = &raw.evaluate {
        if let Some(k) = &e.k {
            if k.len() != k_dim {
                return fail("evaluate.k", format!("expected {k_dim} entries, got {}", k.len()));
            }
            if !k_box.contains(k) {
                return fail("evaluate.k", format!("{k:?} lies outside the K box"));
            }
            evaluate.k = Some(k.clone());
        }
        if let Some(t) = e.trials {
            if t == 0 {
                return fail("evaluate.trials", "needs at least one trial");
            }
            evaluate.trials = t;
        }
        if let Some(g) = e.grid_n {
            if g < 2 {
                return fail("evaluate.grid_n", format!("needs at least 2 nodes per axis, got {g}"));
            }
            evaluate.grid_n = g;
        }
    }

    let seed = raw.seed.unwrap_or(0);
    planner.seed = seed;
    Ok(Scenario {
        seed,
        system,
        prior: UniformBoxPrior::new(prior),
        cubature,
        schedule,
        obstacles,
        footprint,
        atlas,
        planner,
        k0,
        verify_trials,
        evaluate,
    })
}

fn model_k_box(system: &System) -> IntervalBox {
    system.measurement_model().k_box().clone()
}
