//! Scenario files, reach-atlas files and the `infoplan` command surface.

pub mod atlas_io;
pub mod commands;
pub mod scenario;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::CurveOptions;
use crate::scenario::{AtlasSpec, Scenario};

#[derive(Debug, Parser)]
#[command(name = "infoplan", version, about = "Safe, information-maximizing trajectory design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the information-gain bound over a grid of K.
    EigCurve {
        #[command(flatten)]
        common: Common,
        /// Grid nodes per axis of K.
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Add a nested Monte Carlo column.
        #[arg(long)]
        mc: bool,
        #[arg(long, default_value_t = 1000)]
        mc_outer: usize,
        #[arg(long, default_value_t = 1000)]
        mc_inner: usize,
        /// Add a dense-quadrature reference column (scalar models only).
        #[arg(long)]
        oracle: bool,
    },
    /// Optimize and verify a plan.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Record wall time and enforce the planner budget.
        #[arg(long)]
        timing: bool,
    },
    /// Realized information gain of a fixed parameter over seeded trials.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Trajectory parameter, comma separated; defaults to the scenario's.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        k: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        grid_n: Option<usize>,
    },
    /// Fit a reach atlas from simulation and write it as JSON.
    SampleAtlas {
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario without running anything.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::EigCurve { common, .. }
            | Command::Plan { common, .. }
            | Command::Evaluate { common, .. }
            | Command::SampleAtlas { common }
            | Command::Validate { common } => common,
        }
    }
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Fallback,
}

/// A failed run, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<Outcome, RunError> {
    let common = cli.command.common();
    let mut sc = Scenario::from_path(&common.scenario)?;
    if let Some(seed) = common.seed {
        sc.seed = seed;
        sc.planner.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(anyhow::anyhow!("--threads must be at least 1").into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting the worker pool")?;
    Ok(pool.install(|| execute(&cli.command, &sc))?)
}

fn execute(command: &Command, sc: &Scenario) -> Result<Outcome> {
    let out = &command.common().out;
    if !matches!(command, Command::Validate { .. }) {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    match command {
        Command::EigCurve {
            points,
            mc,
            mc_outer,
            mc_inner,
            oracle,
            ..
        } => {
            let opts = CurveOptions {
                points: *points,
                mc: mc.then_some((*mc_outer, *mc_inner)),
                oracle: *oracle,
            };
            let rows = commands::eig_curve(sc, &opts)?;
            write(out, "eig_curve.csv", &commands::curve_csv(&rows, &opts))?;
            let best = rows.iter().fold(&rows[0], |b, r| if r.eig > b.eig { r } else { b });
            println!("{} grid points; largest bound {} at k = {:?}", rows.len(), best.eig, best.k);
            Ok(Outcome::Success)
        }
        Command::Plan { timing, .. } => {
            let res = commands::plan(sc, *timing)?;
            write(out, "plan.json", &commands::plan_document(&res, *timing))?;
            write(out, "plan_trace.csv", &commands::trace_csv(&res.result))?;
            println!("status {}", res.result.status.as_str());
            if let Some(k) = res.result.k_star() {
                println!("k* = {k:?}");
            }
            Ok(if res.is_fallback() {
                Outcome::Fallback
            } else {
                Outcome::Success
            })
        }
        Command::Evaluate { k, trials, grid_n, .. } => {
            let k = k
                .clone()
                .or_else(|| sc.evaluate.k.clone())
                .unwrap_or_else(|| sc.k0.clone());
            let rows = commands::evaluate(
                sc,
                &k,
                trials.unwrap_or(sc.evaluate.trials),
                grid_n.unwrap_or(sc.evaluate.grid_n),
            )?;
            write(out, "evaluate.csv", &commands::evaluate_csv(&rows))?;
            write(out, "evaluate_summary.csv", &commands::summary_csv(&rows))?;
            let (n, mean, std) = commands::summarize(&rows);
            println!("{n}/{} trials; realized gain {mean} +/- {std}", rows.len());
            Ok(Outcome::Success)
        }
        Command::SampleAtlas { .. } => {
            let opts = match &sc.atlas {
                Some(AtlasSpec::Sample(o)) => *o,
                _ => infoplan_core::safety::AtlasSampling {
                    n_theta: 2,
                    step: 1e-2,
                    ..Default::default()
                },
            };
            let atlas = commands::sample_atlas(sc, &opts)?;
            write(out, "atlas.json", &atlas_io::atlas_to_string(&atlas))?;
            println!("{} intervals written", atlas.len());
            Ok(Outcome::Success)
        }
        Command::Validate { .. } => {
            if let Some(AtlasSpec::File(_)) = &sc.atlas {
                commands::build_atlas(sc)?;
            }
            println!(
                "ok: {} parameter axes, {} measurements, {} obstacles",
                sc.prior_dim(),
                sc.schedule.len(),
                sc.obstacles.len()
            );
            Ok(Outcome::Success)
        }
    }
}
