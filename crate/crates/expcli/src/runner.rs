use std::time::Instant;

use hybridcomp_core::orchestrator::{optimize, run_baseline, Solution};
use hybridcomp_core::sysmodel::{gen_scenario, Topology};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExpConfig;
use crate::error::Result;
use crate::scenario::{Scenario, ScenarioKind, Scheme, Sweep};
use crate::table::{ResultRow, Status};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub base_seed: u64,
    /// Record per-trial wall time. Off by default so reruns are byte-identical.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { base_seed: 1, timing: false }
    }
}

/// Header line describing how a result file was produced.
#[derive(Serialize)]
struct Provenance<'a> {
    scenario: ScenarioKind,
    sweep_param: &'static str,
    grid: &'a [f64],
    schemes: &'a [Scheme],
    trials: usize,
    base_seed: u64,
    config: &'a ExpConfig,
    version: &'static str,
}

pub fn provenance(scenario: &Scenario, config: &ExpConfig, opts: &RunOptions) -> String {
    let p = Provenance {
        scenario: scenario.kind,
        sweep_param: scenario.kind.sweep().param(),
        grid: &scenario.grid,
        schemes: &scenario.schemes,
        trials: scenario.trials,
        base_seed: opts.base_seed,
        config,
        version: env!("CARGO_PKG_VERSION"),
    };
    serde_json::to_string(&p).expect("provenance serializes")
}

struct Job {
    scheme_idx: usize,
    grid_idx: usize,
    seed: u64,
}

/// Runs every (scheme, sweep value, seed) combination in parallel. Rows come
/// back ordered by scheme list, then grid, then seed. A failing trial yields
/// an `error` row and does not stop the sweep.
pub fn run_scenario(scenario: &Scenario, config: &ExpConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    scenario.validate()?;
    config.algo_params()?;
    if scenario.kind == ScenarioKind::Convergence {
        return run_convergence(scenario, config, opts);
    }
    let sweep = scenario.kind.sweep();
    let jobs: Vec<Job> = (0..scenario.schemes.len())
        .flat_map(|s| {
            (0..scenario.grid.len()).flat_map(move |g| {
                (0..scenario.trials as u64).map(move |t| Job { scheme_idx: s, grid_idx: g, seed: opts.base_seed + t })
            })
        })
        .collect();
    info!("{}: {} trials", scenario.kind, jobs.len());
    let rows = jobs
        .par_iter()
        .map(|job| {
            let scheme = scenario.schemes[job.scheme_idx];
            let value = scenario.grid[job.grid_idx];
            let start = Instant::now();
            let outcome = sweep.apply(config, value).and_then(|cfg| solve(scheme, &cfg, job.seed));
            let elapsed = start.elapsed().as_secs_f64();
            let mut row = ResultRow {
                scenario: scenario.kind.name().to_string(),
                scheme: scheme.to_string(),
                sweep_param: sweep.param().to_string(),
                sweep_value: value,
                sweep_value_si: sweep.si_value(config, value),
                seed: job.seed,
                status: Status::Error,
                r_total: None,
                r_a: None,
                sum_r_e: None,
                r_c: None,
                iterations: None,
                wall_time_s: opts.timing.then_some(elapsed),
            };
            match outcome {
                Ok(sol) => {
                    let r = &sol.report;
                    row.status = if r.feasibility.all() { Status::Ok } else { Status::Infeasible };
                    row.r_total = Some(r.r_total);
                    row.r_a = Some(r.r_a);
                    row.sum_r_e = Some(r.sum_r_e);
                    row.r_c = Some(r.r_c);
                    row.iterations = Some(sol.trace.iterations.len());
                }
                Err(e) => warn!("{scheme} at {}={value}, seed {}: {e}", sweep.param(), job.seed),
            }
            row
        })
        .collect();
    Ok(rows)
}

fn solve(scheme: Scheme, config: &ExpConfig, seed: u64) -> Result<Solution> {
    let sys = config.system_config(seed)?;
    let dt = config.dt_state(&sys)?;
    let params = config.algo_params()?;
    let channels = gen_scenario(&sys, &Topology::default());
    Ok(match scheme {
        Scheme::Optimize => optimize(&sys, &channels, &dt, &params)?,
        Scheme::Baseline(kind) => run_baseline(kind, &sys, &channels, &dt, &params)?,
    })
}

/// One solve per seed; each grid point is an outer iteration index and the
/// row holds the objective reached after that many iterations.
fn run_convergence(scenario: &Scenario, config: &ExpConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    let sweep = Sweep::Iteration;
    let mut jobs = Vec::new();
    for (s, _) in scenario.schemes.iter().enumerate() {
        for t in 0..scenario.trials as u64 {
            jobs.push((s, opts.base_seed + t));
        }
    }
    let per_job: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            let scheme = scenario.schemes[s];
            let start = Instant::now();
            let outcome = solve(scheme, config, seed);
            let elapsed = start.elapsed().as_secs_f64();
            let (status, objectives, iterations) = match &outcome {
                Ok(sol) => {
                    let status = if sol.report.feasibility.all() { Status::Ok } else { Status::Infeasible };
                    (status, sol.trace.objectives(), Some(sol.trace.iterations.len()))
                }
                Err(e) => {
                    warn!("{scheme} convergence run, seed {seed}: {e}");
                    (Status::Error, Vec::new(), None)
                }
            };
            scenario
                .grid
                .iter()
                .map(|&value| {
                    let r_total = objectives.get(value as usize).or(objectives.last()).copied();
                    ResultRow {
                        scenario: scenario.kind.name().to_string(),
                        scheme: scheme.to_string(),
                        sweep_param: sweep.param().to_string(),
                        sweep_value: value,
                        sweep_value_si: value,
                        seed,
                        status,
                        r_total,
                        r_a: None,
                        sum_r_e: None,
                        r_c: None,
                        iterations,
                        wall_time_s: opts.timing.then_some(elapsed),
                    }
                })
                .collect()
        })
        .collect();
    // Solves ran seed by seed; reorder to scheme, grid, seed.
    let width = scenario.grid.len();
    let mut indexed: Vec<(usize, usize, ResultRow)> = per_job
        .into_iter()
        .enumerate()
        .flat_map(|(j, rows)| rows.into_iter().enumerate().map(move |(g, r)| (j, g, r)))
        .collect();
    indexed.sort_by_key(|(j, g, _)| {
        let (scheme, trial) = (j / scenario.trials, j % scenario.trials);
        (scheme * width + g) * scenario.trials + trial
    });
    Ok(indexed.into_iter().map(|(_, _, r)| r).collect())
}
