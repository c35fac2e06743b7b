//! Outer alternating optimization over the transceiver/CPU block, the two
//! IRS blocks and the time split, plus the comparison schemes.

mod baseline;

pub use baseline::{run_baseline, BaselineKind};

use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::subproblems::{
    best_es_allocation, restore_feasibility, retime, solve_block1, solve_v1, solve_v2, Activeness, InnerParams,
    Iterate, Problem, SchemeOptions,
};
use crate::sysmodel::{evaluate, ChannelSet, Decision, DtState, Feasibility, IrsConfig, RateReport, SystemConfig};

/// Stream offset that keeps the initial IRS phases independent of the
/// channel draw for the same seed.
const IRS_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Stop when the objective grows by less than this fraction.
    pub epsilon: f64,
    pub max_outer: usize,
    /// Also start from every single-user power profile and keep the best.
    pub multi_start: bool,
    pub inner: InnerParams,
}

impl Default for AlgoParams {
    fn default() -> Self {
        Self { epsilon: 1e-3, max_outer: 50, multi_start: true, inner: InnerParams::default() }
    }
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_outer == 0 {
            return Err(Error::InvalidInput("epsilon must be positive and max_outer at least 1".into()));
        }
        Ok(())
    }
}

/// Objective after each block of one outer iteration; `None` when the block
/// was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockObjectives {
    pub block1: Option<f64>,
    pub v2: Option<f64>,
    pub v1: Option<f64>,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub objective: f64,
    pub blocks: BlockObjectives,
    pub activeness: Option<Activeness>,
    pub feasibility: Feasibility,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SolveTrace {
    /// Objective of the starting point after feasibility restoration.
    pub initial_objective: f64,
    pub iterations: Vec<OuterRecord>,
    pub warnings: Vec<String>,
    pub converged: bool,
    /// Index of the initial power profile this run started from.
    pub start: usize,
}

impl SolveTrace {
    /// Initial objective followed by the objective after every outer
    /// iteration.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective).chain(self.iterations.iter().map(|r| r.objective)).collect()
    }

    /// Every intermediate objective in block order.
    pub fn step_objectives(&self) -> Vec<f64> {
        let mut out = vec![self.initial_objective];
        for r in &self.iterations {
            out.extend([r.blocks.block1, r.blocks.v2, r.blocks.v1, r.blocks.time].into_iter().flatten());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub decision: Decision,
    pub irs: IrsConfig,
    pub report: RateReport,
    pub trace: SolveTrace,
    /// Final point of the alternating optimization, with effective CPU
    /// frequencies.
    pub iterate: Option<Iterate>,
    /// False when no point with a positive AirComp rate was found; the
    /// decision is then the idle one.
    pub satisfied: bool,
}

pub(crate) fn initial_irs(config: &SystemConfig) -> IrsConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(IRS_SEED_OFFSET));
    IrsConfig::random(config.n, &mut rng)
}

fn initial_iterate(problem: &Problem<'_>, irs: IrsConfig) -> Iterate {
    let config = problem.config;
    let h_a = problem.channels.composite_aircomp(&irs.v1);
    let sum = h_a.iter().fold(CVec::zeros(config.m1), |acc, h| acc + h);
    let m = if sum.norm() > 0.0 { sum.unscale(sum.norm()) } else { CVec::from_element(config.m1, 1.0.into()) };
    let es = best_es_allocation(config, &problem.channels.composite_cloud(&irs.v2), problem.options);
    let local = |budget: f64| {
        (0..config.k_o)
            .map(|k| {
                if problem.options.local_compute {
                    crate::subproblems::ue_freq_for_power(config, k, budget)
                } else {
                    0.0
                }
            })
            .collect::<Vec<f64>>()
    };
    Iterate {
        m,
        p: vec![0.5 * config.p_o; config.k_o],
        e_lo1: local(0.5 * config.p_o),
        e_lo2: local(config.p_o),
        e_es: es.e_es,
        w: es.w,
        irs,
        t1: 0.5 * config.period,
        t2: 0.5 * config.period,
    }
}

fn idle_solution(
    config: &SystemConfig,
    channels: &ChannelSet,
    dt: &DtState,
    irs: IrsConfig,
    trace: SolveTrace,
) -> Result<Solution> {
    let decision = Decision::zero(config, dt);
    let report = evaluate(config, channels, &irs, dt, &decision)?;
    Ok(Solution { decision, irs, report, trace, iterate: None, satisfied: false })
}

fn accept(candidate: &RateReport, current: f64) -> bool {
    candidate.feasibility.all() && candidate.r_total >= current - 1e-12 * current.abs()
}

/// Initial MEC power profiles: all users at half budget, then each user
/// alone at half budget with the others at the floor.
fn power_profiles(config: &SystemConfig, params: &AlgoParams) -> Vec<Vec<f64>> {
    let half = 0.5 * config.p_o;
    let mut out = vec![vec![half; config.k_o]];
    if params.multi_start && config.k_o > 1 {
        let floor = config.p_o / params.inner.t_max;
        for k in 0..config.k_o {
            let mut p = vec![floor; config.k_o];
            p[k] = half;
            out.push(p);
        }
    }
    out
}

/// Runs the alternating optimization for one scheme from a given initial
/// reflection, once per initial power profile, and keeps the best run.
pub(crate) fn optimize_scheme(
    config: &SystemConfig,
    channels: &ChannelSet,
    dt: &DtState,
    params: &AlgoParams,
    options: SchemeOptions,
    irs: IrsConfig,
) -> Result<Solution> {
    config.validate()?;
    channels.validate(config)?;
    dt.validate(config)?;
    params.validate()?;
    let problem = Problem { config, channels, dt, options, params: params.inner };

    let mut best: Option<(Iterate, RateReport, SolveTrace)> = None;
    let mut failed = SolveTrace::default();
    for (index, powers) in power_profiles(config, params).into_iter().enumerate() {
        let mut it = initial_iterate(&problem, irs.clone());
        it.p = powers;
        match descend(&problem, params, it)? {
            Ok((it, report, mut trace)) => {
                trace.start = index;
                if best.as_ref().is_none_or(|(_, r, _)| report.r_total > r.r_total) {
                    best = Some((it, report, trace));
                }
            }
            Err(trace) => failed.warnings.extend(trace.warnings),
        }
    }
    let Some((it, _, trace)) = best else {
        return idle_solution(config, channels, dt, irs, failed);
    };
    let decision = it.to_decision(&problem)?;
    let report = evaluate(config, channels, &it.irs, dt, &decision)?;
    Ok(Solution { decision, irs: it.irs.clone(), report, trace, iterate: Some(it), satisfied: true })
}

/// Algorithm body from one starting point. The inner error carries the
/// trace of a run whose feasibility restoration failed.
fn descend(
    problem: &Problem<'_>,
    params: &AlgoParams,
    mut it: Iterate,
) -> Result<std::result::Result<(Iterate, RateReport, SolveTrace), SolveTrace>> {
    let options = problem.options;
    let problem = *problem;
    let mut trace = SolveTrace::default();
    if let Some(m) = crate::subproblems::sdr_direction(&problem, &it)? {
        it.m = m;
    }
    crate::subproblems::repair(&problem, &mut it);
    let feas = restore_feasibility(&problem, &mut it)?;
    if !feas.satisfied {
        trace.warnings.push(format!("no point with positive AirComp rate after {} restoration steps", feas.iterations));
        return Ok(Err(trace));
    }
    retime(&problem, &mut it)?;
    crate::subproblems::repair(&problem, &mut it);
    let mut report = it.score(&problem)?;
    if !report.feasibility.all() {
        trace.warnings.push(format!("initial point infeasible: {:?}", report.feasibility));
    }
    trace.initial_objective = report.r_total;

    let mut full_skips = 0;
    for outer in 1..=params.max_outer {
        let started = Instant::now();
        let before = report.r_total;
        let mut blocks = BlockObjectives { block1: None, v2: None, v1: None, time: None };
        let mut skipped = 0;
        let note = |trace: &mut SolveTrace, block: &str, why: String| {
            let msg = format!("iteration {outer}: {block} skipped ({why})");
            warn!("{msg}");
            trace.warnings.push(msg);
        };

        let mut activeness = None;
        match solve_block1(&problem, &it) {
            Ok(out) => {
                activeness = out.activeness;
                if let Some(f) = out.failure.clone() {
                    skipped += 1;
                    note(&mut trace, "block 1", f);
                }
                if accept(&out.report, report.r_total) {
                    it = out.iterate;
                    report = out.report;
                }
                blocks.block1 = Some(report.r_total);
            }
            Err(e) => {
                skipped += 1;
                note(&mut trace, "block 1", e.to_string());
            }
        }

        if options.optimize_irs && options.cloud_tier {
            match v2_step(&problem, &it) {
                Ok((cand, r)) => {
                    if accept(&r, report.r_total) {
                        it = cand;
                        report = r;
                    }
                    blocks.v2 = Some(report.r_total);
                }
                Err(e) => {
                    skipped += 1;
                    note(&mut trace, "second-hop IRS", e.to_string());
                }
            }
        }

        if options.optimize_irs {
            match solve_v1(&problem, &it) {
                Ok(out) => {
                    if let Some(f) = out.failure.clone() {
                        skipped += 1;
                        note(&mut trace, "first-hop IRS", f);
                    }
                    if accept(&out.report, report.r_total) {
                        it = out.iterate;
                        report = out.report;
                    }
                    blocks.v1 = Some(report.r_total);
                }
                Err(e) => {
                    skipped += 1;
                    note(&mut trace, "first-hop IRS", e.to_string());
                }
            }
        }

        let mut cand = it.clone();
        let timed = retime(&problem, &mut cand).and_then(|_| {
            crate::subproblems::repair(&problem, &mut cand);
            cand.score(&problem)
        });
        match timed {
            Ok(r) => {
                if accept(&r, report.r_total) {
                    it = cand;
                    report = r;
                }
                blocks.time = Some(report.r_total);
            }
            Err(e) => {
                skipped += 1;
                note(&mut trace, "time", e.to_string());
            }
        }

        trace.iterations.push(OuterRecord {
            objective: report.r_total,
            blocks,
            activeness,
            feasibility: report.feasibility,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        let attempted = 2 + usize::from(options.optimize_irs) + usize::from(options.optimize_irs && options.cloud_tier);
        full_skips = if skipped == attempted { full_skips + 1 } else { 0 };
        if full_skips >= 2 {
            trace.warnings.push("two consecutive iterations with every block skipped".into());
            break;
        }
        if report.r_total - before < params.epsilon * before.abs() {
            trace.converged = true;
            break;
        }
    }

    Ok(Ok((it, report, trace)))
}

/// Element-wise second-hop phase update followed by a fresh ES allocation.
fn v2_step(problem: &Problem<'_>, it: &Iterate) -> Result<(Iterate, RateReport)> {
    let config = problem.config;
    let out = solve_v2(problem.channels, &it.w, &it.irs.v2, config.sigma_c2, &problem.params)?;
    let mut cand = it.clone();
    cand.irs.v2 = out.v2;
    let es = best_es_allocation(config, &problem.channels.composite_cloud(&cand.irs.v2), problem.options);
    let old = crate::subproblems::es_throughput(config, out.r_c, it.e_es);
    if es.throughput >= old {
        cand.w = es.w;
        cand.e_es = es.e_es;
    }
    crate::subproblems::repair(problem, &mut cand);
    let r = cand.score(problem)?;
    Ok((cand, r))
}

/// The proposed scheme: every block optimized, random initial phases.
pub fn optimize(config: &SystemConfig, channels: &ChannelSet, dt: &DtState, params: &AlgoParams) -> Result<Solution> {
    optimize_scheme(config, channels, dt, params, SchemeOptions::default(), initial_irs(config))
}
