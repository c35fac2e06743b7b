use serde::{Deserialize, Serialize};

use super::es::best_es_allocation;
use super::surrogate::{surrogate_ra_low, surrogate_ro_low, QuadBound};
use super::{
    repair, retime, snr_cap_of, solve_block, ue_freq_for_power, ue_freq_unit, Iterate, Problem, Scaled, SlackPoint,
};
use crate::convexcore::{AffineExpr, ComplexVars, Constraint, ConvexProgram};
use crate::error::Result;
use crate::linalg::{golden_section_max, CVec};
use crate::sysmodel::RateReport;

/// Relative gaps between the slack variables and the functions they bound,
/// measured at the last block solution. Zero means active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activeness {
    pub aircomp_signal: f64,
    pub aircomp_interference: f64,
    /// `None` when the offloading slack has no weight in the objective.
    pub offloading: Option<f64>,
}

impl Activeness {
    pub fn worst(&self) -> f64 {
        self.aircomp_signal.max(self.aircomp_interference).max(self.offloading.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block1Outcome {
    pub iterate: Iterate,
    pub report: RateReport,
    pub slacks: Option<SlackPoint>,
    pub activeness: Option<Activeness>,
    pub inner_iterations: usize,
    /// Set when the conic solver failed before any improvement.
    pub failure: Option<String>,
}

struct Layout {
    m: ComplexVars,
    t: Vec<usize>,
    phi: Vec<Option<usize>>,
    s_a: usize,
    i_a: usize,
    s_o: Option<usize>,
}

struct Anchor {
    m: CVec,
    t: Vec<f64>,
    s_a: f64,
    i_a: f64,
    s_o: f64,
}

fn anchor_of(problem: &Problem<'_>, sc: &Scaled, it: &Iterate) -> Anchor {
    let config = problem.config;
    let m = it.m.unscale(it.m.norm());
    let t: Vec<f64> = it.p.iter().map(|p| (config.p_o / p).clamp(1.0, problem.params.t_max)).collect();
    let signal = sc.h_a.iter().map(|h| m.dotc(h).norm_sqr()).fold(f64::INFINITY, f64::min);
    let interference: f64 = sc.h_o.iter().zip(&t).map(|(h, t)| m.dotc(h).norm_sqr() / t).sum();
    let snr: f64 = sc.g_o.iter().zip(&t).map(|(g, t)| g / t).sum();
    Anchor { m, s_a: 1.0 / signal, i_a: interference + 1.0, s_o: 1.0 / snr, t }
}

/// Objective weights after dividing the total rate by the bandwidth.
struct Weights {
    aircomp: f64,
    offload: f64,
    local: f64,
}

fn weights(problem: &Problem<'_>, t1: f64) -> Weights {
    let c = problem.config;
    Weights {
        aircomp: c.w_a * t1 * c.aircomp_scale() / c.bandwidth,
        offload: c.w_o * t1,
        local: c.w_o * t1 * ue_freq_unit(c) / (c.rho * c.bandwidth),
    }
}

fn build(
    problem: &Problem<'_>,
    sc: &Scaled,
    it: &Iterate,
    anchor: &Anchor,
    snr_cap: f64,
) -> Result<(ConvexProgram, Layout)> {
    let config = problem.config;
    let k_o = config.k_o;
    let wts = weights(problem, it.t1);
    let f_unit = ue_freq_unit(config);
    let mut p = ConvexProgram::new();

    // Per-UE power variables are scaled by the anchor: tau_k = t_k / t0_k,
    // u_k = t0_k / t_k, q_k = t0_k |m^H h_o|^2 / t_k.
    let m = p.add_complex_vars(config.m1);
    let t: Vec<usize> = (0..k_o).map(|_| p.add_var()).collect();
    let u: Vec<usize> = (0..k_o).map(|_| p.add_var()).collect();
    let q: Vec<usize> = (0..k_o).map(|_| p.add_var()).collect();
    let s = p.add_var();
    let s_a = p.add_var();
    let i_a = p.add_var();
    let use_offload = k_o > 0 && wts.offload > 0.0;
    let s_o = use_offload.then(|| p.add_var());
    let var = AffineExpr::var;
    let one = || AffineExpr::constant(1.0);

    // Weakest AirComp gain: S_a * lin|m^H h_k|^2 >= 1.
    for h in &sc.h_a {
        let lin = QuadBound::rank_one(h, &anchor.m).to_expr(&m);
        p.add(Constraint::RotatedSoc { u: var(s_a), v: lin, x: vec![one()] });
    }
    // Interference: q_k >= |m^H h_o|^2 / tau_k, s >= ||m||^2, I_a >= sum q / t0 + s.
    for (k, h) in sc.h_o.iter().enumerate() {
        let z = m.conj_dot(h);
        p.add(Constraint::RotatedSoc { u: var(q[k]), v: var(t[k]), x: vec![z.re, z.im] });
    }
    p.add(Constraint::RotatedSoc { u: var(s), v: one(), x: m.all_parts() });
    let mut interference = var(s);
    for (&qk, t0) in q.iter().zip(&anchor.t) {
        interference.push(qk, 1.0 / t0);
    }
    p.add(Constraint::ge(var(i_a), interference));

    let ra_low = surrogate_ra_low(1.0, anchor.s_a, anchor.i_a)?.to_expr(&[s_a, i_a]);
    p.add(Constraint::ge(ra_low.clone(), AffineExpr::constant(problem.params.delta_strict)));
    let mut objective = ra_low * wts.aircomp;

    // Offloading SNR slack against the linearized sum of g_k / t_k.
    if let Some(s_o) = s_o {
        let mut lin = AffineExpr::zero();
        for k in 0..k_o {
            let (g, t0) = (sc.g_o[k], anchor.t[k]);
            lin.push(t[k], -g / t0);
            lin.constant += 2.0 * g / t0;
        }
        p.add(Constraint::RotatedSoc { u: var(s_o), v: lin, x: vec![one()] });
        objective += surrogate_ro_low(anchor.s_o)?.to_expr(&[s_o]) * wts.offload;
    }

    // Powers: u_k >= 1/tau_k, u_k / t0 + phi_k^3 <= 1, t0 tau_k <= t_max.
    let mut phi = Vec::with_capacity(k_o);
    for k in 0..k_o {
        let t0 = anchor.t[k];
        p.add(Constraint::RotatedSoc { u: var(u[k]), v: var(t[k]), x: vec![one()] });
        p.add(Constraint::le(var(t[k]), AffineExpr::constant(problem.params.t_max / t0)));
        if problem.options.local_compute {
            let f = p.add_var();
            let c = p.add_var();
            let cap = (config.f_lo_max[k] / f_unit).min(1.0);
            p.add(Constraint::Power { x: var(c), y: one(), z: var(f), alpha: 1.0 / 3.0 });
            p.add(Constraint::ge(var(f), AffineExpr::zero()));
            p.add(Constraint::le(var(f), AffineExpr::constant(cap)));
            p.add(Constraint::le(var(u[k]) * (1.0 / t0) + var(c), one()));
            objective.push(f, wts.local);
            phi.push(Some(f));
        } else {
            p.add(Constraint::le(var(u[k]), AffineExpr::constant(t0)));
            phi.push(None);
        }
    }
    // Causality on the true offloading SNR, which is convex in t.
    if k_o > 0 && snr_cap.is_finite() {
        let mut snr = AffineExpr::constant(-snr_cap);
        for k in 0..k_o {
            snr.push(u[k], sc.g_o[k] / anchor.t[k]);
        }
        p.add(Constraint::Le(snr));
    }
    p.maximize(objective);
    Ok((p, Layout { m, t, phi, s_a, i_a, s_o }))
}

fn extract(problem: &Problem<'_>, layout: &Layout, anchor: &Anchor, x: &[f64], base: &Iterate) -> Iterate {
    let config = problem.config;
    let f_unit = ue_freq_unit(config);
    let mut it = base.clone();
    let m = layout.m.value(x);
    it.m = m.unscale(m.norm());
    for k in 0..config.k_o {
        it.p[k] = config.p_o / (anchor.t[k] * x[layout.t[k]]);
        it.e_lo1[k] = layout.phi[k].map_or(0.0, |f| x[f].max(0.0) * f_unit);
    }
    it
}

/// Gaps are taken against the constraint functions of the solved program,
/// i.e. the linearized signal and SNR bounds at the anchor.
fn activeness(sc: &Scaled, layout: &Layout, anchor: &Anchor, x: &[f64]) -> Activeness {
    let m = layout.m.value(x);
    let signal = sc
        .h_a
        .iter()
        .map(|h| {
            let z0 = anchor.m.dotc(h);
            2.0 * (z0.conj() * m.dotc(h)).re - z0.norm_sqr()
        })
        .fold(f64::INFINITY, f64::min);
    let interference: f64 = sc
        .h_o
        .iter()
        .zip(&layout.t)
        .zip(&anchor.t)
        .map(|((h, &t), t0)| m.dotc(h).norm_sqr() / (t0 * x[t]))
        .sum::<f64>()
        + m.norm_squared();
    let i_a = x[layout.i_a];
    let offloading = layout.s_o.map(|s_o| {
        let lin: f64 = sc.g_o.iter().zip(&layout.t).zip(&anchor.t).map(|((g, &t), t0)| (2.0 - x[t]) * g / t0).sum();
        (x[s_o] * lin - 1.0).abs()
    });
    Activeness {
        aircomp_signal: (x[layout.s_a] * signal - 1.0).abs(),
        aircomp_interference: (i_a - interference).abs() / i_a.abs().max(1e-300),
        offloading,
    }
}

/// Stage-2 and ES decisions have closed forms: the UEs compute at full
/// power in stage 2 and the ES maximizes its stage-2 throughput.
fn closed_form_parts(problem: &Problem<'_>, it: &mut Iterate) {
    let config = problem.config;
    let es = best_es_allocation(config, &problem.channels.composite_cloud(&it.irs.v2), problem.options);
    it.w = es.w;
    it.e_es = es.e_es;
    for k in 0..config.k_o {
        it.e_lo2[k] = if problem.options.local_compute { ue_freq_for_power(config, k, config.p_o) } else { 0.0 };
    }
}

/// Per-user search over the MEC power on a log scale, re-timing at every
/// point. The fixed-split SCA step cannot trade offloaded bits for stage-1
/// time, which is where this search moves.
fn power_search(problem: &Problem<'_>, start: Iterate, report: RateReport) -> Result<(Iterate, RateReport)> {
    let config = problem.config;
    let floor = config.p_o / problem.params.t_max;
    let with_power = |base: &Iterate, k: usize, p: f64| -> Result<(Iterate, RateReport)> {
        let mut it = base.clone();
        it.p[k] = p;
        if problem.options.local_compute {
            it.e_lo1[k] = ue_freq_for_power(config, k, config.p_o - p);
        }
        retime(problem, &mut it)?;
        repair(problem, &mut it);
        let r = it.score(problem)?;
        Ok((it, r))
    };
    let (mut best, mut best_report) = (start, report);
    for k in 0..config.k_o {
        let value = |s: f64| match with_power(&best, k, s.exp()) {
            Ok((_, r)) if r.feasibility.all() => r.r_total,
            _ => f64::NEG_INFINITY,
        };
        let (s, v) = golden_section_max(floor.ln(), config.p_o.ln(), 1e-3, value);
        if v > best_report.r_total {
            let (it, r) = with_power(&best, k, s.exp())?;
            if not_worse(&r, &best_report) {
                best = it;
                best_report = r;
            }
        }
    }
    Ok((best, best_report))
}

fn not_worse(new: &RateReport, old: &RateReport) -> bool {
    new.feasibility.all() && new.r_total >= old.r_total - 1e-12 * old.r_total.abs()
}

/// Inner SCA loop over the receive vector, MEC powers and stage-1 CPU
/// frequencies, with the ES covariance/frequency and stage-2 frequencies
/// set in closed form, followed by a per-user power search with the split
/// re-timed. Every accepted step is checked on the exact objective, so the
/// returned iterate is never worse than `start`.
pub fn solve_block1(problem: &Problem<'_>, start: &Iterate) -> Result<Block1Outcome> {
    let config = problem.config;
    let sc = Scaled::new(config, problem.channels, &start.irs.v1);
    let mut best = start.clone();
    let mut best_report = best.score(problem)?;

    let mut it = start.clone();
    closed_form_parts(problem, &mut it);
    repair(problem, &mut it);
    let report = it.score(problem)?;
    if not_worse(&report, &best_report) || !best_report.feasibility.all() {
        best = it;
        best_report = report;
    }

    let mut slacks = None;
    let mut act = None;
    let mut failure = None;
    let mut iterations = 0;
    while iterations < problem.params.inner_max_iter {
        iterations += 1;
        let cap = snr_cap_of(problem, &best)?;
        let anchor = anchor_of(problem, &sc, &best);
        let (program, layout) = build(problem, &sc, &best, &anchor, cap)?;
        let sol = solve_block(&program)?;
        if !sol.is_usable() {
            if iterations == 1 {
                failure = Some(sol.diagnostic.unwrap_or_else(|| format!("{:?}", sol.status)));
            }
            break;
        }
        act = Some(activeness(&sc, &layout, &anchor, &sol.x));
        slacks = Some(SlackPoint {
            s_a: sol.x[layout.s_a],
            i_a: sol.x[layout.i_a],
            s_o: layout.s_o.map_or(f64::NAN, |v| sol.x[v]),
            t: layout.t.iter().zip(&anchor.t).map(|(&t, t0)| t0 * sol.x[t] / config.p_o).collect(),
        });
        let mut cand = extract(problem, &layout, &anchor, &sol.x, &best);
        repair(problem, &mut cand);
        let report = match cand.score(problem) {
            Ok(r) => r,
            Err(_) => break,
        };
        if !not_worse(&report, &best_report) {
            break;
        }
        let gain = (report.r_total - best_report.r_total) / best_report.r_total.abs().max(1e-300);
        best = cand;
        best_report = report;
        if gain < problem.params.inner_tol {
            break;
        }
    }
    if config.k_o > 0 {
        (best, best_report) = power_search(problem, best, best_report)?;
    }
    Ok(Block1Outcome {
        iterate: best,
        report: best_report,
        slacks,
        activeness: act,
        inner_iterations: iterations,
        failure,
    })
}
