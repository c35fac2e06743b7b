use num_complex::Complex64;

use super::surrogate::{surrogate_ra_low, surrogate_ro_low};
use super::{repair, snr_cap_of, solve_block, Iterate, Problem};
use crate::convexcore::{AffineExpr, ComplexAffine, ComplexVars, Constraint, ConvexProgram};
use crate::error::Result;
use crate::linalg::CVec;
use crate::sysmodel::{ChannelSet, RateReport};

#[derive(Debug, Clone, PartialEq)]
pub struct V1Outcome {
    pub iterate: Iterate,
    pub report: RateReport,
    /// True when the projected phases beat the starting point.
    pub improved: bool,
    pub inner_iterations: usize,
    pub failure: Option<String>,
}

/// `s (h + R v)` for one UE, entry by entry, as affine functions of `v`.
struct AffineChannel {
    constant: CVec,
    rows: Vec<Vec<Complex64>>,
}

impl AffineChannel {
    fn new(channels: &ChannelSet, h: &CVec, f: &CVec, scale: f64) -> Self {
        let r = channels.reflection_matrix(f);
        let s = Complex64::new(scale, 0.0);
        Self { constant: h * s, rows: (0..r.nrows()).map(|i| r.row(i).iter().map(|z| z * s).collect()).collect() }
    }

    fn eval(&self, v: &CVec) -> CVec {
        CVec::from_fn(self.constant.len(), |i, _| {
            self.constant[i] + self.rows[i].iter().zip(v.iter()).map(|(a, b)| a * b).sum::<Complex64>()
        })
    }

    fn entry(&self, vars: &ComplexVars, i: usize) -> ComplexAffine {
        vars.linear(&self.rows[i]) + ComplexAffine::constant(self.constant[i])
    }

    /// `m^H (s (h + R v))` as an affine function of `v`.
    fn project(&self, m: &CVec) -> (Complex64, Vec<Complex64>) {
        let c = m.dotc(&self.constant);
        let n = self.rows.first().map_or(0, Vec::len);
        let coef = (0..n).map(|j| self.rows.iter().zip(m.iter()).map(|(row, mi)| mi.conj() * row[j]).sum()).collect();
        (c, coef)
    }
}

struct Model {
    aircomp: Vec<(Complex64, Vec<Complex64>)>,
    /// Projections of the MEC channels onto `m`, weighted by `sqrt(p_hat)`.
    interference: Vec<(Complex64, Vec<Complex64>)>,
    /// Full MEC channels weighted by `sqrt(p_hat)`.
    offload: Vec<AffineChannel>,
}

fn affine_value(c: Complex64, coef: &[Complex64], v: &CVec) -> Complex64 {
    c + coef.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<Complex64>()
}

impl Model {
    fn new(problem: &Problem<'_>, it: &Iterate) -> Self {
        let config = problem.config;
        let ch = problem.channels;
        let m = it.m.unscale(it.m.norm());
        let sa = (config.p_a / config.sigma_e2).sqrt();
        let aircomp = ch.h_a.iter().zip(&ch.f_a).map(|(h, f)| AffineChannel::new(ch, h, f, sa).project(&m)).collect();
        let offload: Vec<AffineChannel> = ch
            .h_o
            .iter()
            .zip(&ch.f_o)
            .zip(&it.p)
            .map(|((h, f), p)| AffineChannel::new(ch, h, f, (p / config.sigma_e2).sqrt()))
            .collect();
        let interference = offload.iter().map(|c| c.project(&m)).collect();
        Self { aircomp, interference, offload }
    }

    fn slack_values(&self, v: &CVec) -> (f64, f64, f64) {
        let signal = self.aircomp.iter().map(|(c, a)| affine_value(*c, a, v).norm_sqr()).fold(f64::INFINITY, f64::min);
        let interference: f64 = self.interference.iter().map(|(c, a)| affine_value(*c, a, v).norm_sqr()).sum();
        let snr: f64 = self.offload.iter().map(|c| c.eval(v).norm_squared()).sum();
        (1.0 / signal, interference + 1.0, 1.0 / snr)
    }
}

fn build(
    problem: &Problem<'_>,
    model: &Model,
    v0: &CVec,
    t1: f64,
    snr_cap: f64,
) -> Result<Option<(ConvexProgram, ComplexVars)>> {
    let config = problem.config;
    let n = v0.len();
    let (s_a0, i_a0, s_o0) = model.slack_values(v0);
    if !(s_a0.is_finite() && s_a0 > 0.0) {
        return Ok(None);
    }
    let c_a = config.w_a * t1 * config.aircomp_scale() / config.bandwidth;
    let c_o = config.w_o * t1;
    let use_offload = c_o > 0.0 && s_o0.is_finite() && s_o0 > 0.0;

    let mut p = ConvexProgram::new();
    let v = p.add_complex_vars(n);
    let s_a = p.add_var();
    let i_a = p.add_var();
    let var = AffineExpr::var;
    let one = || AffineExpr::constant(1.0);

    for i in 0..n {
        p.add(Constraint::Soc { t: one(), x: v.parts(i).to_vec() });
    }
    for (c, a) in &model.aircomp {
        let z = v.linear(a) + ComplexAffine::constant(*c);
        let z0 = affine_value(*c, a, v0);
        let lin = z.real_part_against(z0) * 2.0 + AffineExpr::constant(-z0.norm_sqr());
        p.add(Constraint::RotatedSoc { u: var(s_a), v: lin, x: vec![one()] });
    }
    let mut parts = Vec::new();
    for (c, a) in &model.interference {
        let z = v.linear(a) + ComplexAffine::constant(*c);
        parts.push(z.re);
        parts.push(z.im);
    }
    p.add(Constraint::RotatedSoc { u: var(i_a) - one(), v: one(), x: parts });

    let ra_low = surrogate_ra_low(1.0, s_a0, i_a0)?.to_expr(&[s_a, i_a]);
    p.add(Constraint::ge(ra_low.clone(), AffineExpr::constant(problem.params.delta_strict)));
    let mut objective = ra_low * c_a;

    if use_offload {
        let s_o = p.add_var();
        let mut lin = AffineExpr::zero();
        for ch in &model.offload {
            let h0 = ch.eval(v0);
            for i in 0..h0.len() {
                lin += ch.entry(&v, i).real_part_against(h0[i]) * 2.0;
                lin.constant -= h0[i].norm_sqr();
            }
        }
        p.add(Constraint::RotatedSoc { u: var(s_o), v: lin, x: vec![one()] });
        objective += surrogate_ro_low(s_o0)?.to_expr(&[s_o]) * c_o;
    }
    if snr_cap.is_finite() && !model.offload.is_empty() {
        let mut comps = Vec::new();
        for ch in &model.offload {
            for i in 0..ch.constant.len() {
                let z = ch.entry(&v, i);
                comps.push(z.re);
                comps.push(z.im);
            }
        }
        p.add(Constraint::Soc { t: AffineExpr::constant(snr_cap.max(0.0).sqrt()), x: comps });
    }
    p.maximize(objective);
    Ok(Some((p, v)))
}

fn unit_modulus(v: &CVec, fallback: &CVec) -> CVec {
    CVec::from_fn(v.len(), |i, _| {
        let z = v[i];
        if z.norm() > 1e-12 {
            z / z.norm()
        } else {
            fallback[i]
        }
    })
}

/// SCA over the first-stage reflection with a relaxed modulus, followed by
/// projection onto unit modulus. The projected phases are kept only if the
/// exact objective does not drop.
pub fn solve_v1(problem: &Problem<'_>, start: &Iterate) -> Result<V1Outcome> {
    let model = Model::new(problem, start);
    let start_report = start.score(problem)?;
    let mut best = start.clone();
    let mut best_report = start_report.clone();
    let cap = snr_cap_of(problem, start)?;

    let mut anchor = start.irs.v1.clone();
    let mut last_obj = f64::NEG_INFINITY;
    let mut failure = None;
    let mut iterations = 0;
    while iterations < problem.params.inner_max_iter {
        iterations += 1;
        let Some((program, vars)) = build(problem, &model, &anchor, start.t1, cap)? else {
            failure = Some("degenerate AirComp channel at the anchor".into());
            break;
        };
        let sol = solve_block(&program)?;
        if !sol.is_usable() {
            if iterations == 1 {
                failure = Some(sol.diagnostic.unwrap_or_else(|| format!("{:?}", sol.status)));
            }
            break;
        }
        anchor = vars.value(&sol.x);
        let mut cand = best.clone();
        cand.irs.v1 = unit_modulus(&anchor, &best.irs.v1);
        repair(problem, &mut cand);
        if let Ok(report) = cand.score(problem) {
            if report.feasibility.all() && report.r_total > best_report.r_total {
                best = cand;
                best_report = report;
            }
        }
        let gain = (sol.objective - last_obj) / sol.objective.abs().max(1e-300);
        last_obj = sol.objective;
        if gain.abs() < problem.params.inner_tol {
            break;
        }
    }
    let improved = best_report.r_total > start_report.r_total;
    Ok(V1Outcome { iterate: best, report: best_report, improved, inner_iterations: iterations, failure })
}
