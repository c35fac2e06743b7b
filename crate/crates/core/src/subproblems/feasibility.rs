use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::surrogate::QuadBound;
use super::{repair, solve_block, ue_freq_unit, Iterate, Problem, Scaled};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::convexcore::{AffineExpr, Constraint, ConvexProgram, HermitianAffine};
use crate::error::Result;
use crate::linalg::{hermitian_eigen, CMat, CVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityState {
    /// Weakest AirComp gain minus the scaled interference at the end,
    /// normalized; nonnegative means satisfied.
    pub gamma: f64,
    pub m: CVec,
    pub p: Vec<f64>,
    pub v1: CVec,
    pub satisfied: bool,
    pub iterations: usize,
}

fn margin(problem: &Problem<'_>, m: &CVec, p: &[f64], v1: &CVec) -> f64 {
    let sc = Scaled::new(problem.config, problem.channels, v1);
    let p_hat: Vec<f64> = p.iter().map(|x| x / problem.config.p_o).collect();
    let mse = sc.mse(m, &p_hat);
    if mse.is_finite() {
        2f64.powf(-problem.params.delta_strict) - mse
    } else {
        f64::NEG_INFINITY
    }
}

/// One SCA step over `(m, t)`: maximize the linearized weakest gain minus
/// `2^delta` times the interference.
fn step_transceiver(problem: &Problem<'_>, it: &Iterate) -> Result<Option<(CVec, Vec<f64>)>> {
    let config = problem.config;
    let sc = Scaled::new(config, problem.channels, &it.irs.v1);
    let m0 = it.m.unscale(it.m.norm());
    let scale = 2f64.powf(problem.params.delta_strict);
    let f_unit = ue_freq_unit(config);

    let mut p = ConvexProgram::new();
    let m = p.add_complex_vars(config.m1);
    let gamma = p.add_var();
    let s = p.add_var();
    let var = AffineExpr::var;
    let one = || AffineExpr::constant(1.0);
    for h in &sc.h_a {
        p.add(Constraint::le(var(gamma), QuadBound::rank_one(h, &m0).to_expr(&m)));
    }
    p.add(Constraint::Soc { t: one(), x: m.all_parts() });
    p.add(Constraint::RotatedSoc { u: var(s), v: one(), x: m.all_parts() });
    let mut interference = var(s);
    let mut t = Vec::with_capacity(config.k_o);
    for (k, h) in sc.h_o.iter().enumerate() {
        let tk = p.add_var();
        let q = p.add_var();
        let phi = (it.e_lo1[k] / f_unit).min(1.0);
        let floor = (1.0 / (1.0 - phi.powi(3)).max(1e-300)).max(1.0);
        p.add(Constraint::ge(var(tk), AffineExpr::constant(floor.min(problem.params.t_max))));
        p.add(Constraint::le(var(tk), AffineExpr::constant(problem.params.t_max)));
        let z = m.conj_dot(h);
        p.add(Constraint::RotatedSoc { u: var(q), v: var(tk), x: vec![z.re, z.im] });
        interference.push(q, 1.0);
        t.push(tk);
    }
    p.maximize(var(gamma) - interference * scale);
    let sol = solve_block(&p)?;
    if !sol.is_usable() {
        return Ok(None);
    }
    let m_new = m.value(&sol.x);
    if m_new.norm() <= 1e-12 {
        return Ok(None);
    }
    let powers = t.iter().map(|&tk| config.p_o / sol.x[tk]).collect();
    Ok(Some((m_new.unscale(m_new.norm()), powers)))
}

/// One SCA step over the first-stage phases with `m` fixed and MEC powers
/// at their floor, followed by projection onto unit modulus.
fn step_phases(problem: &Problem<'_>, it: &Iterate) -> Result<Option<CVec>> {
    let config = problem.config;
    let ch = problem.channels;
    let m = it.m.unscale(it.m.norm());
    let n = config.n;
    let sa = Complex64::new((config.p_a / config.sigma_e2).sqrt(), 0.0);
    let so = Complex64::new((config.p_o / config.sigma_e2).sqrt(), 0.0);
    let affine = |h: &CVec, f: &CVec, s: Complex64| {
        let r = ch.reflection_matrix(f);
        let c = m.dotc(h) * s;
        let coef: Vec<Complex64> = (0..n).map(|j| m.dotc(&r.column(j).into_owned()) * s).collect();
        (c, coef)
    };
    let value = |(c, coef): &(Complex64, Vec<Complex64>), v: &CVec| {
        c + coef.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<Complex64>()
    };
    let scale = 2f64.powf(problem.params.delta_strict);
    let v0 = &it.irs.v1;

    let mut p = ConvexProgram::new();
    let v = p.add_complex_vars(n);
    let gamma = p.add_var();
    let q = p.add_var();
    for i in 0..n {
        p.add(Constraint::Soc { t: AffineExpr::constant(1.0), x: v.parts(i).to_vec() });
    }
    for (h, f) in ch.h_a.iter().zip(&ch.f_a) {
        let a = affine(h, f, sa);
        let z0 = value(&a, v0);
        let z = v.linear(&a.1) + crate::convexcore::ComplexAffine::constant(a.0);
        let lin = z.real_part_against(z0) * 2.0 + AffineExpr::constant(-z0.norm_sqr());
        p.add(Constraint::le(AffineExpr::var(gamma), lin));
    }
    let mut parts = Vec::new();
    for ((h, f), pk) in ch.h_o.iter().zip(&ch.f_o).zip(&it.p) {
        let w = Complex64::new((pk / config.p_o).sqrt(), 0.0);
        let (c, coef) = affine(h, f, so * w);
        let z = v.linear(&coef) + crate::convexcore::ComplexAffine::constant(c);
        parts.push(z.re);
        parts.push(z.im);
    }
    p.add(Constraint::RotatedSoc { u: AffineExpr::var(q), v: AffineExpr::constant(1.0), x: parts });
    p.maximize(AffineExpr::var(gamma) - AffineExpr::var(q) * scale);
    let sol = solve_block(&p)?;
    if !sol.is_usable() {
        return Ok(None);
    }
    let relaxed = v.value(&sol.x);
    Ok(Some(CVec::from_fn(n, |i, _| {
        let z = relaxed[i];
        if z.norm() > 1e-12 {
            z / z.norm()
        } else {
            v0[i]
        }
    })))
}

fn hermitian_basis(m: usize) -> Vec<CMat> {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(m * m);
    for d in 0..m {
        let mut e = CMat::zeros(m, m);
        e[(d, d)] = one;
        out.push(e);
    }
    for r in 0..m {
        for c in r + 1..m {
            let mut re = CMat::zeros(m, m);
            re[(r, c)] = one;
            re[(c, r)] = one;
            out.push(re);
            let mut im = CMat::zeros(m, m);
            im[(r, c)] = i;
            im[(c, r)] = -i;
            out.push(im);
        }
    }
    out
}

/// Max-min receive direction by semidefinite relaxation,
/// `max tau  s.t.  h_k^H X h_k >= tau, tr X = 1, X >= 0`, followed by
/// deterministic Gaussian randomization around the relaxed solution.
pub(crate) fn sdr_direction(problem: &Problem<'_>, it: &Iterate) -> Result<Option<CVec>> {
    let config = problem.config;
    let sc = Scaled::new(config, problem.channels, &it.irs.v1);
    let m1 = config.m1;
    let basis = hermitian_basis(m1);
    let mut p = ConvexProgram::new();
    let x = p.add_vars(basis.len());
    let tau = p.add_var();
    let mut psd = HermitianAffine::zeros(m1);
    for (k, e) in basis.iter().enumerate() {
        psd = psd.with(x.start + k, e.clone());
    }
    p.add(Constraint::Psd(psd));
    let mut trace = AffineExpr::constant(-1.0);
    for d in 0..m1 {
        trace.push(x.start + d, 1.0);
    }
    p.add(Constraint::Eq(trace));
    for h in &sc.h_a {
        let mut gain = AffineExpr::zero();
        for (k, e) in basis.iter().enumerate() {
            gain.push(x.start + k, h.dotc(&(e * h)).re);
        }
        p.add(Constraint::ge(gain, AffineExpr::var(tau)));
    }
    p.maximize(AffineExpr::var(tau));
    let sol = solve_block(&p)?;
    if !sol.is_usable() {
        return Ok(None);
    }
    let mut xm = CMat::zeros(m1, m1);
    for (k, e) in basis.iter().enumerate() {
        xm += e * Complex64::new(sol.x[x.start + k], 0.0);
    }
    let (vals, vecs) = hermitian_eigen(&xm);
    let weakest =
        |m: &CVec| sc.h_a.iter().map(|h| m.dotc(h).norm_sqr()).fold(f64::INFINITY, f64::min) / m.norm_squared();
    let mut best = vecs.column(m1 - 1).into_owned();
    let mut best_val = weakest(&best);
    let mut factor = vecs.clone();
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= Complex64::new(vals[j].max(0.0).sqrt(), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..100 {
        let g = CVec::from_fn(m1, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        });
        let cand = &factor * g;
        let val = weakest(&cand);
        if val > best_val {
            best_val = val;
            best = cand;
        }
    }
    Ok((best.norm() > 0.0).then(|| best.unscale(best.norm())))
}

/// Moves the MEC powers back towards `original` as far as the AirComp
/// requirement allows; restoration tends to leave them at the floor.
fn give_back_power(problem: &Problem<'_>, it: &mut Iterate, original: &[f64]) {
    let restored = it.p.clone();
    let mix = |lambda: f64| -> Vec<f64> {
        restored.iter().zip(original).map(|(r, o)| (1.0 - lambda) * r + lambda * o).collect()
    };
    let ok = |lambda: f64| margin(problem, &it.m, &mix(lambda), &it.irs.v1) >= 0.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    if ok(hi) {
        lo = hi;
    } else {
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    it.p = mix(lo);
}

/// Searches for a point with a strictly positive AirComp rate by
/// alternating SCA over the transceiver/powers and the first-stage phases.
/// Returns immediately when `it` already satisfies the requirement.
pub fn restore_feasibility(problem: &Problem<'_>, it: &mut Iterate) -> Result<FeasibilityState> {
    let state = |it: &Iterate, iterations: usize| {
        let gamma = margin(problem, &it.m, &it.p, &it.irs.v1);
        FeasibilityState {
            gamma,
            m: it.m.clone(),
            p: it.p.clone(),
            v1: it.irs.v1.clone(),
            satisfied: gamma >= 0.0,
            iterations,
        }
    };
    let original = it.p.clone();
    let mut iterations = 0;
    let mut best = margin(problem, &it.m, &it.p, &it.irs.v1);
    if best == f64::NEG_INFINITY {
        // A zero AirComp gain is a stationary point of the linearization;
        // restart from the sum of normalized channel directions.
        let h_a = problem.channels.composite_aircomp(&it.irs.v1);
        let m = h_a.iter().fold(CVec::zeros(problem.config.m1), |acc, h| acc + h.unscale(h.norm().max(1e-300)));
        if m.norm() > 0.0 {
            it.m = m.unscale(m.norm());
            best = margin(problem, &it.m, &it.p, &it.irs.v1);
        }
    }
    if best < 0.0 {
        if let Some(m) = sdr_direction(problem, it)? {
            let g = margin(problem, &m, &it.p, &it.irs.v1);
            if g > best {
                it.m = m;
                best = g;
            }
        }
    }
    while best < 0.0 && iterations < problem.params.feas_max_iter {
        iterations += 1;
        let mut progressed = false;
        if let Some((m, p)) = step_transceiver(problem, it)? {
            let g = margin(problem, &m, &p, &it.irs.v1);
            if g > best {
                it.m = m;
                it.p = p;
                best = g;
                progressed = true;
            }
        }
        if best < 0.0 && problem.options.optimize_irs {
            if let Some(v1) = step_phases(problem, it)? {
                let g = margin(problem, &it.m, &it.p, &v1);
                if g > best {
                    it.irs.v1 = v1;
                    best = g;
                    progressed = true;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    if best >= 0.0 && it.p != original {
        give_back_power(problem, it, &original);
    }
    repair(problem, it);
    Ok(state(it, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subproblems::{InnerParams, SchemeOptions};
    use crate::sysmodel::{gen_scenario, DtState, IrsConfig, SystemConfig, Topology};

    fn iterate(cfg: &SystemConfig, m: CVec) -> Iterate {
        Iterate {
            m,
            p: vec![cfg.p_o; cfg.k_o],
            e_lo1: vec![0.0; cfg.k_o],
            e_lo2: vec![0.0; cfg.k_o],
            e_es: 0.0,
            w: crate::linalg::CMat::zeros(cfg.m1, cfg.m1),
            irs: IrsConfig::unit(cfg.n),
            t1: 0.5 * cfg.period,
            t2: 0.5 * cfg.period,
        }
    }

    #[test]
    fn recovers_from_orthogonal_receiver() {
        let cfg = SystemConfig { seed: 11, ..SystemConfig::default() };
        let ch = gen_scenario(&cfg, &Topology::default());
        let dt = DtState::zero(cfg.k_o);
        let problem = Problem {
            config: &cfg,
            channels: &ch,
            dt: &dt,
            options: SchemeOptions::default(),
            params: InnerParams::default(),
        };
        // A receiver orthogonal to the first AirComp channel gives zero rate.
        let h = &ch.composite_aircomp(&IrsConfig::unit(cfg.n).v1)[0];
        let mut m = CVec::zeros(cfg.m1);
        m[0] = -h[1].conj();
        m[1] = h[0].conj();
        let mut it = iterate(&cfg, m);
        assert!(margin(&problem, &it.m, &it.p, &it.irs.v1) < 0.0);
        let st = restore_feasibility(&problem, &mut it).unwrap();
        assert!(st.satisfied, "{st:?}");
        let r = it.score(&problem).unwrap();
        assert!(r.r_a > 0.0);
    }
}
