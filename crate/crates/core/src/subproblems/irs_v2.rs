use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::InnerParams;
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian_psd, cis, golden_section_max, hermitian_eigen, log2_det_hpd, CMat, CVec};
use crate::sysmodel::{es_cs_rate, ChannelSet};

/// `r_c` as a function of element `n` alone:
/// `log2 det(A_n + v B_n + conj(v) B_n^H)` for `|v| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementUpdate {
    pub n: usize,
    pub a_n: CMat,
    pub b_n: CMat,
}

impl ElementUpdate {
    pub fn rate(&self, v: Complex64) -> f64 {
        let m = &self.a_n + &self.b_n * v + self.b_n.adjoint() * v.conj();
        log2_det_hpd(&m).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Square root factor `U Sigma^(1/2)` of a PSD covariance.
fn covariance_factor(w: &CMat) -> CMat {
    let (vals, u) = hermitian_eigen(w);
    let mut s = u;
    for (j, mut col) in s.column_iter_mut().enumerate() {
        col *= Complex64::new(vals[j].max(0.0).sqrt(), 0.0);
    }
    s
}

fn element_from_factor(channels: &ChannelSet, s: &CMat, v2: &CVec, n: usize, sigma_c2: f64) -> ElementUpdate {
    let m2 = channels.m2();
    let m = channels.composite_cloud(v2) * s;
    let g = channels.g_c.column(n).into_owned();
    // f'^H = F_c[n, :] U Sigma^(1/2), kept as a row.
    let f_row = channels.f_c.row(n) * s;
    let m_minus = &m - (&g * &f_row) * v2[n];
    let f_norm2 = f_row.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let inv = Complex64::new(1.0 / sigma_c2, 0.0);
    let a_n = CMat::identity(m2, m2)
        + (&m_minus * m_minus.adjoint() + (&g * g.adjoint()) * Complex64::new(f_norm2, 0.0)) * inv;
    let b_n = (&g * (&f_row * m_minus.adjoint())) * inv;
    ElementUpdate { n, a_n, b_n }
}

/// Builds `A_n` and `B_n` for element `n` with all other elements fixed.
pub fn element_update(channels: &ChannelSet, w: &CMat, v2: &CVec, n: usize, sigma_c2: f64) -> Result<ElementUpdate> {
    check_hermitian_psd(w, "transmit covariance")?;
    if n >= channels.n() || v2.len() != channels.n() {
        return Err(Error::dims("element_update", channels.n(), v2.len().max(n + 1)));
    }
    let s = covariance_factor(w);
    Ok(element_from_factor(channels, &s, v2, n, sigma_c2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V2Outcome {
    pub v2: CVec,
    pub r_c: f64,
    pub sweeps: usize,
}

/// Best phase for one element: grid search then golden-section refinement
/// around the best grid point. Falls back to the current phase when nothing
/// beats it.
fn best_phase(upd: &ElementUpdate, current: Complex64, params: &InnerParams) -> (Complex64, f64) {
    let current_rate = upd.rate(current);
    let step = TAU / params.v2_grid as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..params.v2_grid {
        let theta = i as f64 * step;
        let r = upd.rate(cis(theta));
        if r > best.1 {
            best = (theta, r);
        }
    }
    let (theta, r) = golden_section_max(best.0 - step, best.0 + step, params.v2_phase_tol, |t| upd.rate(cis(t)));
    let (theta, r) = if r >= best.1 { (theta, r) } else { best };
    if r > current_rate {
        (cis(theta), r)
    } else {
        (current, current_rate)
    }
}

/// Element-wise ascent on `r_c` over the second-hop phases with `W` fixed.
pub fn solve_v2(
    channels: &ChannelSet,
    w: &CMat,
    anchor: &CVec,
    sigma_c2: f64,
    params: &InnerParams,
) -> Result<V2Outcome> {
    let h_c = channels.composite_cloud(anchor);
    let mut r_c = es_cs_rate(&h_c, w, sigma_c2)?;
    let mut v2 = anchor.clone();
    if w.iter().all(|z| z.norm() == 0.0) {
        return Ok(V2Outcome { v2, r_c, sweeps: 0 });
    }
    let s = covariance_factor(w);
    let mut sweeps = 0;
    while sweeps < params.v2_max_sweeps {
        sweeps += 1;
        let before = r_c;
        for n in 0..channels.n() {
            let upd = element_from_factor(channels, &s, &v2, n, sigma_c2);
            let (v, r) = best_phase(&upd, v2[n], params);
            v2[n] = v;
            r_c = r;
        }
        if r_c - before <= params.v2_sweep_tol * before.abs().max(1e-12) {
            break;
        }
    }
    // Report the rate recomputed from scratch rather than the running value.
    let r_c = es_cs_rate(&channels.composite_cloud(&v2), w, sigma_c2)?;
    Ok(V2Outcome { v2, r_c, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{gen_scenario, SystemConfig, Topology};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, seed: u64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig { n, m1: 3, m2: 2, seed, ..SystemConfig::default() };
        (cfg.clone(), gen_scenario(&cfg, &Topology::default()))
    }

    #[test]
    fn element_form_reproduces_rate() {
        let (cfg, ch) = setup(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v2 = CVec::from_fn(4, |_, _| cis(rng.gen::<f64>() * TAU));
        let (w, _) = crate::sysmodel::water_filling_covariance(&ch.h_c, 0.05, cfg.sigma_c2);
        for n in 0..4 {
            let upd = element_update(&ch, &w, &v2, n, cfg.sigma_c2).unwrap();
            for theta in [0.0, 1.0, 2.5, 5.0] {
                let mut v = v2.clone();
                v[n] = cis(theta);
                let direct = es_cs_rate(&ch.composite_cloud(&v), &w, cfg.sigma_c2).unwrap();
                let via = upd.rate(cis(theta));
                assert!((direct - via).abs() < 1e-9 * direct.max(1.0), "{direct} vs {via}");
            }
            assert!(crate::linalg::hermitian_defect(&upd.a_n) < 1e-9 * upd.a_n.norm());
        }
    }

    #[test]
    fn zero_covariance_is_constant() {
        let (cfg, ch) = setup(3, 1);
        let w = CMat::zeros(cfg.m1, cfg.m1);
        let v = CVec::from_element(3, Complex64::new(1.0, 0.0));
        let out = solve_v2(&ch, &w, &v, cfg.sigma_c2, &InnerParams::default()).unwrap();
        assert_eq!(out.r_c, 0.0);
        assert!(out.v2.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn scalar_coherent_combining() {
        // H_c = 1, g f' = 1 with unit power: best phase 0 and r_c = log2(1 + 4/sigma^2).
        let one = Complex64::new(1.0, 0.0);
        let ch = ChannelSet {
            h_a: vec![],
            h_o: vec![],
            f_a: vec![],
            f_o: vec![],
            g_e: CMat::zeros(1, 1),
            h_c: CMat::from_element(1, 1, one),
            g_c: CMat::from_element(1, 1, one),
            f_c: CMat::from_element(1, 1, one),
        };
        let sigma2 = 0.5;
        let w = CMat::from_element(1, 1, one);
        let start = CVec::from_element(1, cis(2.0));
        let out = solve_v2(&ch, &w, &start, sigma2, &InnerParams::default()).unwrap();
        assert!(out.v2[0].arg().abs() < 1e-6);
        assert!((out.r_c - (1.0 + 4.0 / sigma2).log2()).abs() < 1e-9);
    }

    #[test]
    fn sweeps_never_decrease_rate() {
        let (cfg, ch) = setup(6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v2 = CVec::from_fn(6, |_, _| cis(rng.gen::<f64>() * TAU));
        let (w, _) = crate::sysmodel::water_filling_covariance(&ch.h_c, 0.05, cfg.sigma_c2);
        let before = es_cs_rate(&ch.composite_cloud(&v2), &w, cfg.sigma_c2).unwrap();
        let out = solve_v2(&ch, &w, &v2, cfg.sigma_c2, &InnerParams::default()).unwrap();
        assert!(out.r_c >= before - 1e-12);
    }
}
