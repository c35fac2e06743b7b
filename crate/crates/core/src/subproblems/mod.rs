//! Block subproblems of the alternating optimization: SCA surrogates, the
//! transceiver/power/CPU block, both IRS blocks, the time split,
//! feasibility restoration and phase quantization.
//!
//! All blocks share the [`Problem`] context and operate on an [`Iterate`],
//! which stores *effective* CPU frequencies (assigned minus deviation). The
//! deviation only re-enters when an iterate is turned into a [`Decision`].

mod block1;
mod es;
mod feasibility;
mod irs_v1;
mod irs_v2;
mod quantize;
mod surrogate;
mod time;

pub use block1::{solve_block1, Activeness, Block1Outcome};
pub use es::{best_es_allocation, EsAllocation};
pub(crate) use feasibility::sdr_direction;
pub use feasibility::{restore_feasibility, FeasibilityState};
pub use irs_v1::{solve_v1, V1Outcome};
pub use irs_v2::{element_update, solve_v2, ElementUpdate, V2Outcome};
pub use quantize::{quantize_phases, QuantizationSpec};
pub use surrogate::{surrogate_quad_low, surrogate_ra_low, surrogate_ro_low, AffineBound, QuadBound};
pub use time::{solve_time, TimeCoefficients, TimeSplit};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convexcore::{solve_with, ConvexProgram, SolveResult, SolveSettings};
use crate::error::Result;
use crate::linalg::{CMat, CVec};
use crate::sysmodel::{evaluate, ChannelSet, Decision, DtState, IrsConfig, RateReport, SystemConfig};

/// Slack variables of the reformulated block problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackPoint {
    /// Inverse of the weakest AirComp gain.
    pub s_a: f64,
    /// AirComp interference plus noise.
    pub i_a: f64,
    /// Inverse of the offloading SNR.
    pub s_o: f64,
    /// Reciprocal MEC powers (1/W).
    pub t: Vec<f64>,
}

/// Solver knobs shared by every block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerParams {
    /// Margin on the AirComp rate (bits/s/Hz) standing in for `R_a > 0`.
    pub delta_strict: f64,
    pub inner_max_iter: usize,
    /// Relative improvement below which an inner SCA loop stops.
    pub inner_tol: f64,
    /// Upper bound on the normalized reciprocal power `P_o / p`.
    pub t_max: f64,
    pub v2_grid: usize,
    pub v2_phase_tol: f64,
    pub v2_sweep_tol: f64,
    pub v2_max_sweeps: usize,
    pub feas_max_iter: usize,
}

impl Default for InnerParams {
    fn default() -> Self {
        Self {
            delta_strict: 1e-6,
            inner_max_iter: 30,
            inner_tol: 1e-4,
            t_max: 1e4,
            v2_grid: 256,
            v2_phase_tol: 1e-8,
            v2_sweep_tol: 1e-6,
            v2_max_sweeps: 50,
            feas_max_iter: 50,
        }
    }
}

/// Which resources a scheme may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeOptions {
    pub local_compute: bool,
    pub es_compute: bool,
    pub cloud_tier: bool,
    pub optimize_irs: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { local_compute: true, es_compute: true, cloud_tier: true, optimize_irs: true }
    }
}

/// Everything a block needs besides the iterate.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub config: &'a SystemConfig,
    pub channels: &'a ChannelSet,
    pub dt: &'a DtState,
    pub options: SchemeOptions,
    pub params: InnerParams,
}

/// Current point of the alternating optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    /// Unit-norm receive direction.
    pub m: CVec,
    /// MEC transmit powers (W).
    pub p: Vec<f64>,
    /// Effective UE frequencies per stage (cycles/s).
    pub e_lo1: Vec<f64>,
    pub e_lo2: Vec<f64>,
    /// Effective ES frequency (cycles/s).
    pub e_es: f64,
    pub w: CMat,
    pub irs: IrsConfig,
    pub t1: f64,
    pub t2: f64,
}

impl Iterate {
    /// Turns the iterate into a decision with uniform-forcing transceiver.
    pub fn to_decision(&self, problem: &Problem<'_>) -> Result<Decision> {
        let config = problem.config;
        let dt = problem.dt;
        let mut d = Decision {
            m: self.m.clone(),
            eta: 0.0,
            b: vec![Complex64::new(0.0, 0.0); config.k_a],
            p: self.p.clone(),
            w: self.w.clone(),
            f_lo1: self.e_lo1.iter().zip(&dt.f_hat_lo).map(|(e, f)| e + f).collect(),
            f_lo2: self.e_lo2.iter().zip(&dt.f_hat_lo).map(|(e, f)| e + f).collect(),
            f_es: self.e_es + dt.f_hat_es,
            t1: self.t1,
            t2: self.t2,
        };
        crate::sysmodel::apply_uniform_forcing(config, problem.channels, &self.irs, &mut d)?;
        Ok(d)
    }

    pub fn score(&self, problem: &Problem<'_>) -> Result<RateReport> {
        let d = self.to_decision(problem)?;
        evaluate(problem.config, problem.channels, &self.irs, problem.dt, &d)
    }
}

/// Frequency normalization `F_unit = (P_o / kappa)^(1/3)`: a UE spending its
/// whole budget on computing runs at `F_unit` effective cycles/s.
pub(crate) fn ue_freq_unit(config: &SystemConfig) -> f64 {
    (config.p_o / config.kappa).cbrt()
}

/// Largest effective UE frequency reachable with power `budget`.
pub(crate) fn ue_freq_for_power(config: &SystemConfig, k: usize, budget: f64) -> f64 {
    (budget.max(0.0) / config.kappa).cbrt().min(config.f_lo_max[k])
}

/// Channel gains normalized so that powers are in units of their budgets and
/// noise is one.
pub(crate) struct Scaled {
    pub h_a: Vec<CVec>,
    pub h_o: Vec<CVec>,
    /// `||h_o||^2` after scaling.
    pub g_o: Vec<f64>,
}

impl Scaled {
    pub fn new(config: &SystemConfig, channels: &ChannelSet, v1: &CVec) -> Self {
        let sa = Complex64::new((config.p_a / config.sigma_e2).sqrt(), 0.0);
        let so = Complex64::new((config.p_o / config.sigma_e2).sqrt(), 0.0);
        let h_a: Vec<CVec> = channels.composite_aircomp(v1).into_iter().map(|h| h * sa).collect();
        let h_o: Vec<CVec> = channels.composite_mec(v1).into_iter().map(|h| h * so).collect();
        let g_o = h_o.iter().map(|h| h.norm_squared()).collect();
        Self { h_a, h_o, g_o }
    }

    /// Exact normalized AirComp MSE for receive direction `m` and
    /// normalized powers `p_hat = p / P_o`.
    pub fn mse(&self, m: &CVec, p_hat: &[f64]) -> f64 {
        let signal = self.h_a.iter().map(|h| m.dotc(h).norm_sqr()).fold(f64::INFINITY, f64::min);
        let interference: f64 = self.h_o.iter().zip(p_hat).map(|(h, p)| p * m.dotc(h).norm_sqr()).sum::<f64>();
        (interference + m.norm_squared()) / signal
    }
}

/// Bits per second the ES can absorb in stage 2: forwarding plus computing.
pub(crate) fn es_throughput(config: &SystemConfig, r_c: f64, e_es: f64) -> f64 {
    config.bandwidth * r_c + e_es / config.rho
}

/// Largest offloading SNR `sum p_k ||h_o||^2 / sigma^2` allowed by
/// causality, or infinity when stage 1 is empty.
pub(crate) fn causal_snr_cap(config: &SystemConfig, t1: f64, t2: f64, throughput: f64) -> f64 {
    if t1 <= 0.0 {
        return f64::INFINITY;
    }
    let bits = t2 * throughput / (t1 * config.bandwidth);
    if bits > 1000.0 {
        f64::INFINITY
    } else {
        bits.exp2() - 1.0
    }
}

/// Block programs are re-checked against the exact model before any step
/// is accepted, so they tolerate a looser residual than the solver default.
pub(crate) fn solve_block(program: &ConvexProgram) -> Result<SolveResult> {
    let settings = SolveSettings { max_residual: 1e-5, ..SolveSettings::default() };
    solve_with(program, &settings)
}

/// Causality cap for the current ES allocation and time split of `it`.
pub(crate) fn snr_cap_of(problem: &Problem<'_>, it: &Iterate) -> Result<f64> {
    let config = problem.config;
    let r_c = crate::sysmodel::es_cs_rate(&problem.channels.composite_cloud(&it.irs.v2), &it.w, config.sigma_c2)?;
    Ok(causal_snr_cap(config, it.t1, it.t2, es_throughput(config, r_c, it.e_es)))
}

/// Pulls an iterate back into the feasible set after numerical round-off
/// or a change of channels: clamps frequencies and powers to their budgets
/// and scales MEC powers down until causality holds with the true rates.
pub(crate) fn repair(problem: &Problem<'_>, it: &mut Iterate) {
    let config = problem.config;
    let h_c = problem.channels.composite_cloud(&it.irs.v2);
    let r_c = crate::sysmodel::es_cs_rate(&h_c, &it.w, config.sigma_c2).unwrap_or(0.0);
    for k in 0..config.k_o {
        it.e_lo1[k] = it.e_lo1[k].clamp(0.0, ue_freq_for_power(config, k, config.p_o));
        it.e_lo2[k] = it.e_lo2[k].clamp(0.0, ue_freq_for_power(config, k, config.p_o));
        let budget = config.p_o - config.kappa * it.e_lo1[k].powi(3);
        it.p[k] = it.p[k].clamp(0.0, budget.max(0.0));
    }
    it.e_es = it.e_es.clamp(0.0, config.f_es_max);

    let cap = causal_snr_cap(config, it.t1, it.t2, es_throughput(config, r_c, it.e_es));
    let h_o = problem.channels.composite_mec(&it.irs.v1);
    let snr: f64 = h_o.iter().zip(&it.p).map(|(h, p)| p * h.norm_squared() / config.sigma_e2).sum();
    if snr > cap {
        let s = cap / snr * (1.0 - 1e-12);
        it.p.iter_mut().for_each(|p| *p *= s);
    }
}

/// Best time split for the rates of `it`.
pub fn retime(problem: &Problem<'_>, it: &mut Iterate) -> Result<()> {
    let config = problem.config;
    let mut probe = it.clone();
    probe.t1 = 1.0;
    probe.t2 = 1.0;
    // Rates do not depend on the split, so score a unit split with
    // causality ignored.
    let r = probe.score(problem)?;
    let offload = config.bandwidth * r.sum_r_e;
    let coef = TimeCoefficients {
        stage1: config.w_a * config.aircomp_scale() * r.r_a + config.w_o * (offload + r.r_lo1.iter().sum::<f64>()),
        stage2: config.w_o * r.r_lo2.iter().sum::<f64>(),
        offload,
        es_throughput: config.bandwidth * r.r_c + r.r_es,
    };
    let split = solve_time(&coef, config.period);
    it.t1 = split.t1;
    it.t2 = split.t2;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{gen_scenario, Topology};

    #[test]
    fn scaled_mse_matches_uniform_forcing() {
        let cfg = SystemConfig { seed: 4, ..SystemConfig::default() };
        let ch = gen_scenario(&cfg, &Topology::default());
        let irs = IrsConfig::unit(cfg.n);
        let sc = Scaled::new(&cfg, &ch, &irs.v1);
        let m = sc.h_a.iter().fold(CVec::zeros(cfg.m1), |a, h| a + h);
        let p = vec![0.3 * cfg.p_o; cfg.k_o];
        let p_hat: Vec<f64> = p.iter().map(|p| p / cfg.p_o).collect();
        let uf = crate::sysmodel::uniform_forcing(
            &ch.composite_aircomp(&irs.v1),
            &ch.composite_mec(&irs.v1),
            &m,
            cfg.p_a,
            &p,
            cfg.sigma_e2,
        )
        .unwrap();
        let got = sc.mse(&m, &p_hat);
        assert!((got - uf.mse).abs() <= 1e-9 * uf.mse);
    }

    #[test]
    fn causal_cap_inverts_rate() {
        let cfg = SystemConfig::default();
        let cap = causal_snr_cap(&cfg, 0.5, 0.5, 3e6);
        assert!(((1.0 + cap).log2() * 0.5 * cfg.bandwidth - 0.5 * 3e6).abs() < 1e-6);
        assert!(causal_snr_cap(&cfg, 0.0, 1.0, 1.0).is_infinite());
    }
}
