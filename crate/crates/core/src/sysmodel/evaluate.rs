use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::channels::{composite_channels, ChannelSet, IrsConfig};
use super::config::{DtState, SystemConfig};
use super::rates::{aircomp_mse, aircomp_rate, es_cs_rate, offload_rates, uniform_forcing};
use super::{POWER_TOL, TIME_TOL};
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian_psd, CMat, CVec};

/// Every optimization variable of the joint design plus the derived AirComp
/// transceiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Unnormalized ES receive vector; the decoder is `m / sqrt(eta)`.
    pub m: CVec,
    pub eta: f64,
    /// AirComp transmit scalars.
    pub b: Vec<Complex64>,
    /// MEC transmit powers (W).
    pub p: Vec<f64>,
    /// ES transmit covariance, M1 x M1.
    pub w: CMat,
    pub f_lo1: Vec<f64>,
    pub f_lo2: Vec<f64>,
    pub f_es: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Decision {
    /// Everything off: no transmission, no computing, no time.
    pub fn zero(config: &SystemConfig, dt: &DtState) -> Self {
        Self {
            m: CVec::zeros(config.m1),
            eta: 0.0,
            b: vec![Complex64::new(0.0, 0.0); config.k_a],
            p: vec![0.0; config.k_o],
            w: CMat::zeros(config.m1, config.m1),
            f_lo1: dt.f_hat_lo.clone(),
            f_lo2: dt.f_hat_lo.clone(),
            f_es: dt.f_hat_es,
            t1: 0.0,
            t2: 0.0,
        }
    }

    /// Reciprocal powers `t_k = 1 / p_k`.
    pub fn reciprocal_powers(&self) -> Vec<f64> {
        self.p.iter().map(|p| 1.0 / p).collect()
    }

    fn validate(&self, config: &SystemConfig) -> Result<()> {
        if self.m.len() != config.m1 || self.w.shape() != (config.m1, config.m1) {
            return Err(Error::dims("Decision receive/covariance", config.m1, self.m.len()));
        }
        if self.b.len() != config.k_a {
            return Err(Error::dims("Decision.b", config.k_a, self.b.len()));
        }
        if self.p.len() != config.k_o || self.f_lo1.len() != config.k_o || self.f_lo2.len() != config.k_o {
            return Err(Error::dims("Decision MEC vectors", config.k_o, self.p.len()));
        }
        Ok(())
    }
}

/// Constraint satisfaction flags of one evaluated decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `R_a > 0`.
    pub aircomp_rate: bool,
    /// `|b_k|^2 <= P_a`.
    pub aircomp_power: bool,
    /// `p_k + kappa (f_lo1 - f_hat)^3 <= P_o`.
    pub ue_power_stage1: bool,
    /// `kappa (f_lo2 - f_hat)^3 <= P_o`.
    pub ue_power_stage2: bool,
    /// `tr(W) + kappa (f_es - f_hat_es)^3 <= P_es`.
    pub es_power: bool,
    /// Effective frequencies within `[0, cap]`.
    pub cpu_caps: bool,
    /// `T1, T2 >= 0` and `T1 + T2 <= T`.
    pub time: bool,
    /// Offloaded bits do not exceed what the ES can compute or forward.
    pub causality: bool,
    /// `W` Hermitian PSD.
    pub covariance: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.aircomp_rate
            && self.aircomp_power
            && self.ue_power_stage1
            && self.ue_power_stage2
            && self.es_power
            && self.cpu_caps
            && self.time
            && self.causality
            && self.covariance
    }
}

/// Evaluated performance of a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub mse_a: f64,
    /// AirComp rate (bits/s/Hz).
    pub r_a: f64,
    /// Per-user offloading rates for ascending-index SIC (bits/s/Hz).
    pub r_e: Vec<f64>,
    pub sum_r_e: f64,
    /// ES -> CS rate (bits/s/Hz).
    pub r_c: f64,
    /// Local computing rates per stage (bits/s).
    pub r_lo1: Vec<f64>,
    pub r_lo2: Vec<f64>,
    /// ES computing rate (bits/s).
    pub r_es: f64,
    /// Offloaded bits credited to the objective.
    pub credited_offload: f64,
    /// MEC computing volume (bits).
    pub r_mec: f64,
    /// Weighted objective (bits).
    pub r_total: f64,
    /// ES-side capacity minus offloaded bits (bits).
    pub causality_slack: f64,
    pub feasibility: Feasibility,
}

struct Frequencies<'a> {
    /// Deviations assumed by the power accounting.
    power_dev_lo: &'a [f64],
    power_dev_es: f64,
    /// Deviations that determine the achieved computing rates.
    rate_dev_lo: &'a [f64],
    rate_dev_es: f64,
}

fn evaluate_with(
    config: &SystemConfig,
    channels: &ChannelSet,
    irs: &IrsConfig,
    decision: &Decision,
    freqs: Frequencies<'_>,
    clip_offload: bool,
) -> Result<RateReport> {
    channels.validate(config)?;
    decision.validate(config)?;
    let comp = composite_channels(channels, irs)?;
    let (t1, t2) = (decision.t1, decision.t2);
    let bw = config.bandwidth;

    let mse_a = if decision.eta > 0.0 {
        let a = decision.m.unscale(decision.eta.sqrt());
        aircomp_mse(&comp.h_a, &comp.h_o, &a, &decision.b, &decision.p, config.sigma_e2)?
    } else {
        config.k_a as f64
    };
    let r_a = aircomp_rate(mse_a);
    let p_clamped: Vec<f64> = decision.p.iter().map(|p| p.max(0.0)).collect();
    let offload = offload_rates(&comp.h_o, &p_clamped, config.sigma_e2)?;
    let covariance_ok = check_hermitian_psd(&decision.w, "transmit covariance").is_ok();
    let r_c = if covariance_ok { es_cs_rate(&comp.h_c, &decision.w, config.sigma_c2)? } else { 0.0 };

    let effective = |f: f64, dev: f64| f - dev;
    let mut cpu_ok = true;
    let mut check_cap = |eff: f64, cap: f64| {
        if eff < -1e-9 * cap || eff > cap * (1.0 + 1e-9) {
            cpu_ok = false;
        }
    };
    for k in 0..config.k_o {
        check_cap(effective(decision.f_lo1[k], freqs.power_dev_lo[k]), config.f_lo_max[k]);
        check_cap(effective(decision.f_lo2[k], freqs.power_dev_lo[k]), config.f_lo_max[k]);
    }
    check_cap(effective(decision.f_es, freqs.power_dev_es), config.f_es_max);

    let cpu_power = |f: f64, dev: f64| config.kappa * effective(f, dev).max(0.0).powi(3);
    let ue1_ok = (0..config.k_o).all(|k| {
        decision.p[k] >= 0.0
            && decision.p[k] + cpu_power(decision.f_lo1[k], freqs.power_dev_lo[k]) <= config.p_o + POWER_TOL
    });
    let ue2_ok = (0..config.k_o).all(|k| cpu_power(decision.f_lo2[k], freqs.power_dev_lo[k]) <= config.p_o + POWER_TOL);
    let es_ok = decision.w.trace().re + cpu_power(decision.f_es, freqs.power_dev_es) <= config.p_es + POWER_TOL;
    let b_ok = decision.b.iter().all(|b| b.norm_sqr() <= config.p_a + POWER_TOL);

    let rate = |f: f64, dev: f64| (f - dev).max(0.0) / config.rho;
    let r_lo1: Vec<f64> = (0..config.k_o).map(|k| rate(decision.f_lo1[k], freqs.rate_dev_lo[k])).collect();
    let r_lo2: Vec<f64> = (0..config.k_o).map(|k| rate(decision.f_lo2[k], freqs.rate_dev_lo[k])).collect();
    let r_es = rate(decision.f_es, freqs.rate_dev_es);

    let offloaded = t1 * bw * offload.per_user.iter().sum::<f64>();
    let capacity = t2 * bw * r_c + t2 * r_es;
    let causality_slack = capacity - offloaded;
    let credited_offload = if clip_offload { offloaded.min(capacity.max(0.0)) } else { offloaded };
    let local: f64 = (0..config.k_o).map(|k| t1 * r_lo1[k] + t2 * r_lo2[k]).sum();
    let r_mec = credited_offload + local;
    let r_total = config.w_a * t1 * config.aircomp_scale() * r_a + config.w_o * r_mec;

    let time_ok = t1 >= -TIME_TOL && t2 >= -TIME_TOL && t1 + t2 <= config.period + TIME_TOL;
    let causality_ok = causality_slack >= -1e-9 * offloaded.max(1.0);

    Ok(RateReport {
        mse_a,
        r_a,
        r_e: offload.per_user,
        sum_r_e: offload.sum,
        r_c,
        r_lo1,
        r_lo2,
        r_es,
        credited_offload,
        r_mec,
        r_total,
        causality_slack,
        feasibility: Feasibility {
            aircomp_rate: r_a > 0.0,
            aircomp_power: b_ok,
            ue_power_stage1: ue1_ok,
            ue_power_stage2: ue2_ok,
            es_power: es_ok,
            cpu_caps: cpu_ok,
            time: time_ok,
            causality: causality_ok,
            covariance: covariance_ok,
        },
    })
}

/// Exact evaluation of a decision with the digital twin's deviations known
/// to the designer. Infeasibility is reported through the flags.
pub fn evaluate(
    config: &SystemConfig,
    channels: &ChannelSet,
    irs: &IrsConfig,
    dt: &DtState,
    decision: &Decision,
) -> Result<RateReport> {
    dt.validate(config)?;
    let freqs = Frequencies {
        power_dev_lo: &dt.f_hat_lo,
        power_dev_es: dt.f_hat_es,
        rate_dev_lo: &dt.f_hat_lo,
        rate_dev_es: dt.f_hat_es,
    };
    evaluate_with(config, channels, irs, decision, freqs, false)
}

/// Scores a decision designed without twin assistance: power is accounted
/// as `kappa f^3` on the assigned frequency, while the achieved computing
/// rates lose the true deviation. Offloaded bits beyond what the ES can
/// actually compute or forward are not credited.
pub fn evaluate_no_dt(
    config: &SystemConfig,
    channels: &ChannelSet,
    irs: &IrsConfig,
    true_dt: &DtState,
    decision: &Decision,
) -> Result<RateReport> {
    true_dt.validate(config)?;
    let zero = vec![0.0; config.k_o];
    let freqs = Frequencies {
        power_dev_lo: &zero,
        power_dev_es: 0.0,
        rate_dev_lo: &true_dt.f_hat_lo,
        rate_dev_es: true_dt.f_hat_es,
    };
    evaluate_with(config, channels, irs, decision, freqs, true)
}

/// Fills `eta` and `b` from the receive vector with uniform forcing.
pub fn apply_uniform_forcing(
    config: &SystemConfig,
    channels: &ChannelSet,
    irs: &IrsConfig,
    decision: &mut Decision,
) -> Result<()> {
    let h_a = channels.composite_aircomp(&irs.v1);
    let h_o = channels.composite_mec(&irs.v1);
    let uf = uniform_forcing(&h_a, &h_o, &decision.m, config.p_a, &decision.p, config.sigma_e2)?;
    decision.eta = uf.eta;
    decision.b = uf.b;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{gen_scenario, local_rate, Topology};
    use approx::assert_relative_eq;

    fn setup() -> (SystemConfig, ChannelSet, IrsConfig) {
        let mut cfg = SystemConfig { k_a: 4, m1: 3, m2: 2, n: 4, seed: 17, ..SystemConfig::default() };
        cfg.set_k_o(3);
        let ch = gen_scenario(&cfg, &Topology::default());
        (cfg, ch, IrsConfig::unit(4))
    }

    fn feasible_decision(cfg: &SystemConfig, ch: &ChannelSet, irs: &IrsConfig, dt: &DtState) -> Decision {
        let h_a = ch.composite_aircomp(&irs.v1);
        let mut m = h_a.iter().fold(CVec::zeros(cfg.m1), |acc, h| acc + h);
        m = m.unscale(m.norm());
        let p = vec![cfg.p_o * 0.01; cfg.k_o];
        let phi = (0.5 * cfg.p_o / cfg.kappa).cbrt();
        let mut d = Decision {
            m,
            eta: 0.0,
            b: vec![],
            p,
            w: CMat::identity(cfg.m1, cfg.m1).scale(cfg.p_es / 2.0 / cfg.m1 as f64),
            f_lo1: dt.f_hat_lo.iter().map(|d| d + phi).collect(),
            f_lo2: dt.f_hat_lo.iter().map(|d| d + phi).collect(),
            f_es: dt.f_hat_es + (0.4 * cfg.p_es / cfg.kappa).cbrt(),
            t1: 0.6,
            t2: 0.4,
        };
        apply_uniform_forcing(cfg, ch, irs, &mut d).unwrap();
        d
    }

    #[test]
    fn idle_system_is_zero() {
        let (cfg, ch, irs) = setup();
        let dt = DtState::from_fractions(&cfg, 0.1, 0.1);
        let mut d = Decision::zero(&cfg, &dt);
        d.t1 = 0.5;
        d.t2 = 0.5;
        let r = evaluate(&cfg, &ch, &irs, &dt, &d).unwrap();
        assert_eq!(r.r_total, 0.0);
        assert_eq!(r.sum_r_e, 0.0);
        assert!(r.r_lo1.iter().chain(&r.r_lo2).all(|&x| x == 0.0));
        assert!(r.causality_slack >= 0.0);
    }

    #[test]
    fn power_violation_is_flagged_not_thrown() {
        let (cfg, ch, irs) = setup();
        let dt = DtState::zero(cfg.k_o);
        let mut d = feasible_decision(&cfg, &ch, &irs, &dt);
        let r_ok = evaluate(&cfg, &ch, &irs, &dt, &d).unwrap();
        assert!(r_ok.feasibility.ue_power_stage1);
        d.p[0] = 2.0 * cfg.p_o;
        let r = evaluate(&cfg, &ch, &irs, &dt, &d).unwrap();
        assert!(!r.feasibility.ue_power_stage1);
        assert!(r.sum_r_e > r_ok.sum_r_e);
    }

    #[test]
    fn total_is_recomputable_from_parts() {
        let (cfg, ch, irs) = setup();
        let dt = DtState::from_fractions(&cfg, 0.1, 0.1);
        let d = feasible_decision(&cfg, &ch, &irs, &dt);
        let r = evaluate(&cfg, &ch, &irs, &dt, &d).unwrap();

        // Independent recomputation from the individual rate operations.
        let h_a = ch.composite_aircomp(&irs.v1);
        let h_o = ch.composite_mec(&irs.v1);
        let uf = uniform_forcing(&h_a, &h_o, &d.m, cfg.p_a, &d.p, cfg.sigma_e2).unwrap();
        let r_a = aircomp_rate(uf.mse);
        let off = offload_rates(&h_o, &d.p, cfg.sigma_e2).unwrap();
        let mut total = cfg.w_a * d.t1 * cfg.bandwidth * r_a;
        for k in 0..cfg.k_o {
            let lo1 = local_rate(d.f_lo1[k], dt.f_hat_lo[k], cfg.rho).unwrap();
            let lo2 = local_rate(d.f_lo2[k], dt.f_hat_lo[k], cfg.rho).unwrap();
            total += cfg.w_o * (d.t1 * cfg.bandwidth * off.per_user[k] + d.t1 * lo1 + d.t2 * lo2);
        }
        assert_relative_eq!(r.r_total, total, max_relative = 1e-9);
        assert_relative_eq!(r.r_a, r_a, max_relative = 1e-9);
        let h_c = ch.composite_cloud(&irs.v2);
        let r_c = es_cs_rate(&h_c, &d.w, cfg.sigma_c2).unwrap();
        let r_es = local_rate(d.f_es, dt.f_hat_es, cfg.rho).unwrap();
        let slack = d.t2 * cfg.bandwidth * r_c + d.t2 * r_es - d.t1 * cfg.bandwidth * off.sum;
        assert_relative_eq!(r.causality_slack, slack, max_relative = 1e-9);
    }

    #[test]
    fn no_dt_reduces_to_evaluate_without_deviation() {
        let (cfg, ch, irs) = setup();
        let dt = DtState::zero(cfg.k_o);
        let d = feasible_decision(&cfg, &ch, &irs, &dt);
        let a = evaluate(&cfg, &ch, &irs, &dt, &d).unwrap();
        let b = evaluate_no_dt(&cfg, &ch, &irs, &dt, &d).unwrap();
        if a.feasibility.causality {
            assert_relative_eq!(a.r_total, b.r_total, max_relative = 1e-12);
        }
    }

    #[test]
    fn no_dt_achieved_rate_loses_deviation() {
        let (mut cfg, ch, irs) = setup();
        cfg.set_uniform_ue_cap(1e9);
        let dt_true = DtState::from_fractions(&cfg, 0.1, 0.0);
        let mut d = feasible_decision(&cfg, &ch, &irs, &DtState::zero(cfg.k_o));
        d.f_lo1 = vec![1e9; cfg.k_o];
        d.f_lo2 = vec![1e9; cfg.k_o];
        let r = evaluate_no_dt(&cfg, &ch, &irs, &dt_true, &d).unwrap();
        assert_relative_eq!(r.r_lo1[0], 1.8e6, max_relative = 1e-12);
        let designed = evaluate(&cfg, &ch, &irs, &DtState::zero(cfg.k_o), &d).unwrap();
        assert_relative_eq!(designed.r_lo1[0], 2e6, max_relative = 1e-12);
    }

    #[test]
    fn no_dt_total_non_increasing_in_deviation() {
        let (cfg, ch, irs) = setup();
        let d = feasible_decision(&cfg, &ch, &irs, &DtState::zero(cfg.k_o));
        let mut last = f64::INFINITY;
        for step in 0..=6 {
            let frac = 0.05 * step as f64;
            let dt = DtState::from_fractions(&cfg, frac, frac);
            let r = evaluate_no_dt(&cfg, &ch, &irs, &dt, &d).unwrap();
            assert!(r.r_total <= last + 1e-9 * last.abs().min(1e300));
            last = r.r_total;
        }
    }

    #[test]
    fn aircomp_rate_consistent_with_uniform_forcing() {
        let (cfg, ch, irs) = setup();
        let dt = DtState::zero(cfg.k_o);
        let d = feasible_decision(&cfg, &ch, &irs, &dt);
        let r = evaluate(&cfg, &ch, &irs, &dt, &d).unwrap();
        let h_a = ch.composite_aircomp(&irs.v1);
        let h_o = ch.composite_mec(&irs.v1);
        let uf = uniform_forcing(&h_a, &h_o, &d.m, cfg.p_a, &d.p, cfg.sigma_e2).unwrap();
        assert_relative_eq!(r.mse_a, uf.mse, max_relative = 1e-9);
        assert!(r.feasibility.aircomp_power);
    }

    #[test]
    fn same_inputs_same_report() {
        let (cfg, ch, irs) = setup();
        let dt = DtState::zero(cfg.k_o);
        let d = feasible_decision(&cfg, &ch, &irs, &dt);
        assert_eq!(evaluate(&cfg, &ch, &irs, &dt, &d).unwrap(), evaluate(&cfg, &ch, &irs, &dt, &d).unwrap());
    }
}
