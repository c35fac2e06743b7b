use serde::{Deserialize, Serialize};

use super::SchemeOptions;
use crate::linalg::{golden_section_max, CMat};
use crate::sysmodel::{water_filling_covariance, SystemConfig};

/// Split of the ES power between forwarding to the cloud and computing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsAllocation {
    pub w: CMat,
    /// Power spent on transmission, `tr(W)` (W).
    pub p_w: f64,
    /// Effective ES CPU frequency (cycles/s).
    pub e_es: f64,
    /// ES -> CS rate (bits/s/Hz).
    pub r_c: f64,
    /// Bits per second absorbed in stage 2: `B r_c + e_es / rho`.
    pub throughput: f64,
}

/// The ES covariance and CPU frequency enter the problem only through the
/// stage-2 throughput on the right of the causality constraint, so the best
/// choice maximizes that throughput: water-filling for the link, the rest of
/// the budget on the CPU. The throughput is concave in the transmit power,
/// which is found by golden-section search.
pub fn best_es_allocation(config: &SystemConfig, h_c: &CMat, options: SchemeOptions) -> EsAllocation {
    let m1 = h_c.ncols();
    let cpu = |power: f64| {
        if options.es_compute {
            (power.max(0.0) / config.kappa).cbrt().min(config.f_es_max)
        } else {
            0.0
        }
    };
    let link = |power: f64| {
        if options.cloud_tier {
            water_filling_covariance(h_c, power, config.sigma_c2).1
        } else {
            0.0
        }
    };
    let throughput = |p_w: f64| config.bandwidth * link(p_w) + cpu(config.p_es - p_w) / config.rho;

    let p_w = match (options.cloud_tier, options.es_compute) {
        (false, _) => 0.0,
        (true, false) => config.p_es,
        (true, true) => golden_section_max(0.0, config.p_es, 1e-12 * config.p_es, throughput).0,
    };
    let (w, r_c) = if options.cloud_tier && p_w > 0.0 {
        water_filling_covariance(h_c, p_w, config.sigma_c2)
    } else {
        (CMat::zeros(m1, m1), 0.0)
    };
    let e_es = cpu(config.p_es - p_w);
    EsAllocation { w, p_w, e_es, r_c, throughput: config.bandwidth * r_c + e_es / config.rho }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{gen_scenario, Topology};

    fn setup() -> (SystemConfig, CMat) {
        let cfg = SystemConfig { seed: 9, ..SystemConfig::default() };
        let ch = gen_scenario(&cfg, &Topology::default());
        let h_c = ch.composite_cloud(&crate::sysmodel::IrsConfig::unit(cfg.n).v2);
        (cfg, h_c)
    }

    #[test]
    fn beats_every_split_on_a_grid() {
        let (cfg, h_c) = setup();
        let best = best_es_allocation(&cfg, &h_c, SchemeOptions::default());
        assert!(best.w.trace().re <= cfg.p_es * (1.0 + 1e-12));
        assert!(best.w.trace().re + cfg.kappa * best.e_es.powi(3) <= cfg.p_es * (1.0 + 1e-9));
        for i in 0..=200 {
            let p_w = cfg.p_es * i as f64 / 200.0;
            let r = water_filling_covariance(&h_c, p_w, cfg.sigma_c2).1;
            let f = ((cfg.p_es - p_w) / cfg.kappa).cbrt().min(cfg.f_es_max);
            let v = cfg.bandwidth * r + f / cfg.rho;
            assert!(v <= best.throughput * (1.0 + 1e-9));
        }
    }

    #[test]
    fn single_tier_spends_everything_on_cpu() {
        let (cfg, h_c) = setup();
        let opts = SchemeOptions { cloud_tier: false, ..SchemeOptions::default() };
        let a = best_es_allocation(&cfg, &h_c, opts);
        assert_eq!(a.r_c, 0.0);
        assert_eq!(a.w, CMat::zeros(cfg.m1, cfg.m1));
        assert!((a.e_es - (cfg.p_es / cfg.kappa).cbrt().min(cfg.f_es_max)).abs() < 1e-3);
    }

    #[test]
    fn no_es_compute_spends_everything_on_link() {
        let (cfg, h_c) = setup();
        let opts = SchemeOptions { es_compute: false, ..SchemeOptions::default() };
        let a = best_es_allocation(&cfg, &h_c, opts);
        assert_eq!(a.e_es, 0.0);
        assert!((a.w.trace().re - cfg.p_es).abs() < 1e-12);
    }
}
