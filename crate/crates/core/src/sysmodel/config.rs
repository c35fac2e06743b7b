use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Scalar system parameters, all in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of AirComp (monitoring) UEs.
    pub k_a: usize,
    /// Number of MEC (offloading) UEs; may be zero.
    pub k_o: usize,
    /// Antennas at the edge server.
    pub m1: usize,
    /// Antennas at the cloud server.
    pub m2: usize,
    /// IRS elements.
    pub n: usize,
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Frame period (s).
    pub period: f64,
    /// AirComp UE power budget (W).
    pub p_a: f64,
    /// MEC UE power budget (W).
    pub p_o: f64,
    /// Edge server power budget (W).
    pub p_es: f64,
    /// Noise power at the edge server (W).
    pub sigma_e2: f64,
    /// Noise power at the cloud server (W).
    pub sigma_c2: f64,
    /// CPU cycles per bit.
    pub rho: f64,
    /// CPU energy coefficient (W s^3 / cycle^3).
    pub kappa: f64,
    pub w_a: f64,
    pub w_o: f64,
    /// Effective CPU frequency cap per MEC UE (cycles/s).
    pub f_lo_max: Vec<f64>,
    /// Effective CPU frequency cap at the edge server (cycles/s).
    pub f_es_max: f64,
    /// Phase quantization bits, when the IRS is discrete.
    pub l_bits: Option<u32>,
    pub seed: u64,
    /// Whether the AirComp term of the objective is scaled by the bandwidth.
    pub aircomp_bandwidth: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let k_o = 5;
        Self {
            k_a: 20,
            k_o,
            m1: 5,
            m2: 5,
            n: 10,
            bandwidth: 1e6,
            period: 1.0,
            p_a: dbm_to_watts(5.0),
            p_o: dbm_to_watts(5.0),
            p_es: dbm_to_watts(20.0),
            sigma_e2: dbm_to_watts(-80.0),
            sigma_c2: dbm_to_watts(-80.0),
            rho: 500.0,
            kappa: 1e-28,
            w_a: 0.5,
            w_o: 0.5,
            f_lo_max: vec![DEFAULT_F_LO_MAX; k_o],
            f_es_max: DEFAULT_F_ES_MAX,
            l_bits: None,
            seed: 1,
            aircomp_bandwidth: true,
        }
    }
}

/// Default UE CPU cap (cycles/s).
pub const DEFAULT_F_LO_MAX: f64 = 1e9;
/// Default edge-server CPU cap (cycles/s).
pub const DEFAULT_F_ES_MAX: f64 = 3e9;

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.k_a == 0 || self.m1 == 0 || self.m2 == 0 || self.n == 0 {
            return bad("K_a, M1, M2 and N must be at least 1");
        }
        if self.f_lo_max.len() != self.k_o {
            return Err(Error::dims("SystemConfig.f_lo_max", self.k_o, self.f_lo_max.len()));
        }
        let positive = [
            ("bandwidth", self.bandwidth),
            ("period", self.period),
            ("p_a", self.p_a),
            ("p_o", self.p_o),
            ("p_es", self.p_es),
            ("sigma_e2", self.sigma_e2),
            ("sigma_c2", self.sigma_c2),
            ("rho", self.rho),
            ("kappa", self.kappa),
            ("f_es_max", self.f_es_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {value}")));
            }
        }
        if self.f_lo_max.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return bad("f_lo_max entries must be positive");
        }
        if self.w_a < 0.0 || self.w_o < 0.0 || (self.w_a + self.w_o - 1.0).abs() > 1e-9 {
            return bad("weights must be nonnegative and sum to one");
        }
        Ok(())
    }

    /// Sets the same CPU cap on every MEC UE.
    pub fn set_uniform_ue_cap(&mut self, cap: f64) {
        self.f_lo_max = vec![cap; self.k_o];
    }

    /// Changes the number of MEC UEs, keeping the first UE's cap for all.
    pub fn set_k_o(&mut self, k_o: usize) {
        let cap = self.f_lo_max.first().copied().unwrap_or(DEFAULT_F_LO_MAX);
        self.k_o = k_o;
        self.f_lo_max = vec![cap; k_o];
    }

    /// Multiplier applied to the AirComp rate (bits/s/Hz) in the objective.
    pub fn aircomp_scale(&self) -> f64 {
        if self.aircomp_bandwidth {
            self.bandwidth
        } else {
            1.0
        }
    }
}

/// Path-loss exponents per link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossExponents {
    pub ue_es: f64,
    pub es_cs: f64,
    pub ue_irs: f64,
    pub es_irs: f64,
    pub irs_cs: f64,
}

/// Node placement and large-scale propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub es: [f64; 3],
    pub irs: [f64; 3],
    pub cs: [f64; 3],
    pub aircomp_center: [f64; 3],
    pub aircomp_radius: f64,
    pub mec_center: [f64; 3],
    pub mec_radius: f64,
    /// Path loss at the reference distance (linear).
    pub rho0: f64,
    /// Reference distance (m).
    pub d0: f64,
    pub alpha: PathLossExponents,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            es: [0.0, 0.0, 20.0],
            irs: [0.0, 2.0, 20.0],
            cs: [-30.0, 0.0, 20.0],
            aircomp_center: [15.0, 15.0, 0.0],
            aircomp_radius: 5.0,
            mec_center: [20.0, 20.0, 0.0],
            mec_radius: 5.0,
            rho0: db_to_linear(-30.0),
            d0: 1.0,
            alpha: PathLossExponents { ue_es: 3.3, es_cs: 3.3, ue_irs: 2.3, es_irs: 2.3, irs_cs: 2.3 },
        }
    }
}

impl Topology {
    /// `PL(d) = rho0 (d / d0)^(-alpha)`.
    pub fn path_loss(&self, distance: f64, alpha: f64) -> f64 {
        self.rho0 * (distance / self.d0).powf(-alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alpha;
        if [a.ue_es, a.es_cs, a.ue_irs, a.es_irs, a.irs_cs].iter().any(|&x| !(x > 2.0)) {
            return Err(Error::InvalidInput("path-loss exponents must exceed 2".into()));
        }
        if !(self.rho0 > 0.0 && self.d0 > 0.0) {
            return Err(Error::InvalidInput("rho0 and d0 must be positive".into()));
        }
        if self.aircomp_radius < 0.0 || self.mec_radius < 0.0 {
            return Err(Error::InvalidInput("cluster radii must be nonnegative".into()));
        }
        let fixed = [(self.es, self.irs), (self.es, self.cs), (self.irs, self.cs)];
        if fixed.iter().any(|(p, q)| distance(p, q) <= 0.0) {
            return Err(Error::InvalidInput("ES, IRS and CS must be at distinct positions".into()));
        }
        // UE clusters sit on the ground; they must not touch the elevated nodes.
        for (center, radius) in [(self.aircomp_center, self.aircomp_radius), (self.mec_center, self.mec_radius)] {
            for node in [self.es, self.irs] {
                if distance(&center, &node) <= radius {
                    return Err(Error::InvalidInput("a UE cluster overlaps the ES or IRS position".into()));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn distance(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// CPU-frequency deviations between the physical nodes and their digital
/// twins (cycles/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtState {
    pub f_hat_lo: Vec<f64>,
    pub f_hat_es: f64,
    /// Cloud deviation; the cloud's computing time is neglected so this
    /// never enters a rate.
    pub f_hat_cs: f64,
}

impl DtState {
    pub fn zero(k_o: usize) -> Self {
        Self { f_hat_lo: vec![0.0; k_o], f_hat_es: 0.0, f_hat_cs: 0.0 }
    }

    /// Deviations as fractions of the configured CPU caps.
    pub fn from_fractions(config: &SystemConfig, ue_fraction: f64, es_fraction: f64) -> Self {
        Self {
            f_hat_lo: config.f_lo_max.iter().map(|f| ue_fraction * f).collect(),
            f_hat_es: es_fraction * config.f_es_max,
            f_hat_cs: 0.0,
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if self.f_hat_lo.len() != config.k_o {
            return Err(Error::dims("DtState.f_hat_lo", config.k_o, self.f_hat_lo.len()));
        }
        let ok_lo = self.f_hat_lo.iter().zip(&config.f_lo_max).all(|(&d, &cap)| (0.0..=cap).contains(&d));
        if !ok_lo || !(0.0..=config.f_es_max).contains(&self.f_hat_es) || self.f_hat_cs < 0.0 {
            return Err(Error::InvalidInput("deviations must lie between zero and the CPU cap".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn path_loss_reference_points() {
        let topo = Topology::default();
        assert_relative_eq!(topo.path_loss(1.0, 3.3), 1e-3, epsilon = 1e-15);
        assert_relative_eq!(topo.path_loss(1.0, 2.3), 1e-3, epsilon = 1e-15);
        assert_relative_eq!(topo.path_loss(10.0, 2.3), 1e-3 * 10f64.powf(-2.3), max_relative = 1e-12);
        assert_relative_eq!(topo.path_loss(10.0, 2.3), 5.0119e-6, max_relative = 1e-4);
    }

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(-80.0), 1e-11, max_relative = 1e-12);
        assert_relative_eq!(watts_to_dbm(dbm_to_watts(5.0)), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn default_config_is_valid() {
        SystemConfig::default().validate().unwrap();
        Topology::default().validate().unwrap();
    }

    #[test]
    fn invalid_weights_rejected() {
        let cfg = SystemConfig { w_a: 0.7, ..SystemConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn k_o_zero_allowed() {
        let mut cfg = SystemConfig::default();
        cfg.set_k_o(0);
        cfg.validate().unwrap();
        let cfg = SystemConfig { k_a: 0, ..SystemConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn deviation_bounds() {
        let cfg = SystemConfig::default();
        DtState::from_fractions(&cfg, 0.3, 0.3).validate(&cfg).unwrap();
        assert!(DtState::from_fractions(&cfg, 1.5, 0.0).validate(&cfg).is_err());
    }

    #[test]
    fn shallow_exponent_rejected() {
        let mut topo = Topology::default();
        topo.alpha.irs_cs = 2.0;
        assert!(topo.validate().is_err());
    }
}
