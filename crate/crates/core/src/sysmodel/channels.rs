use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{distance, SystemConfig, Topology};
use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, CVec};

/// Baseband channels of both hops.
///
/// `g_e` is stored as the N x M1 matrix whose conjugate transpose maps IRS
/// reflections onto the edge-server array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h_a: Vec<CVec>,
    pub h_o: Vec<CVec>,
    pub f_a: Vec<CVec>,
    pub f_o: Vec<CVec>,
    pub g_e: CMat,
    /// ES -> CS, M2 x M1.
    pub h_c: CMat,
    /// IRS -> CS, M2 x N.
    pub g_c: CMat,
    /// ES -> IRS, N x M1.
    pub f_c: CMat,
}

/// IRS reflection vectors for the two stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrsConfig {
    pub v1: CVec,
    pub v2: CVec,
}

/// Effective channels with the IRS reflection folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub h_a: Vec<CVec>,
    pub h_o: Vec<CVec>,
    pub h_c: CMat,
}

fn cn_vector<R: Rng>(rng: &mut R, len: usize, variance: f64) -> CVec {
    let scale = (variance / 2.0).sqrt();
    CVec::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

fn cn_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    let scale = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

fn point_in_disk<R: Rng>(rng: &mut R, center: [f64; 3], radius: f64) -> [f64; 3] {
    let r = radius * rng.gen::<f64>().sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    [center[0] + r * phi.cos(), center[1] + r * phi.sin(), center[2]]
}

/// Draws one channel realization: UE positions uniform in their discs, then
/// Rayleigh fading scaled by the distance-dependent path loss.
///
/// Draw order is fixed (AirComp positions, MEC positions, UE links, then the
/// infrastructure links), so a seed fully determines the result.
pub fn gen_scenario(config: &SystemConfig, topology: &Topology) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let alpha = topology.alpha;
    let aircomp_pos: Vec<[f64; 3]> =
        (0..config.k_a).map(|_| point_in_disk(&mut rng, topology.aircomp_center, topology.aircomp_radius)).collect();
    let mec_pos: Vec<[f64; 3]> =
        (0..config.k_o).map(|_| point_in_disk(&mut rng, topology.mec_center, topology.mec_radius)).collect();

    let mut ue_links = |positions: &[[f64; 3]]| -> (Vec<CVec>, Vec<CVec>) {
        positions
            .iter()
            .map(|pos| {
                let pl_es = topology.path_loss(distance(pos, &topology.es), alpha.ue_es);
                let pl_irs = topology.path_loss(distance(pos, &topology.irs), alpha.ue_irs);
                (cn_vector(&mut rng, config.m1, pl_es), cn_vector(&mut rng, config.n, pl_irs))
            })
            .unzip()
    };
    let (h_a, f_a) = ue_links(&aircomp_pos);
    let (h_o, f_o) = ue_links(&mec_pos);

    let pl_es_irs = topology.path_loss(distance(&topology.es, &topology.irs), alpha.es_irs);
    let pl_es_cs = topology.path_loss(distance(&topology.es, &topology.cs), alpha.es_cs);
    let pl_irs_cs = topology.path_loss(distance(&topology.irs, &topology.cs), alpha.irs_cs);
    let g_e = cn_matrix(&mut rng, config.n, config.m1, pl_es_irs);
    let h_c = cn_matrix(&mut rng, config.m2, config.m1, pl_es_cs);
    let g_c = cn_matrix(&mut rng, config.m2, config.n, pl_irs_cs);
    let f_c = cn_matrix(&mut rng, config.n, config.m1, pl_es_irs);
    ChannelSet { h_a, h_o, f_a, f_o, g_e, h_c, g_c, f_c }
}

impl ChannelSet {
    pub fn k_a(&self) -> usize {
        self.h_a.len()
    }

    pub fn k_o(&self) -> usize {
        self.h_o.len()
    }

    pub fn m1(&self) -> usize {
        self.g_e.ncols()
    }

    pub fn m2(&self) -> usize {
        self.h_c.nrows()
    }

    pub fn n(&self) -> usize {
        self.g_e.nrows()
    }

    /// Checks every dimension against the configuration.
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        let (m1, m2, n) = (config.m1, config.m2, config.n);
        if self.h_a.len() != config.k_a || self.f_a.len() != config.k_a {
            return Err(Error::dims("ChannelSet AirComp links", config.k_a, self.h_a.len()));
        }
        if self.h_o.len() != config.k_o || self.f_o.len() != config.k_o {
            return Err(Error::dims("ChannelSet MEC links", config.k_o, self.h_o.len()));
        }
        if self.h_a.iter().chain(&self.h_o).any(|h| h.len() != m1) {
            return Err(Error::dims("UE->ES channel length", m1, "other"));
        }
        if self.f_a.iter().chain(&self.f_o).any(|f| f.len() != n) {
            return Err(Error::dims("UE->IRS channel length", n, "other"));
        }
        let shapes = [
            ("G_e", self.g_e.shape(), (n, m1)),
            ("H_c", self.h_c.shape(), (m2, m1)),
            ("G_c", self.g_c.shape(), (m2, n)),
            ("F_c", self.f_c.shape(), (n, m1)),
        ];
        for (name, actual, expected) in shapes {
            if actual != expected {
                return Err(Error::dims(name, format!("{expected:?}"), format!("{actual:?}")));
            }
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        let all_finite =
            self.h_a.iter().chain(&self.h_o).chain(&self.f_a).chain(&self.f_o).all(|v| v.iter().all(finite))
                && [&self.g_e, &self.h_c, &self.g_c, &self.f_c].iter().all(|m| m.iter().all(finite));
        if !all_finite {
            return Err(Error::InvalidInput("channel entries must be finite".into()));
        }
        Ok(())
    }

    /// Copy with every IRS-reflected path removed.
    pub fn without_reflection(&self) -> ChannelSet {
        let mut out = self.clone();
        out.g_e.fill(Complex64::new(0.0, 0.0));
        out.g_c.fill(Complex64::new(0.0, 0.0));
        out
    }

    /// `G_e^H diag(f) v`, the reflected contribution for one UE.
    pub fn reflected(&self, f: &CVec, v: &CVec) -> CVec {
        let dv = f.component_mul(v);
        self.g_e.ad_mul(&dv)
    }

    /// Per-UE reflection matrix `G_e^H diag(f)` (M1 x N).
    pub fn reflection_matrix(&self, f: &CVec) -> CMat {
        let mut out = self.g_e.adjoint();
        for (n, mut col) in out.column_iter_mut().enumerate() {
            col *= f[n];
        }
        out
    }

    /// `h_a[k] + G_e^H diag(f_a[k]) v1` for every AirComp UE.
    pub fn composite_aircomp(&self, v1: &CVec) -> Vec<CVec> {
        self.h_a.iter().zip(&self.f_a).map(|(h, f)| h + self.reflected(f, v1)).collect()
    }

    pub fn composite_mec(&self, v1: &CVec) -> Vec<CVec> {
        self.h_o.iter().zip(&self.f_o).map(|(h, f)| h + self.reflected(f, v1)).collect()
    }

    /// `H_c + G_c diag(v2) F_c`.
    pub fn composite_cloud(&self, v2: &CVec) -> CMat {
        let mut scaled = self.f_c.clone();
        for (n, mut row) in scaled.row_iter_mut().enumerate() {
            row *= v2[n];
        }
        &self.h_c + &self.g_c * scaled
    }
}

impl IrsConfig {
    /// I.i.d. uniform phases for both stages.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let v1 = CVec::from_fn(n, |_, _| cis(two_pi * rng.gen::<f64>()));
        let v2 = CVec::from_fn(n, |_, _| cis(two_pi * rng.gen::<f64>()));
        Self { v1, v2 }
    }

    /// All-ones reflection (every phase zero).
    pub fn unit(n: usize) -> Self {
        let one = CVec::from_element(n, Complex64::new(1.0, 0.0));
        Self { v1: one.clone(), v2: one }
    }

    /// Zero reflection. Violates the unit-modulus invariant; only meant for
    /// isolating the direct paths.
    pub fn zeros(n: usize) -> Self {
        let zero = CVec::zeros(n);
        Self { v1: zero.clone(), v2: zero }
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.v1.iter().chain(self.v2.iter()).all(|z| (z.norm() - 1.0).abs() <= tol)
    }
}

/// Folds the IRS reflection into effective channels for both hops.
pub fn composite_channels(channels: &ChannelSet, irs: &IrsConfig) -> Result<Composite> {
    let n = channels.n();
    if irs.v1.len() != n || irs.v2.len() != n {
        return Err(Error::dims("IrsConfig length", n, irs.v1.len().max(irs.v2.len())));
    }
    if channels.h_a.iter().chain(&channels.h_o).any(|h| h.len() != channels.m1())
        || channels.f_a.iter().chain(&channels.f_o).any(|f| f.len() != n)
        || channels.h_c.ncols() != channels.m1()
        || channels.g_c.shape() != (channels.m2(), n)
        || channels.f_c.shape() != (n, channels.m1())
    {
        return Err(Error::dims("ChannelSet", "consistent shapes", "inconsistent shapes"));
    }
    Ok(Composite {
        h_a: channels.composite_aircomp(&irs.v1),
        h_o: channels.composite_mec(&irs.v1),
        h_c: channels.composite_cloud(&irs.v2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::Topology;

    fn small_config(seed: u64) -> SystemConfig {
        let mut cfg = SystemConfig { k_a: 3, m1: 2, m2: 3, n: 4, seed, ..SystemConfig::default() };
        cfg.set_k_o(2);
        cfg
    }

    #[test]
    fn same_seed_same_channels() {
        let cfg = small_config(7);
        let a = gen_scenario(&cfg, &Topology::default());
        let b = gen_scenario(&cfg, &Topology::default());
        assert_eq!(a, b);
        let c = gen_scenario(&small_config(8), &Topology::default());
        assert_ne!(a, c);
        a.validate(&cfg).unwrap();
    }

    #[test]
    fn zero_reflection_gives_direct_channel() {
        let cfg = small_config(3);
        let ch = gen_scenario(&cfg, &Topology::default());
        let comp = composite_channels(&ch, &IrsConfig::zeros(cfg.n)).unwrap();
        assert_eq!(comp.h_a, ch.h_a);
        assert_eq!(comp.h_o, ch.h_o);
        assert_eq!(comp.h_c, ch.h_c);
    }

    #[test]
    fn destructive_two_path_scalar() {
        let one = Complex64::new(1.0, 0.0);
        let ch = ChannelSet {
            h_a: vec![CVec::from_element(1, one)],
            h_o: vec![],
            f_a: vec![CVec::from_element(1, one)],
            f_o: vec![],
            g_e: CMat::from_element(1, 1, one),
            h_c: CMat::from_element(1, 1, one),
            g_c: CMat::from_element(1, 1, one),
            f_c: CMat::from_element(1, 1, one),
        };
        let v = CVec::from_element(1, cis(std::f64::consts::PI));
        let comp = composite_channels(&ch, &IrsConfig { v1: v.clone(), v2: v }).unwrap();
        assert!(comp.h_a[0][0].norm() < 1e-15);
        assert!(comp.h_c[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn wrong_irs_length_rejected() {
        let cfg = small_config(3);
        let ch = gen_scenario(&cfg, &Topology::default());
        assert!(composite_channels(&ch, &IrsConfig::unit(cfg.n + 1)).is_err());
    }

    #[test]
    fn entry_variance_follows_path_loss() {
        // Average |h|^2 over many draws of the fixed ES -> CS link.
        let topo = Topology::default();
        let mut cfg = small_config(0);
        cfg.m1 = 8;
        cfg.m2 = 8;
        let mut acc = 0.0;
        let trials = 200;
        for seed in 0..trials {
            cfg.seed = seed;
            let ch = gen_scenario(&cfg, &topo);
            acc += ch.h_c.iter().map(|z| z.norm_sqr()).sum::<f64>() / 64.0;
        }
        let expected = topo.path_loss(30.0, 3.3);
        let mean = acc / trials as f64;
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean:e} vs {expected:e}");
    }
}
