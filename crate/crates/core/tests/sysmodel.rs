use hybridcomp_core::linalg::{cis, CMat, CVec};
use hybridcomp_core::sysmodel::{
    aircomp_mse, aircomp_rate, es_cs_rate, gen_scenario, offload_rates, uniform_forcing, IrsConfig, SystemConfig,
    Topology,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(seed: u64, k_a: usize, k_o: usize, n: usize) -> SystemConfig {
    let mut cfg = SystemConfig { k_a, m1: 3, m2: 2, n, seed, ..SystemConfig::default() };
    cfg.set_k_o(k_o);
    cfg
}

fn phases(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    CVec::from_fn(n, |_, _| cis(rng.gen_range(0.0..std::f64::consts::TAU)))
}

fn gauss(r: usize, c: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(r, c, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_channel_is_affine_in_the_phases(seed in 0u64..10_000, n in 1usize..12) {
        let cfg = config(seed, 2, 2, n);
        let ch = gen_scenario(&cfg, &Topology::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, w) = (phases(n, &mut rng), phases(n, &mut rng));
        let (a, b) = (ch.composite_aircomp(&v), ch.composite_aircomp(&w));
        for k in 0..cfg.k_a {
            let want = ch.reflection_matrix(&ch.f_a[k]) * (&w - &v);
            let got = &b[k] - &a[k];
            let scale = a[k].norm().max(b[k].norm());
            prop_assert!((got - want).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn sic_sum_matches_closed_form_under_any_order(
        seed in 0u64..10_000,
        k_o in 1usize..6,
        raw in proptest::collection::vec(1e-6f64..1.0, 6),
    ) {
        let cfg = config(seed, 1, k_o, 4);
        let ch = gen_scenario(&cfg, &Topology::default());
        let p = &raw[..k_o];
        let r = offload_rates(&ch.h_o, p, cfg.sigma_e2).unwrap();
        let per_user: f64 = r.per_user.iter().sum();
        prop_assert!((per_user - r.sum).abs() <= 1e-9 * r.sum.max(1e-300));

        let mut order: Vec<usize> = (0..k_o).collect();
        order.reverse();
        let h: Vec<CVec> = order.iter().map(|&k| ch.h_o[k].clone()).collect();
        let q: Vec<f64> = order.iter().map(|&k| p[k]).collect();
        let flipped = offload_rates(&h, &q, cfg.sigma_e2).unwrap();
        prop_assert!((flipped.sum - r.sum).abs() <= 1e-9 * r.sum);
        prop_assert!((flipped.per_user.iter().sum::<f64>() - r.sum).abs() <= 1e-9 * r.sum);
    }

    #[test]
    fn uniform_forcing_saturates_exactly_one_user(seed in 0u64..10_000, k_a in 1usize..8) {
        let cfg = config(seed, k_a, 2, 4);
        let ch = gen_scenario(&cfg, &Topology::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let m = gauss(cfg.m1, 1, &mut rng).column(0).into_owned();
        let p = vec![cfg.p_o / 2.0; cfg.k_o];
        let uf = uniform_forcing(&ch.h_a, &ch.h_o, &m, cfg.p_a, &p, cfg.sigma_e2).unwrap();
        let powers: Vec<f64> = uf.b.iter().map(|b| b.norm_sqr()).collect();
        let at_cap = powers.iter().filter(|&&x| (x - cfg.p_a).abs() <= 1e-9 * cfg.p_a).count();
        prop_assert_eq!(at_cap, 1);
        prop_assert!(powers.iter().all(|&x| x <= cfg.p_a * (1.0 + 1e-9)));

        // The direct mean squared error at the forcing solution equals the closed form.
        let a = m.unscale(uf.eta.sqrt());
        let mse = aircomp_mse(&ch.h_a, &ch.h_o, &a, &uf.b, &p, cfg.sigma_e2).unwrap();
        prop_assert!((mse - uf.mse).abs() <= 1e-9 * uf.mse.max(1.0));
        let r = aircomp_rate(uf.mse);
        prop_assert!(r >= 0.0);
        if uf.mse < 1.0 {
            prop_assert!((r - (1.0 / uf.mse).log2()).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn log_det_rate_is_monotone_in_the_covariance(seed in 0u64..10_000) {
        let cfg = config(seed, 1, 1, 4);
        let ch = gen_scenario(&cfg, &Topology::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gauss(cfg.m1, cfg.m1, &mut rng);
        let d = gauss(cfg.m1, cfg.m1, &mut rng);
        let w1 = (&a * a.adjoint()).scale(cfg.p_es / 10.0);
        let w2 = &w1 + (&d * d.adjoint()).scale(cfg.p_es / 10.0);
        let h = ch.composite_cloud(&phases(cfg.n, &mut rng));
        let r0 = es_cs_rate(&h, &CMat::zeros(cfg.m1, cfg.m1), cfg.sigma_c2).unwrap();
        let r1 = es_cs_rate(&h, &w1, cfg.sigma_c2).unwrap();
        let r2 = es_cs_rate(&h, &w2, cfg.sigma_c2).unwrap();
        prop_assert!(r0.abs() <= 1e-12);
        prop_assert!(r1 >= 0.0);
        prop_assert!(r2 >= r1 - 1e-9);
    }
}

#[test]
fn same_seed_same_channels() {
    let cfg = config(42, 4, 3, 6);
    let a = gen_scenario(&cfg, &Topology::default());
    let b = gen_scenario(&cfg, &Topology::default());
    assert_eq!(a, b);
    let other = gen_scenario(&config(43, 4, 3, 6), &Topology::default());
    assert_ne!(a, other);
    let irs = IrsConfig::unit(6);
    assert!(irs.is_unit_modulus(1e-12));
}
