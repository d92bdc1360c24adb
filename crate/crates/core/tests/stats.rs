use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shelab::stats::{distance_to_gaussian, ks_statistic, normality_test_with, rate_fit, tv_normals_bound, MonotoneFunctional};

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn ks_size_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let runs = 200;
    let mut rejected = [0usize; 2];
    for _ in 0..runs {
        let x = normals(&mut rng, 5000);
        for (k, level) in [0.01, 0.05].into_iter().enumerate() {
            if !normality_test_with(&x, level, 0.0).unwrap().pass {
                rejected[k] += 1;
            }
        }
    }
    for (k, level) in [0.01, 0.05].into_iter().enumerate() {
        let rate = rejected[k] as f64 / runs as f64;
        assert!((rate - level).abs() <= level / 2.0 + 1e-12, "level {level}: rejection rate {rate}");
    }
}

#[test]
fn estimated_centering_is_absorbed_by_calibration() {
    // samples centred by a Monte Carlo mean with relative error ρ
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rho = 0.1;
    let mut rejected = 0;
    for _ in 0..200 {
        let offset: f64 = rho * rng.sample::<f64, _>(StandardNormal);
        let x: Vec<f64> = normals(&mut rng, 1000).into_iter().map(|v| v + offset).collect();
        if !normality_test_with(&x, 0.05, rho).unwrap().pass {
            rejected += 1;
        }
    }
    assert!(rejected <= 20, "{rejected} of 200 rejected");
}

#[test]
fn exact_tv_respects_pinsker() {
    for c1 in [1.0001f64, 1.01, 1.1, 1.5, 2.0, 3.0, 10.0] {
        let c2: f64 = 1.0;
        let xs: f64 = (c1 * c2 * (c1 / c2).ln() / (c1 - c2)).sqrt();
        let tv = 2.0 * (phi(xs / c2.sqrt()) - phi(xs / c1.sqrt()));
        assert!(tv <= tv_normals_bound(c1, c2).unwrap(), "c1 = {c1}: {tv}");
    }
    assert_eq!(tv_normals_bound(2.0, 1.0).unwrap(), 0.5);
}

#[test]
fn distance_detects_a_variance_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = normals(&mut rng, 4000).into_iter().map(|v| 2f64.sqrt() * v).collect();
    let d = distance_to_gaussian(&x, Some(1.0)).unwrap();
    let bound = tv_normals_bound(2.0, 1.0).unwrap();
    assert!(d.value > 5.0 * d.control_sd, "{d:?}");
    assert!(d.value <= bound + 3.0 * d.control_sd, "{d:?}");
}

#[test]
fn rate_fit_interval_covers_the_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ns = [32.0f64, 64.0, 128.0, 256.0, 512.0];
    let runs = 200;
    let mut covered = 0;
    for _ in 0..runs {
        let pairs: Vec<(f64, f64)> =
            ns.iter().map(|&n| (n, 0.8 * n.powf(-0.5) * (0.08 * rng.sample::<f64, _>(StandardNormal)).exp())).collect();
        let fit = rate_fit(&pairs).unwrap();
        if fit.ci_low <= -0.5 && -0.5 <= fit.ci_high {
            covered += 1;
        }
    }
    let rate = covered as f64 / runs as f64;
    assert!((0.88..=0.99).contains(&rate), "coverage {rate}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ks_statistic_is_scale_free(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normals(&mut rng, 600);
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!((ks_statistic(&x) - ks_statistic(&y)).abs() < 1e-12);
    }

    #[test]
    fn distance_is_scale_free(seed in 0u64..1000, c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normals(&mut rng, 1000);
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = distance_to_gaussian(&x, Some(1.3)).unwrap();
        let b = distance_to_gaussian(&y, Some(1.3 * c * c)).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-9);
        let a = distance_to_gaussian(&x, None).unwrap();
        let b = distance_to_gaussian(&y, None).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn rate_slope_ignores_units(k in 0.01f64..100.0, m in 0.5f64..8.0, slope in -1.5f64..-0.1) {
        let base: Vec<(f64, f64)> = [16.0f64, 32.0, 64.0, 128.0, 256.0]
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, n.powf(slope) * (1.0 + 0.05 * ((i * 7 % 5) as f64 - 2.0))))
            .collect();
        let scaled: Vec<(f64, f64)> = base.iter().map(|&(n, d)| (m * n, k * d)).collect();
        let a = rate_fit(&base).unwrap();
        let b = rate_fit(&scaled).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9);
    }

    #[test]
    fn builtin_functionals_are_monotone(u in proptest::collection::vec(-3.0f64..3.0, 8), site in 0usize..8, bump in 0.0f64..2.0) {
        let fs = [
            MonotoneFunctional::Projection { site: 3 },
            MonotoneFunctional::Min { sites: vec![1, 4, 6] },
            MonotoneFunctional::Max { sites: vec![0, 3] },
            MonotoneFunctional::Bump { sites: vec![2, 3, 5], center: 0.5, width: 0.3 },
        ];
        let mut v = u.clone();
        v[site] += bump;
        for f in &fs {
            prop_assert!(f.eval(&v) >= f.eval(&u));
        }
    }
}
