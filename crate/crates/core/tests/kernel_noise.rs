use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shelab::grid::{HeatSymbol, LatticeGrid};
use shelab::kernel::{
    heat_kernel, kernel_double_argument, kernel_product_split, kernel_time_merge, lattice_delta, semigroup_convolve,
};
use shelab::noise::{DalangIntegral, NoiseModel, NoiseSampler};

/// Sum of `p_t(x + mL)` over periodic images.
fn wrapped_kernel(t: f64, x: f64, length: f64) -> f64 {
    (-20..=20).map(|m| heat_kernel(t, &[x + m as f64 * length], 1).unwrap()).sum()
}

#[test]
fn kernel_normalization_on_grid() {
    let t: f64 = 0.7;
    let h = 1e-3;
    let half = 8.0 * t.sqrt();
    let n = (2.0 * half / h).round() as i64;
    let total: f64 = (0..=n).map(|i| heat_kernel(t, &[-half + i as f64 * h], 1).unwrap()).sum::<f64>() * h;
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn identity_examples_two_sided() {
    let lhs = heat_kernel(0.5, &[1.0], 1).unwrap() * heat_kernel(0.5, &[-1.0], 1).unwrap();
    let (a, b) = kernel_product_split(0.5, &[1.0], &[-1.0]).unwrap();
    assert!((lhs - 2.0 * a * b).abs() < 1e-12);

    let lhs = heat_kernel(1.0, &[1.0, 0.0], 2).unwrap() * heat_kernel(1.0, &[0.0, 1.0], 2).unwrap();
    let (a, b) = kernel_product_split(1.0, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
    assert!((lhs - 4.0 * a * b).abs() < 1e-12);

    let lhs = heat_kernel(1.0, &[2.0], 1).unwrap() * heat_kernel(3.0, &[2.0], 1).unwrap();
    let (pre, k) = kernel_time_merge(1.0, 3.0, &[2.0]).unwrap();
    assert!((lhs - pre * k).abs() < 1e-12);

    let lhs = heat_kernel(2.0, &[1.0, 1.0], 2).unwrap().powi(2);
    let (pre, k) = kernel_time_merge(2.0, 2.0, &[1.0, 1.0]).unwrap();
    assert!((lhs - pre * k).abs() < 1e-12);

    for (s, x) in [(0.5, vec![1.0]), (1.0, vec![1.0, 2.0])] {
        let sides = kernel_double_argument(s, &x).unwrap();
        let direct = heat_kernel(s, &x.iter().map(|v| 2.0 * v).collect::<Vec<_>>(), x.len()).unwrap();
        assert!((sides.lhs - direct).abs() < 1e-12);
        assert!((sides.lhs - sides.rhs).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn identities_hold_pointwise(
        s in 0.1f64..10.0,
        tau in 0.1f64..10.0,
        d in 1usize..=2,
        x in proptest::collection::vec(-5.0f64..5.0, 2),
        y in proptest::collection::vec(-5.0f64..5.0, 2),
    ) {
        let x = &x[..d];
        let y = &y[..d];
        let lhs = heat_kernel(s, x, d).unwrap() * heat_kernel(s, y, d).unwrap();
        let (a, b) = kernel_product_split(s, x, y).unwrap();
        prop_assert!((lhs - 2f64.powi(d as i32) * a * b).abs() <= 1e-12);
        let lhs = heat_kernel(s, x, d).unwrap() * heat_kernel(tau, x, d).unwrap();
        let (pre, k) = kernel_time_merge(s, tau, x).unwrap();
        prop_assert!((lhs - pre * k).abs() <= 1e-12);
        let sides = kernel_double_argument(s, x).unwrap();
        prop_assert!((sides.lhs - sides.rhs).abs() <= 1e-12);
    }

    #[test]
    fn heat_flow_commutes_with_shifts(shift in 0usize..64, t in 0.01f64..2.0) {
        let g = LatticeGrid::new(1, 64, 0.25, 0.01).unwrap();
        let field: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64).sin() + 2.0).collect();
        let shifted: Vec<f64> = (0..64).map(|i| field[(i + 64 - shift) % 64]).collect();
        let a = semigroup_convolve(&shifted, t, &g).unwrap();
        let b = semigroup_convolve(&field, t, &g).unwrap();
        for i in 0..64 {
            prop_assert!((a[i] - b[(i + 64 - shift) % 64]).abs() < 1e-12);
        }
    }
}

#[test]
fn spike_matches_wrapped_kernel() {
    let g = LatticeGrid::new(1, 512, 0.125, 0.01).unwrap().with_symbol(HeatSymbol::Continuum);
    let t = 0.5;
    let out = semigroup_convolve(&lattice_delta(&g, 0), t, &g).unwrap();
    let worst = (0..g.len())
        .map(|i| (out[i] - wrapped_kernel(t, g.wrapped_index(i) as f64 * g.dx, g.length())).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn semigroup_property_and_mass() {
    for d in [1, 2] {
        for symbol in [HeatSymbol::Lattice, HeatSymbol::Continuum] {
            let g = LatticeGrid::new(d, 32, 0.25, 0.01).unwrap().with_symbol(symbol);
            let field: Vec<f64> = (0..g.len()).map(|i| ((i * 31 % 17) as f64 * 0.4).cos().abs()).collect();
            let two = semigroup_convolve(&semigroup_convolve(&field, 0.3, &g).unwrap(), 0.45, &g).unwrap();
            let one = semigroup_convolve(&field, 0.75, &g).unwrap();
            let gap = two.iter().zip(&one).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 1e-12, "{gap}");
            let m0: f64 = field.iter().sum();
            let m1: f64 = one.iter().sum();
            assert!((m0 - m1).abs() < 1e-11 * m0);
        }
    }
}

#[test]
fn lattice_symbol_preserves_positivity() {
    let g = LatticeGrid::new(1, 256, 0.125, 0.01).unwrap();
    for t in [1e-4, 0.005, 0.1, 3.0] {
        let out = semigroup_convolve(&lattice_delta(&g, 17), t, &g).unwrap();
        let peak = out.iter().cloned().fold(0.0, f64::max);
        assert!(out.iter().all(|&v| v >= -1e-13 * peak), "t = {t}");
    }
}

#[test]
fn dalang_values() {
    let white = NoiseModel::dirac();
    assert!((white.dalang_integral(0.0).unwrap().value().unwrap() - PI).abs() < 1e-10);
    assert_eq!(white.dalang_integral(1.0).unwrap(), DalangIntegral::Divergent);
    let g2 = NoiseModel::gaussian(1.0, 2).unwrap();
    // radial closed form: 2π ∫ r e^{-r²/2} (1+r²)^{-1/2} dr
    let value = g2.dalang_integral(0.5).unwrap().value().unwrap();
    let coarse = shelab::quad::integrate(|r| r * (-0.5 * r * r).exp() / (1.0 + r * r).sqrt(), 0.0, 40.0, 1e-14, 1e-12);
    assert!((value - 2.0 * PI * coarse.value).abs() < 1e-6 * value);
    for m in [NoiseModel::exponential(1.5, 1).unwrap(), NoiseModel::exponential(1.5, 2).unwrap()] {
        for alpha in [0.0, 0.5, 1.0] {
            assert!(m.dalang_integral(alpha).unwrap().value().is_some(), "{m:?} α={alpha}");
        }
    }
    // α = 1: ∫ f̂ = (2π)^d f(0) is explicit for the Laplace density
    let m = NoiseModel::exponential(1.5, 2).unwrap();
    let v = m.dalang_integral(1.0).unwrap().value().unwrap();
    assert!((v - (PI * 1.5).powi(2)).abs() < 1e-6 * v, "{v}");
}

#[test]
fn upsilon_monotone_and_inverse_round_trip() {
    let models = [
        NoiseModel::dirac(),
        NoiseModel::gaussian(1.0, 1).unwrap(),
        NoiseModel::gaussian(0.5, 2).unwrap(),
        NoiseModel::exponential(2.0, 1).unwrap(),
        NoiseModel::exponential(1.0, 2).unwrap(),
    ];
    for m in &models {
        for lam in [0.1, 1.0, 10.0] {
            assert!(m.upsilon(lam).unwrap() > m.upsilon(2.0 * lam).unwrap());
        }
        assert!(m.upsilon(1.0).unwrap() > m.upsilon(4.0).unwrap());
    }
    for m in &models[..4] {
        for y in [0.1, 1.0, 10.0] {
            let lam = m.lambda_inverse(y).unwrap();
            assert!((m.upsilon(lam).unwrap() - y).abs() / y <= 1e-10, "{m:?} {y}");
        }
    }
    let white = NoiseModel::dirac();
    for y in [0.1, 1.0, 10.0] {
        assert!((white.lambda_inverse(y).unwrap() - 1.0 / (2.0 * y * y)).abs() <= 1e-10 / (2.0 * y * y) * 10.0);
    }
}

#[test]
fn white_sampler_site_statistics() {
    let g = LatticeGrid::new(1, 8, 0.25, 0.01).unwrap();
    let mut sampler = NoiseSampler::new(&NoiseModel::dirac(), &g, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let mut buf = vec![0.0; 8];
    let (mut s0, mut s00, mut s01) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        sampler.fill(&mut rng, &mut buf);
        s0 += buf[0];
        s00 += buf[0] * buf[0];
        s01 += buf[0] * buf[1];
    }
    let n = draws as f64;
    let var = 0.01 / 0.25;
    assert!((s0 / n).abs() < 4.0 * (var / n).sqrt());
    assert!(((s00 / n) / var - 1.0).abs() < 0.02);
    assert!((s01 / n).abs() < 4.0 * var / n.sqrt());
}

#[test]
fn gaussian_sampler_matches_density_covariance() {
    let g = LatticeGrid::new(1, 64, 0.25, 0.01).unwrap();
    let model = NoiseModel::gaussian(1.0, 1).unwrap();
    let dt = 0.01;
    let mut sampler = NoiseSampler::new(&model, &g, dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let lags = [0usize, 2, 4, 6];
    let mut acc = [0.0; 4];
    let mut buf = vec![0.0; g.len()];
    for _ in 0..draws {
        sampler.fill(&mut rng, &mut buf);
        for (a, &l) in acc.iter_mut().zip(&lags) {
            *a += buf[10] * buf[10 + l];
        }
    }
    for (a, &l) in acc.iter().zip(&lags) {
        let r = l as f64 * g.dx;
        let expected = dt * heat_kernel(1.0, &[r], 1).unwrap();
        let got = a / draws as f64;
        assert!((got / expected - 1.0).abs() < 0.03, "lag {r}: {got} vs {expected}");
    }
}

#[test]
fn sampler_covariance_curve_within_five_standard_errors() {
    let models = [
        NoiseModel::dirac(),
        NoiseModel::gaussian(0.5, 1).unwrap(),
        NoiseModel::exponential(2.0, 1).unwrap(),
    ];
    for model in models {
        let g = LatticeGrid::new(1, 32, 0.25, 0.01).unwrap();
        let cov = model.lattice_covariance(&g).unwrap();
        let dt = 0.02;
        let mut sampler = NoiseSampler::new(&model, &g, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let lags = 8;
        let mut sum = vec![0.0; lags];
        let mut sum_sq = vec![0.0; lags];
        let mut buf = vec![0.0; g.len()];
        for _ in 0..draws {
            sampler.fill(&mut rng, &mut buf);
            for l in 0..lags {
                let p = buf[3] * buf[3 + l];
                sum[l] += p;
                sum_sq[l] += p * p;
            }
        }
        let n = draws as f64;
        for l in 0..lags {
            let mean = sum[l] / n;
            let se = ((sum_sq[l] / n - mean * mean) / n).sqrt();
            let target = dt * cov.values[l];
            assert!((mean - target).abs() <= 5.0 * se, "{} lag {l}: {mean} vs {target} (se {se})", model.name());
        }
    }
}

#[test]
fn increments_are_white_in_time() {
    let g = LatticeGrid::new(1, 32, 0.25, 0.01).unwrap();
    let model = NoiseModel::gaussian(0.5, 1).unwrap();
    let mut sampler = NoiseSampler::new(&model, &g, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 50_000;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let mut a = vec![0.0; 32];
    let mut b = vec![0.0; 32];
    for _ in 0..draws {
        sampler.fill(&mut rng, &mut a);
        sampler.fill(&mut rng, &mut b);
        sxy += a[5] * b[5];
        sxx += a[5] * a[5];
        syy += b[5] * b[5];
    }
    let corr = sxy / (sxx * syy).sqrt();
    assert!(corr.abs() <= 4.0 / (draws as f64).sqrt(), "{corr}");
}

#[test]
fn two_dimensional_sampler_is_consistent() {
    let g = LatticeGrid::new(2, 16, 0.5, 0.01).unwrap();
    let model = NoiseModel::exponential(1.0, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cov = model.lattice_covariance(&g).unwrap();
    let draws = 20_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let inc = model.sample_increment(&g, 0.01, &mut rng).unwrap();
        acc += inc.values[0] * inc.values[1];
    }
    let got = acc / draws as f64;
    let want = 0.01 * cov.values[1];
    assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
}
