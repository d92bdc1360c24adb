use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shelab::grid::LatticeGrid;
use shelab::noise::{NoiseModel, NoiseSampler};
use shelab::solver::{
    gaussian_oracle_covariance, pam_second_moment_curve, pam_second_moment_oracle, pam_second_moment_picard,
    run_scheme, simulate, DiffusionSpec,
};

fn white_grid(n: usize) -> LatticeGrid {
    let dx = 0.125;
    LatticeGrid::new(1, n, dx, dx * dx / 2.0).unwrap()
}

/// `2 e^{t/4} Φ(√(t/2))`, the continuum second moment for white noise.
fn white_pam_moment(t: f64) -> f64 {
    let z = (t / 2.0).sqrt();
    2.0 * (t / 4.0).exp() * 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0.0, sum: 0.0, sum_sq: 0.0 }
    }
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n
    }
    fn se(&self) -> f64 {
        let m = self.mean();
        ((self.sum_sq / self.n - m * m) / (self.n - 1.0)).sqrt()
    }
}

#[test]
fn volterra_matches_closed_form_and_picard() {
    let white = NoiseModel::dirac();
    for t in [0.25, 0.5, 1.0, 2.0] {
        let v = pam_second_moment_oracle(&white, t, &[0.0]).unwrap();
        assert!((v / white_pam_moment(t) - 1.0).abs() < 1e-5, "t={t}: {v}");
    }
    let p = pam_second_moment_picard(&white, 0.5, 40).unwrap();
    let v = pam_second_moment_oracle(&white, 0.5, &[0.0]).unwrap();
    assert!((p / v - 1.0).abs() < 0.01);

    let smooth = NoiseModel::gaussian(0.5, 1).unwrap();
    for t in [0.1, 0.25] {
        let v = pam_second_moment_oracle(&smooth, t, &[0.0]).unwrap();
        let p = pam_second_moment_picard(&smooth, t, 12).unwrap();
        assert!((p / v - 1.0).abs() < 1e-3, "t={t}: {v} vs {p}");
    }
}

#[test]
fn lagged_moment_decays_to_one() {
    let white = NoiseModel::dirac();
    let m0 = pam_second_moment_oracle(&white, 0.5, &[0.0]).unwrap();
    let m1 = pam_second_moment_oracle(&white, 0.5, &[0.5]).unwrap();
    let far = pam_second_moment_oracle(&white, 0.5, &[10.0]).unwrap();
    assert!(m0 > m1 && m1 > 1.0);
    assert!((far - 1.0).abs() < 1e-10);
    let curve = pam_second_moment_curve(&white, 1.0).unwrap();
    assert!(curve.values.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn constant_sigma_covariance_matches_oracle() {
    let g = white_grid(256);
    let model = NoiseModel::dirac();
    let sigma = DiffusionSpec::Constant(1.0);
    let t = 0.5;
    let lags = [0usize, 2, 4, 8];
    let reps = 1500;
    let mut acc: Vec<Moments> = lags.iter().map(|_| Moments::new()).collect();
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + r);
        let traj = simulate(&g, &model, &sigma, t, &[t], &mut rng).unwrap();
        let u = &traj.last().values;
        for (m, &l) in acc.iter_mut().zip(&lags) {
            let s: f64 = (0..g.len()).map(|i| (u[i] - 1.0) * (u[(i + l) % g.len()] - 1.0)).sum();
            m.push(s / g.len() as f64);
        }
    }
    for (m, &l) in acc.iter().zip(&lags) {
        let want = gaussian_oracle_covariance(&model, 1.0, t, &[l as f64 * g.dx]).unwrap();
        assert!((m.mean() - want).abs() <= 3.0 * m.se() + 0.01 * want, "lag {l}: {} vs {want} (se {})", m.mean(), m.se());
    }
}

#[test]
fn pam_mean_second_moment_and_positivity() {
    let g = white_grid(128);
    let model = NoiseModel::dirac();
    let times = [0.25, 0.5, 1.0];
    let reps = 1500;
    let mut mean: Vec<Moments> = times.iter().map(|_| Moments::new()).collect();
    let mut second: Vec<Moments> = times.iter().map(|_| Moments::new()).collect();
    let mut nonpositive = 0usize;
    let mut total = 0usize;
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + r);
        let traj = simulate(&g, &model, &DiffusionSpec::Linear, 1.0, &times, &mut rng).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let u = &traj.frame_at(t).unwrap().values;
            mean[k].push(u[0]);
            second[k].push(u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64);
            nonpositive += u.iter().filter(|&&v| v <= 0.0).count();
            total += u.len();
        }
    }
    for (k, &t) in times.iter().enumerate() {
        assert!((mean[k].mean() - 1.0).abs() <= 4.0 * mean[k].se(), "t={t}");
        let oracle = pam_second_moment_oracle(&model, t, &[0.0]).unwrap();
        assert!((second[k].mean() / oracle - 1.0).abs() < 0.05, "t={t}: {} vs {oracle}", second[k].mean());
    }
    assert!((nonpositive as f64) <= 1e-4 * total as f64);
}

#[test]
fn one_point_variance_is_site_independent() {
    let g = white_grid(64);
    let model = NoiseModel::gaussian(0.25, 1).unwrap();
    let g = LatticeGrid::new(1, 64, g.dx, 0.01).unwrap();
    let reps = 2000;
    let sites = [0usize, 17, 40];
    let mut acc: Vec<Moments> = sites.iter().map(|_| Moments::new()).collect();
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + r);
        let traj = simulate(&g, &model, &DiffusionSpec::Linear, 0.5, &[0.5], &mut rng).unwrap();
        for (m, &s) in acc.iter_mut().zip(&sites) {
            m.push((traj.last().values[s] - 1.0).powi(2));
        }
    }
    for i in 1..sites.len() {
        let gap = (acc[i].mean() - acc[0].mean()).abs();
        let se = (acc[i].se().powi(2) + acc[0].se().powi(2)).sqrt();
        assert!(gap <= 4.0 * se, "{gap} vs {se}");
    }
}

#[test]
fn halving_dt_with_refined_noise_is_consistent() {
    let coarse = white_grid(128);
    let fine = LatticeGrid::new(1, 128, coarse.dx, coarse.dt / 2.0).unwrap();
    let model = NoiseModel::dirac();
    let t = 0.25;
    let steps = (t / coarse.dt).round() as usize;
    let window = 64;
    let reps = 200;
    let mut diff = Moments::new();
    let mut level = Moments::new();
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(90_000 + r);
        let mut sampler = NoiseSampler::new(&model, &fine, fine.dt).unwrap();
        let mut increments = vec![vec![0.0; fine.len()]; 2 * steps];
        for inc in increments.iter_mut() {
            sampler.fill(&mut rng, inc);
        }
        let fine_traj = run_scheme(&fine, &DiffusionSpec::Linear, 2 * steps, &[2 * steps], |k, buf| buf.copy_from_slice(&increments[k]), false)
            .unwrap();
        let coarse_traj = run_scheme(
            &coarse,
            &DiffusionSpec::Linear,
            steps,
            &[steps],
            |k, buf| {
                for (i, b) in buf.iter_mut().enumerate() {
                    // average of the two fine cell values keeps the 1/dx normalization
                    *b = increments[2 * k][i] + increments[2 * k + 1][i];
                }
            },
            false,
        )
        .unwrap();
        let avg = |u: &[f64]| (u[..window].iter().sum::<f64>() / window as f64 - 1.0) * (window as f64 * coarse.dx).sqrt();
        let a = avg(&fine_traj.last().values);
        let b = avg(&coarse_traj.last().values);
        diff.push(a - b);
        level.push(a);
    }
    assert!(diff.mean().abs() < level.se(), "{} vs {}", diff.mean(), level.se());
}
