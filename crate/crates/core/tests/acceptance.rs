//! End-to-end acceptance run: every criterion prints one PASS/FAIL line and the
//! test fails if any criterion fails.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shelab::grid::{HeatSymbol, LatticeGrid};
use shelab::harness::{run_campaign, CampaignKind, ExperimentConfig, ExperimentResult, Overrides, RunOptions};
use shelab::kernel::{heat_kernel, kernel_double_argument, kernel_product_split, kernel_time_merge, semigroup_convolve};
use shelab::noise::NoiseModel;
use shelab::stats::{distance_to_gaussian, tv_normals_bound};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Writes straight to the process stderr so the lines survive output capture.
fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
    let _ = err.flush();
}

fn p(t: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 * PI * t).powf(-0.5 * x.len() as f64) * (-r2 / (2.0 * t)).exp()
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// `∫₀ᵗ p_{2s}(h) ds` for white noise in d = 1, by Simpson's rule in `s = v²`.
fn white_covariance(t: f64, h: f64) -> f64 {
    let n = 20_000;
    let top = t.sqrt();
    // 2v p_{2v²}(h) = e^{-h²/4v²}/√π, which tends to 1/√π at v = 0 only for h = 0
    let f = |v: f64| match (v == 0.0, h == 0.0) {
        (true, true) => 1.0 / PI.sqrt(),
        (true, false) => 0.0,
        _ => (-h * h / (4.0 * v * v)).exp() / PI.sqrt(),
    };
    let step = top / n as f64;
    let mut acc = f(0.0) + f(top);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * step);
    }
    acc * step / 3.0
}

/// `E[u(t,x)²]` for the parabolic Anderson model with space-time white noise.
fn white_pam_moment(t: f64) -> f64 {
    2.0 * (t / 4.0).exp() * phi((t / 2.0).sqrt())
}

fn campaign(kind: CampaignKind) -> ExperimentResult {
    let cfg = ExperimentConfig::load(kind, None, Overrides::default()).expect("preset");
    run_campaign(&cfg, &RunOptions::default()).expect("campaign runs")
}

fn verdict_line(r: &ExperimentResult, name: &str) -> (bool, String) {
    match r.verdict(name) {
        Some(v) => (v.pass, format!("{name} {}={:.4} (thr {:.4}) {}", if v.pass { "ok" } else { "FAILED" }, v.statistic, v.threshold, v.note)),
        None => (false, format!("{name} missing")),
    }
}

fn verdicts(r: &ExperimentResult, names: &[&str]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in names {
        let (ok, s) = verdict_line(r, n);
        pass &= ok;
        parts.push(s);
    }
    outcome(pass, parts.join(" | "))
}

fn kernel_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let d = 1 + i % 2;
        let s = rng.random_range(0.05..5.0);
        let tau = rng.random_range(0.05..5.0);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
        let lhs = p(s, &x) * p(s, &y);
        let (a, b) = kernel_product_split(s, &x, &y).unwrap();
        let e1 = (lhs - 2f64.powi(d as i32) * a * b).abs();
        let lhs = p(s, &x) * p(tau, &x);
        let (pre, k) = kernel_time_merge(s, tau, &x).unwrap();
        let e2 = (lhs - pre * k).abs();
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let sides = kernel_double_argument(s, &x).unwrap();
        let direct = 2f64.powi(-(d as i32)) * (2.0 * PI * s).powf(0.5 * d as f64) * p(s / 2.0, &x).powi(2);
        let e3 = (p(s, &twice) - sides.lhs).abs().max((direct - sides.rhs).abs()).max((sides.lhs - sides.rhs).abs());
        let e4 = (heat_kernel(s, &x, d).unwrap() - p(s, &x)).abs();
        worst = worst.max(e1).max(e2).max(e3).max(e4);
    }
    let mut semigroup = 0.0f64;
    for d in [1usize, 2] {
        for symbol in [HeatSymbol::Lattice, HeatSymbol::Continuum] {
            let g = LatticeGrid::new(d, 16, 0.25, 0.01).unwrap().with_symbol(symbol);
            for _ in 0..25 {
                let field: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.0..2.0)).collect();
                let (s, t) = (rng.random_range(0.01..1.0), rng.random_range(0.01..1.0));
                let two = semigroup_convolve(&semigroup_convolve(&field, s, &g).unwrap(), t, &g).unwrap();
                let one = semigroup_convolve(&field, s + t, &g).unwrap();
                semigroup = two.iter().zip(&one).map(|(a, b)| (a - b).abs()).fold(semigroup, f64::max);
            }
        }
    }
    outcome(worst <= 1e-12 && semigroup <= 1e-12, format!("max identity error {worst:.2e}, max semigroup error {semigroup:.2e}"))
}

fn upsilon_lambda() -> Outcome {
    let m = NoiseModel::dirac();
    let mut worst_u = 0.0f64;
    for lam in [0.1, 0.5, 1.0, 2.0, 10.0] {
        worst_u = worst_u.max((m.upsilon(lam).unwrap() - 1.0 / (2.0 * lam as f64).sqrt()).abs());
    }
    let mut worst_l = 0.0f64;
    for y in [0.1, 1.0, 10.0] {
        let back = m.upsilon(m.lambda_inverse(y).unwrap()).unwrap();
        worst_l = worst_l.max(((back - y) / y).abs());
        // Λ in closed form: 1/(2y²)
        worst_l = worst_l.max((m.lambda_inverse(y).unwrap() * 2.0 * y * y - 1.0).abs());
    }
    outcome(worst_u <= 1e-10 && worst_l <= 1e-10, format!("max |Υ − 1/√(2λ)| {worst_u:.2e}, max Λ round-trip error {worst_l:.2e}"))
}

fn gaussian_oracle(r: &ExperimentResult) -> Outcome {
    let rows = r.estimators["gaussian"].as_array().expect("gaussian rows");
    let mut pass = true;
    let mut parts = Vec::new();
    for row in rows {
        let lag = row["lag"].as_f64().unwrap();
        let cov = row["cov"].as_f64().unwrap();
        let se = row["se"].as_f64().unwrap();
        let oracle = white_covariance(0.5, lag);
        if lag == 0.0 {
            pass &= close(oracle, (0.5 / PI).sqrt(), 1e-9);
        }
        let z = (cov - oracle).abs() / se;
        pass &= z <= 3.0;
        parts.push(format!("lag {lag}: {cov:.4} vs {oracle:.4} (z {z:.2})"));
    }
    let ks = verdict_line(r, "gaussian_marginal_ks");
    outcome(pass && ks.0, format!("{}; {}", parts.join(", "), ks.1))
}

fn pam_moments(r: &ExperimentResult) -> Outcome {
    let rows = r.estimators["pam"].as_array().expect("pam rows");
    let mut pass = rows.len() == 3;
    let mut parts = Vec::new();
    for row in rows {
        let t = row["t"].as_f64().unwrap();
        let mean = row["mean"].as_f64().unwrap();
        let mean_se = row["mean_se"].as_f64().unwrap();
        let m2 = row["second_moment"].as_f64().unwrap();
        let oracle = white_pam_moment(t);
        let z = (mean - 1.0).abs() / mean_se;
        let rel = (m2 - oracle).abs() / oracle;
        pass &= z <= 4.0 && rel <= 0.05;
        parts.push(format!("t {t}: mean z {z:.2}, E[u²] {m2:.4} vs {oracle:.4} ({:.1}%)", 100.0 * rel));
    }
    outcome(pass, parts.join(", "))
}

fn clt(r: &ExperimentResult) -> Outcome {
    let mut o = verdicts(r, &["ks_normality[N=512,t=0.5]", "variance_consistency[N=512,t=0.5]"]);
    // ∫ Cov(u(t,0), u(t,x)) dx = ∫₀ᵗ E[u(s,0)²] ds for white noise
    let n = 2000;
    let h = 0.5 / n as f64;
    let analytic: f64 = (0..n).map(|i| white_pam_moment((i as f64 + 0.5) * h)).sum::<f64>() * h;
    o.detail.push_str(&format!(" | continuum B_t = {analytic:.4}"));
    o
}

fn fclt(r: &ExperimentResult) -> Outcome {
    verdicts(r, &["fclt"])
}

fn holder(r: &ExperimentResult) -> Outcome {
    let mut o = verdicts(r, &["holder_moment"]);
    let h = &r.estimators["holder"];
    let time = h["time_fit"]["slope"].as_f64().unwrap_or(f64::NAN);
    let win = h["n_fit"]["slope"].as_f64().unwrap_or(f64::NAN);
    let pass = time >= 0.8 * 2.0 * 0.45 && (win + 1.0).abs() <= 0.2;
    o.pass &= pass;
    o.detail = format!("time exponent {time:.3} (≥ 0.72), window exponent {win:.3} (−1 ± 0.2) | {}", o.detail);
    o
}

fn pinsker() -> Outcome {
    let exact = tv_normals_bound(2.0, 1.0).unwrap() == 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut pass = exact;
    let mut parts = Vec::new();
    for c1 in [1.0f64, 1.21, 1.5, 2.0, 4.0] {
        let c2 = 1.0;
        let bound = tv_normals_bound(c1, c2).unwrap();
        // exact TV of N(0,c1) and N(0,c2): the densities cross at ±x*
        let tv = if c1 == c2 {
            0.0
        } else {
            let xs = (c1 * c2 * (c1 / c2).ln() / (c1 - c2)).sqrt();
            2.0 * (phi(xs / c2.sqrt()) - phi(xs / c1.sqrt()))
        };
        let samples: Vec<f64> = (0..2000).map(|_| c1.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let est = distance_to_gaussian(&samples, Some(c2)).unwrap();
        let ok = tv <= bound + 1e-12 && est.value <= bound + 3.0 * est.control_sd;
        pass &= ok;
        parts.push(format!("c1 {c1}: bound {bound:.4}, exact {tv:.4}, estimate {:.4} ± {:.4}", est.value, est.control_sd));
    }
    outcome(pass, format!("tv_normals_bound(2,1) = 0.5 exactly: {exact}; {}", parts.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, reps) in [(CampaignKind::Associate, None), (CampaignKind::Clt, Some(500)), (CampaignKind::Malliavin, None)] {
        let cfg = ExperimentConfig::load(kind, None, Overrides { seed: Some(99), replicas: reps }).unwrap();
        let mut bytes = Vec::new();
        for workers in [1, 3] {
            let out = dir.path().join(format!("{kind}-{workers}"));
            run_campaign(&cfg, &RunOptions { workers: Some(workers), out: Some(out.clone()), force: false }).unwrap();
            bytes.push(std::fs::read(out.join("verdicts.json")).unwrap());
        }
        let same = bytes[0] == bytes[1];
        pass &= same;
        parts.push(format!("{kind}: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    outcome(pass, format!("verdicts.json with 1 vs 3 workers: {}", parts.join(", ")))
}

#[test]
fn acceptance() {
    type Check = Box<dyn FnOnce() -> Outcome>;
    // criteria reading the same campaign share one run
    let validate = std::rc::Rc::new(std::cell::OnceCell::new());
    let fclt_run = std::rc::Rc::new(std::cell::OnceCell::new());
    let (v1, v2) = (validate.clone(), validate.clone());
    let (f1, f2) = (fclt_run.clone(), fclt_run.clone());
    let criteria: Vec<(&str, Check)> = vec![
        ("kernel identities", Box::new(kernel_identities)),
        ("Υ/Λ closed form", Box::new(upsilon_lambda)),
        ("Gaussian oracle", Box::new(move || gaussian_oracle(v1.get_or_init(|| campaign(CampaignKind::Validate))))),
        ("PAM moment oracles", Box::new(move || pam_moments(v2.get_or_init(|| campaign(CampaignKind::Validate))))),
        ("CLT", Box::new(|| clt(&campaign(CampaignKind::Clt)))),
        (
            "KPZ height fluctuations",
            Box::new(|| verdicts(&campaign(CampaignKind::Kpz), &["ks_normality[N=512,t=0.5]", "variance_positive[N=512,t=0.5]"])),
        ),
        ("rate", Box::new(|| verdicts(&campaign(CampaignKind::Rate), &["rate_slope"]))),
        ("FCLT", Box::new(move || fclt(f1.get_or_init(|| campaign(CampaignKind::Fclt))))),
        ("Hölder modulus", Box::new(move || holder(f2.get_or_init(|| campaign(CampaignKind::Fclt))))),
        (
            "variance lower bound",
            Box::new(|| {
                verdicts(&campaign(CampaignKind::LowerBound), &["lower_bound_nonvacuous", "lower_bound_respected", "t_sequence_liminf"])
            }),
        ),
        (
            "Malliavin positivity and Clark–Ocone",
            Box::new(|| {
                verdicts(&campaign(CampaignKind::Malliavin), &["derivative_positivity", "clark_ocone", "constant_sigma_derivative"])
            }),
        ),
        (
            "association",
            Box::new(|| {
                verdicts(
                    &campaign(CampaignKind::Associate),
                    &["association[pam]", "association[constant]", "association_oracle[constant]"],
                )
            }),
        ),
        ("Pinsker bound", Box::new(pinsker)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        report(&format!("[{}] criterion {:>2} {name} ({secs:.1} s): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail));
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
