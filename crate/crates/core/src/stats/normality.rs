//! Kolmogorov–Smirnov test of `N(0, s²)` with the scale estimated from the
//! sample, calibrated by Monte Carlo at the sample size in use.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{internal_rng, normal_cdf, TestVerdict};
use crate::error::{Error, Result};

pub const MIN_NORMALITY_SAMPLES: usize = 500;

/// Null draws behind each calibrated p-value.
const CALIBRATION_DRAWS: usize = 4000;

/// `sup |F_n(x) - Φ(x/s)|` with `s² = n⁻¹ Σ x²` (the mean is taken as known, zero).
pub fn ks_statistic(samples: &[f64]) -> f64 {
    let mut x = samples.to_vec();
    ks_statistic_in_place(&mut x)
}

fn ks_statistic_in_place(x: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let s = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    x.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut d = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let f = normal_cdf(v / s);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

type CalibrationKey = (usize, u64);

fn calibration_cache() -> &'static Mutex<HashMap<CalibrationKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Sorted null statistics at sample size `n`. Null samples are
/// `Z_i + ρ Z_0`, reproducing a centering that was itself estimated with
/// standard error `ρ` relative to the sample standard deviation.
fn null_statistics(n: usize, rho: f64) -> Arc<Vec<f64>> {
    let rho_key = (rho * 1e4).round() as u64;
    let key = (n, rho_key);
    if let Some(v) = calibration_cache().lock().unwrap().get(&key) {
        return Arc::clone(v);
    }
    let rho = rho_key as f64 * 1e-4;
    let mut stats: Vec<f64> = (0..CALIBRATION_DRAWS)
        .into_par_iter()
        .map(|i| {
            let mut rng = internal_rng("ks-calibration", &[n as u64, rho_key], i as u64);
            let offset: f64 = rho * rng.sample::<f64, _>(StandardNormal);
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) + offset).collect();
            ks_statistic_in_place(&mut x)
        })
        .collect();
    stats.sort_unstable_by(|a, b| a.total_cmp(b));
    let stats = Arc::new(stats);
    calibration_cache().lock().unwrap().insert(key, Arc::clone(&stats));
    stats
}

/// Calibrated KS test; `centering_rho` is the standard error of the centering
/// divided by the sample standard deviation (0 for an analytic centering).
pub fn normality_test_with(samples: &[f64], level: f64, centering_rho: f64) -> Result<TestVerdict> {
    let n = samples.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(Error::Refused(format!("{n} samples given, at least {MIN_NORMALITY_SAMPLES} required")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::domain("samples contain non-finite values"));
    }
    if samples.iter().all(|&v| v == 0.0) {
        return Err(crate::error::domain("degenerate sample: all values are zero"));
    }
    let statistic = ks_statistic(samples);
    let null = null_statistics(n, centering_rho.max(0.0));
    let exceed = null.len() - null.partition_point(|&v| v < statistic);
    let p_value = (exceed + 1) as f64 / (null.len() + 1) as f64;
    Ok(TestVerdict {
        name: "ks_normality".into(),
        statistic,
        p_value: Some(p_value),
        distance: None,
        threshold: level,
        pass: p_value >= level,
        n,
        seed_digest: None,
        note: String::new(),
    })
}

/// Calibrated KS test at level 0.01 with an analytic centering.
pub fn normality_test(samples: &[f64]) -> Result<TestVerdict> {
    normality_test_with(samples, 0.01, 0.0)
}
