//! "TV proxy": half the L¹ distance between a Scott-rule histogram and the
//! reference normal integrated over the same bins, with the finite-sample
//! bias measured on same-size normal control runs and subtracted.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{internal_rng, normal_cdf};
use crate::error::{argument, domain, Error, Result};

pub const MIN_DISTANCE_SAMPLES: usize = 1000;
const CONTROL_RUNS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    /// Bias-corrected TV proxy.
    pub value: f64,
    /// Uncorrected histogram distance.
    pub raw: f64,
    /// Mean of the control runs.
    pub bias: f64,
    /// Standard deviation of the control runs; used as the estimator SE.
    pub control_sd: f64,
    pub n: usize,
    pub bins: usize,
}

fn raw_distance(samples: &[f64], scale: f64) -> (f64, usize) {
    let n = samples.len() as f64;
    let h = 3.49 * scale * n.powf(-1.0 / 3.0);
    let reach = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let half = (reach / h).floor() as i64 + 1;
    let bins = (2 * half) as usize;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let j = ((v / h).floor() as i64 + half).clamp(0, 2 * half - 1) as usize;
        counts[j] += 1;
    }
    let mut l1 = 0.0;
    let mut covered = 0.0;
    for (j, &c) in counts.iter().enumerate() {
        let a = (j as i64 - half) as f64 * h;
        let p = normal_cdf((a + h) / scale) - normal_cdf(a / scale);
        covered += p;
        l1 += (c as f64 / n - p).abs();
    }
    // reference mass beyond the outermost bins, where the histogram is empty
    l1 += (1.0 - covered).max(0.0);
    (0.5 * l1, bins)
}

fn scale_of(samples: &[f64]) -> f64 {
    (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt()
}

fn control_cache() -> &'static Mutex<HashMap<(usize, bool), (f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), (f64, f64)>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Mean and standard deviation of the raw distance for exact normal samples of size `n`.
fn control(n: usize, known_variance: bool) -> (f64, f64) {
    let key = (n, known_variance);
    if let Some(&v) = control_cache().lock().unwrap().get(&key) {
        return v;
    }
    let runs: Vec<f64> = (0..CONTROL_RUNS)
        .into_par_iter()
        .map(|i| {
            let mut rng = internal_rng("tv-control", &[n as u64, known_variance as u64], i as u64);
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let scale = if known_variance { 1.0 } else { scale_of(&x) };
            raw_distance(&x, scale).0
        })
        .collect();
    let m = runs.iter().sum::<f64>() / runs.len() as f64;
    let sd = (runs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (runs.len() - 1) as f64).sqrt();
    control_cache().lock().unwrap().insert(key, (m, sd));
    (m, sd)
}

/// TV proxy between the sample law and `N(0, variance)`; with no variance
/// given, the second moment of the sample is used.
pub fn distance_to_gaussian(samples: &[f64], variance: Option<f64>) -> Result<DistanceEstimate> {
    let n = samples.len();
    if n < MIN_DISTANCE_SAMPLES {
        return Err(Error::Refused(format!("{n} samples given, at least {MIN_DISTANCE_SAMPLES} required")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(domain("samples contain non-finite values"));
    }
    let scale = match variance {
        Some(v) if v > 0.0 && v.is_finite() => v.sqrt(),
        Some(v) => return Err(domain(format!("reference variance must be positive, got {v}"))),
        None => scale_of(samples),
    };
    if !(scale > 0.0) {
        return Err(domain("degenerate sample variance"));
    }
    let (raw, bins) = raw_distance(samples, scale);
    let (bias, control_sd) = control(n, variance.is_some());
    Ok(DistanceEstimate { value: raw - bias, raw, bias, control_sd, n, bins })
}

/// `½ √((c1 - c2)/c2)`, the Pinsker bound on `d_TV(N(0,c1), N(0,c2))` for `c1 ≥ c2`.
pub fn tv_normals_bound(c1: f64, c2: f64) -> Result<f64> {
    if !(c2 > 0.0 && c1.is_finite()) {
        return Err(argument(format!("variances must be positive and finite, got {c1}, {c2}")));
    }
    if c1 < c2 {
        return Err(argument(format!("need c1 ≥ c2, got c1 = {c1}, c2 = {c2}")));
    }
    Ok(0.5 * ((c1 - c2) / c2).sqrt())
}
