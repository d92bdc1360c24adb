//! Log-log power-law fits with bootstrap-t intervals, and the Hölder-moment
//! exponent check built on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{internal_rng, TestVerdict};
use crate::error::{argument, Result};

const BOOTSTRAP: usize = 4000;

/// Least-squares fit of `log y = intercept + slope · log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% bootstrap-t interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
    /// Pairs dropped because `y ≤ 0` or not finite.
    pub excluded: usize,
}

struct Ols {
    slope: f64,
    intercept: f64,
    se: f64,
    residuals: Vec<f64>,
    leverage: Vec<f64>,
}

fn ols(x: &[f64], y: &[f64]) -> Ols {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / (n - 2.0);
    let leverage = x.iter().map(|a| 1.0 / n + (a - mx).powi(2) / sxx).collect();
    Ols { slope, intercept, se: (s2 / sxx).sqrt(), residuals, leverage }
}

/// Fits `distance ∝ N^slope`; needs at least four distinct `N` spanning a decade.
pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let kept: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(n, d)| n > 0.0 && d > 0.0 && d.is_finite()).collect();
    let excluded = pairs.len() - kept.len();
    let mut distinct: Vec<f64> = kept.iter().map(|p| p.0).collect();
    distinct.sort_unstable_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(argument(format!(
            "need at least 4 distinct N with positive distance, have {} ({excluded} excluded)",
            distinct.len()
        )));
    }
    if distinct[distinct.len() - 1] < 10.0 * distinct[0] {
        return Err(argument(format!("N range {}..{} spans less than a decade", distinct[0], distinct[distinct.len() - 1])));
    }
    let x: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let fit = ols(&x, &y);
    let (ci_low, ci_high) = bootstrap_t(&x, &fit, kept.len());
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_se: fit.se,
        ci_low,
        ci_high,
        points: kept.len(),
        excluded,
    })
}

/// Residual bootstrap-t with leverage-adjusted residuals.
fn bootstrap_t(x: &[f64], fit: &Ols, key: usize) -> (f64, f64) {
    if !(fit.se > 0.0) {
        return (fit.slope, fit.slope);
    }
    let adjusted: Vec<f64> = fit.residuals.iter().zip(&fit.leverage).map(|(r, h)| r / (1.0 - h).max(1e-12).sqrt()).collect();
    let mean = adjusted.iter().sum::<f64>() / adjusted.len() as f64;
    let adjusted: Vec<f64> = adjusted.iter().map(|r| r - mean).collect();
    let mut rng = internal_rng("rate-bootstrap", &[key as u64], 0);
    let mut ts = Vec::with_capacity(BOOTSTRAP);
    let mut y = vec![0.0; x.len()];
    for _ in 0..BOOTSTRAP {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = fit.intercept + fit.slope * xi + adjusted[rng.random_range(0..adjusted.len())];
        }
        let b = ols(x, &y);
        if b.se > 0.0 {
            ts.push((b.slope - fit.slope) / b.se);
        }
    }
    if ts.len() < BOOTSTRAP / 2 {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    ts.sort_unstable_by(|a, b| a.total_cmp(b));
    let q = |p: f64| ts[((p * ts.len() as f64) as usize).min(ts.len() - 1)];
    (fit.slope - q(0.975) * fit.se, fit.slope - q(0.025) * fit.se)
}

/// Increments `S_{N,t2} - S_{N,t1}` (unscaled averages) over time gaps at a
/// fixed window, and over windows at a fixed gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderInput {
    pub k: f64,
    pub gamma_delta: f64,
    pub d: usize,
    pub gap_series: Vec<(f64, Vec<f64>)>,
    pub n_series: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub time_fit: RateFit,
    pub n_fit: RateFit,
    pub time_threshold: f64,
    pub n_target: f64,
    pub verdict: TestVerdict,
}

fn moment(samples: &[f64], k: f64) -> f64 {
    samples.iter().map(|v| v.abs().powf(k)).sum::<f64>() / samples.len() as f64
}

/// Passes when the gap exponent is at least `0.8 k γδ` and the window
/// exponent is within 0.2 of `-k d / 2`.
pub fn holder_moment_check(input: &HolderInput) -> Result<HolderReport> {
    if !(input.k > 0.0 && input.gamma_delta > 0.0) {
        return Err(argument("k and γδ must be positive"));
    }
    let gaps: Vec<(f64, f64)> = input.gap_series.iter().map(|(g, s)| (*g, moment(s, input.k))).collect();
    let windows: Vec<(f64, f64)> = input.n_series.iter().map(|(n, s)| (*n, moment(s, input.k))).collect();
    let time_fit = rate_fit(&gaps)?;
    let n_fit = rate_fit(&windows)?;
    let time_threshold = 0.8 * input.k * input.gamma_delta;
    let n_target = -input.k * input.d as f64 / 2.0;
    let pass = time_fit.slope >= time_threshold && (n_fit.slope - n_target).abs() <= 0.2;
    let n = input.gap_series.iter().chain(&input.n_series).map(|(_, s)| s.len()).sum();
    let verdict = TestVerdict {
        name: "holder_moment".into(),
        statistic: time_fit.slope,
        p_value: None,
        distance: None,
        threshold: time_threshold,
        pass,
        n,
        seed_digest: None,
        note: format!("window exponent {:.4} (target {n_target} ± 0.2)", n_fit.slope),
    };
    Ok(HolderReport { time_fit, n_fit, time_threshold, n_target, verdict })
}
