//! Finite-dimensional checks of the functional CLT and the time-dependent CLT.

use serde::{Deserialize, Serialize};

use super::{distance_to_gaussian, normality_test_with, TestVerdict};
use crate::error::{argument, Error, Result};
use crate::observables::estimate_b;

/// Covariance of the limit process at `times`, with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLimitSpec {
    pub times: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let m = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..m).map(|i| a[i][i]).collect();
    ev.sort_unstable_by(|x, y| x.total_cmp(y));
    ev
}

impl GaussianLimitSpec {
    pub fn new(times: Vec<f64>, cov: Vec<Vec<f64>>, se: Vec<Vec<f64>>) -> Result<Self> {
        let m = times.len();
        let square = |x: &Vec<Vec<f64>>| x.len() == m && x.iter().all(|r| r.len() == m);
        if !(square(&cov) && square(&se)) {
            return Err(argument(format!("covariance and SE matrices must be {m}×{m}")));
        }
        let scale = cov.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in 0..i {
                if (cov[i][j] - cov[j][i]).abs() > 1e-12 * scale {
                    return Err(argument(format!("covariance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let max_se = se.iter().flatten().fold(0.0f64, |a, v| a.max(*v));
        let lowest = symmetric_eigenvalues(&cov)[0];
        if lowest < -3.0 * max_se {
            return Err(argument(format!(
                "covariance matrix has eigenvalue {lowest}, below -3 × max SE = {}",
                -3.0 * max_se
            )));
        }
        Ok(Self { times, cov, se })
    }
}

/// `joint[r][i]` is replica `r` of `N^{d/2} S_{N,t_i}`. Passes when every
/// covariance entry is within three combined standard errors of the spec
/// and every marginal passes the calibrated KS test at `level`.
pub fn fclt_check(joint: &[Vec<f64>], spec: &GaussianLimitSpec, level: f64) -> Result<TestVerdict> {
    let m = spec.times.len();
    if !(2..=5).contains(&m) {
        return Err(argument(format!("between 2 and 5 times are supported, got {m}")));
    }
    if joint.len() < 1000 {
        return Err(Error::Refused(format!("{} joint replicas given, at least 1000 required", joint.len())));
    }
    if joint.iter().any(|r| r.len() != m) {
        return Err(argument("every joint replica must have one value per time"));
    }
    if spec.cov.iter().flatten().all(|v| v.abs() < 1e-12) {
        return Err(Error::Undetermined("limit covariance is numerically zero".into()));
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|i| joint.iter().map(|r| r[i]).collect()).collect();
    let mut worst_z = 0.0f64;
    let mut cov_ok = true;
    for i in 0..m {
        for j in i..m {
            let e = estimate_b(&cols[i], &cols[j])?;
            let se = (e.se * e.se + spec.se[i][j] * spec.se[i][j]).sqrt();
            let z = (e.value - spec.cov[i][j]).abs() / se.max(f64::MIN_POSITIVE);
            worst_z = worst_z.max(z);
            cov_ok &= z <= 3.0;
        }
    }
    let mut min_p = 1.0f64;
    let mut marg_ok = true;
    for c in &cols {
        let v = normality_test_with(c, level, 0.0)?;
        min_p = min_p.min(v.p_value.unwrap_or(0.0));
        marg_ok &= v.pass;
    }
    Ok(TestVerdict {
        name: "fclt".into(),
        statistic: worst_z,
        p_value: Some(min_p),
        distance: None,
        threshold: 3.0,
        pass: cov_ok && marg_ok,
        n: joint.len(),
        seed_digest: None,
        note: format!("max covariance z = {worst_z:.3}; min marginal KS p = {min_p:.4}"),
    })
}

/// Replicas of the centered average at one `(N, t_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TnPoint {
    pub n_window: f64,
    pub t: f64,
    pub samples: Vec<f64>,
}

/// Passes when the standardized average at the largest `N` passes the KS
/// test and the TV proxy does not increase along the `N` sequence beyond
/// three combined control SDs.
pub fn tn_clt_check(points: &[TnPoint], level: f64) -> Result<TestVerdict> {
    if points.is_empty() {
        return Err(argument("no (N, t_N) points supplied"));
    }
    let mut sorted: Vec<&TnPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.n_window.total_cmp(&b.n_window));
    let distances = sorted
        .iter()
        .map(|p| distance_to_gaussian(&p.samples, None))
        .collect::<Result<Vec<_>>>()?;
    let monotone = distances
        .windows(2)
        .all(|w| w[1].value <= w[0].value + 3.0 * (w[0].control_sd.powi(2) + w[1].control_sd.powi(2)).sqrt());
    let last = sorted.last().unwrap();
    let ks = normality_test_with(&last.samples, level, 0.0)?;
    let trail: Vec<String> = sorted.iter().zip(&distances).map(|(p, d)| format!("N={} t={:.3}: {:.4}", p.n_window, p.t, d.value)).collect();
    Ok(TestVerdict {
        name: "tn_clt".into(),
        statistic: ks.statistic,
        p_value: ks.p_value,
        distance: Some(distances.last().unwrap().value),
        threshold: level,
        pass: ks.pass && monotone,
        n: points.iter().map(|p| p.samples.len()).sum(),
        seed_digest: None,
        note: format!("TV proxy by N: {}; nonincreasing within noise: {monotone}", trail.join(", ")),
    })
}
