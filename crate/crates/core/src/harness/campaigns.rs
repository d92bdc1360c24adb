//! The named campaigns.

use std::collections::BTreeMap;

use serde_json::json;

use super::config::{CampaignKind, ExperimentConfig};
use super::output::ReplicaSink;
use super::seed::{replica_tag, seed_set_digest, seed_stream};
use super::{replicate, CampaignOutput, PlotTable, ReplicaRecord};
use crate::error::{argument, Error, Result};
use crate::grid::{HeatSymbol, LatticeGrid};
use crate::kernel::heat_kernel_unchecked;
use crate::malliavin::{
    clark_ocone_check, constant_c_tke, constants_report, positivity_counts, rate_bound_eval, simulate_derivative, theta_estimate,
    PositivityCounts, RESOLVABLE_LEVEL,
};
use crate::noise::{DalangIntegral, NoiseKind, NoiseModel};
use crate::observables::{
    estimate_b, estimate_b_limit, variance_lower_bound, window_mean, window_sites, Centering, CovarianceReport, Estimate, LimitEstimate,
    LowerBoundParams, ObservableSpec, WindowStatus, VIOLATION_LIMIT,
};
use crate::solver::{
    gaussian_oracle_covariance, pam_second_moment_oracle, simulate, simulate_archived, DiffusionSpec, FieldFrame, Trajectory,
};
use crate::stats::{
    association_check, distance_to_gaussian, fclt_check, holder_moment_check, normality_test_with, rate_fit, tn_clt_check,
    AssociationPair, GaussianLimitSpec, HolderInput, MonotoneFunctional, TestVerdict, TnPoint,
};

const LEVEL: f64 = 0.01;

struct Setup {
    grid: LatticeGrid,
    model: NoiseModel,
    sigma: DiffusionSpec,
    g: ObservableSpec,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    Ok(Setup { grid: cfg.lattice()?, model: cfg.noise_model()?, sigma: cfg.diffusion_spec()?, g: cfg.observable.clone() })
}

fn key(x: f64) -> String {
    format!("{x}")
}

fn col(prefix: &str, n: f64, t: f64) -> String {
    format!("{prefix}_N{}_t{}", key(n), key(t))
}

fn sorted_times(ts: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = ts.into_iter().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    v
}

fn failed(replica: usize, tag: String, width: usize, why: String) -> ReplicaRecord {
    ReplicaRecord { replica, seed: tag, values: vec![f64::NAN; width], rejected: 0, failure: Some(why) }
}

fn column(records: &[ReplicaRecord], j: usize) -> Vec<f64> {
    records.iter().filter(|r| r.ok()).map(|r| r.values[j]).collect()
}

fn ok_indices(records: &[ReplicaRecord]) -> Vec<usize> {
    records.iter().filter(|r| r.ok()).map(|r| r.replica).collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn verdict(name: impl Into<String>, statistic: f64, threshold: f64, pass: bool, n: usize) -> TestVerdict {
    TestVerdict { name: name.into(), statistic, p_value: None, distance: None, threshold, pass, n, seed_digest: None, note: String::new() }
}

fn renamed(mut v: TestVerdict, name: impl Into<String>) -> TestVerdict {
    v.name = name.into();
    v
}

/// Integration box for `B_{t1,t2}`: eight spreads of the covariance, capped by the torus.
fn limit_lag(cfg: &ExperimentConfig, grid: &LatticeGrid, t: f64) -> f64 {
    let reach = match cfg.noise_model().map(|m| m.kind) {
        Ok(NoiseKind::Gaussian { bandwidth }) => bandwidth.sqrt(),
        Ok(NoiseKind::Exponential { rate }) => 1.0 / rate,
        _ => 0.0,
    };
    let want = 8.0 * (2.0 * t).sqrt() + 8.0 * reach;
    let cap = grid.length() / 2.0 - grid.dx;
    (want.min(cap) / grid.dx).floor() * grid.dx
}

/// Column names of the main replica set, known before any replica runs.
pub(crate) fn columns(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    use CampaignKind::*;
    Ok(match cfg.campaign {
        Validate => {
            let v = cfg.validate.as_ref().unwrap();
            let mut c = vec!["gauss_u".to_string()];
            c.extend(v.lags.iter().map(|l| format!("gauss_prod_lag{}", key(*l))));
            c.extend(v.pam_times.iter().map(|t| format!("pam_u_t{}", key(*t))));
            c.extend(v.pam_times.iter().map(|t| format!("pam_u2_t{}", key(*t))));
            c
        }
        Clt | Kpz | Rate | LowerBound => {
            cfg.times.iter().flat_map(|&t| cfg.windows.iter().map(move |&n| col("mean", n, t))).collect()
        }
        Fclt => fclt_pairs(cfg).iter().map(|&(n, t)| col("mean", n, t)).collect(),
        TnClt => cfg.windows.iter().zip(cfg.tn_times()).map(|(&n, t)| col("mean", n, t)).collect(),
        Malliavin => {
            let m = cfg.malliavin.as_ref().unwrap();
            let mut c = vec!["resolvable".to_string(), "nonpositive".to_string(), "d_end_z".to_string()];
            for t in &cfg.times {
                for o in &m.envelope_offsets {
                    c.push(format!("ratio_t{}_o{o}", key(*t)));
                }
            }
            c
        }
        Associate => {
            let a = cfg.associate.as_ref().unwrap();
            let mut c = Vec::new();
            for model in ["pam", "const"] {
                for i in 0..a.pairs.len() {
                    c.push(format!("{model}_h1_{i}"));
                    c.push(format!("{model}_h2_{i}"));
                }
            }
            c
        }
        Constants => cfg.times.iter().map(|t| format!("u0_t{}", key(*t))).collect(),
        Dalang => Vec::new(),
    })
}

pub(crate) fn run(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    use CampaignKind::*;
    match cfg.campaign {
        Validate => validate(cfg, sink),
        Clt | Kpz => clt(cfg, sink),
        Rate => rate(cfg, sink),
        Fclt => fclt(cfg, sink),
        LowerBound => lower_bound(cfg, sink),
        Malliavin => malliavin(cfg, sink),
        Associate => associate(cfg, sink),
        TnClt => tn_clt(cfg, sink),
        Dalang => dalang(cfg),
        Constants => constants(cfg, sink),
    }
}

/// Replica 0 of the primary stream at the campaign's times.
pub(crate) fn export_trajectory(cfg: &ExperimentConfig) -> Result<Vec<FieldFrame>> {
    let s = setup(cfg)?;
    let t_max = cfg.t_max();
    let mut times = cfg.times.clone();
    times.push(t_max);
    let times = sorted_times(times);
    let mut rng = seed_stream(cfg.seed, 0, "noise");
    Ok(simulate(&s.grid, &s.model, &s.sigma, t_max, &times, &mut rng)?.frames)
}

// ---------------------------------------------------------------------------
// centering and window means

/// `E[g(u(t, 0))]` for each time: analytic for `g = id`, otherwise from an
/// independent set of twice as many replicas, each averaged over the torus.
fn centerings(cfg: &ExperimentConfig, s: &Setup, times: &[f64]) -> Result<(Vec<Centering>, Option<PlotTable>)> {
    if matches!(s.g, ObservableSpec::Identity) {
        return Ok((times.iter().map(|_| Centering::analytic(1.0)).collect(), None));
    }
    let count = 2 * cfg.replicas;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let rows = replicate::<(), _>(count, &mut None, |r| {
        let tag = replica_tag(cfg.seed, r as u64, "centering");
        let mut rng = seed_stream(cfg.seed, r as u64, "centering");
        let traj = match simulate(&s.grid, &s.model, &s.sigma, t_max, times, &mut rng) {
            Ok(t) => t,
            Err(e) => return (failed(r, tag, times.len(), e.to_string()), None),
        };
        let mut values = Vec::with_capacity(times.len());
        let mut rejected = 0;
        for &t in times {
            let u = &traj.frame_at(t).expect("requested frame").values;
            let (sum, good) = u.iter().filter(|&&v| s.g.in_domain(v)).fold((0.0, 0usize), |(a, n), &v| (a + s.g.eval_unchecked(v), n + 1));
            rejected += u.len() - good;
            values.push(sum / good as f64);
        }
        let limit = VIOLATION_LIMIT * (s.grid.len() * times.len()) as f64;
        let failure = (rejected as f64 > limit).then(|| format!("{rejected} domain violations"));
        (ReplicaRecord { replica: r, seed: tag, values, rejected, failure }, None)
    })?;
    let records: Vec<ReplicaRecord> = rows.into_iter().map(|r| r.0).collect();
    let bad = records.iter().filter(|r| !r.ok()).count();
    if bad as f64 > cfg.harness.failure_budget * count as f64 {
        return Err(Error::Undetermined(format!("{bad} of {count} centering replicas failed")));
    }
    let cs = (0..times.len())
        .map(|j| {
            let (m, se) = mean_se(&column(&records, j));
            Centering::monte_carlo(m, se)
        })
        .collect();
    let mut header = vec!["replica".to_string()];
    header.extend(times.iter().map(|t| format!("g_t{}", key(*t))));
    let table = PlotTable {
        file: "centering.csv".into(),
        header,
        rows: records.iter().map(|r| std::iter::once(r.replica as f64).chain(r.values.iter().copied()).collect()).collect(),
    };
    Ok((cs, Some(table)))
}

/// Window means of `g(u)` for each requested `(N, t)`; `Err` carries a failure note.
fn window_means(traj: &Trajectory, s: &Setup, pairs: &[(f64, f64)]) -> std::result::Result<(Vec<f64>, usize), String> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut rejected = 0;
    for &(n, t) in pairs {
        let frame = traj.frame_at(t).ok_or_else(|| format!("missing frame at {t}"))?;
        let m = window_sites(&s.grid, n).map_err(|e| e.to_string())?;
        let (mean, bad, total) = window_mean(&frame.values, &s.grid, m, &s.g);
        rejected += bad;
        if bad as f64 > VIOLATION_LIMIT * total as f64 || !mean.is_finite() {
            return Err(format!("{bad} of {total} window sites outside the domain of g"));
        }
        out.push(mean);
    }
    Ok((out, rejected))
}

fn scaled(means: &[f64], n: f64, d: usize, c: f64) -> Vec<f64> {
    let scale = n.powf(0.5 * d as f64);
    means.iter().map(|m| scale * (m - c)).collect()
}

/// Simulates the primary replica set, keeping frames at `keep_times`.
#[allow(clippy::type_complexity)]
fn window_replicas(
    cfg: &ExperimentConfig,
    s: &Setup,
    pairs: &[(f64, f64)],
    keep_times: &[f64],
    sink: &mut Option<ReplicaSink>,
) -> Result<(Vec<ReplicaRecord>, Vec<Vec<Vec<f64>>>)> {
    let times = sorted_times(pairs.iter().map(|p| p.1).chain(keep_times.iter().copied()));
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let rows = replicate(cfg.replicas, sink, |r| {
        let tag = replica_tag(cfg.seed, r as u64, "noise");
        let mut rng = seed_stream(cfg.seed, r as u64, "noise");
        let traj = match simulate(&s.grid, &s.model, &s.sigma, t_max, &times, &mut rng) {
            Ok(t) => t,
            Err(e) => return (failed(r, tag, pairs.len(), e.to_string()), None),
        };
        match window_means(&traj, s, pairs) {
            Ok((values, rejected)) => {
                let kept: Vec<Vec<f64>> = keep_times.iter().map(|&t| traj.frame_at(t).expect("kept frame").values.clone()).collect();
                (ReplicaRecord { replica: r, seed: tag, values, rejected, failure: None }, Some(kept))
            }
            Err(why) => {
                let mut rec = failed(r, tag, pairs.len(), why);
                rec.rejected = 1;
                (rec, None)
            }
        }
    })?;
    let mut records = Vec::with_capacity(rows.len());
    let mut frames = Vec::new();
    for (rec, payload) in rows {
        if let Some(p) = payload {
            frames.push(p);
        }
        records.push(rec);
    }
    Ok((records, frames))
}

fn frames_at(frames: &[Vec<Vec<f64>>], i: usize) -> Vec<&[f64]> {
    frames.iter().map(|f| f[i].as_slice()).collect()
}

fn lag_table(file: &str, est: &LimitEstimate) -> PlotTable {
    PlotTable {
        file: file.into(),
        header: vec!["lag".into(), "cov".into(), "se".into()],
        rows: est.curve.iter().map(|c| vec![c.lag, c.cov, c.se]).collect(),
    }
}

// ---------------------------------------------------------------------------
// validate

fn validate(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let v = cfg.validate.as_ref().unwrap();
    let s = setup(cfg)?;
    let sigma0 = match s.sigma {
        DiffusionSpec::Constant(c) => c,
        _ => return Err(argument("validate needs a constant σ")),
    };
    let grid = &s.grid;
    let n = grid.n_sites;
    let spread = |count: usize| -> Vec<usize> { (0..count).map(|i| grid.flat_index(&vec![i * n / count; grid.d])).collect() };
    let probes = spread(v.gaussian_probe_sites);
    let pam_probes = spread(v.pam_probe_sites);
    let lag_steps: Vec<i64> = v.lags.iter().map(|l| (l / grid.dx).round() as i64).collect();
    let pam_t_max = v.pam_times.iter().copied().fold(0.0, f64::max);
    let width = 1 + v.lags.len() + 2 * v.pam_times.len();
    let pf = probes.len() as f64;
    let ppf = pam_probes.len() as f64;
    let rows = replicate::<(), _>(cfg.replicas, sink, |r| {
        let tag = replica_tag(cfg.seed, r as u64, "gaussian");
        let mut rng = seed_stream(cfg.seed, r as u64, "gaussian");
        let gauss = match simulate(grid, &s.model, &s.sigma, v.gaussian_time, &[v.gaussian_time], &mut rng) {
            Ok(t) => t,
            Err(e) => return (failed(r, tag, width, e.to_string()), None),
        };
        let u = &gauss.last().values;
        let mut values = vec![u[probes[0]] - 1.0];
        for &k in &lag_steps {
            let mut shift = vec![0i64; grid.d];
            shift[0] = k;
            let prod: f64 = probes.iter().map(|&p| (u[p] - 1.0) * (u[grid.shifted(p, &shift)] - 1.0)).sum();
            values.push(prod / pf);
        }
        let mut rng = seed_stream(cfg.seed, r as u64, "pam");
        let pam = match simulate(grid, &s.model, &DiffusionSpec::Linear, pam_t_max, &v.pam_times, &mut rng) {
            Ok(t) => t,
            Err(e) => return (failed(r, tag, width, e.to_string()), None),
        };
        let mut second = Vec::new();
        for &t in &v.pam_times {
            let u = &pam.frame_at(t).expect("pam frame").values;
            values.push(pam_probes.iter().map(|&p| u[p]).sum::<f64>() / ppf);
            second.push(pam_probes.iter().map(|&p| u[p] * u[p]).sum::<f64>() / ppf);
        }
        values.extend(second);
        (ReplicaRecord { replica: r, seed: tag, values, rejected: 0, failure: None }, None)
    })?;
    let records: Vec<ReplicaRecord> = rows.into_iter().map(|r| r.0).collect();
    let ok = ok_indices(&records);
    let digest = Some(seed_set_digest(cfg.seed, "gaussian", ok.iter().copied()));
    let mut verdicts = Vec::new();

    let mut gauss_rows = Vec::new();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for (i, &lag) in v.lags.iter().enumerate() {
        let (m, se) = mean_se(&column(&records, 1 + i));
        let mut lag_vec = vec![0.0; grid.d];
        lag_vec[0] = lag;
        let oracle = gaussian_oracle_covariance(&s.model, sigma0, v.gaussian_time, &lag_vec)?;
        let z = (m - oracle).abs() / se;
        worst = worst.max(z);
        notes.push(format!("lag {lag}: {m:.5} vs {oracle:.5}"));
        gauss_rows.push(json!({"lag": lag, "cov": m, "se": se, "oracle": oracle, "z": z}));
    }
    verdicts.push(
        verdict("gaussian_covariance", worst, 3.0, worst <= 3.0, ok.len()).with_note(notes.join("; ")).with_seed_digest(digest.clone()),
    );
    let ks = normality_test_with(&column(&records, 0), LEVEL, 0.0)?;
    verdicts.push(renamed(ks, "gaussian_marginal_ks").with_seed_digest(digest));

    let pam_digest = Some(seed_set_digest(cfg.seed, "pam", ok.iter().copied()));
    let base = 1 + v.lags.len();
    let k = v.pam_times.len();
    let mut pam_rows = Vec::new();
    let mut variance_rows = Vec::new();
    let (mut worst_z, mut worst_rel) = (0.0f64, 0.0f64);
    let mut notes = Vec::new();
    for (i, &t) in v.pam_times.iter().enumerate() {
        let (m1, se1) = mean_se(&column(&records, base + i));
        let (m2, se2) = mean_se(&column(&records, base + k + i));
        let oracle = pam_second_moment_oracle(&s.model, t, &vec![0.0; grid.d])?;
        let z = (m1 - 1.0).abs() / se1;
        let rel = (m2 - oracle).abs() / oracle;
        worst_z = worst_z.max(z);
        worst_rel = worst_rel.max(rel);
        notes.push(format!("t {t}: E[u²] {m2:.5} vs {oracle:.5}"));
        pam_rows.push(json!({"t": t, "mean": m1, "mean_se": se1, "second_moment": m2, "second_moment_se": se2, "oracle": oracle}));
        variance_rows.push(vec![t, m2 - 1.0, se2]);
    }
    verdicts.push(verdict("pam_mean", worst_z, 4.0, worst_z <= 4.0, ok.len()).with_seed_digest(pam_digest.clone()));
    verdicts.push(
        verdict("pam_second_moment", worst_rel, 0.05, worst_rel <= 0.05, ok.len()).with_note(notes.join("; ")).with_seed_digest(pam_digest),
    );
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"gaussian": gauss_rows, "pam": pam_rows}),
        verdicts,
        plots: vec![PlotTable { file: "variance.csv".into(), header: vec!["t".into(), "variance".into(), "se".into()], rows: variance_rows }],
        documents: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// clt / kpz

fn clt(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let s = setup(cfg)?;
    let d = s.grid.d;
    let pairs: Vec<(f64, f64)> = cfg.times.iter().flat_map(|&t| cfg.windows.iter().map(move |&n| (n, t))).collect();
    let (cents, cent_table) = centerings(cfg, &s, &cfg.times)?;
    let (records, frames) = window_replicas(cfg, &s, &pairs, &cfg.times, sink)?;
    let ok = ok_indices(&records);
    let digest = Some(seed_set_digest(cfg.seed, "noise", ok.iter().copied()));
    let pam = matches!(s.sigma, DiffusionSpec::Linear);
    let mut verdicts = Vec::new();
    let mut reports = Vec::new();
    let mut plots = Vec::new();
    let mut limits = Vec::new();
    for (ti, &t) in cfg.times.iter().enumerate() {
        let f = frames_at(&frames, ti);
        let limit = estimate_b_limit(&f, &f, &s.grid, &s.g, limit_lag(cfg, &s.grid, t))?;
        let file = if cfg.times.len() == 1 { "lag_cov.csv".to_string() } else { format!("lag_cov_t{}.csv", key(t)) };
        plots.push(lag_table(&file, &limit));
        if pam && s.g.derivative_sign().is_some() {
            let z = limit.value / limit.se;
            verdicts.push(
                verdict(format!("b_limit_positive[t={t}]"), z, 3.0, z > 3.0, limit.replicas)
                    .with_note(format!("B = {:.5} ± {:.5}", limit.value, limit.se))
                    .with_seed_digest(digest.clone()),
            );
        }
        for (ni, &n) in cfg.windows.iter().enumerate() {
            let j = ti * cfg.windows.len() + ni;
            let samples = scaled(&column(&records, j), n, d, cents[ti].value);
            let b_n = estimate_b(&samples, &samples)?;
            let rho = cents[ti].se * n.powf(0.5 * d as f64) / sd(&samples);
            let tag = format!("[N={n},t={t}]");
            let ks = normality_test_with(&samples, LEVEL, rho)?;
            verdicts.push(renamed(ks, format!("ks_normality{tag}")).with_seed_digest(digest.clone()));
            let rel = (b_n.value - limit.value).abs() / limit.value.abs();
            let mut note = format!("Var = {:.5} ± {:.5}, B = {:.5} ± {:.5}", b_n.value, b_n.se, limit.value, limit.se);
            if limit.status == WindowStatus::WindowTooSmall {
                note.push_str(&format!("; integration box too small (tail fraction {:.3})", limit.tail_fraction));
            }
            verdicts.push(
                verdict(format!("variance_consistency{tag}"), rel, 0.10, rel <= 0.10, samples.len())
                    .with_note(note)
                    .with_seed_digest(digest.clone()),
            );
            if cfg.campaign == CampaignKind::Kpz {
                let z = b_n.value / b_n.se;
                verdicts.push(
                    verdict(format!("variance_positive{tag}"), z, 3.0, z > 3.0, samples.len()).with_seed_digest(digest.clone()),
                );
            }
            reports.push(CovarianceReport::new(t, t, &s.g, n, b_n, &limit));
        }
        limits.push(json!({"t": t, "b_limit": limit.value, "se": limit.se, "tail_fraction": limit.tail_fraction,
            "max_lag": limit.max_lag, "status": limit.status, "rejected": limit.rejected}));
    }
    if let Some(t) = cent_table {
        plots.push(t);
    }
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"centering": cents, "b_limit": limits, "covariance": reports}),
        verdicts,
        plots,
        documents: vec![("covariance.json".into(), serde_json::to_value(&reports).unwrap())],
    })
}

// ---------------------------------------------------------------------------
// rate

fn rate(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let s = setup(cfg)?;
    let d = s.grid.d;
    let t = cfg.times[0];
    let pairs: Vec<(f64, f64)> = cfg.windows.iter().map(|&n| (n, t)).collect();
    let (cents, cent_table) = centerings(cfg, &s, &[t])?;
    let (records, _) = window_replicas(cfg, &s, &pairs, &[], sink)?;
    let ok = ok_indices(&records);
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut dists = Vec::new();
    for (j, &n) in cfg.windows.iter().enumerate() {
        let samples = scaled(&column(&records, j), n, d, cents[0].value);
        let est = distance_to_gaussian(&samples, None)?;
        rows.push(vec![n, est.value, est.control_sd]);
        points.push((n, est.value));
        dists.push(json!({"N": n, "tv_proxy": est}));
    }
    let fit = rate_fit(&points)?;
    let target = -0.5 * d as f64;
    let (lo, hi) = (target - 0.2, target + 0.2);
    let pass = fit.slope >= lo && fit.slope <= hi;
    let v = verdict("rate_slope", fit.slope, target, pass, ok.len())
        .with_note(format!(
            "TV proxy slope {:.4} (band [{lo}, {hi}]), 95% bootstrap CI [{:.4}, {:.4}], {} points, {} excluded",
            fit.slope, fit.ci_low, fit.ci_high, fit.points, fit.excluded
        ))
        .with_seed_digest(Some(seed_set_digest(cfg.seed, "noise", ok.iter().copied())));
    let mut plots = vec![PlotTable { file: "rate.csv".into(), header: vec!["N".into(), "distance".into(), "se".into()], rows }];
    plots.extend(cent_table);
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"t": t, "distances": dists, "fit": fit}),
        verdicts: vec![v],
        plots,
        documents: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// fclt + Hölder moments

fn fclt_pairs(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    let f = cfg.fclt.as_ref().unwrap();
    let n0 = cfg.windows[0];
    let mut pairs: Vec<(f64, f64)> = cfg.times.iter().map(|&t| (n0, t)).collect();
    pairs.push((n0, f.holder_base));
    pairs.extend(f.gaps.iter().map(|g| (n0, f.holder_base + g)));
    for &w in &f.holder_windows {
        pairs.push((w, f.holder_base));
        pairs.push((w, f.holder_base + f.holder_gap));
    }
    let mut seen = Vec::new();
    pairs.retain(|p| {
        let k = (key(p.0), key(p.1));
        if seen.contains(&k) {
            false
        } else {
            seen.push(k);
            true
        }
    });
    pairs
}

fn fclt(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let f = cfg.fclt.as_ref().unwrap();
    let s = setup(cfg)?;
    let d = s.grid.d;
    let n0 = cfg.windows[0];
    let pairs = fclt_pairs(cfg);
    let all_times = sorted_times(pairs.iter().map(|p| p.1));
    let (cents, cent_table) = centerings(cfg, &s, &all_times)?;
    let centering_at = |t: f64| cents[all_times.iter().position(|&x| (x - t).abs() <= 1e-12).unwrap()].value;
    let (records, frames) = window_replicas(cfg, &s, &pairs, &cfg.times, sink)?;
    let ok = ok_indices(&records);
    let digest = Some(seed_set_digest(cfg.seed, "noise", ok.iter().copied()));
    let index: BTreeMap<(String, String), usize> = pairs.iter().enumerate().map(|(j, p)| ((key(p.0), key(p.1)), j)).collect();
    let raw = |n: f64, t: f64| {
        let j = index[&(key(n), key(t))];
        column(&records, j).into_iter().map(move |m| m - centering_at(t)).collect::<Vec<f64>>()
    };

    let m = cfg.times.len();
    let scale = n0.powf(0.5 * d as f64);
    let cols: Vec<Vec<f64>> = cfg.times.iter().map(|&t| raw(n0, t).into_iter().map(|v| scale * v).collect()).collect();
    let joint: Vec<Vec<f64>> = (0..cols[0].len()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
    let mut cov = vec![vec![0.0; m]; m];
    let mut se = vec![vec![0.0; m]; m];
    let mut reports = Vec::new();
    let mut variance_rows = Vec::new();
    let mut plots = Vec::new();
    for i in 0..m {
        for j in i..m {
            let (ti, tj) = (cfg.times[i], cfg.times[j]);
            let fi = frames_at(&frames, i);
            let fj = frames_at(&frames, j);
            let limit = estimate_b_limit(&fi, &fj, &s.grid, &s.g, limit_lag(cfg, &s.grid, ti.max(tj)))?;
            cov[i][j] = limit.value;
            cov[j][i] = limit.value;
            se[i][j] = limit.se;
            se[j][i] = limit.se;
            let b_n: Estimate = estimate_b(&cols[i], &cols[j])?;
            if i == j {
                variance_rows.push(vec![ti, b_n.value, b_n.se]);
            }
            if i == 0 && j == m - 1 {
                plots.push(lag_table("lag_cov.csv", &limit));
            }
            reports.push(CovarianceReport::new(ti, tj, &s.g, n0, b_n, &limit));
        }
    }
    let spec = GaussianLimitSpec::new(cfg.times.clone(), cov, se)?;
    let mut verdicts = vec![fclt_check(&joint, &spec, LEVEL)?.with_seed_digest(digest.clone())];

    let gap_series = f.gaps.iter().map(|&g| {
        let a = raw(n0, f.holder_base);
        let b = raw(n0, f.holder_base + g);
        (g, b.iter().zip(&a).map(|(x, y)| x - y).collect())
    });
    let n_series = f.holder_windows.iter().map(|&w| {
        let a = raw(w, f.holder_base);
        let b = raw(w, f.holder_base + f.holder_gap);
        (w, b.iter().zip(&a).map(|(x, y)| x - y).collect())
    });
    let holder = holder_moment_check(&HolderInput {
        k: f.k,
        gamma_delta: f.gamma_delta,
        d,
        gap_series: gap_series.collect(),
        n_series: n_series.collect(),
    })?;
    verdicts.push(holder.verdict.clone().with_seed_digest(digest));
    plots.push(PlotTable { file: "variance.csv".into(), header: vec!["t".into(), "variance".into(), "se".into()], rows: variance_rows });
    plots.extend(cent_table);
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"spec": spec, "covariance": reports, "holder": holder}),
        verdicts,
        plots,
        documents: vec![("covariance.json".into(), serde_json::to_value(&reports).unwrap())],
    })
}

// ---------------------------------------------------------------------------
// lower bound

fn lower_bound(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let lb = cfg.lower_bound.as_ref().unwrap();
    let s = setup(cfg)?;
    let d = s.grid.d;
    let t = cfg.times[0];
    let pairs: Vec<(f64, f64)> = cfg.windows.iter().map(|&n| (n, t)).collect();
    let (records, _) = window_replicas(cfg, &s, &pairs, &[], sink)?;
    let ok = ok_indices(&records);
    let digest = Some(seed_set_digest(cfg.seed, "noise", ok.iter().copied()));
    let params = LowerBoundParams::DeltaRadius { delta: lb.delta, r: lb.r };
    let mut rows = Vec::new();
    let mut detail = Vec::new();
    let mut nonvacuous = true;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for (j, &n) in cfg.windows.iter().enumerate() {
        let samples = scaled(&column(&records, j), n, d, 1.0);
        let b = estimate_b(&samples, &samples)?;
        let bound = variance_lower_bound(&s.model, &s.sigma, n, t, params)?;
        if n >= lb.nonvacuous_from {
            checked += 1;
            nonvacuous &= !bound.vacuous;
        }
        if !bound.vacuous {
            worst = worst.min((b.value - bound.value) / b.se);
        }
        rows.push(vec![n, bound.value, b.value, b.se]);
        detail.push(json!({"N": n, "bound": bound, "b_n": b.value, "b_n_se": b.se}));
    }
    let mut verdicts = vec![
        verdict("lower_bound_nonvacuous", checked as f64, 1.0, nonvacuous && checked > 0, cfg.windows.len())
            .with_note(format!("condition 3 with δ = {}, R = {}, checked for N ≥ {}", lb.delta, lb.r, lb.nonvacuous_from)),
        verdict("lower_bound_respected", worst, -3.0, worst >= -3.0, ok.len())
            .with_note("smallest (B_N − bound)/SE over nonvacuous N")
            .with_seed_digest(digest),
    ];
    let mut seq = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for &n in &lb.sequence_windows {
        let bound = variance_lower_bound(&s.model, &s.sigma, n, n, LowerBoundParams::Constant { condition: lb.condition, c: lb.c })?;
        let ratio = bound.value / n;
        min_ratio = min_ratio.min(ratio);
        seq.push(json!({"N": n, "t_N": n, "bound": bound, "ratio": ratio}));
    }
    verdicts.push(
        verdict("t_sequence_liminf", min_ratio, 0.0, min_ratio > 0.0, lb.sequence_windows.len())
            .with_note(format!("min over N of bound(N, t_N = N)/t_N, condition {} with C = {}", lb.condition, lb.c)),
    );
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"t": t, "windows": detail, "sequence": seq}),
        verdicts,
        plots: vec![PlotTable {
            file: "lower_bound.csv".into(),
            header: vec!["N".into(), "bound".into(), "b_n".into(), "se".into()],
            rows,
        }],
        documents: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// malliavin

fn wrapped_kernel(grid: &LatticeGrid, tau: f64, x: usize, z: usize) -> f64 {
    let dx = grid.displacement(x);
    let dz = grid.displacement(z);
    let l = grid.length();
    let mut total = 0.0;
    // nearest images in every direction
    let images: Vec<Vec<i64>> = match grid.d {
        1 => (-1..=1).map(|a| vec![a]).collect(),
        _ => (-1..=1).flat_map(|a| (-1..=1).map(move |b| vec![a, b])).collect(),
    };
    for img in images {
        let r2: f64 = (0..grid.d).map(|k| (dx[k] - dz[k] + img[k] as f64 * l).powi(2)).sum();
        total += heat_kernel_unchecked(tau, r2, grid.d);
    }
    total
}

#[derive(Default)]
struct SiteCounts {
    resolvable: Vec<u64>,
    nonpositive: Vec<u64>,
}

fn malliavin(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let m = cfg.malliavin.as_ref().unwrap();
    let s = setup(cfg)?;
    let grid = &s.grid;
    let n = grid.n_sites;
    let z = m.z.unwrap_or_else(|| grid.flat_index(&vec![n / 2; grid.d]));
    let shift_of = |o: i64| {
        let mut v = vec![0i64; grid.d];
        v[0] = o;
        grid.shifted(z, &v)
    };
    let env_sites: Vec<usize> = m.envelope_offsets.iter().map(|&o| shift_of(o)).collect();
    let mut base_times = cfg.times.clone();
    if m.s > 0.0 {
        base_times.push(m.s);
    }
    let base_times = sorted_times(base_times);
    let width = columns(cfg)?.len();
    let rows = replicate(cfg.replicas, sink, |r| {
        let tag = replica_tag(cfg.seed, r as u64, "noise");
        let mut rng = seed_stream(cfg.seed, r as u64, "noise");
        let mut run = || -> Result<(Vec<f64>, SiteCounts)> {
            let base = simulate_archived(grid, &s.model, &s.sigma, m.t_end, &base_times, &mut rng)?;
            let frames = simulate_derivative(&base, m.s, z, m.t_end, &s.sigma, &cfg.times)?;
            let mut total = PositivityCounts::default();
            let mut sites = SiteCounts { resolvable: vec![0; grid.len()], nonpositive: vec![0; grid.len()] };
            let mut ratios = Vec::new();
            for f in &frames {
                total = total.merge(positivity_counts(f, grid)?);
                let reference = crate::kernel::semigroup_convolve(&crate::kernel::lattice_delta(grid, z), f.t - m.s, grid)?;
                let peak = reference.iter().copied().fold(0.0, f64::max);
                for i in 0..grid.len() {
                    if reference[i] > RESOLVABLE_LEVEL * peak {
                        sites.resolvable[i] += 1;
                        if f.values[i] <= 0.0 {
                            sites.nonpositive[i] += 1;
                        }
                    }
                }
                for &x in &env_sites {
                    ratios.push(f.values[x] / wrapped_kernel(grid, f.t - m.s, x, z));
                }
            }
            let last = frames.last().ok_or_else(|| Error::Internal("no derivative frames".into()))?;
            let mut values = vec![total.resolvable as f64, total.nonpositive as f64, last.values[z]];
            values.extend(ratios);
            Ok((values, sites))
        };
        match run() {
            Ok((values, sites)) => (ReplicaRecord { replica: r, seed: tag, values, rejected: 0, failure: None }, Some(sites)),
            Err(e) => (failed(r, tag, width, e.to_string()), None),
        }
    })?;
    let mut records = Vec::new();
    let mut per_site = SiteCounts { resolvable: vec![0; grid.len()], nonpositive: vec![0; grid.len()] };
    for (rec, sites) in rows {
        if let Some(sc) = sites {
            for i in 0..grid.len() {
                per_site.resolvable[i] += sc.resolvable[i];
                per_site.nonpositive[i] += sc.nonpositive[i];
            }
        }
        records.push(rec);
    }
    let ok = ok_indices(&records);
    let digest = Some(seed_set_digest(cfg.seed, "noise", ok.iter().copied()));
    let resolvable: f64 = column(&records, 0).iter().sum();
    let nonpositive: f64 = column(&records, 1).iter().sum();
    let fraction = if resolvable > 0.0 { nonpositive / resolvable } else { f64::NAN };
    let mut verdicts = vec![verdict("derivative_positivity", fraction, 1e-3, fraction <= 1e-3, ok.len())
        .with_note(format!("{nonpositive} nonpositive of {resolvable} resolvable site values"))
        .with_seed_digest(digest.clone())];

    // moment envelope: ‖D(t,x)/p_{t-s}(x-z)‖_4 against C_{t,4,ε}
    let mut envelope = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (ti, &t) in cfg.times.iter().enumerate() {
        let c = constant_c_tke(t, 4.0, m.envelope_eps, &s.sigma, &s.model)?;
        for (oi, &o) in m.envelope_offsets.iter().enumerate() {
            let v = column(&records, 3 + ti * m.envelope_offsets.len() + oi);
            let l4 = (v.iter().map(|x| x.powi(4)).sum::<f64>() / v.len() as f64).powf(0.25);
            worst = worst.max(l4.ln() - c.ln);
            envelope.push(json!({"t": t, "offset": o, "l4_ratio": l4, "ln_c": c.ln}));
        }
    }
    verdicts.push(
        verdict("derivative_envelope", worst, 0.0, worst <= 0.0, ok.len())
            .with_note(format!("max over (t, x) of ln(‖D/p‖₄ / C) with ε = {}", m.envelope_eps))
            .with_seed_digest(digest),
    );

    // conditional expectation given F_s from replica 0
    let mut rng = seed_stream(cfg.seed, 0, "noise");
    let base = simulate_archived(grid, &s.model, &s.sigma, m.s.max(grid.dt), &[], &mut rng)?;
    let k_s = (m.s / grid.dt).round() as usize;
    let u_s = base.path.as_ref().expect("archived path")[k_s].clone();
    let x = shift_of(m.clark_ocone_offset);
    let mut rng = seed_stream(cfg.seed, 0, "continuation");
    let co = clark_ocone_check(&u_s, grid, &s.model, &s.sigma, m.s, z, m.t_end, x, m.continuations, &mut rng)?;
    verdicts.push(
        verdict("clark_ocone", co.relative_error, 0.05, co.relative_error < 0.05, co.n_continuations)
            .with_note(format!("E[D | F_s] = {:.6} ± {:.6}, reference {:.6}", co.estimate, co.se, co.reference))
            .with_seed_digest(Some(seed_set_digest(cfg.seed, "continuation", [0]))),
    );

    // constant σ: the derivative is σ₀ p_{t-s}(x-z)
    let cgrid = grid.clone().with_symbol(HeatSymbol::Continuum);
    let csigma = DiffusionSpec::Constant(m.sigma0);
    let mut rng = seed_stream(cfg.seed, 0, "constant");
    let cbase = simulate_archived(&cgrid, &s.model, &csigma, m.t_end, &base_times, &mut rng)?;
    let cframes = simulate_derivative(&cbase, m.s, z, m.t_end, &csigma, &cfg.times)?;
    let mut max_err = 0.0f64;
    let mut const_rows = Vec::new();
    for f in &cframes {
        let err = (0..cgrid.len())
            .map(|i| (f.values[i] - m.sigma0 * wrapped_kernel(&cgrid, f.t - m.s, i, z)).abs())
            .fold(0.0, f64::max);
        max_err = max_err.max(err);
        const_rows.push(json!({"t": f.t, "max_abs_error": err}));
    }
    verdicts.push(
        verdict("constant_sigma_derivative", max_err, 1e-8, max_err <= 1e-8, cframes.len())
            .with_note("max |D − σ₀ p_{t−s}(x − z)| over sites and output times"),
    );
    let doc = json!({
        "s": m.s, "z": z, "times": cfg.times,
        "positivity": {"resolvable": resolvable, "nonpositive": nonpositive, "fraction": fraction},
        "per_site": {"resolvable": per_site.resolvable, "nonpositive": per_site.nonpositive},
        "clark_ocone": co,
        "constant_sigma": const_rows,
        "envelope": envelope,
    });
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"positivity_fraction": fraction, "clark_ocone": co, "constant_sigma_max_error": max_err}),
        verdicts,
        plots: Vec::new(),
        documents: vec![("malliavin.json".into(), doc)],
    })
}

// ---------------------------------------------------------------------------
// association

/// `Cov[X_a, h(X)]` for a Gaussian field with mean 1 by Gaussian integration by
/// parts, when `E[∂_j h]` is available in closed form.
fn stein_covariance(h: &MonotoneFunctional, a: usize, cov: &dyn Fn(usize, usize) -> f64) -> Option<f64> {
    match h {
        MonotoneFunctional::Projection { site } => Some(cov(a, *site)),
        MonotoneFunctional::Min { sites } | MonotoneFunctional::Max { sites } => match sites.as_slice() {
            [b] => Some(cov(a, *b)),
            // the two sites have equal variances, so each is the extreme with probability 1/2
            [b, c] if b != c => Some(0.5 * (cov(a, *b) + cov(a, *c))),
            _ => None,
        },
        MonotoneFunctional::Bump { sites, center, width } => {
            let total = sites
                .iter()
                .map(|&j| {
                    let sd = cov(j, j).sqrt();
                    // E[ℓ'((X - c)/w)]/w with X ~ N(1, sd²), trapezoid on ±12 sd
                    let steps = 4800;
                    let hstep = 24.0 / steps as f64;
                    let mut acc = 0.0;
                    for i in 0..=steps {
                        let zz = -12.0 + i as f64 * hstep;
                        let x = 1.0 + sd * zz;
                        let l = 1.0 / (1.0 + (-(x - center) / width).exp());
                        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                        acc += w * l * (1.0 - l) / width * (-0.5 * zz * zz).exp();
                    }
                    cov(a, j) * acc * hstep / (2.0 * std::f64::consts::PI).sqrt()
                })
                .sum();
            Some(total)
        }
        MonotoneFunctional::Custom { .. } => None,
    }
}

fn pair_oracle(p: &AssociationPair, cov: &dyn Fn(usize, usize) -> f64) -> Option<f64> {
    match (&p.h1, &p.h2) {
        (MonotoneFunctional::Projection { site }, h) | (h, MonotoneFunctional::Projection { site }) => stein_covariance(h, *site, cov),
        _ => None,
    }
}

fn associate(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let a = cfg.associate.as_ref().unwrap();
    let s = setup(cfg)?;
    let t = cfg.times[0];
    let grid = &s.grid;
    let csigma = DiffusionSpec::Constant(a.sigma0);
    let width = 4 * a.pairs.len();
    let rows = replicate(cfg.replicas, sink, |r| {
        let tag = replica_tag(cfg.seed, r as u64, "pam");
        let mut rng = seed_stream(cfg.seed, r as u64, "pam");
        let pam = match simulate(grid, &s.model, &s.sigma, t, &[t], &mut rng) {
            Ok(tr) => tr.last().values.clone(),
            Err(e) => return (failed(r, tag, width, e.to_string()), None),
        };
        let mut rng = seed_stream(cfg.seed, r as u64, "constant");
        let gauss = match simulate(grid, &s.model, &csigma, t, &[t], &mut rng) {
            Ok(tr) => tr.last().values.clone(),
            Err(e) => return (failed(r, tag, width, e.to_string()), None),
        };
        let mut values = Vec::with_capacity(width);
        for u in [&pam, &gauss] {
            for p in &a.pairs {
                values.push(p.h1.eval(u));
                values.push(p.h2.eval(u));
            }
        }
        (ReplicaRecord { replica: r, seed: tag, values, rejected: 0, failure: None }, Some((pam, gauss)))
    })?;
    let mut records = Vec::new();
    let mut pam_frames = Vec::new();
    let mut gauss_frames = Vec::new();
    for (rec, payload) in rows {
        if let Some((p, g)) = payload {
            pam_frames.push(p);
            gauss_frames.push(g);
        }
        records.push(rec);
    }
    let ok = ok_indices(&records);
    let pf: Vec<&[f64]> = pam_frames.iter().map(|v| v.as_slice()).collect();
    let gf: Vec<&[f64]> = gauss_frames.iter().map(|v| v.as_slice()).collect();
    let (v_pam, c_pam) = association_check(&pf, &a.pairs, 3.0)?;
    let (v_gauss, c_gauss) = association_check(&gf, &a.pairs, 3.0)?;
    let cov = |i: usize, j: usize| {
        let di = grid.displacement(i);
        let dj = grid.displacement(j);
        let l = grid.length();
        let lag: Vec<f64> = di.iter().zip(&dj).map(|(x, y)| {
            let r = x - y;
            r - l * (r / l).round()
        }).collect();
        gaussian_oracle_covariance(&s.model, a.sigma0, t, &lag).unwrap_or(f64::NAN)
    };
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut oracle_rows = Vec::new();
    for (p, c) in a.pairs.iter().zip(&c_gauss) {
        let oracle = pair_oracle(p, &cov);
        if let Some(o) = oracle {
            let z = (c.cov - o).abs() / c.se;
            worst = worst.max(z);
            compared += 1;
        }
        oracle_rows.push(json!({"h1": c.h1, "h2": c.h2, "cov": c.cov, "se": c.se, "oracle": oracle}));
    }
    let digest_pam = Some(seed_set_digest(cfg.seed, "pam", ok.iter().copied()));
    let digest_const = Some(seed_set_digest(cfg.seed, "constant", ok.iter().copied()));
    let verdicts = vec![
        renamed(v_pam, "association[pam]").with_seed_digest(digest_pam),
        renamed(v_gauss, "association[constant]").with_seed_digest(digest_const.clone()),
        verdict("association_oracle[constant]", worst, 3.0, worst <= 3.0 && compared > 0, ok.len())
            .with_note(format!("{compared} pairs with a closed-form Gaussian covariance"))
            .with_seed_digest(digest_const),
    ];
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"pam": c_pam, "constant": oracle_rows}),
        verdicts,
        plots: Vec::new(),
        documents: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// tn-clt

fn tn_clt(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let s = setup(cfg)?;
    let d = s.grid.d;
    let pairs: Vec<(f64, f64)> = cfg.windows.iter().copied().zip(cfg.tn_times()).collect();
    let (records, _) = window_replicas(cfg, &s, &pairs, &[], sink)?;
    let ok = ok_indices(&records);
    let points: Vec<TnPoint> = pairs
        .iter()
        .enumerate()
        .map(|(j, &(n, t))| TnPoint { n_window: n, t, samples: scaled(&column(&records, j), n, d, 1.0) })
        .collect();
    let v = tn_clt_check(&points, LEVEL)?.with_seed_digest(Some(seed_set_digest(cfg.seed, "noise", ok.iter().copied())));
    let mut rows = Vec::new();
    for p in &points {
        let e = distance_to_gaussian(&p.samples, None)?;
        rows.push(vec![p.n_window, e.value, e.control_sd]);
    }
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: json!({"schedule": pairs}),
        verdicts: vec![v],
        plots: vec![PlotTable { file: "tn_clt.csv".into(), header: vec!["N".into(), "distance".into(), "se".into()], rows }],
        documents: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// dalang

fn dalang(cfg: &ExperimentConfig) -> Result<CampaignOutput> {
    let sec = cfg.dalang.as_ref().unwrap();
    let model = cfg.noise_model()?;
    let mut verdicts = Vec::new();
    let base = model.dalang_integral(0.0)?;
    verdicts.push(
        verdict("dalang_condition", base.value().unwrap_or(f64::INFINITY), f64::INFINITY, base.value().is_some(), 1)
            .with_note(format!("{base:?}")),
    );
    let alphas: Vec<serde_json::Value> = sec
        .alphas
        .iter()
        .map(|&a| model.dalang_integral(a).map(|r| json!({"alpha": a, "integral": r})))
        .collect::<Result<_>>()?;
    let reinforced = sec
        .alphas
        .iter()
        .filter(|&&a| a > 0.0)
        .filter(|&&a| matches!(model.dalang_integral(a), Ok(DalangIntegral::Finite { .. })))
        .fold(f64::NAN, |m: f64, &a| if m.is_nan() { a } else { m.max(a) });
    let ups: Vec<(f64, f64)> = sec.lambdas.iter().map(|&l| model.upsilon(l).map(|u| (l, u))).collect::<Result<_>>()?;
    if model.kind == NoiseKind::Dirac && model.d == 1 {
        let err = ups.iter().map(|&(l, u)| (u - 1.0 / (2.0 * l).sqrt()).abs()).fold(0.0, f64::max);
        verdicts.push(verdict("upsilon_closed_form", err, 1e-10, err <= 1e-10, ups.len()).with_note("max |Υ(λ) − 1/√(2λ)|"));
    }
    let mut worst = 0.0f64;
    let mut inv = Vec::new();
    for &y in &sec.ys {
        let lam = model.lambda_inverse(y)?;
        let back = model.upsilon(lam)?;
        worst = worst.max((back - y).abs() / y);
        inv.push(json!({"y": y, "lambda": lam, "upsilon_of_lambda": back}));
    }
    verdicts.push(verdict("lambda_round_trip", worst, 1e-10, worst <= 1e-10, sec.ys.len()).with_note("max |Υ(Λ(y)) − y|/y"));
    let doc = json!({
        "noise": model,
        "total_mass": model.total_mass(),
        "zero_atom": model.has_zero_atom(),
        "dalang": alphas,
        "largest_finite_alpha": if reinforced.is_nan() { serde_json::Value::Null } else { json!(reinforced) },
        "upsilon": ups.iter().map(|(l, u)| json!({"lambda": l, "upsilon": u})).collect::<Vec<_>>(),
        "lambda": inv,
    });
    Ok(CampaignOutput {
        columns: Vec::new(),
        records: Vec::new(),
        estimators: doc.clone(),
        verdicts,
        plots: Vec::new(),
        documents: vec![("dalang.json".into(), doc)],
    })
}

// ---------------------------------------------------------------------------
// constants

fn constants(cfg: &ExperimentConfig, sink: &mut Option<ReplicaSink>) -> Result<CampaignOutput> {
    let sec = cfg.constants.as_ref().unwrap();
    let s = setup(cfg)?;
    let times = sorted_times(cfg.times.iter().copied());
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let rows = replicate::<(), _>(cfg.replicas, sink, |r| {
        let tag = replica_tag(cfg.seed, r as u64, "noise");
        let mut rng = seed_stream(cfg.seed, r as u64, "noise");
        match simulate(&s.grid, &s.model, &s.sigma, t_max, &times, &mut rng) {
            Ok(tr) => {
                let values = cfg.times.iter().map(|&t| tr.frame_at(t).expect("frame").values[0]).collect();
                (ReplicaRecord { replica: r, seed: tag, values, rejected: 0, failure: None }, None)
            }
            Err(e) => (failed(r, tag, cfg.times.len(), e.to_string()), None),
        }
    })?;
    let records: Vec<ReplicaRecord> = rows.into_iter().map(|r| r.0).collect();
    let mut reports = Vec::new();
    let mut monotone = true;
    for &eps in &sec.eps {
        let mut prev = f64::NEG_INFINITY;
        for (j, &t) in cfg.times.iter().enumerate() {
            let mut rep = constants_report(t, sec.k, eps, &s.sigma, &s.model)?;
            if records.iter().filter(|r| r.ok()).count() >= 2 {
                rep.theta_t = Some(theta_estimate(&column(&records, j), &s.g, sec.theta_k)?);
            }
            if let (Some(l), Some(lam), Some(b)) = (sec.l, sec.lambda, sec.b) {
                let n = cfg.windows.first().copied().unwrap_or(1.0);
                rep.rate_bound = Some(rate_bound_eval(t, n, s.grid.d, b, l, lam, rep.theta_t.map(|th| th.value))?);
            }
            if !rep.c_tke.is_infinite() {
                monotone &= rep.c_tke.ln >= prev || t < cfg.times[j.saturating_sub(1)];
                prev = rep.c_tke.ln;
            }
            reports.push(rep);
        }
    }
    let verdicts = vec![verdict("constants_nondecreasing_in_t", reports.len() as f64, 0.0, monotone, reports.len())
        .with_note("C_{t,k,ε} is nondecreasing along the configured times")];
    Ok(CampaignOutput {
        columns: columns(cfg)?,
        records,
        estimators: serde_json::to_value(&reports).unwrap(),
        verdicts,
        plots: Vec::new(),
        documents: vec![("constants.json".into(), serde_json::to_value(&reports).unwrap())],
    })
}
