//! Observables `g`, spatial averages `S_{N,t}(g)`, the variance functionals
//! `B_{N,t1,t2}(g)` and their limits, the window weights `Π`, and the
//! explicit variance lower bounds for `g(v) = v`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};
use crate::grid::{LatticeGrid, Spectral};
use crate::kernel::heat_kernel_unchecked;
use crate::noise::NoiseModel;
use crate::solver::DiffusionSpec;

/// Where `g` may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableDomain {
    Reals,
    PositiveReals,
}

/// Regularity class of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    Lipschitz { lip: f64 },
    C1Moments,
    C2Positive,
}

/// User-supplied observable.
#[derive(Clone)]
pub struct CustomObservable {
    pub name: String,
    pub g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub g1: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub g2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub domain: ObservableDomain,
    pub regularity: Regularity,
    /// `Some(±1)` when `g'` has constant sign on the domain.
    pub derivative_sign: Option<i8>,
}

impl fmt::Debug for CustomObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomObservable").field("name", &self.name).field("domain", &self.domain).finish()
    }
}

/// The function `g` applied to the solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObservableSpec {
    #[serde(alias = "id")]
    Identity,
    Log,
    Power {
        alpha: f64,
    },
    #[serde(skip)]
    Custom(CustomObservable),
}

impl ObservableSpec {
    pub fn power(alpha: f64) -> Result<Self> {
        let spec = Self::Power { alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Power { alpha } if !(alpha.is_finite() && *alpha != 0.0) => {
                Err(argument(format!("power exponent must be finite and nonzero, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Identity => "id".into(),
            Self::Log => "log".into(),
            Self::Power { alpha } => format!("pow{alpha}"),
            Self::Custom(c) => c.name.clone(),
        }
    }

    pub fn domain(&self) -> ObservableDomain {
        match self {
            Self::Identity => ObservableDomain::Reals,
            Self::Log | Self::Power { .. } => ObservableDomain::PositiveReals,
            Self::Custom(c) => c.domain,
        }
    }

    pub fn regularity(&self) -> Regularity {
        match self {
            Self::Identity => Regularity::Lipschitz { lip: 1.0 },
            Self::Log | Self::Power { .. } => Regularity::C2Positive,
            Self::Custom(c) => c.regularity,
        }
    }

    /// Sign of `g'` when it is constant on the domain.
    pub fn derivative_sign(&self) -> Option<i8> {
        match self {
            Self::Identity | Self::Log => Some(1),
            Self::Power { alpha } => Some(if *alpha > 0.0 { 1 } else { -1 }),
            Self::Custom(c) => c.derivative_sign,
        }
    }

    #[inline]
    pub fn in_domain(&self, u: f64) -> bool {
        match self.domain() {
            ObservableDomain::Reals => u.is_finite(),
            ObservableDomain::PositiveReals => u > 0.0 && u.is_finite(),
        }
    }

    fn check(&self, u: f64) -> Result<()> {
        if self.in_domain(u) {
            Ok(())
        } else {
            Err(domain(format!("{} is outside the domain of {}", u, self.label())))
        }
    }

    /// `g(u)` without the domain check.
    #[inline]
    pub fn eval_unchecked(&self, u: f64) -> f64 {
        match self {
            Self::Identity => u,
            Self::Log => u.ln(),
            Self::Power { alpha } => u.powf(*alpha),
            Self::Custom(c) => (c.g)(u),
        }
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(self.eval_unchecked(u))
    }

    pub fn derivative(&self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(match self {
            Self::Identity => 1.0,
            Self::Log => 1.0 / u,
            Self::Power { alpha } => alpha * u.powf(alpha - 1.0),
            Self::Custom(c) => (c.g1)(u),
        })
    }

    pub fn second_derivative(&self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(match self {
            Self::Identity => 0.0,
            Self::Log => -1.0 / (u * u),
            Self::Power { alpha } => alpha * (alpha - 1.0) * u.powf(alpha - 2.0),
            Self::Custom(c) => (c.g2)(u),
        })
    }
}

/// How the centering `E[g(u(t,0))]` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringSource {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    pub value: f64,
    pub se: f64,
    pub source: CenteringSource,
}

impl Centering {
    pub fn analytic(value: f64) -> Self {
        Self { value, se: 0.0, source: CenteringSource::Analytic }
    }

    pub fn monte_carlo(value: f64, se: f64) -> Self {
        Self { value, se, source: CenteringSource::MonteCarlo }
    }
}

/// Share of domain violations above which a sample is invalid.
pub const VIOLATION_LIMIT: f64 = 1e-3;

/// One value of `N^{d/2} S_{N,t}(g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageSample {
    pub n_window: f64,
    pub t: f64,
    pub g: String,
    pub value: f64,
    pub centering: Centering,
    pub violations: usize,
    pub sites: usize,
    pub valid: bool,
}

/// Number of lattice sites per axis in the window `[0, N]^d`.
pub fn window_sites(grid: &LatticeGrid, n_window: f64) -> Result<usize> {
    if !(n_window > 0.0 && n_window.is_finite()) {
        return Err(argument(format!("window length must be positive, got {n_window}")));
    }
    let m = (n_window / grid.dx).round();
    if (m * grid.dx - n_window).abs() > 1e-9 * n_window || m < 1.0 {
        return Err(argument(format!("window length {n_window} is not a multiple of dx = {}", grid.dx)));
    }
    if m as usize > grid.n_sites {
        return Err(argument(format!("window length {n_window} exceeds the domain length {}", grid.length())));
    }
    Ok(m as usize)
}

/// Mean of `g(u)` over the window sites, with the number of domain violations
/// (violating sites are left out of the mean).
pub fn window_mean(values: &[f64], grid: &LatticeGrid, sites_per_axis: usize, g: &ObservableSpec) -> (f64, usize, usize) {
    let mut sum = 0.0;
    let mut bad = 0usize;
    let mut visit = |u: f64| {
        if g.in_domain(u) {
            sum += g.eval_unchecked(u);
        } else {
            bad += 1;
        }
    };
    match grid.d {
        1 => values[..sites_per_axis].iter().for_each(|&u| visit(u)),
        _ => {
            let n = grid.n_sites;
            for row in 0..sites_per_axis {
                values[row * n..row * n + sites_per_axis].iter().for_each(|&u| visit(u));
            }
        }
    }
    let total = sites_per_axis.pow(grid.d as u32);
    let good = total - bad;
    let mean = if good > 0 { sum / good as f64 } else { f64::NAN };
    (mean, bad, total)
}

/// `N^{d/2}(N^{-d} Σ_{window} g(u) dx^d − centering)`.
pub fn spatial_average(
    values: &[f64],
    t: f64,
    grid: &LatticeGrid,
    g: &ObservableSpec,
    n_window: f64,
    centering: Centering,
) -> Result<AverageSample> {
    grid.check_field(values)?;
    let m = window_sites(grid, n_window)?;
    let (mean, violations, sites) = window_mean(values, grid, m, g);
    let valid = (violations as f64) <= VIOLATION_LIMIT * sites as f64 && mean.is_finite();
    let scale = n_window.powf(0.5 * grid.d as f64);
    Ok(AverageSample {
        n_window,
        t,
        g: g.label(),
        value: scale * (mean - centering.value),
        centering,
        violations,
        sites,
        valid,
    })
}

/// A covariance estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

/// Minimum number of pairs accepted by [`estimate_b`].
pub const MIN_B_PAIRS: usize = 100;

/// Unbiased sample covariance of paired replicas with its jackknife standard error.
pub fn estimate_b(x: &[f64], y: &[f64]) -> Result<Estimate> {
    if x.len() != y.len() {
        return Err(argument(format!("paired lists differ in length: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < MIN_B_PAIRS {
        return Err(Error::Refused(format!("{n} pairs given, at least {MIN_B_PAIRS} required")));
    }
    let nf = n as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let mx = sx / nf;
    let my = sy / nf;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let value = sxy / (nf - 1.0);
    // leave-one-out covariances in O(n): removing (a, b) changes the centered
    // cross sum by -n/(n-1) (a - mx)(b - my)
    let m = nf - 1.0;
    let loo: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (sxy - nf / m * (a - mx) * (b - my)) / (m - 1.0))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let se = ((nf - 1.0) / nf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    Ok(Estimate { value, se, n })
}

/// Covariance at one lag along the first axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCovariance {
    pub lag: f64,
    pub cov: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Ok,
    WindowTooSmall,
}

/// Integrated spatial covariance `∫ Cov[g(u(t1, x)), g(u(t2, 0))] dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub se: f64,
    /// `Σ |Cov| dx^d` over the integration box.
    pub abs_integral: f64,
    /// Share of the integral carried by the outermost tenth of lags.
    pub tail_fraction: f64,
    pub status: WindowStatus,
    pub max_lag: f64,
    pub replicas: usize,
    pub rejected: usize,
    pub curve: Vec<LagCovariance>,
}

/// Minimum ensemble size for [`estimate_b_limit`].
pub const MIN_LIMIT_REPLICAS: usize = 500;

/// Estimates `B_{t1,t2}(g)` from paired replica frames at `t1` and `t2`.
///
/// Lag covariances are averaged over every base point of the torus (one
/// cross-correlation FFT per replica) around the ensemble means, then summed
/// over the box `‖lag‖_∞ ≤ max_lag`. Replicas with domain violations are
/// dropped and counted.
pub fn estimate_b_limit(
    frames_t1: &[&[f64]],
    frames_t2: &[&[f64]],
    grid: &LatticeGrid,
    g: &ObservableSpec,
    max_lag: f64,
) -> Result<LimitEstimate> {
    if frames_t1.len() != frames_t2.len() {
        return Err(argument("frame lists differ in length"));
    }
    if frames_t1.len() < MIN_LIMIT_REPLICAS {
        return Err(Error::Refused(format!(
            "{} replicas given, at least {MIN_LIMIT_REPLICAS} required",
            frames_t1.len()
        )));
    }
    let r = (max_lag / grid.dx).floor() as usize;
    if !(max_lag > 0.0) || 2 * r + 1 > grid.n_sites {
        return Err(argument(format!(
            "max_lag {max_lag} must be positive and below half the domain length {}",
            0.5 * grid.length()
        )));
    }
    let sites = grid.len();
    let mut kept: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut rejected = 0;
    for (a, b) in frames_t1.iter().zip(frames_t2) {
        grid.check_field(a)?;
        grid.check_field(b)?;
        if a.iter().chain(b.iter()).all(|&u| g.in_domain(u)) {
            kept.push((a.iter().map(|&u| g.eval_unchecked(u)).collect(), b.iter().map(|&u| g.eval_unchecked(u)).collect()));
        } else {
            rejected += 1;
        }
    }
    let n = kept.len();
    if n < 2 {
        return Err(Error::Undetermined("too few replicas inside the domain of g".into()));
    }
    let total = (n * sites) as f64;
    let mu1 = kept.iter().map(|(a, _)| a.iter().sum::<f64>()).sum::<f64>() / total;
    let mu2 = kept.iter().map(|(_, b)| b.iter().sum::<f64>()).sum::<f64>() / total;

    let box_lags: Vec<usize> = (0..sites)
        .filter(|&idx| grid.displacement(idx).iter().all(|v| v.abs() <= r as f64 * grid.dx + 1e-12))
        .collect();
    let ring = |idx: usize| {
        grid.displacement(idx).iter().map(|v| (v.abs() / grid.dx).round() as usize).max().unwrap_or(0)
    };
    let outer = (0.9 * r as f64).floor() as usize;
    let cell = grid.cell_volume();
    let axis_lags: Vec<usize> = (0..=r).map(|k| k * grid.n_sites.pow(grid.d as u32 - 1)).collect();

    let mut spectral = Spectral::new(grid);
    let mut per_replica = Vec::with_capacity(n);
    let mut per_tail = Vec::with_capacity(n);
    let mut curve_sum = vec![0.0; axis_lags.len()];
    let mut curve_sq = vec![0.0; axis_lags.len()];
    let mut corr_sum = vec![0.0; sites];
    let mut fa: Vec<Complex64> = vec![Complex64::default(); sites];
    let mut fb: Vec<Complex64> = vec![Complex64::default(); sites];
    for (a, b) in &kept {
        fa.iter_mut().zip(a).for_each(|(c, &v)| *c = Complex64::new(v - mu1, 0.0));
        fb.iter_mut().zip(b).for_each(|(c, &v)| *c = Complex64::new(v - mu2, 0.0));
        spectral.forward(&mut fa);
        spectral.forward(&mut fb);
        fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y.conj());
        spectral.inverse(&mut fa);
        // fa[l] = Σ_x a(x + l) b(x)
        let corr = |idx: usize| fa[idx].re / sites as f64;
        let mut integral = 0.0;
        let mut tail = 0.0;
        for &idx in &box_lags {
            let c = corr(idx);
            integral += c;
            if ring(idx) > outer {
                tail += c;
            }
        }
        per_replica.push(integral * cell);
        per_tail.push(tail * cell);
        for (k, &idx) in axis_lags.iter().enumerate() {
            let c = corr(idx);
            curve_sum[k] += c;
            curve_sq[k] += c * c;
        }
        for (s, c) in corr_sum.iter_mut().zip(fa.iter()) {
            *s += c.re / sites as f64;
        }
    }
    let nf = n as f64;
    let mean_sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / nf;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
        (m, (var / nf).sqrt())
    };
    let (value, se) = mean_sd(&per_replica);
    let (tail, _) = mean_sd(&per_tail);
    let abs_integral = box_lags.iter().map(|&idx| (corr_sum[idx] / nf).abs()).sum::<f64>() * cell;
    let tail_fraction = if value != 0.0 { (tail / value).abs() } else { f64::INFINITY };
    let curve = axis_lags
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let m = curve_sum[k] / nf;
            let var = (curve_sq[k] / nf - m * m).max(0.0) * nf / (nf - 1.0);
            LagCovariance { lag: k as f64 * grid.dx, cov: m, se: (var / nf).sqrt() }
        })
        .collect();
    Ok(LimitEstimate {
        value,
        se,
        abs_integral,
        tail_fraction,
        status: if tail_fraction > 0.1 { WindowStatus::WindowTooSmall } else { WindowStatus::Ok },
        max_lag: r as f64 * grid.dx,
        replicas: n,
        rejected,
        curve,
    })
}

/// Serialized form of a variance estimate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub t1: f64,
    pub t2: f64,
    pub g: String,
    #[serde(rename = "N")]
    pub n_window: f64,
    pub b_n: f64,
    pub b_n_se: f64,
    pub b_limit: f64,
    pub b_limit_se: f64,
    pub tail_fraction: f64,
}

impl CovarianceReport {
    pub fn new(t1: f64, t2: f64, g: &ObservableSpec, n_window: f64, b_n: Estimate, b_limit: &LimitEstimate) -> Self {
        Self {
            t1,
            t2,
            g: g.label(),
            n_window,
            b_n: b_n.value,
            b_n_se: b_n.se,
            b_limit: b_limit.value,
            b_limit_se: b_limit.se,
            tail_fraction: b_limit.tail_fraction,
        }
    }
}

/// `Π^{(N)}_{s,y} = N^{-d} ∫_{[0,N]^d} p_{t-s}(x - y) dx`, by a midpoint sum on
/// the lattice spacing of `grid`.
pub fn pi_weight(n_window: f64, t: f64, s: f64, y: &[f64], grid: &LatticeGrid) -> Result<f64> {
    if !(s >= 0.0 && s < t) {
        return Err(domain(format!("need 0 ≤ s < t, got s = {s}, t = {t}")));
    }
    if y.len() != grid.d {
        return Err(argument("point dimension differs from the grid dimension"));
    }
    let m = window_sites(grid, n_window)?;
    let tau = t - s;
    // the kernel factorizes over coordinates
    let axis = |yj: f64| {
        (0..m)
            .map(|i| heat_kernel_unchecked(tau, ((i as f64 + 0.5) * grid.dx - yj).powi(2), 1))
            .sum::<f64>()
            * grid.dx
            / n_window
    };
    Ok(y.iter().map(|&yj| axis(yj)).product())
}

/// Which hypothesis of the lower-bound proposition is being used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LowerBoundParams {
    /// Conditions 1 and 2, with the covariance constant `C` of the comparison
    /// `Cov[u(t,x), u(t,y)] ≥ C ∫₀ᵗ (p_{2s} * f)(x - y) ds`.
    Constant { condition: u8, c: f64 },
    /// Condition 3, with the pair `(δ, R)`.
    DeltaRadius { delta: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub main: f64,
    pub correction: f64,
    pub vacuous: bool,
}

/// `P(X ∉ [-a, a]^d)` for `X` with density `p_2`.
fn p2_outside_cube(a: f64, d: usize) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let inside = libm::erf(0.5 * a);
    1.0 - inside.powi(d as i32)
}

/// Explicit lower bound for `B_{N,t}(id)`.
pub fn variance_lower_bound(
    model: &NoiseModel,
    sigma: &DiffusionSpec,
    n_window: f64,
    t: f64,
    params: LowerBoundParams,
) -> Result<LowerBound> {
    if !(n_window > 0.0 && t > 0.0) {
        return Err(domain(format!("need N > 0 and t > 0, got N = {n_window}, t = {t}")));
    }
    let d = model.d;
    let mass = model.total_mass();
    let (main, correction) = match params {
        LowerBoundParams::Constant { condition, c } => {
            if !(condition == 1 || condition == 2) {
                return Err(argument(format!("the constant form covers conditions 1 and 2, got {condition}")));
            }
            if !(c > 0.0) {
                return Err(argument(format!("C must be positive, got {c}")));
            }
            let scale = c / 2f64.powi(d as i32);
            let kernel_tail = t * mass * p2_outside_cube(n_window / (8.0 * t.sqrt()), d);
            let f_tail = t * (mass - model.mass_of_cube(n_window / 8.0));
            (scale * t * mass, scale * (kernel_tail + f_tail))
        }
        LowerBoundParams::DeltaRadius { delta, r } => {
            if !(delta > 0.0 && r > 0.0) {
                return Err(argument(format!("δ and R must be positive, got δ = {delta}, R = {r}")));
            }
            if delta > t {
                return Err(argument(format!("δ = {delta} exceeds t = {t}")));
            }
            let s1 = sigma.sigma_at_one();
            let scale = s1 * s1 / 2f64.powi(d as i32 + 1);
            let b = (0.25 * n_window - r) / t.sqrt();
            (scale * delta * model.mass_of_cube(r), scale * mass * delta * p2_outside_cube(b, d))
        }
    };
    let value = main - correction;
    Ok(LowerBound { value, main, correction, vacuous: value <= 0.0 })
}
