//! First Malliavin derivative `D_{s,z}u(t,x)` of the solution, simulated from
//! its linear equation
//!
//! ```text
//! D_{s,z}u(t,x) = p_{t-s}(x-z) σ(u(s,z)) + ∫_s^t ∫ p_{t-r}(x-y) σ'(u(r,y)) D_{s,z}u(r,y) η(dr dy)
//! ```
//!
//! on the noise realization of a stored base trajectory, plus the explicit
//! moment constants and rate-bound expressions.
//!
//! On the lattice the derivative starts at time `s` as the mass
//! `σ(u(s,z))/dx^d` at site `z` and then follows the same exponential-Euler
//! step as the solver, with forcing `σ'(u_k) D_k ξ_k`. Because the noise has
//! mean zero, `E[D_{s,z}u(t,·) | F_s]` is exactly the lattice heat flow of the
//! initial mass; with [`HeatSymbol::Continuum`](crate::HeatSymbol) that flow
//! is `p_{t-s}` up to aliasing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};
use crate::grid::LatticeGrid;
use crate::kernel::{lattice_delta, semigroup_convolve};
use crate::noise::{NoiseModel, NoiseSampler};
use crate::observables::ObservableSpec;
use crate::solver::{DiffusionSpec, Stepper, Trajectory};

/// `D_{s,z}u(t, ·)` on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalliavinFrame {
    pub s: f64,
    pub z: usize,
    pub t: f64,
    pub values: Vec<f64>,
    pub base_digest: Option<String>,
}

fn step_index(grid: &LatticeGrid, t: f64, what: &str) -> Result<usize> {
    let k = (t / grid.dt).round();
    if !(t >= 0.0) || (k * grid.dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(argument(format!("{what} = {t} is not a step boundary (dt = {})", grid.dt)));
    }
    Ok(k as usize)
}

/// Simulates the derivative on the stored noise of `base`, returning frames
/// at `output_times` (each in `[s, t_end]`; the initial mass at `s` is
/// returned when requested).
pub fn simulate_derivative(
    base: &Trajectory,
    s: f64,
    z: usize,
    t_end: f64,
    sigma: &DiffusionSpec,
    output_times: &[f64],
) -> Result<Vec<MalliavinFrame>> {
    let grid = &base.grid;
    let (archive, path) = match (&base.noise, &base.path) {
        (Some(a), Some(p)) => (a, p),
        _ => return Err(Error::Precondition("base trajectory has no stored noise; enable store_noise".into())),
    };
    if z >= grid.len() {
        return Err(argument(format!("site {z} outside the grid of {} sites", grid.len())));
    }
    if !(s < t_end) {
        return Err(argument(format!("need s < t_end, got s = {s}, t_end = {t_end}")));
    }
    let k0 = step_index(grid, s, "s")?;
    let k_end = step_index(grid, t_end, "t_end")?;
    if k_end > archive.increments.len() {
        return Err(argument(format!(
            "t_end = {t_end} lies beyond the stored noise ({} steps)",
            archive.increments.len()
        )));
    }
    let mut outs = Vec::with_capacity(output_times.len());
    for &t in output_times {
        let k = step_index(grid, t, "output time")?;
        if k < k0 || k > k_end {
            return Err(argument(format!("output time {t} outside [{s}, {t_end}]")));
        }
        outs.push(k);
    }
    outs.sort_unstable();
    outs.dedup();

    let mut d = lattice_delta(grid, z);
    let mass = sigma.eval(path[k0][z]);
    d.iter_mut().for_each(|v| *v *= mass);
    let mut stepper = Stepper::new(grid);
    let mut forcing = vec![0.0; grid.len()];
    let mut frames = Vec::with_capacity(outs.len());
    let mut next = outs.iter().copied().peekable();
    let frame = |k: usize, values: &[f64]| MalliavinFrame {
        s,
        z,
        t: k as f64 * grid.dt,
        values: values.to_vec(),
        base_digest: base.config_digest.clone(),
    };
    if next.peek() == Some(&k0) {
        next.next();
        frames.push(frame(k0, &d));
    }
    for k in k0..k_end {
        let u = &path[k];
        let xi = &archive.increments[k];
        for i in 0..forcing.len() {
            forcing[i] = sigma.derivative(u[i]) * d[i] * xi[i];
        }
        stepper.advance_forced(&mut d, &forcing);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: k + 1, t: (k + 1) as f64 * grid.dt });
        }
        if next.peek() == Some(&(k + 1)) {
            next.next();
            frames.push(frame(k + 1, &d));
        }
    }
    Ok(frames)
}

/// `σ(u(s,z)) [e^{(t-s)Δ/2} δ_z](·)` on the lattice: the conditional mean of
/// the derivative given the past at time `s`.
pub fn conditional_mean_profile(grid: &LatticeGrid, sigma_at_z: f64, z: usize, tau: f64) -> Result<Vec<f64>> {
    let mut out = semigroup_convolve(&lattice_delta(grid, z), tau, grid)?;
    out.iter_mut().for_each(|v| *v *= sigma_at_z);
    Ok(out)
}

/// Sign census of a derivative field over the sites where its conditional mean
/// is resolvable above floating round-off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositivityCounts {
    pub resolvable: usize,
    pub nonpositive: usize,
}

impl PositivityCounts {
    pub fn fraction(&self) -> f64 {
        if self.resolvable == 0 {
            0.0
        } else {
            self.nonpositive as f64 / self.resolvable as f64
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self { resolvable: self.resolvable + other.resolvable, nonpositive: self.nonpositive + other.nonpositive }
    }
}

/// Relative level below which lattice heat-flow values are round-off.
pub const RESOLVABLE_LEVEL: f64 = 1e-8;

pub fn positivity_counts(frame: &MalliavinFrame, grid: &LatticeGrid) -> Result<PositivityCounts> {
    let tau = frame.t - frame.s;
    if tau <= 0.0 {
        return Ok(PositivityCounts { resolvable: 0, nonpositive: 0 });
    }
    let reference = semigroup_convolve(&lattice_delta(grid, frame.z), tau, grid)?;
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    let mut counts = PositivityCounts { resolvable: 0, nonpositive: 0 };
    for (v, r) in frame.values.iter().zip(&reference) {
        if *r > RESOLVABLE_LEVEL * peak {
            counts.resolvable += 1;
            if *v <= 0.0 {
                counts.nonpositive += 1;
            }
        }
    }
    Ok(counts)
}

/// Minimum number of continuations accepted by [`clark_ocone_check`].
pub const MIN_CONTINUATIONS: usize = 100;

/// Outcome of a conditional-expectation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClarkOconeReport {
    pub estimate: f64,
    pub se: f64,
    pub reference: f64,
    /// `p_{t-s}(x-z) σ(u(s,z))` with the continuum kernel.
    pub continuum_reference: f64,
    pub relative_error: f64,
    pub n_continuations: usize,
}

/// Absolute floor in the denominator of the relative error.
pub const CLARK_OCONE_FLOOR: f64 = 1e-6;

/// Estimates `E[D_{s,z}u(t,x) | F_s]` by running `n_continuations` fresh noise
/// futures from the frozen state `u_s = u(s, ·)`, each carrying the coupled
/// derivative, and compares with `σ(u(s,z)) p_{t-s}(x-z)`.
#[allow(clippy::too_many_arguments)]
pub fn clark_ocone_check<R: Rng + ?Sized>(
    u_s: &[f64],
    grid: &LatticeGrid,
    model: &NoiseModel,
    sigma: &DiffusionSpec,
    s: f64,
    z: usize,
    t: f64,
    x: usize,
    n_continuations: usize,
    rng: &mut R,
) -> Result<ClarkOconeReport> {
    if n_continuations < MIN_CONTINUATIONS {
        return Err(Error::Refused(format!(
            "{n_continuations} continuations requested, at least {MIN_CONTINUATIONS} required"
        )));
    }
    grid.check_field(u_s)?;
    if z >= grid.len() || x >= grid.len() {
        return Err(argument("site index outside the grid"));
    }
    if !(s < t) {
        return Err(domain(format!("need s < t, got s = {s}, t = {t}")));
    }
    let k0 = step_index(grid, s, "s")?;
    let k1 = step_index(grid, t, "t")?;
    let sigma_z = sigma.eval(u_s[z]);
    let mut sampler = NoiseSampler::new(model, grid, grid.dt)?;
    let mut stepper = Stepper::new(grid);
    let mut u = vec![0.0; grid.len()];
    let mut d = vec![0.0; grid.len()];
    let mut xi = vec![0.0; grid.len()];
    let mut forcing = vec![0.0; grid.len()];
    let delta = lattice_delta(grid, z);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_continuations {
        u.copy_from_slice(u_s);
        d.iter_mut().zip(&delta).for_each(|(v, w)| *v = w * sigma_z);
        for _ in k0..k1 {
            sampler.fill(rng, &mut xi);
            for i in 0..forcing.len() {
                forcing[i] = sigma.derivative(u[i]) * d[i] * xi[i];
            }
            stepper.advance_forced(&mut d, &forcing);
            stepper.advance(&mut u, &xi, sigma);
        }
        if !d[x].is_finite() {
            return Err(Error::BlowUp { step: k1, t });
        }
        sum += d[x];
        sum_sq += d[x] * d[x];
    }
    let n = n_continuations as f64;
    let estimate = sum / n;
    let se = ((sum_sq / n - estimate * estimate).max(0.0) / (n - 1.0)).sqrt();
    let reference = conditional_mean_profile(grid, sigma_z, z, t - s)?[x];
    let disp: Vec<f64> = grid.displacement(x).iter().zip(grid.displacement(z)).map(|(a, b)| a - b).collect();
    let continuum_reference = sigma_z * crate::kernel::heat_kernel(t - s, &wrap(&disp, grid.length()), grid.d)?;
    Ok(ClarkOconeReport {
        estimate,
        se,
        reference,
        continuum_reference,
        relative_error: (estimate - reference).abs() / (reference.abs() + CLARK_OCONE_FLOOR),
        n_continuations,
    })
}

fn wrap(v: &[f64], length: f64) -> Vec<f64> {
    v.iter().map(|&c| c - length * (c / length).round()).collect()
}

/// `a(ε) = (1-ε)² / (2^{(d+6)/2} M²)` with `M = |σ(0)| ∨ Lip(σ)`; `∞` when `M = 0`.
pub fn a_eps(eps: f64, d: usize, m: f64) -> f64 {
    if m == 0.0 {
        return f64::INFINITY;
    }
    (1.0 - eps).powi(2) / (2f64.powf(0.5 * (d as f64 + 6.0)) * m * m)
}

fn check_constant_args(t: f64, k: f64, eps: f64) -> Result<()> {
    let mut problems = Vec::new();
    if !(t > 0.0 && t.is_finite()) {
        problems.push(format!("t must be positive, got {t}"));
    }
    if !(k >= 2.0) {
        problems.push(format!("k must be at least 2, got {k}"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        problems.push(format!("ε must lie in (0, 1), got {eps}"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

/// A constant that may exceed the range of `f64`; `ln` is always finite
/// unless the constant is infinite by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigConstant {
    pub ln: f64,
    pub value: f64,
}

impl BigConstant {
    fn from_ln(ln: f64) -> Self {
        Self { ln, value: ln.exp() }
    }

    pub fn infinite() -> Self {
        Self { ln: f64::INFINITY, value: f64::INFINITY }
    }

    pub fn is_infinite(&self) -> bool {
        self.ln == f64::INFINITY
    }
}

/// `C_{t,k,ε,σ} = 8 M e^{2tΛ(a(ε)/k)} / ε^{3/2}`, infinite when `σ ≡ 0`.
pub fn constant_c_tke(t: f64, k: f64, eps: f64, sigma: &DiffusionSpec, model: &NoiseModel) -> Result<BigConstant> {
    check_constant_args(t, k, eps)?;
    let m = sigma.sigma_at_zero().abs().max(sigma.lip());
    if m == 0.0 {
        return Ok(BigConstant::infinite());
    }
    let lam = model.lambda_inverse(a_eps(eps, model.d, m) / k)?;
    Ok(BigConstant::from_ln(8f64.ln() + m.ln() + 2.0 * t * lam - 1.5 * eps.ln()))
}

/// `C_{t,k,ε} = 8 ε^{-3/2} exp(2tΛ((1-ε)²/(2^{(d+6)/2} k)))`, the constant for `σ(u) = u`.
pub fn constant_c_tke_pam(t: f64, k: f64, eps: f64, model: &NoiseModel) -> Result<BigConstant> {
    check_constant_args(t, k, eps)?;
    let lam = model.lambda_inverse(a_eps(eps, model.d, 1.0) / k)?;
    Ok(BigConstant::from_ln(8f64.ln() + 2.0 * t * lam - 1.5 * eps.ln()))
}

/// `C* = 16 ε^{-2} exp(3tΛ((1-ε)²/(2^{(d+6)/2} k)))`, bounding second derivatives for `σ(u) = u`.
pub fn constant_c_star(t: f64, k: f64, eps: f64, model: &NoiseModel) -> Result<BigConstant> {
    check_constant_args(t, k, eps)?;
    let lam = model.lambda_inverse(a_eps(eps, model.d, 1.0) / k)?;
    Ok(BigConstant::from_ln(16f64.ln() + 3.0 * t * lam - 2.0 * eps.ln()))
}

/// Plug-in estimate of `Θ_t = ‖g'(u)‖_k max(‖g'(u)‖_k, ‖g''(u)‖_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub rejected: usize,
}

pub fn theta_estimate(samples: &[f64], g: &ObservableSpec, k: f64) -> Result<ThetaEstimate> {
    if !(k > 4.0) {
        return Err(argument(format!("moment order must exceed 4, got {k}")));
    }
    let mut a = Vec::with_capacity(samples.len());
    let mut b = Vec::with_capacity(samples.len());
    let mut rejected = 0;
    for &u in samples {
        match (g.derivative(u), g.second_derivative(u)) {
            (Ok(d1), Ok(d2)) => {
                a.push(d1.abs().powf(k));
                b.push(d2.abs().powf(k));
            }
            _ => rejected += 1,
        }
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Undetermined("fewer than two samples inside the domain of g".into()));
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let theta = |ma: f64, mb: f64| {
        let n1 = ma.powf(1.0 / k);
        n1 * n1.max(mb.powf(1.0 / k))
    };
    let nf = n as f64;
    let value = theta(sa / nf, sb / nf);
    let loo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| theta((sa - x) / (nf - 1.0), (sb - y) / (nf - 1.0))).collect();
    let lm = loo.iter().sum::<f64>() / nf;
    let se = ((nf - 1.0) / nf * loo.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt();
    Ok(ThetaEstimate { value, se, n, rejected })
}

/// `L Θ e^{λt} / (N^{d/2} B)`, with `Θ = 1` when not supplied.
pub fn rate_bound_eval(t: f64, n_window: f64, d: usize, b: f64, l: f64, lam: f64, theta: Option<f64>) -> Result<f64> {
    if !(b > 0.0) {
        return Err(domain(format!("the bound needs B > 0, got {b}")));
    }
    if !(n_window > 0.0) {
        return Err(domain(format!("the bound needs N > 0, got {n_window}")));
    }
    Ok(l * theta.unwrap_or(1.0) * (lam * t).exp() / (n_window.powf(0.5 * d as f64) * b))
}

/// The explicit constants at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub t: f64,
    pub k: f64,
    pub eps: f64,
    pub a_eps: f64,
    pub lambda_val: f64,
    pub c_tke: BigConstant,
    pub c_tke_pam: BigConstant,
    pub c_star: BigConstant,
    pub theta_t: Option<ThetaEstimate>,
    pub rate_bound: Option<f64>,
}

pub fn constants_report(t: f64, k: f64, eps: f64, sigma: &DiffusionSpec, model: &NoiseModel) -> Result<ConstantsReport> {
    check_constant_args(t, k, eps)?;
    let m = sigma.sigma_at_zero().abs().max(sigma.lip());
    let a = a_eps(eps, model.d, m);
    let lambda_val = if a.is_finite() { model.lambda_inverse(a / k)? } else { 0.0 };
    Ok(ConstantsReport {
        t,
        k,
        eps,
        a_eps: a,
        lambda_val,
        c_tke: constant_c_tke(t, k, eps, sigma, model)?,
        c_tke_pam: constant_c_tke_pam(t, k, eps, model)?,
        c_star: constant_c_star(t, k, eps, model)?,
        theta_t: None,
        rate_bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HeatSymbol;
    use crate::solver::simulate_archived;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_gives_infinite_constant() {
        let c = constant_c_tke(1.0, 4.0, 0.5, &DiffusionSpec::Constant(0.0), &NoiseModel::dirac()).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn white_noise_constants_by_hand() {
        let white = NoiseModel::dirac();
        let a = 0.25 / 2f64.powf(3.5);
        let y = a / 4.0;
        let lam = 1.0 / (2.0 * y * y);
        let ln_c = 8f64.ln() + 2.0 * lam - 1.5 * 0.5f64.ln();
        let c = constant_c_tke(1.0, 4.0, 0.5, &DiffusionSpec::Linear, &white).unwrap();
        assert!((c.ln - ln_c).abs() <= 1e-10 * ln_c, "{} vs {ln_c}", c.ln);
        let pam = constant_c_tke_pam(1.0, 4.0, 0.5, &white).unwrap();
        assert!((pam.ln - c.ln).abs() <= 1e-10 * ln_c);
        let star = constant_c_star(1.0, 4.0, 0.5, &white).unwrap();
        let ln_star = 16f64.ln() + 3.0 * lam - 2.0 * 0.5f64.ln();
        assert!((star.ln - ln_star).abs() <= 1e-10 * ln_star);
        let c2 = constant_c_tke(2.0, 4.0, 0.5, &DiffusionSpec::Linear, &white).unwrap();
        assert!(c2.ln > c.ln);
        let star8 = constant_c_star(1.0, 8.0, 0.5, &white).unwrap();
        assert!(star8.ln > star.ln);
    }

    #[test]
    fn c_star_small_time_limit() {
        let c = constant_c_star(1e-300, 4.0, 0.5, &NoiseModel::dirac()).unwrap();
        assert!((c.value - 64.0).abs() < 1e-9);
    }

    #[test]
    fn theta_identity_is_one() {
        let samples: Vec<f64> = (0..50).map(|i| 0.5 + i as f64 * 0.1).collect();
        let th = theta_estimate(&samples, &ObservableSpec::Identity, 6.0).unwrap();
        assert!((th.value - 1.0).abs() < 1e-15);
        assert!(th.se < 1e-12);
        assert!(theta_estimate(&samples, &ObservableSpec::Identity, 4.0).is_err());
        let mut rev = samples.clone();
        rev.reverse();
        let a = theta_estimate(&samples, &ObservableSpec::Log, 6.0).unwrap();
        let b = theta_estimate(&rev, &ObservableSpec::Log, 6.0).unwrap();
        assert!((a.value - b.value).abs() < 1e-12 * a.value);
    }

    #[test]
    fn rate_bound_arithmetic() {
        assert!((rate_bound_eval(1.0, 4.0, 1, 1.0, 1.0, 0.0, Some(1.0)).unwrap() - 0.5).abs() < 1e-15);
        let a = rate_bound_eval(1.0, 64.0, 1, 0.3, 2.0, 0.7, None).unwrap();
        let b = rate_bound_eval(1.0, 128.0, 1, 0.3, 2.0, 0.7, None).unwrap();
        assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
        assert!(rate_bound_eval(1.0, 4.0, 1, 0.0, 1.0, 0.0, None).is_err());
    }

    #[test]
    fn constant_sigma_derivative_is_heat_profile() {
        let g = LatticeGrid::new(1, 256, 0.125, 0.125 * 0.125 / 2.0).unwrap().with_symbol(HeatSymbol::Continuum);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = DiffusionSpec::Constant(1.5);
        let base = simulate_archived(&g, &NoiseModel::dirac(), &sigma, 0.5, &[], &mut rng).unwrap();
        let frames = simulate_derivative(&base, 0.125, 100, 0.5, &sigma, &[0.5]).unwrap();
        let d = &frames[0].values;
        let worst = (0..g.len())
            .map(|i| {
                let x = (i as f64 - 100.0) * g.dx;
                let p = crate::kernel::heat_kernel(0.375, &[x], 1).unwrap();
                (d[i] - 1.5 * p).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn derivative_needs_stored_noise() {
        let g = LatticeGrid::new(1, 64, 0.125, 0.125 * 0.125 / 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = crate::solver::simulate(&g, &NoiseModel::dirac(), &DiffusionSpec::Linear, 0.25, &[], &mut rng).unwrap();
        assert!(matches!(
            simulate_derivative(&base, 0.0, 0, 0.25, &DiffusionSpec::Linear, &[0.25]),
            Err(Error::Precondition(_))
        ));
        let base = simulate_archived(&g, &NoiseModel::dirac(), &DiffusionSpec::Linear, 0.25, &[], &mut rng).unwrap();
        assert!(matches!(
            simulate_derivative(&base, 0.001, 0, 0.25, &DiffusionSpec::Linear, &[0.25]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn clark_ocone_refuses_small_ensembles() {
        let g = LatticeGrid::new(1, 64, 0.125, 0.125 * 0.125 / 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = vec![1.0; 64];
        let r = clark_ocone_check(&u, &g, &NoiseModel::dirac(), &DiffusionSpec::Linear, 0.0, 0, 0.25, 0, 99, &mut rng);
        assert!(matches!(r, Err(Error::Refused(_))));
    }

    #[test]
    fn clark_ocone_constant_sigma_is_exact() {
        let g = LatticeGrid::new(1, 64, 0.125, 0.125 * 0.125 / 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = vec![1.0; 64];
        let r = clark_ocone_check(&u, &g, &NoiseModel::dirac(), &DiffusionSpec::Constant(2.0), 0.0, 10, 0.25, 12, 100, &mut rng)
            .unwrap();
        assert!(r.relative_error < 1e-12, "{r:?}");
    }
}
