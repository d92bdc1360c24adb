//! Spatial covariance models `f` for the driving noise.
//!
//! Fourier transforms follow `ĥ(z) = ∫ e^{i x·z} h(x) dx`, so the `(2π)^{-d}`
//! factors live in the inversion formula and in `Υ`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};
use crate::grid::{LatticeGrid, Spectral};
use crate::quad::integrate_to_infinity;

/// The covariance measure `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    /// `f = δ₀`: space-time white noise.
    Dirac,
    /// `f(dx) = p_b(x) dx`.
    Gaussian { bandwidth: f64 },
    /// `f(dx) = (λ/2)^d e^{-λ‖x‖₁} dx`.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub d: usize,
}

/// Result of the Dalang-type integral `∫ f̂(dz) (1+‖z‖²)^{α-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum DalangIntegral {
    Finite { value: f64, error: f64 },
    Divergent,
    Undetermined { fine: f64, coarse: f64 },
}

impl DalangIntegral {
    pub fn value(&self) -> Option<f64> {
        match *self {
            DalangIntegral::Finite { value, .. } => Some(value),
            _ => None,
        }
    }
}

const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-13;

impl NoiseModel {
    pub fn new(kind: NoiseKind, d: usize) -> Result<Self> {
        let model = Self { kind, d };
        model.validate()?;
        Ok(model)
    }

    pub fn dirac() -> Self {
        Self { kind: NoiseKind::Dirac, d: 1 }
    }

    pub fn gaussian(bandwidth: f64, d: usize) -> Result<Self> {
        Self::new(NoiseKind::Gaussian { bandwidth }, d)
    }

    pub fn exponential(rate: f64, d: usize) -> Result<Self> {
        Self::new(NoiseKind::Exponential { rate }, d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.d) {
            return Err(argument(format!("noise dimension must be 1 or 2, got {}", self.d)));
        }
        match self.kind {
            NoiseKind::Dirac if self.d != 1 => Err(domain(
                "white noise (f = δ₀) violates Dalang's condition for d ≥ 2",
            )),
            NoiseKind::Gaussian { bandwidth } if !(bandwidth > 0.0 && bandwidth.is_finite()) => {
                Err(argument(format!("gaussian bandwidth must be positive, got {bandwidth}")))
            }
            NoiseKind::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(argument(format!("exponential rate must be positive, got {rate}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            NoiseKind::Dirac => "dirac",
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::Exponential { .. } => "exponential",
        }
    }

    /// `f(ℝ^d)`; every built-in kind is a probability measure.
    pub fn total_mass(&self) -> f64 {
        1.0
    }

    /// Whether `f̂` charges the origin. Always false here: all three spectral
    /// measures have densities, so spatial averages are ergodic.
    pub fn has_zero_atom(&self) -> bool {
        false
    }

    /// Density of `f̂` at frequency `z`.
    pub fn spectral_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.d {
            return Err(argument(format!("frequency has {} components, model dimension is {}", z.len(), self.d)));
        }
        Ok(match self.kind {
            NoiseKind::Dirac => 1.0,
            NoiseKind::Gaussian { bandwidth } => (-0.5 * bandwidth * z.iter().map(|v| v * v).sum::<f64>()).exp(),
            NoiseKind::Exponential { rate } => z.iter().map(|v| lorentzian(rate, *v)).product(),
        })
    }

    /// Density of `f` at `x`. `None` for the Dirac mass.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self.kind {
            NoiseKind::Dirac => None,
            NoiseKind::Gaussian { bandwidth } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Some(crate::kernel::heat_kernel_unchecked(bandwidth, r2, x.len()))
            }
            NoiseKind::Exponential { rate } => {
                let l1: f64 = x.iter().map(|v| v.abs()).sum();
                Some((0.5 * rate).powi(x.len() as i32) * (-rate * l1).exp())
            }
        }
    }

    /// `f([-r, r]^d)`.
    pub fn mass_of_cube(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let one_axis = match self.kind {
            NoiseKind::Dirac => 1.0,
            NoiseKind::Gaussian { bandwidth } => libm::erf(r / (2.0 * bandwidth).sqrt()),
            NoiseKind::Exponential { rate } => 1.0 - (-rate * r).exp(),
        };
        one_axis.powi(self.d as i32)
    }

    /// `(p_{s} * f)(x)` for `s > 0`.
    pub fn smoothed_density(&self, s: f64, x: &[f64]) -> f64 {
        let d = x.len();
        match self.kind {
            NoiseKind::Dirac => crate::kernel::heat_kernel_unchecked(s, x.iter().map(|v| v * v).sum(), d),
            NoiseKind::Gaussian { bandwidth } => {
                crate::kernel::heat_kernel_unchecked(s + bandwidth, x.iter().map(|v| v * v).sum(), d)
            }
            NoiseKind::Exponential { rate } => x.iter().map(|&xi| laplace_heat_1d(rate, s, xi)).product(),
        }
    }

    /// `∫_{ℝ^d} f̂(z) w(z) dz` for a weight that depends on `‖z‖²` only.
    fn spectral_integral<W: Fn(f64) -> f64>(&self, weight: W, rel: f64) -> (f64, f64, bool) {
        match (self.kind, self.d) {
            (_, 1) => {
                let q = integrate_to_infinity(|z| self.density_1d(z) * weight(z * z), 0.0, QUAD_ABS, rel);
                (2.0 * q.value, 2.0 * q.error, q.converged)
            }
            (NoiseKind::Exponential { rate }, _) => {
                let mut ok = true;
                let mut err = 0.0;
                let q = integrate_to_infinity(
                    |z1| {
                        let inner = integrate_to_infinity(
                            |z2| lorentzian(rate, z2) * weight(z1 * z1 + z2 * z2),
                            0.0,
                            QUAD_ABS,
                            rel,
                        );
                        ok &= inner.converged;
                        err += inner.error;
                        lorentzian(rate, z1) * inner.value
                    },
                    0.0,
                    QUAD_ABS,
                    rel,
                );
                (4.0 * q.value, 4.0 * (q.error + err * 1e-3), ok && q.converged)
            }
            (kind, _) => {
                // radial: f̂ depends on ‖z‖ only
                let radial = move |r: f64| match kind {
                    NoiseKind::Gaussian { bandwidth } => (-0.5 * bandwidth * r * r).exp(),
                    _ => 1.0,
                };
                let q = integrate_to_infinity(|r| r * radial(r) * weight(r * r), 0.0, QUAD_ABS, rel);
                (2.0 * PI * q.value, 2.0 * PI * q.error, q.converged)
            }
        }
    }

    fn density_1d(&self, z: f64) -> f64 {
        match self.kind {
            NoiseKind::Dirac => 1.0,
            NoiseKind::Gaussian { bandwidth } => (-0.5 * bandwidth * z * z).exp(),
            NoiseKind::Exponential { rate } => lorentzian(rate, z),
        }
    }

    /// `∫ f̂(dz) / (1+‖z‖²)^{1-α}`.
    ///
    /// Divergence is decided analytically from the tail of `f̂`; finite values
    /// come from two quadrature resolutions that must agree to `1e-6`.
    pub fn dalang_integral(&self, alpha: f64) -> Result<DalangIntegral> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(domain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if let NoiseKind::Dirac = self.kind {
            // f̂ ≡ 1: the integrand decays like ‖z‖^{-2(1-α)} against dz ~ r^{d-1} dr.
            if 2.0 * (1.0 - alpha) <= self.d as f64 {
                return Ok(DalangIntegral::Divergent);
            }
        }
        let weight = |r2: f64| (1.0 + r2).powf(alpha - 1.0);
        let (fine, fine_err, fine_ok) = self.spectral_integral(weight, 1e-12);
        let (coarse, _, coarse_ok) = self.spectral_integral(weight, 1e-8);
        let agree = (fine - coarse).abs() <= 1e-6 * fine.abs().max(1e-300);
        if fine_ok && coarse_ok && agree && fine.is_finite() {
            Ok(DalangIntegral::Finite { value: fine, error: fine_err })
        } else {
            Ok(DalangIntegral::Undetermined { fine, coarse })
        }
    }

    /// `Υ(λ) = 2(2π)^{-d} ∫ f̂(dz) / (2λ + ‖z‖²)`.
    pub fn upsilon(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(domain(format!("Υ needs a positive rate, got {lambda}")));
        }
        match self.dalang_integral(0.0)? {
            DalangIntegral::Finite { .. } => {}
            other => return Err(domain(format!("Dalang's condition fails for this model: {other:?}"))),
        }
        let (value, _, ok) = self.spectral_integral(|r2| 1.0 / (2.0 * lambda + r2), QUAD_REL);
        if !ok {
            return Err(Error::Undetermined(format!("Υ({lambda}) quadrature did not converge")));
        }
        Ok(2.0 * value / (2.0 * PI).powi(self.d as i32))
    }

    /// `Λ = Υ^{-1}`, by bracketed bisection in `log λ`.
    pub fn lambda_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(domain(format!("Λ is defined on (0, Υ(0+)); got {y}")));
        }
        const LOG_MIN: f64 = -600.0;
        const LOG_MAX: f64 = 600.0;
        let ups = |log_l: f64| self.upsilon(log_l.exp());
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        // Υ decreases: need Υ(e^lo) ≥ y ≥ Υ(e^hi)
        while ups(lo)? < y {
            lo -= 4.0;
            if lo < LOG_MIN {
                return Err(domain(format!(
                    "y = {y} exceeds the attainable range (0, {}) of Υ",
                    ups(LOG_MIN)?
                )));
            }
        }
        while ups(hi)? > y {
            hi += 4.0;
            if hi > LOG_MAX {
                return Err(domain(format!("y = {y} is below the attainable range of Υ")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = ups(mid)?;
            if ((v - y) / y).abs() <= 1e-13 || hi - lo < 1e-15 {
                return Ok(mid.exp());
            }
            if v > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }

    /// Lattice covariance `f_Δ` and its circulant spectrum on `grid`.
    pub fn lattice_covariance(&self, grid: &LatticeGrid) -> Result<LatticeCovariance> {
        if grid.d != self.d {
            return Err(argument(format!("grid dimension {} differs from noise dimension {}", grid.d, self.d)));
        }
        let len = grid.len();
        let vol = grid.cell_volume();
        if let NoiseKind::Dirac = self.kind {
            let mut values = vec![0.0; len];
            values[0] = 1.0 / vol;
            return Ok(LatticeCovariance { values, spectrum: vec![1.0; len], white: true });
        }
        let raw: Vec<f64> = (0..len)
            .map(|idx| self.density(&grid.displacement(idx)).unwrap_or(0.0))
            .collect();
        let mut spectral = Spectral::new(grid);
        let mut buf: Vec<Complex64> = raw.iter().map(|&v| Complex64::new(v * vol, 0.0)).collect();
        spectral.forward(&mut buf);
        let mut spectrum = Vec::with_capacity(len);
        for (idx, c) in buf.iter().enumerate() {
            let v = c.re;
            if v.is_nan() {
                return Err(Error::Internal(format!("non-finite discrete spectrum at frequency index {idx}")));
            }
            spectrum.push(v.max(0.0));
        }
        // unit discrete mass: the zero mode equals f(ℝ^d)
        let scale = self.total_mass() / spectrum[0];
        spectrum.iter_mut().for_each(|v| *v *= scale);
        let mut back: Vec<Complex64> = spectrum.iter().map(|&v| Complex64::new(v / vol, 0.0)).collect();
        spectral.inverse(&mut back);
        let values = back.iter().map(|c| c.re).collect();
        Ok(LatticeCovariance { values, spectrum, white: false })
    }

    /// Draws one increment `η([t, t+dt] × cell)/dx^d` per site.
    pub fn sample_increment<R: Rng + ?Sized>(&self, grid: &LatticeGrid, dt: f64, rng: &mut R) -> Result<NoiseIncrement> {
        let mut sampler = NoiseSampler::new(self, grid, dt)?;
        let mut values = vec![0.0; grid.len()];
        sampler.fill(rng, &mut values);
        Ok(NoiseIncrement { values, dt })
    }
}

fn lorentzian(rate: f64, z: f64) -> f64 {
    rate * rate / (rate * rate + z * z)
}

/// `(p_s * (λ/2)e^{-λ|·|})(x)` in one dimension.
fn laplace_heat_1d(rate: f64, s: f64, x: f64) -> f64 {
    // (λ/4)[e^{λ²s/2 - λx} erfc((λs - x)/√(2s)) + e^{λ²s/2 + λx} erfc((λs + x)/√(2s))]
    let term = |sign: f64| {
        let arg = (rate * s + sign * x) / (2.0 * s).sqrt();
        let expo = 0.5 * rate * rate * s + sign * rate * x;
        if arg >= 0.0 {
            (-x * x / (2.0 * s)).exp() * erfcx(arg)
        } else {
            2.0 * expo.exp() - (-x * x / (2.0 * s)).exp() * erfcx(-arg)
        }
    };
    0.25 * rate * (term(-1.0) + term(1.0))
}

/// Scaled complementary error function `e^{x²} erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // asymptotic series
        let inv2 = 1.0 / (2.0 * x * x);
        (1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2) / (x * PI.sqrt())
    }
}

/// Lattice covariance and its circulant eigenvalues (`dx^d`-weighted DFT of `f_Δ`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCovariance {
    /// `f_Δ` at every lag, in flat index layout.
    pub values: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub white: bool,
}

impl LatticeCovariance {
    pub fn discrete_mass(&self, grid: &LatticeGrid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_volume()
    }
}

/// Integrated noise over one time step on every lattice site.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub values: Vec<f64>,
    pub dt: f64,
}

/// Reusable circulant sampler for one `(model, grid, dt)`.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    dt: f64,
    white_scale: Option<f64>,
    amplitude: Vec<f64>,
    spectral: Option<Spectral>,
    buffer: Vec<Complex64>,
    pending: Option<Vec<f64>>,
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel, grid: &LatticeGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("time step must be positive, got {dt}")));
        }
        let cov = model.lattice_covariance(grid)?;
        if cov.white {
            return Ok(Self {
                dt,
                white_scale: Some((dt / grid.cell_volume()).sqrt()),
                amplitude: Vec::new(),
                spectral: None,
                buffer: Vec::new(),
                pending: None,
            });
        }
        // eigenvalues of the circulant covariance dt·f_Δ(x - y)
        let vol = grid.cell_volume();
        let amplitude = cov.spectrum.iter().map(|&s| (dt * s / vol).sqrt()).collect();
        Ok(Self {
            dt,
            white_scale: None,
            amplitude,
            spectral: Some(Spectral::new(grid)),
            buffer: Vec::with_capacity(grid.len()),
            pending: None,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Fills `out` with a fresh increment.
    pub fn fill<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        if let Some(scale) = self.white_scale {
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = scale * z;
            }
            return;
        }
        if let Some(p) = self.pending.take() {
            out.copy_from_slice(&p);
            return;
        }
        // Real and imaginary parts of the filtered complex white noise are
        // independent fields with the target covariance.
        let spectral = self.spectral.as_mut().expect("spectral sampler");
        self.buffer.clear();
        for _ in 0..out.len() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            self.buffer.push(Complex64::new(re, im));
        }
        spectral.forward(&mut self.buffer);
        self.buffer.iter_mut().zip(&self.amplitude).for_each(|(c, &a)| *c *= a);
        spectral.inverse(&mut self.buffer);
        for (v, c) in out.iter_mut().zip(&self.buffer) {
            *v = c.re;
        }
        self.pending = Some(self.buffer.iter().map(|c| c.im).collect());
    }
}
