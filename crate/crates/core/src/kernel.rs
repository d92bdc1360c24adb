//! Gaussian heat kernel `p_t(x) = (2πt)^{-d/2} exp(-‖x‖²/(2t))`, the
//! elementary product identities it satisfies, and the periodic heat
//! semigroup `e^{tΔ/2}` on a lattice.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Result};
use crate::grid::{LatticeGrid, Spectral};

/// A point `(t, x)` of space-time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(argument("spatial coordinate must have at least one component"));
        }
        if !(t >= 0.0) {
            return Err(domain(format!("time must be nonnegative, got {t}")));
        }
        Ok(Self { t, x })
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn kernel(&self) -> Result<f64> {
        heat_kernel(self.t, &self.x, self.d())
    }
}

/// Both sides of a kernel identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentitySides {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentitySides {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(self.rhs.abs()).max(f64::MIN_POSITIVE)
    }
}

fn check_time(t: f64, name: &str) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be positive and finite, got {t}")))
    }
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if d == 0 {
        return Err(argument("dimension must be positive"));
    }
    if x.len() != d {
        return Err(argument(format!("point has {} coordinates, dimension is {d}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(argument("point has non-finite coordinates"));
    }
    Ok(())
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Heat kernel `p_t(x)` for `x ∈ ℝ^d`.
pub fn heat_kernel(t: f64, x: &[f64], d: usize) -> Result<f64> {
    check_time(t, "time")?;
    check_point(x, d)?;
    Ok(heat_kernel_unchecked(t, norm_sq(x), d))
}

/// `p_t` as a function of `‖x‖²`, without argument validation.
#[inline]
pub fn heat_kernel_unchecked(t: f64, norm_sq: f64, d: usize) -> f64 {
    (2.0 * PI * t).powf(-0.5 * d as f64) * (-0.5 * norm_sq / t).exp()
}

/// Returns `(p_{2σ}(x-y), p_{2σ}(x+y))`, whose product times `2^d` is `p_σ(x) p_σ(y)`.
pub fn kernel_product_split(sigma: f64, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_time(sigma, "σ")?;
    let d = x.len();
    check_point(x, d)?;
    check_point(y, d)?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    Ok((
        heat_kernel_unchecked(2.0 * sigma, norm_sq(&diff), d),
        heat_kernel_unchecked(2.0 * sigma, norm_sq(&sum), d),
    ))
}

/// Returns `((2π)^{-d/2}(σ+τ)^{-d/2}, p_{στ/(σ+τ)}(x))`; their product is `p_σ(x) p_τ(x)`.
pub fn kernel_time_merge(sigma: f64, tau: f64, x: &[f64]) -> Result<(f64, f64)> {
    check_time(sigma, "σ")?;
    check_time(tau, "τ")?;
    let d = x.len();
    check_point(x, d)?;
    let prefactor = (2.0 * PI * (sigma + tau)).powf(-0.5 * d as f64);
    let merged = sigma * tau / (sigma + tau);
    Ok((prefactor, heat_kernel_unchecked(merged, norm_sq(x), d)))
}

/// Both sides of `p_σ(2x) = 2^{-d} (2πσ)^{d/2} p_{σ/2}(x)²`.
pub fn kernel_double_argument(sigma: f64, x: &[f64]) -> Result<IdentitySides> {
    check_time(sigma, "σ")?;
    let d = x.len();
    check_point(x, d)?;
    let r2 = norm_sq(x);
    let lhs = heat_kernel_unchecked(sigma, 4.0 * r2, d);
    let half = heat_kernel_unchecked(0.5 * sigma, r2, d);
    let df = d as f64;
    let rhs = 2f64.powf(-df) * (2.0 * PI * sigma).powf(0.5 * df) * half * half;
    Ok(IdentitySides { lhs, rhs })
}

/// `e^{tΔ/2}` applied to a lattice field through its Fourier multiplier.
///
/// Constants are fixed points, the discrete integral is preserved, and the
/// operator commutes with lattice shifts. With [`crate::HeatSymbol::Lattice`]
/// nonnegative input stays nonnegative.
pub fn semigroup_convolve(field: &[f64], t: f64, grid: &LatticeGrid) -> Result<Vec<f64>> {
    check_time(t, "time")?;
    grid.check_field(field)?;
    let mut spectral = Spectral::new(grid);
    let mult = spectral.heat_multiplier(t);
    let mut out = field.to_vec();
    spectral.apply_multiplier(&mut out, &mult);
    Ok(out)
}

/// Lattice approximation of `δ_z`: mass `1/dx^d` on site `site`.
pub fn lattice_delta(grid: &LatticeGrid, site: usize) -> Vec<f64> {
    let mut field = vec![0.0; grid.len()];
    field[site] = 1.0 / grid.cell_volume();
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HeatSymbol;

    #[test]
    fn kernel_at_origin() {
        let v = heat_kernel(1.0, &[0.0], 1).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        let v2 = heat_kernel(2.0, &[1.0, 1.0], 2).unwrap();
        assert!((v2 - (-0.5f64).exp() / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_even() {
        assert_eq!(heat_kernel(1.0, &[3.0], 1).unwrap(), heat_kernel(1.0, &[-3.0], 1).unwrap());
    }

    #[test]
    fn kernel_errors() {
        assert!(matches!(heat_kernel(0.0, &[0.0], 1), Err(crate::Error::Domain(_))));
        assert!(matches!(heat_kernel(-1.0, &[0.0], 1), Err(crate::Error::Domain(_))));
        assert!(matches!(heat_kernel(1.0, &[0.0, 1.0], 1), Err(crate::Error::Argument(_))));
        assert!(kernel_product_split(0.0, &[0.0], &[0.0]).is_err());
        assert!(kernel_time_merge(1.0, -1.0, &[0.0]).is_err());
        assert!(kernel_double_argument(0.0, &[1.0]).is_err());
        assert!(SpaceTimePoint::new(-1.0, vec![0.0]).is_err());
    }

    #[test]
    fn product_split_origin() {
        let (a, b) = kernel_product_split(1.0, &[0.0], &[0.0]).unwrap();
        assert!((2.0 * a * b - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn time_merge_origin() {
        let (pre, k) = kernel_time_merge(1.0, 1.0, &[0.0]).unwrap();
        assert!((pre - (2.0 * PI).powf(-0.5) * 0.5f64.sqrt()).abs() < 1e-15);
        assert!((k - PI.powf(-0.5)).abs() < 1e-15);
        assert!((pre * k - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn double_argument_origin() {
        let s = kernel_double_argument(1.0, &[0.0]).unwrap();
        assert!((s.lhs - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!(s.relative_gap() < 1e-14);
    }

    #[test]
    fn semigroup_fixes_constants() {
        let g = LatticeGrid::new(1, 64, 0.25, 0.01).unwrap();
        for symbol in [HeatSymbol::Lattice, HeatSymbol::Continuum] {
            let g = g.clone().with_symbol(symbol);
            let out = semigroup_convolve(&vec![2.5; 64], 0.7, &g).unwrap();
            assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-13));
        }
    }

    #[test]
    fn semigroup_rejects_mismatch() {
        let g = LatticeGrid::new(1, 64, 0.25, 0.01).unwrap();
        assert!(matches!(semigroup_convolve(&[1.0; 32], 0.5, &g), Err(crate::Error::Argument(_))));
        assert!(semigroup_convolve(&[1.0; 64], 0.0, &g).is_err());
    }
}
