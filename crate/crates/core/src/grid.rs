//! Periodic lattice and the Fourier machinery shared by the heat semigroup,
//! the noise sampler and the solver.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};

/// Fourier symbol used for `e^{tΔ/2}` on the lattice.
///
/// `Lattice` is the nearest-neighbour Laplacian, `4/dx² · sin²(k dx/2)` per
/// axis: the resulting kernel is a continuous-time random walk, so the
/// semigroup is positive and mass preserving at every `t`. `Continuum` uses
/// `|k|²` on the Nyquist band; lattice samples of `p_t` are reproduced up to
/// aliasing of order `exp(-t π²/(2dx²))`, but short-time kernels oscillate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeatSymbol {
    #[default]
    Lattice,
    Continuum,
}

/// Periodic lattice `(dx ℤ / L ℤ)^d` with its time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGrid {
    pub d: usize,
    pub n_sites: usize,
    pub dx: f64,
    pub dt: f64,
    #[serde(default)]
    pub symbol: HeatSymbol,
}

impl LatticeGrid {
    pub fn new(d: usize, n_sites: usize, dx: f64, dt: f64) -> Result<Self> {
        let grid = Self { d, n_sites, dx, dt, symbol: HeatSymbol::Lattice };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_symbol(mut self, symbol: HeatSymbol) -> Self {
        self.symbol = symbol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(1..=2).contains(&self.d) {
            problems.push(format!("dimension must be 1 or 2, got {}", self.d));
        }
        if self.n_sites < 2 || !self.n_sites.is_power_of_two() {
            problems.push(format!("n_sites must be a power of two >= 2, got {}", self.n_sites));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            problems.push(format!("dx must be positive, got {}", self.dx));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            problems.push(format!("dt must be positive, got {}", self.dt));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Config(problems))
        }
    }

    /// Side length `L = n_sites · dx`.
    pub fn length(&self) -> f64 {
        self.n_sites as f64 * self.dx
    }

    /// Total number of lattice sites, `n_sites^d`.
    pub fn len(&self) -> usize {
        self.n_sites.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.d as i32)
    }

    /// Signed minimum-image lag, in lattice units, of index `i` along one axis.
    pub fn wrapped_index(&self, i: usize) -> i64 {
        let n = self.n_sites as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Minimum-image displacement vector of flat site index `idx` from the origin.
    pub fn displacement(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .into_iter()
            .map(|i| self.wrapped_index(i) as f64 * self.dx)
            .collect()
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        match self.d {
            1 => vec![idx],
            _ => vec![idx / self.n_sites, idx % self.n_sites],
        }
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        match self.d {
            1 => coords[0] % self.n_sites,
            _ => (coords[0] % self.n_sites) * self.n_sites + coords[1] % self.n_sites,
        }
    }

    /// Flat index of the site displaced from `idx` by `shift` lattice steps per axis.
    pub fn shifted(&self, idx: usize, shift: &[i64]) -> usize {
        let n = self.n_sites as i64;
        let coords: Vec<usize> = self
            .multi_index(idx)
            .iter()
            .zip(shift)
            .map(|(&c, &s)| (c as i64 + s).rem_euclid(n) as usize)
            .collect();
        self.flat_index(&coords)
    }

    pub(crate) fn check_field(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(argument(format!(
                "field has {} values but the grid has {} sites",
                field.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Angular wavenumber of DFT index `j` on an axis with `n` sites of spacing `dx`.
pub fn wavenumber(j: usize, n: usize, dx: f64) -> f64 {
    let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    2.0 * PI * m / (n as f64 * dx)
}

/// FFT plans and the Laplacian eigenvalues for one grid.
///
/// Cloning is cheap (plans are shared); each worker owns its scratch space.
#[derive(Clone)]
pub struct Spectral {
    grid: LatticeGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `-symbol(k)`: eigenvalues of `Δ` in the transform layout.
    laplacian: Arc<[f64]>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &LatticeGrid) -> Self {
        let n = grid.n_sites;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let axis: Vec<f64> = (0..n)
            .map(|j| {
                let k = wavenumber(j, n, grid.dx);
                match grid.symbol {
                    HeatSymbol::Continuum => k * k,
                    HeatSymbol::Lattice => {
                        let s = (0.5 * k * grid.dx).sin();
                        4.0 * s * s / (grid.dx * grid.dx)
                    }
                }
            })
            .collect();
        let laplacian: Vec<f64> = (0..grid.len())
            .map(|idx| -grid.multi_index(idx).iter().map(|&j| axis[j]).sum::<f64>())
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            laplacian: laplacian.into(),
            scratch: vec![Complex64::default(); scratch_len],
            transpose: if grid.d == 2 { vec![Complex64::default(); grid.len()] } else { Vec::new() },
        }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    /// Eigenvalues of the lattice Laplacian (nonpositive), indexed like the transform.
    pub fn laplacian(&self) -> &[f64] {
        &self.laplacian
    }

    /// Fourier multiplier of `e^{tΔ/2}`.
    pub fn heat_multiplier(&self, t: f64) -> Vec<f64> {
        self.laplacian.iter().map(|&l| (0.5 * t * l).exp()).collect()
    }

    /// Unnormalized forward DFT, in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let fft = Arc::clone(&self.forward);
        self.transform(fft.as_ref(), data);
    }

    /// Inverse DFT including the `1/n^d` normalization.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let fft = Arc::clone(&self.inverse);
        self.transform(fft.as_ref(), data);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    fn transform(&mut self, fft: &dyn Fft<f64>, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.grid.len());
        fft.process_with_scratch(data, &mut self.scratch);
        if self.grid.d == 2 {
            let n = self.grid.n_sites;
            transpose_square(data, &mut self.transpose, n);
            fft.process_with_scratch(&mut self.transpose, &mut self.scratch);
            transpose_square(&self.transpose, data, n);
        }
    }

    /// Applies a real, even Fourier multiplier to a real field.
    pub fn apply_multiplier(&mut self, field: &mut [f64], multiplier: &[f64]) {
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf.iter_mut().zip(multiplier).for_each(|(c, &m)| *c *= m);
        self.inverse(&mut buf);
        field.iter_mut().zip(&buf).for_each(|(v, c)| *v = c.re);
    }

    /// Computes `M_a[a] + M_b[b]` for two real fields with a single forward and
    /// a single inverse transform, packing `a + i b`.
    pub fn apply_pair(
        &mut self,
        a: &[f64],
        mult_a: &[f64],
        b: &[f64],
        mult_b: &[f64],
        out: &mut [f64],
        buf: &mut Vec<Complex64>,
    ) {
        let len = self.grid.len();
        buf.clear();
        buf.extend(a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)));
        self.forward(buf);
        let half_i = Complex64::new(0.0, -0.5);
        for idx in 0..len {
            let neg = self.negated_index(idx);
            if neg < idx {
                continue;
            }
            let z = buf[idx];
            let w = buf[neg];
            let at_idx = 0.5 * (z + w.conj()) * mult_a[idx] + half_i * (z - w.conj()) * mult_b[idx];
            let at_neg = 0.5 * (w + z.conj()) * mult_a[neg] + half_i * (w - z.conj()) * mult_b[neg];
            buf[idx] = at_idx;
            buf[neg] = at_neg;
        }
        self.inverse(buf);
        out.iter_mut().zip(buf.iter()).for_each(|(v, c)| *v = c.re);
    }

    fn negated_index(&self, idx: usize) -> usize {
        let n = self.grid.n_sites;
        let neg = |j: usize| if j == 0 { 0 } else { n - j };
        match self.grid.d {
            1 => neg(idx),
            _ => neg(idx / n) * n + neg(idx % n),
        }
    }
}

fn transpose_square(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}
