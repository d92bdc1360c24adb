//! Python bindings for the shelab laboratory.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shelab::harness::{self, CampaignKind, Overrides, RunOptions};
use shelab::noise::DalangIntegral;
use shelab::{DiffusionSpec, Error, HeatSymbol};

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Argument(_) | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn campaign_kind(name: &str) -> PyResult<CampaignKind> {
    CampaignKind::ALL
        .iter()
        .copied()
        .find(|c| c.as_str() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown campaign {name:?}")))
}

fn diffusion(kind: &str, value: Option<f64>, a: Option<f64>, b: Option<f64>) -> PyResult<DiffusionSpec> {
    let spec = match kind {
        "pam" | "linear" => DiffusionSpec::Linear,
        "constant" => DiffusionSpec::Constant(value.ok_or_else(|| PyValueError::new_err("constant σ needs value"))?),
        "affine" => DiffusionSpec::Affine {
            a: a.ok_or_else(|| PyValueError::new_err("affine σ needs a"))?,
            b: b.ok_or_else(|| PyValueError::new_err("affine σ needs b"))?,
        },
        other => return Err(PyValueError::new_err(format!("unknown diffusion {other:?}"))),
    };
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// Spatial covariance model of the noise.
#[pyclass(name = "NoiseModel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNoiseModel {
    inner: shelab::NoiseModel,
}

#[pymethods]
impl PyNoiseModel {
    #[staticmethod]
    fn dirac() -> Self {
        Self { inner: shelab::NoiseModel::dirac() }
    }

    #[staticmethod]
    #[pyo3(signature = (bandwidth, d=1))]
    fn gaussian(bandwidth: f64, d: usize) -> PyResult<Self> {
        Ok(Self { inner: shelab::NoiseModel::gaussian(bandwidth, d).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (rate, d=1))]
    fn exponential(rate: f64, d: usize) -> PyResult<Self> {
        Ok(Self { inner: shelab::NoiseModel::exponential(rate, d).map_err(err)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn upsilon(&self, lam: f64) -> PyResult<f64> {
        self.inner.upsilon(lam).map_err(err)
    }

    fn lambda_inverse(&self, y: f64) -> PyResult<f64> {
        self.inner.lambda_inverse(y).map_err(err)
    }

    /// Value of the Dalang integral, `inf` when divergent.
    fn dalang_integral(&self, alpha: f64) -> PyResult<f64> {
        match self.inner.dalang_integral(alpha).map_err(err)? {
            DalangIntegral::Finite { value, .. } => Ok(value),
            DalangIntegral::Divergent => Ok(f64::INFINITY),
            DalangIntegral::Undetermined { fine, coarse } => {
                Err(PyRuntimeError::new_err(format!("undetermined: fine {fine}, coarse {coarse}")))
            }
        }
    }

    fn spectral_density(&self, z: Vec<f64>) -> PyResult<f64> {
        self.inner.spectral_density(&z).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Periodic lattice with spacing `dx` and time step `dt`.
#[pyclass(name = "LatticeGrid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLatticeGrid {
    inner: shelab::LatticeGrid,
}

#[pymethods]
impl PyLatticeGrid {
    #[new]
    #[pyo3(signature = (d, n_sites, dx, dt, symbol="lattice"))]
    fn new(d: usize, n_sites: usize, dx: f64, dt: f64, symbol: &str) -> PyResult<Self> {
        let symbol = match symbol {
            "lattice" => HeatSymbol::Lattice,
            "continuum" => HeatSymbol::Continuum,
            other => return Err(PyValueError::new_err(format!("unknown symbol {other:?}"))),
        };
        Ok(Self { inner: shelab::LatticeGrid::new(d, n_sites, dx, dt).map_err(err)?.with_symbol(symbol) })
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Runs one trajectory from `u ≡ 1`; returns `[(t, values), ...]` at t = 0 and the requested times.
#[pyfunction]
#[pyo3(signature = (grid, noise, t_end, times, seed, diffusion="pam", value=None, a=None, b=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    grid: &PyLatticeGrid,
    noise: &PyNoiseModel,
    t_end: f64,
    times: Vec<f64>,
    seed: u64,
    diffusion: &str,
    value: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
) -> PyResult<Vec<(f64, Vec<f64>)>> {
    let sigma = self::diffusion(diffusion, value, a, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = shelab::solver::simulate(&grid.inner, &noise.inner, &sigma, t_end, &times, &mut rng).map_err(err)?;
    Ok(traj.frames.into_iter().map(|f| (f.t, f.values)).collect())
}

#[pyfunction]
fn heat_kernel(t: f64, x: Vec<f64>) -> PyResult<f64> {
    let d = x.len();
    shelab::kernel::heat_kernel(t, &x, d).map_err(err)
}

/// Calibrated KS test; returns the verdict as a dict.
#[pyfunction]
#[pyo3(signature = (samples, level=0.01, centering_rho=0.0))]
fn normality_test<'py>(py: Python<'py>, samples: Vec<f64>, level: f64, centering_rho: f64) -> PyResult<Bound<'py, PyAny>> {
    let v = shelab::stats::normality_test_with(&samples, level, centering_rho).map_err(err)?;
    to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (samples, variance=None))]
fn distance_to_gaussian<'py>(py: Python<'py>, samples: Vec<f64>, variance: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let d = shelab::stats::distance_to_gaussian(&samples, variance).map_err(err)?;
    to_py(py, &d)
}

#[pyfunction]
fn tv_normals_bound(c1: f64, c2: f64) -> PyResult<f64> {
    shelab::stats::tv_normals_bound(c1, c2).map_err(err)
}

/// Validated campaign configuration: a preset merged with optional TOML.
#[pyclass(name = "ExperimentConfig", frozen)]
struct PyExperimentConfig {
    inner: harness::ExperimentConfig,
}

#[pymethods]
impl PyExperimentConfig {
    #[new]
    #[pyo3(signature = (campaign, toml="", seed=None, replicas=None))]
    fn new(campaign: &str, toml: &str, seed: Option<u64>, replicas: Option<usize>) -> PyResult<Self> {
        let kind = campaign_kind(campaign)?;
        let inner = harness::ExperimentConfig::from_toml_str(kind, toml, Overrides { seed, replicas }).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn campaign(&self) -> &'static str {
        self.inner.campaign.as_str()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn canonical_json(&self) -> String {
        self.inner.canonical_json()
    }

    /// Runs the campaign and returns the result summary as a dict.
    #[pyo3(signature = (out=None, workers=None, force=false))]
    fn run<'py>(&self, py: Python<'py>, out: Option<PathBuf>, workers: Option<usize>, force: bool) -> PyResult<Bound<'py, PyAny>> {
        let opts = RunOptions { workers, out, force };
        let result = py.detach(|| harness::run_campaign(&self.inner, &opts)).map_err(err)?;
        to_py(py, &result)
    }
}

#[pymodule]
fn shelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNoiseModel>()?;
    m.add_class::<PyLatticeGrid>()?;
    m.add_class::<PyExperimentConfig>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(normality_test, m)?)?;
    m.add_function(wrap_pyfunction!(distance_to_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(tv_normals_bound, m)?)?;
    m.add("CAMPAIGNS", CampaignKind::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
