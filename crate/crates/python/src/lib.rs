//! Python bindings for the core crate.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use witten_sampler::chebfilter::{validate_filter, FilterSpec};
use witten_sampler::config::ExperimentConfig;
use witten_sampler::potentials::PotentialParams;
use witten_sampler::spectrum::SpectralMode;
use witten_sampler::svt::{threshold, SvtRoute};
use witten_sampler::{grid, metrics, samplers};

fn py_err(e: witten_sampler::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn route(name: &str) -> PyResult<SvtRoute> {
    match name {
        "svd" => Ok(SvtRoute::Svd),
        "recurrence" => Ok(SvtRoute::Recurrence),
        other => Err(PyValueError::new_err(format!("unknown route {other:?}; use 'svd' or 'recurrence'"))),
    }
}

#[pyclass(name = "GridSpec", from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: witten_sampler::GridSpec,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (dim, n, half_width, center=None))]
    fn new(dim: usize, n: usize, half_width: f64, center: Option<Vec<f64>>) -> PyResult<Self> {
        let mut g = witten_sampler::GridSpec::new(dim, n, half_width).map_err(py_err)?;
        if let Some(c) = center {
            g = g.with_center(&c).map_err(py_err)?;
        }
        Ok(Self { inner: g })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn axis_points(&self, axis: usize) -> Vec<f64> {
        self.inner.axis_points(axis)
    }

    fn point(&self, index: usize) -> Vec<f64> {
        self.inner.point(index)
    }
}

#[pyclass(name = "Potential", from_py_object)]
#[derive(Clone)]
struct PyPotential {
    inner: witten_sampler::Potential,
}

#[pymethods]
impl PyPotential {
    /// Registry lookup: "muller-brown", "quartic-cosine-1d" or "harmonic".
    #[new]
    #[pyo3(signature = (key, gamma=None, dim=None, cap=None))]
    fn new(key: &str, gamma: Option<f64>, dim: Option<usize>, cap: Option<f64>) -> PyResult<Self> {
        let params = PotentialParams { gamma, dim, cap };
        let inner = witten_sampler::Potential::from_key(key, &params).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    fn value(&self, x: Vec<f64>) -> f64 {
        self.inner.value(&x)
    }

    fn gibbs_probabilities(&self, beta: f64, grid: &PyGrid) -> PyResult<Vec<f64>> {
        grid::gibbs_probabilities(&self.inner, beta, &grid.inner).map_err(py_err)
    }
}

#[pyclass(name = "BlockOperator")]
struct PyBlock {
    inner: witten_sampler::BlockOperator,
    potential: witten_sampler::Potential,
    beta: f64,
}

fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|x| Complex64::new(*x, 0.0)).collect()
}

#[pymethods]
impl PyBlock {
    #[staticmethod]
    fn langevin(potential: &PyPotential, beta: f64, grid: &PyGrid) -> PyResult<Self> {
        let inner = witten_sampler::BlockOperator::langevin(&potential.inner, beta, &grid.inner).map_err(py_err)?;
        Ok(Self {
            inner,
            potential: potential.inner.clone(),
            beta,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    /// Real input, returns `(re, im)` lists of `𝕃 v`.
    fn apply(&self, v: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        if v.len() != self.inner.cols() {
            return Err(PyValueError::new_err(format!("expected {} entries, got {}", self.inner.cols(), v.len())));
        }
        let out = self.inner.apply(&to_complex(&v));
        Ok((out.iter().map(|z| z.re).collect(), out.iter().map(|z| z.im).collect()))
    }

    /// Encoded Gibbs amplitudes (real, unit norm).
    fn gibbs_state(&self) -> PyResult<Vec<f64>> {
        let s = witten_sampler::gibbs_state(&self.potential, self.beta, self.inner.grid()).map_err(py_err)?;
        Ok(s.amplitudes().iter().map(|z| z.re).collect())
    }

    /// Dense eigen route below the dense guard, deflated Lanczos above.
    fn spectral_report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let mode = if self.inner.cols() <= witten_sampler::DENSE_GUARD {
            SpectralMode::DenseEigen
        } else {
            let psi = witten_sampler::gibbs_state(&self.potential, self.beta, self.inner.grid()).map_err(py_err)?;
            SpectralMode::iterative(psi)
        };
        let r = witten_sampler::spectral_report(&self.inner, &mode).map_err(py_err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("gap", r.gap)?;
        d.set_item("hamiltonian_gap", r.hamiltonian_gap)?;
        d.set_item("poincare_constant", r.poincare_constant)?;
        d.set_item("singular_values", r.singular_values)?;
        Ok(d.into_any().unbind())
    }

    /// Filters a real warm start; returns `(amplitudes, success_probability)`.
    #[pyo3(signature = (filter, phi, route_name="recurrence"))]
    fn threshold(&self, filter: &PyFilter, phi: Vec<f64>, route_name: &str) -> PyResult<(Vec<f64>, f64)> {
        let state = grid::WaveState::from_real(&phi, self.inner.grid().clone()).map_err(py_err)?;
        let r = threshold(&self.inner, &filter.inner, &state, route(route_name)?).map_err(py_err)?;
        Ok((r.state.amplitudes().iter().map(|z| z.re).collect(), r.success_probability))
    }
}

#[pyclass(name = "FilterSpec")]
struct PyFilter {
    inner: FilterSpec,
}

#[pymethods]
impl PyFilter {
    #[new]
    #[pyo3(signature = (s1, s2, delta, degree, eps=1e-3))]
    fn new(s1: f64, s2: f64, delta: f64, degree: usize, eps: f64) -> PyResult<Self> {
        let fs = FilterSpec::design(s1, s2, delta, degree, eps).map_err(py_err)?;
        Ok(Self { inner: fs })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs.clone()
    }

    fn evaluate(&self, x: f64) -> PyResult<f64> {
        self.inner.evaluate(x).map_err(py_err)
    }

    /// `(pass_err, stop_err, sup_norm)`.
    fn validate(&self) -> (f64, f64, f64) {
        let (_, r) = validate_filter(&self.inner);
        (r.pass_err, r.stop_err, r.sup_norm)
    }
}

#[pyfunction]
#[pyo3(signature = (potential, beta, dt, n_steps, x0, seed=0, sampler="mala"))]
fn sample_chain(
    potential: &PyPotential,
    beta: f64,
    dt: f64,
    n_steps: usize,
    x0: Vec<f64>,
    seed: u64,
    sampler: &str,
) -> PyResult<(Vec<Vec<f64>>, Option<f64>)> {
    let params = samplers::ChainParams::new(beta, dt, n_steps, seed);
    let batch = match sampler {
        "ula" => samplers::ula_chain(&potential.inner, &params, &x0),
        "mala" => samplers::mala_chain(&potential.inner, &params, &x0),
        other => return Err(PyValueError::new_err(format!("unknown sampler {other:?}; use 'ula' or 'mala'"))),
    }
    .map_err(py_err)?;
    Ok((batch.samples, batch.acceptance_rate))
}

/// Boosts real amplitudes to `2^r` points per axis and draws jittered samples.
#[pyfunction]
fn boost_and_measure(grid: &PyGrid, amplitudes: Vec<f64>, r: u32, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let state = grid::WaveState::from_real(&amplitudes, grid.inner.clone()).map_err(py_err)?;
    let fine = metrics::boost_resolution(&state, r).map_err(py_err)?;
    Ok(metrics::measure_and_jitter(&fine, n, seed).map_err(py_err)?.samples)
}

#[pyfunction]
fn tv_distance(p: Vec<f64>, q: Vec<f64>, cell_volume: f64) -> PyResult<f64> {
    metrics::tv_distance(&p, &q, cell_volume).map_err(py_err)
}

/// Runs an experiment from a JSON config string; returns the manifest as JSON.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(py_err)?;
    let m = witten_sampler::run(&cfg).map_err(py_err)?;
    serde_json::to_string(&m).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pywitten(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyBlock>()?;
    m.add_class::<PyFilter>()?;
    m.add_function(wrap_pyfunction!(sample_chain, m)?)?;
    m.add_function(wrap_pyfunction!(boost_and_measure, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
