//! Python bindings: domain setup, prior sampling, the radius and
//! self-intersection functionals, and single sweep points.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wavepolymer::experiments::{fit_exponent, sweep_point, SweepConfig};
use wavepolymer::field_radius::{radius, FieldGrid};
use wavepolymer::gibbs::FieldPrior;
use wavepolymer::localtime::{self_intersection, BinRule};
use wavepolymer::mode_dynamics::stationary_variance;
use wavepolymer::spectrum::{attach_spectrum, build_eigenbasis, classify, DomainConfig, ModeSpec, SpectrumProfile};

fn err(e: wavepolymer::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bin_rule(bin_width: Option<f64>, n_bins: Option<usize>) -> BinRule {
    match (bin_width, n_bins) {
        (Some(width), _) => BinRule::Fixed { width },
        (None, Some(n_bins)) => BinRule::Auto { n_bins },
        (None, None) => BinRule::default(),
    }
}

#[pyclass(name = "Domain", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDomain(DomainConfig);

#[pymethods]
impl PyDomain {
    #[new]
    #[pyo3(signature = (length, horizon, n_modes, n_x, n_t, seed = 0))]
    fn new(length: f64, horizon: f64, n_modes: usize, n_x: usize, n_t: usize, seed: u64) -> PyResult<Self> {
        DomainConfig::new(length, horizon, n_modes, n_x, n_t, seed).map(Self).map_err(err)
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        format!("Domain(length={}, horizon={}, n_modes={}, n_x={}, n_t={}, seed={})", c.length, c.horizon, c.n_modes, c.n_x, c.n_t, c.seed)
    }
}

#[pyclass(name = "Field", frozen)]
struct PyField(FieldGrid);

#[pymethods]
impl PyField {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.n_times(), self.0.cfg.n_x)
    }

    /// Rows are time slices.
    fn values(&self) -> Vec<Vec<f64>> {
        self.0.slices().map(<[f64]>::to_vec).collect()
    }

    fn radius(&self) -> f64 {
        radius(&self.0).r
    }

    #[pyo3(signature = (bin_width = None, n_bins = None))]
    fn phi(&self, bin_width: Option<f64>, n_bins: Option<usize>) -> PyResult<f64> {
        self_intersection(&self.0, bin_rule(bin_width, n_bins)).map(|s| s.phi).map_err(err)
    }
}

#[pyclass(name = "Prior", frozen)]
struct PyPrior(FieldPrior);

#[pymethods]
impl PyPrior {
    #[new]
    #[pyo3(signature = (domain, c = 1.0, alpha = 2.0, gammas = None, include_zero_mode = false))]
    fn new(domain: &PyDomain, c: f64, alpha: f64, gammas: Option<Vec<f64>>, include_zero_mode: bool) -> PyResult<Self> {
        let mut modes = build_eigenbasis(&domain.0).map_err(err)?;
        let profile = gammas.map_or(SpectrumProfile::PowerLaw, SpectrumProfile::Custom);
        attach_spectrum(&mut modes, c, alpha, &profile, None).map_err(err)?;
        FieldPrior::new(domain.0, &modes, include_zero_mode).map(Self).map_err(err)
    }

    /// Replica draws are reproducible: the same (seed, replica) gives the same field.
    fn sample(&self, py: Python<'_>, replica: u64) -> PyResult<PyField> {
        let draw = py.detach(|| self.0.sample(replica)).map_err(err)?;
        Ok(PyField(draw.field))
    }
}

#[pyfunction]
fn regime(length: f64, n: usize) -> String {
    format!("{:?}", classify(length, n)).to_lowercase()
}

/// (Var a, Var v, Cov(a, v)) of the stationary law of one mode.
#[pyfunction]
fn mode_stationary_variance(length: f64, n: usize, gamma: f64) -> PyResult<(f64, f64, f64)> {
    let mode = ModeSpec::new(length, n, gamma).map_err(err)?;
    stationary_variance(&mode).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (length, beta, n_replicas = 512, seed = 0, horizon = 8.0, n_modes = 16, n_x = 64, n_t = 80))]
#[allow(clippy::too_many_arguments)]
fn sweep_at<'py>(
    py: Python<'py>,
    length: f64,
    beta: f64,
    n_replicas: usize,
    seed: u64,
    horizon: f64,
    n_modes: usize,
    n_x: usize,
    n_t: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = SweepConfig { horizon, n_modes, n_x, n_t, seed, n_replicas, ..SweepConfig::default() };
    let p = py.detach(|| sweep_point(length, beta, &sc)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("length", p.length)?;
    d.set_item("beta", p.beta)?;
    d.set_item("q_radius_mean", p.q_radius_mean)?;
    d.set_item("q_radius_se", p.q_radius_se)?;
    d.set_item("prior_radius_mean", p.prior_radius_mean)?;
    d.set_item("ess", p.ess)?;
    d.set_item("sampler", format!("{:?}", p.sampler))?;
    d.set_item("envelope_probability", p.envelope_probability)?;
    Ok(d)
}

/// Log-log least squares; returns (slope, ci_low, ci_high, r_squared).
#[pyfunction]
fn fit_power_law(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64, f64)> {
    let f = fit_exponent(&points).map_err(err)?;
    Ok((f.slope, f.ci_low, f.ci_high, f.r_squared))
}

#[pymodule]
fn wavepolymer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyPrior>()?;
    m.add_function(wrap_pyfunction!(regime, m)?)?;
    m.add_function(wrap_pyfunction!(mode_stationary_variance, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_at, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    Ok(())
}
