//! Python bindings for the opcomp core library: configuration, cache and
//! power control primitives, episode simulation, and the cache optimizer.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opcomp_core::baselines::BaselineConfig;
use opcomp_core::cache::{comp_probability, q_min, CacheScheme};
use opcomp_core::cache_opt::{c_hat, run_cache_optimization};
use opcomp_core::power::{allocate_power, lambda_tilde, theta_tilde, PolicyTables};
use opcomp_core::queue::{q_circ, stage_cost, validate_assumptions};
use opcomp_core::sim::run_episode;
use opcomp_core::special::{exp_integral_e1, exp_integral_ei};
use opcomp_core::{CacheVector, Error, Policy, SystemConfig, Urp};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// System parameters: bandwidth, slot length, queue thresholds, prices,
/// file catalog and request popularity.
#[pyclass(name = "SystemConfig")]
#[derive(Clone)]
struct PySystemConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    /// The 2x2 relay-cluster setup with six 600 MB files.
    #[staticmethod]
    fn default_setup() -> Self {
        PySystemConfig { inner: SystemConfig::paper_default() }
    }

    #[getter]
    fn bw(&self) -> f64 {
        self.inner.bw
    }
    #[setter]
    fn set_bw(&mut self, v: f64) {
        self.inner.bw = v;
    }
    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }
    #[setter]
    fn set_tau(&mut self, v: f64) {
        self.inner.tau = v;
    }
    #[getter]
    fn mu0(&self) -> f64 {
        self.inner.mu0
    }
    #[setter]
    fn set_mu0(&mut self, v: f64) {
        self.inner.mu0 = v;
    }
    #[getter]
    fn w_low(&self) -> f64 {
        self.inner.w_low
    }
    #[getter]
    fn w_high(&self) -> f64 {
        self.inner.w_high
    }
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }
    #[getter]
    fn n_files(&self) -> usize {
        self.inner.n_files
    }
    #[getter]
    fn rho(&self) -> Vec<f64> {
        self.inner.rho.clone()
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }
    #[setter]
    fn set_eta(&mut self, v: f64) {
        self.inner.eta = v;
    }
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }
    #[setter]
    fn set_beta(&mut self, v: Vec<f64>) {
        self.inner.beta = v;
    }
    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma.clone()
    }
    #[setter]
    fn set_gamma(&mut self, v: Vec<f64>) {
        self.inner.gamma = v;
    }

    /// Returns the list of violated price/slot-size assumptions (empty
    /// when the configuration is admissible).
    fn validate(&self) -> Vec<String> {
        validate_assumptions(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(bw={}, tau={}, mu0={}, m={}, n_files={})",
            self.inner.bw, self.inner.tau, self.inner.mu0, self.inner.m, self.inner.n_files
        )
    }
}

/// Per-file cache fractions q_l in [0, 1].
#[pyclass(name = "CacheVector")]
#[derive(Clone)]
struct PyCacheVector {
    inner: CacheVector,
}

#[pymethods]
impl PyCacheVector {
    #[new]
    fn new(q: Vec<f64>) -> PyResult<Self> {
        Ok(PyCacheVector { inner: CacheVector::new(q).map_err(err)? })
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.0.clone()
    }

    /// min_k q_{pi_k} for a request profile (list of file indices).
    fn q_min(&self, pi: Vec<usize>) -> f64 {
        q_min(&self.inner, &Urp(pi))
    }

    /// Probability that all requested parities are cached (CoMP slot),
    /// under distributed MDS-coded random caching.
    fn comp_probability(&self, pi: Vec<usize>) -> f64 {
        comp_probability(&self.inner, &Urp(pi), CacheScheme::MdsRandom)
    }

    fn __repr__(&self) -> String {
        format!("CacheVector({:?})", self.inner.0)
    }
}

/// Per-user water-filling policy tables at a fixed q_min.
#[pyclass(name = "PolicyTables", unsendable)]
struct PyPolicyTables {
    inner: PolicyTables,
    cfg: SystemConfig,
}

#[pymethods]
impl PyPolicyTables {
    #[new]
    fn new(q_min: f64, cfg: &PySystemConfig) -> PyResult<Self> {
        let inner = PolicyTables::build_with_memo(q_min, &cfg.inner, 2048).map_err(err)?;
        Ok(PyPolicyTables { inner, cfg: cfg.inner.clone() })
    }

    /// Value-function derivative f_k at queue level x (bits).
    fn f_at(&self, x: f64, k: usize) -> PyResult<f64> {
        self.inner.f_at(x, &self.cfg, k).map_err(err)
    }

    /// Transmit power for user k at queue level x and effective gain g.
    fn power(&self, x: f64, g: f64, k: usize) -> PyResult<f64> {
        let f = self.inner.f_at(x, &self.cfg, k).map_err(err)?;
        Ok(allocate_power(f, g, &self.cfg))
    }

    fn q_circ(&self, k: usize) -> f64 {
        self.inner.q_circ(k)
    }
}

/// Optimal average cost of the per-user fixed point at a given q_min.
#[pyfunction(name = "theta_tilde")]
fn py_theta_tilde(q_min: f64, cfg: &PySystemConfig, k: usize) -> PyResult<f64> {
    theta_tilde(q_min, &cfg.inner, k).map_err(err)
}

/// Water-level multiplier at queue level x (None at zero playback rate).
#[pyfunction(name = "lambda_tilde")]
fn py_lambda_tilde(x: f64, q_min: f64, cfg: &PySystemConfig) -> PyResult<Option<f64>> {
    lambda_tilde(x, q_min, &cfg.inner).map_err(err)
}

/// Smoothed stage cost of queue level x for user k.
#[pyfunction(name = "stage_cost")]
fn py_stage_cost(x: f64, cfg: &PySystemConfig, k: usize) -> f64 {
    stage_cost(x, &cfg.inner, k)
}

/// Stage-cost minimizer for user k.
#[pyfunction(name = "q_circ")]
fn py_q_circ(cfg: &PySystemConfig, k: usize) -> PyResult<f64> {
    q_circ(&cfg.inner, k).map_err(err)
}

/// Closed-form cost surrogate C_hat(q, pi).
#[pyfunction(name = "c_hat")]
fn py_c_hat(q: &PyCacheVector, pi: Vec<usize>, cfg: &PySystemConfig) -> PyResult<f64> {
    c_hat(&q.inner, &Urp(pi), &cfg.inner).map_err(err)
}

/// Exponential integral E1(x), x > 0.
#[pyfunction(name = "exp_integral_e1")]
fn py_e1(x: f64) -> PyResult<f64> {
    exp_integral_e1(x).map_err(err)
}

/// Exponential integral Ei(x), x > 0.
#[pyfunction(name = "exp_integral_ei")]
fn py_ei(x: f64) -> PyResult<f64> {
    exp_integral_ei(x).map_err(err)
}

fn parse_policy(name: &str, kappa: f64) -> PyResult<Policy> {
    Ok(match name {
        "proposed" => Policy::Proposed,
        "baseline1" => Policy::Baseline1(BaselineConfig::new(kappa, 1).map_err(err)?),
        "baseline2" => Policy::Baseline2(BaselineConfig::new(kappa, 2).map_err(err)?),
        "baseline3" => Policy::Baseline3(BaselineConfig::new(kappa, 3).map_err(err)?),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown policy {other:?} (expected proposed or baseline1..3)"
            )))
        }
    })
}

/// Runs one closed-loop episode and returns a metrics dict.
#[pyfunction(name = "run_episode")]
#[pyo3(signature = (cfg, q, n_slots, seed, policy = "proposed", kappa = 2e7))]
fn py_run_episode(
    py: Python<'_>,
    cfg: &PySystemConfig,
    q: &PyCacheVector,
    n_slots: usize,
    seed: u64,
    policy: &str,
    kappa: f64,
) -> PyResult<Py<PyDict>> {
    let pol = parse_policy(policy, kappa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, _) = run_episode(&cfg.inner, pol, &q.inner, n_slots, false, &mut rng).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("interruption", m.interruption)?;
    d.set_item("overflow", m.overflow)?;
    d.set_item("smooth_interruption", m.smooth_interruption)?;
    d.set_item("smooth_overflow", m.smooth_overflow)?;
    d.set_item("avg_power", m.avg_power)?;
    d.set_item("avg_queue", m.avg_queue)?;
    d.set_item("combined_cost", m.combined_cost)?;
    d.set_item("underflow_freq", m.underflow_freq)?;
    d.set_item("pr_comp", m.pr_comp)?;
    d.set_item("measured_slots", m.measured_slots)?;
    Ok(d.into())
}

/// Runs the projected stochastic subgradient cache optimizer; returns the
/// final cache vector and the (iteration, U, occupancy_bits) trace.
#[pyfunction(name = "optimize_cache")]
#[pyo3(signature = (cfg, q_init, n_urp, seed, sigma0 = 2.5e-3))]
fn py_optimize_cache(
    cfg: &PySystemConfig,
    q_init: &PyCacheVector,
    n_urp: usize,
    seed: u64,
    sigma0: f64,
) -> PyResult<(PyCacheVector, Vec<(u64, f64, f64)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = run_cache_optimization(&cfg.inner, n_urp, sigma0, q_init.inner.clone(), &mut rng)
        .map_err(err)?;
    Ok((PyCacheVector { inner: state.q }, state.trace))
}

#[pymodule]
fn opcomp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyCacheVector>()?;
    m.add_class::<PyPolicyTables>()?;
    m.add_function(wrap_pyfunction!(py_theta_tilde, m)?)?;
    m.add_function(wrap_pyfunction!(py_lambda_tilde, m)?)?;
    m.add_function(wrap_pyfunction!(py_stage_cost, m)?)?;
    m.add_function(wrap_pyfunction!(py_q_circ, m)?)?;
    m.add_function(wrap_pyfunction!(py_c_hat, m)?)?;
    m.add_function(wrap_pyfunction!(py_e1, m)?)?;
    m.add_function(wrap_pyfunction!(py_ei, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(py_optimize_cache, m)?)?;
    Ok(())
}
