use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sqa_core::anneal::{self, build_schedule, default_beta, Readout, SqaOptions};
use sqa_core::chain::instances::{planted_barrier_pair, sqa_pair, BarrierSpec};
use sqa_core::chain::most_paths_comparison;
use sqa_core::diagnostics::{self, BenchmarkConfig, MixingSweepConfig, SamplingPlan};
use sqa_core::path_integral::default_trotter_number;
use sqa_core::sa::{self, SaSchedule};
use sqa_core::{oracle, KernelKind, PathIntegralSystem, RngStream, SqaError, SymmetricCost};

fn err(e: SqaError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Reports cross the boundary as plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn kernel(name: &str) -> PyResult<KernelKind> {
    name.parse().map_err(err)
}

/// Cost `f(|x|)` on n bits.
#[pyclass(name = "Cost", module = "sqa", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCost {
    inner: SymmetricCost,
}

#[pymethods]
impl PyCost {
    #[staticmethod]
    #[pyo3(signature = (n, alpha = 1.0 / 3.0, zeta = 0.0))]
    fn spike(n: usize, alpha: f64, zeta: f64) -> PyResult<Self> {
        Ok(PyCost { inner: SymmetricCost::spike(n, alpha, zeta).map_err(err)? })
    }

    #[staticmethod]
    fn spikeless(n: usize) -> PyResult<Self> {
        Ok(PyCost { inner: SymmetricCost::spikeless(n).map_err(err)? })
    }

    /// `values[k]` is the cost at Hamming weight k.
    #[staticmethod]
    fn custom(values: Vec<f64>) -> PyResult<Self> {
        Ok(PyCost { inner: SymmetricCost::custom(values).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Weights covered by the spike, empty for costs without one.
    #[getter]
    fn spike_weights(&self) -> Vec<usize> {
        self.inner.spike_indicator().map(|i| i.weights()).unwrap_or_default()
    }

    fn __call__(&self, bits: Vec<bool>) -> PyResult<f64> {
        self.inner.eval(&bits).map_err(err)
    }

    fn gap(&self, s: f64) -> PyResult<f64> {
        oracle::gap(&self.inner, s).map_err(err)
    }

    fn ground_marginal(&self, s: f64) -> PyResult<Vec<f64>> {
        Ok(oracle::ground_marginal(&self.inner, s).map_err(err)?.probs)
    }

    fn thermal_marginal(&self, s: f64, beta: f64) -> PyResult<Vec<f64>> {
        Ok(oracle::thermal_marginal(&self.inner, s, beta).map_err(err)?.probs)
    }

    /// Exact first-slice weight law of the discretized chain.
    #[pyo3(name = "trotter_marginal", signature = (s, beta, L))]
    #[allow(non_snake_case)]
    fn trotter_marginal(&self, s: f64, beta: f64, L: usize) -> PyResult<Vec<f64>> {
        Ok(oracle::trotter_marginal(&self.inner, s, beta, L).map_err(err)?.probs)
    }

    fn __repr__(&self) -> String {
        format!("Cost(kind={:?}, n={})", self.inner.kind(), self.inner.n())
    }
}

/// Discretized path-integral chain at fixed `s`.
#[pyclass(name = "PathIntegral", module = "sqa", frozen)]
struct PyPathIntegral {
    inner: PathIntegralSystem,
}

#[pymethods]
impl PyPathIntegral {
    #[new]
    #[pyo3(signature = (cost, L, beta, s))]
    #[allow(non_snake_case)]
    fn new(cost: &PyCost, L: usize, beta: f64, s: f64) -> PyResult<Self> {
        Ok(PyPathIntegral { inner: PathIntegralSystem::new(cost.inner.clone(), L, beta, s).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter(L)]
    fn trotter(&self) -> usize {
        self.inner.trotter()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s()
    }

    #[getter]
    fn tanh_omega(&self) -> f64 {
        self.inner.tanh_omega()
    }

    /// Monte Carlo estimate of the first-slice weight law, with its
    /// total-variation distance to the exact one.
    #[pyo3(signature = (kernel = "heat_bath", replicas = 16, burn_in = 2000, samples = 2000, thin = 1, seed = 0))]
    fn sample_marginal<'py>(
        &self,
        py: Python<'py>,
        kernel: &str,
        replicas: usize,
        burn_in: usize,
        samples: usize,
        thin: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kind = self::kernel(kernel)?;
        let plan = SamplingPlan { replicas, burn_in, samples, thin };
        let sys = &self.inner;
        let (sample, tv) = py
            .detach(|| -> sqa_core::Result<_> {
                let sample = diagnostics::sample_stationary(sys, kind, &plan, None, &[], &RngStream::new(seed))?;
                let exact = oracle::trotter_marginal(sys.cost(), sys.s(), sys.beta(), sys.trotter())?;
                let tv = diagnostics::tv_to_oracle(&sample.marginal, &exact)?;
                Ok((sample, tv))
            })
            .map_err(err)?;
        let out = to_py(py, &sample)?;
        out.set_item("tv", tv)?;
        Ok(out)
    }
}

/// Anneals `replicas` independent chains from the exact `s = 0` state.
#[pyfunction]
#[pyo3(signature = (
    cost, beta = None, L = None, kernel = "heat_bath", replicas = 100, seed = 0,
    c = 1.0, steps_per_s = 1, any_slice = false, track_oracle = true, epsilon = 1.0,
))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn run_sqa<'py>(
    py: Python<'py>,
    cost: &PyCost,
    beta: Option<f64>,
    L: Option<usize>,
    kernel: &str,
    replicas: usize,
    seed: u64,
    c: f64,
    steps_per_s: usize,
    any_slice: bool,
    track_oracle: bool,
    epsilon: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let n = cost.inner.n();
    let beta = beta.unwrap_or_else(|| default_beta(n, epsilon));
    let mut options = SqaOptions::new(L.unwrap_or_else(|| default_trotter_number(n, beta)), self::kernel(kernel)?, replicas);
    options.readout = if any_slice { Readout::AnySlice } else { Readout::FirstSlice };
    options.track_oracle = track_oracle;
    let report = py
        .detach(|| {
            let schedule = build_schedule(n, beta, c, steps_per_s)?;
            anneal::run_sqa(&cost.inner, &schedule, &options, &RngStream::new(seed))
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Simulated annealing on a geometric temperature ladder.
#[pyfunction]
#[pyo3(signature = (cost, t0 = None, t_final = 0.1, ratio = 0.95, steps_per_t = 100, flip_size = 1, replicas = 100, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn run_sa<'py>(
    py: Python<'py>,
    cost: &PyCost,
    t0: Option<f64>,
    t_final: f64,
    ratio: f64,
    steps_per_t: usize,
    flip_size: usize,
    replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let t0 = t0.unwrap_or(cost.inner.n() as f64);
    let report = py
        .detach(|| {
            let schedule = SaSchedule::geometric(t0, t_final, ratio, steps_per_t, flip_size)?;
            sa::run_sa(&cost.inner, &schedule, &RngStream::new(seed), replicas)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Exact final weight law of single-flip SA on the same ladder.
#[pyfunction]
#[pyo3(signature = (cost, t0, t_final = 0.1, ratio = 0.95, steps_per_t = 100))]
fn sa_exact_marginal(cost: &PyCost, t0: f64, t_final: f64, ratio: f64, steps_per_t: usize) -> PyResult<Vec<f64>> {
    let schedule = SaSchedule::geometric(t0, t_final, ratio, steps_per_t, 1).map_err(err)?;
    sa::sa_exact_final_marginal(&cost.inner, &schedule).map_err(err)
}

/// Comparison of the spikeless and spiked chains on `n` bits and `L` slices.
#[pyfunction]
#[pyo3(signature = (n = 2, L = 3, beta = 10.0, s = 0.9, alpha = 1.0 / 3.0, threshold = 3))]
#[allow(non_snake_case)]
fn compare_sqa_pair<'py>(
    py: Python<'py>,
    n: usize,
    L: usize,
    beta: f64,
    s: f64,
    alpha: f64,
    threshold: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| {
            let pair = sqa_pair(n, L, beta, s, alpha)?;
            let theta = pair.theta_for_spike_time(threshold)?;
            most_paths_comparison(&pair.easy, &pair.paths, &pair.hard, theta)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Comparison on the birth-death pair with a suppressed band; `spec` keys
/// override the defaults.
#[pyfunction]
#[pyo3(signature = (spec = None))]
fn compare_barrier<'py>(py: Python<'py>, spec: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let spec: BarrierSpec = match spec {
        Some(s) => from_py(s)?,
        None => BarrierSpec::default(),
    };
    let report = py
        .detach(|| {
            let pair = planted_barrier_pair(&spec)?;
            most_paths_comparison(&pair.easy, &pair.paths, &pair.hard, pair.theta)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// SQA against SA at matched bit-operation budgets, one row per `n`.
#[pyfunction]
fn separation_benchmark<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let config: BenchmarkConfig = from_py(config)?;
    let rows = py.detach(|| diagnostics::separation_benchmark(&config)).map_err(err)?;
    to_py(py, &rows)
}

/// Empirical mixing time per `n` and its power-law fit.
#[pyfunction]
fn mixing_sweep<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let config: MixingSweepConfig = from_py(config)?;
    let sweep = py.detach(|| diagnostics::mixing_sweep(&config)).map_err(err)?;
    to_py(py, &sweep)
}

#[pymodule]
fn sqa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCost>()?;
    m.add_class::<PyPathIntegral>()?;
    m.add_function(wrap_pyfunction!(run_sqa, m)?)?;
    m.add_function(wrap_pyfunction!(run_sa, m)?)?;
    m.add_function(wrap_pyfunction!(sa_exact_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(compare_sqa_pair, m)?)?;
    m.add_function(wrap_pyfunction!(compare_barrier, m)?)?;
    m.add_function(wrap_pyfunction!(separation_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_sweep, m)?)?;
    Ok(())
}
