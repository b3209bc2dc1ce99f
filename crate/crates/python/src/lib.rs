//! Python bindings. Structured inputs and outputs (configs, model specs,
//! reports) cross the boundary as plain dicts and lists via JSON.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use mixfreq::cli::ModelSpec;
use mixfreq::empirical::{pseudo_thai, PseudoThaiConfig};
use mixfreq::evaluation::{self, DmOptions, ForecastRecord};
use mixfreq::forecast::{self as fc, FittedForecaster, Split};
use mixfreq::midas::{AlmonTheta, Weighting};
use mixfreq::simulation::{self, DgpConfig, McExperiment};
use mixfreq::{alignment, io, Error, RandomSeed};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// dict -> typed value, through Python's json module.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let py = obj.py();
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn optional<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match obj {
        Some(o) if !o.is_none() => from_py(o),
        _ => Ok(T::default()),
    }
}

/// A target series plus higher-frequency covariates.
#[pyclass(name = "Dataset", module = "mixfreq", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: mixfreq::MixedFrequencyDataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a dataset from a manifest written by `mixfreq simulate`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: io::load_dataset(&path).map_err(err)?,
        })
    }

    /// Draws from the restricted-MIDAS simulation DGP; `config` holds
    /// DgpConfig keys, missing keys take their defaults.
    #[staticmethod]
    #[pyo3(signature = (config=None))]
    fn simulate(config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: DgpConfig = optional(config)?;
        cfg.validate().map_err(err)?;
        Ok(PyDataset {
            inner: simulation::gen_dgp(&cfg).map_err(err)?,
        })
    }

    /// The bundled synthetic macro panel.
    #[staticmethod]
    #[pyo3(signature = (config=None))]
    fn pseudo_thai(config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: PseudoThaiConfig = optional(config)?;
        Ok(PyDataset {
            inner: pseudo_thai(&cfg).map_err(err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        io::write_dataset(&self.inner, &dir).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn target_id(&self) -> String {
        self.inner.target().id().to_string()
    }

    #[getter]
    fn target(&self) -> Vec<f64> {
        self.inner.target().values().to_vec()
    }

    /// `(id, ratio)` of each covariate.
    #[getter]
    fn covariates(&self) -> Vec<(String, usize)> {
        self.inner
            .covariates()
            .iter()
            .map(|c| (c.id().to_string(), c.ratio()))
            .collect()
    }

    /// Values of one covariate; missing observations are NaN.
    fn covariate(&self, id: &str) -> PyResult<Vec<f64>> {
        let s = self
            .inner
            .covariate(id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown covariate `{id}`")))?;
        Ok(s.values()
            .iter()
            .zip(s.observed())
            .map(|(&v, &o)| if o { v } else { f64::NAN })
            .collect())
    }

    fn head(&self, n: usize) -> PyResult<Self> {
        if n == 0 || n > self.inner.n() {
            return Err(PyValueError::new_err("n must lie in 1..=T"));
        }
        Ok(PyDataset {
            inner: self.inner.head(n),
        })
    }

    fn select(&self, ids: Vec<String>) -> PyResult<Self> {
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        Ok(PyDataset {
            inner: self.inner.select(&ids).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(target={:?}, n={}, covariates={})",
            self.inner.target().id(),
            self.inner.n(),
            self.inner.covariates().len()
        )
    }
}

/// Frequency-aligned design: dict with `columns`, `x` (row per target
/// period), `y` and the row validity mask `valid`.
#[pyfunction]
#[pyo3(signature = (dataset, h_m, lags, low_lags=None, ar_lags=None))]
fn frequency_align(
    py: Python<'_>,
    dataset: &PyDataset,
    h_m: usize,
    lags: usize,
    low_lags: Option<usize>,
    ar_lags: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let ds = &dataset.inner;
    let spec = fc::mixed_lag_spec(
        ds,
        fc::reference_ratio(ds),
        h_m,
        lags,
        low_lags.unwrap_or(lags),
        ar_lags,
    )
    .map_err(err)?;
    let ad = alignment::frequency_align(ds, &spec).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("columns", ad.column_names())?;
    let rows: Vec<Vec<f64>> = (0..ad.n_rows()).map(|i| ad.x.row(i).to_vec()).collect();
    d.set_item("x", rows)?;
    d.set_item("y", ad.y.clone())?;
    d.set_item("valid", ad.valid.clone())?;
    Ok(d.into_any().unbind())
}

/// Exponential Almon lag weights over `length` positions.
#[pyfunction]
#[pyo3(signature = (theta1, theta2, length, normalized=true))]
fn almon_weights(theta1: f64, theta2: f64, length: usize, normalized: bool) -> PyResult<Vec<f64>> {
    let w = if normalized {
        Weighting::Normalized
    } else {
        Weighting::NonNormalized
    };
    mixfreq::midas::almon_weights(AlmonTheta::new(theta1, theta2), length, w).map_err(err)
}

/// A model specification, e.g. `{"kind": "u-midas", "lags": 3}`.
#[pyclass(name = "Model", module = "mixfreq", frozen)]
struct PyModel {
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyModel {
            spec: from_py(spec)?,
        })
    }

    fn fit(&self, dataset: &PyDataset, h_m: usize, seed: u64) -> PyResult<PyFitted> {
        let fitted = self
            .spec
            .build()
            .fit(&dataset.inner, h_m, RandomSeed(seed))
            .map_err(err)?;
        Ok(PyFitted { inner: fitted, h_m })
    }

    /// Fit on the leading share of the sample, then forecast the rest with
    /// fixed parameters. Returns a list of forecast records.
    #[pyo3(signature = (dataset, h_m, train_fraction=0.8, seed=0))]
    fn rolling_forecast(
        &self,
        py: Python<'_>,
        dataset: &PyDataset,
        h_m: usize,
        train_fraction: f64,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let model = self.spec.build();
        let recs = py
            .detach(|| {
                fc::rolling_forecast(
                    model.as_ref(),
                    &dataset.inner,
                    h_m,
                    Split { train_fraction },
                    RandomSeed(seed),
                )
            })
            .map_err(err)?;
        to_py(py, &recs)
    }

    fn spec(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.spec)
    }
}

#[pyclass(name = "Fitted", module = "mixfreq", frozen)]
struct PyFitted {
    inner: Box<dyn FittedForecaster>,
    h_m: usize,
}

#[pymethods]
impl PyFitted {
    /// Forecast of `y[target]` from the information available at `origin`.
    fn predict(&self, dataset: &PyDataset, origin: usize, target: usize) -> PyResult<f64> {
        let info = fc::information_set(&dataset.inner, self.h_m, origin, target).map_err(err)?;
        self.inner.predict(&info, target).map_err(err)
    }

    fn parameters(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.parameters())
    }
}

#[pyfunction]
fn rmsfe(errors: Vec<f64>) -> PyResult<f64> {
    evaluation::rmsfe_of(&errors).map_err(err)
}

/// Diebold-Mariano test on squared-error loss; dict of the statistic,
/// p-value and variance details.
#[pyfunction]
#[pyo3(signature = (errors_a, errors_b, h, hln=false))]
fn dm_test(py: Python<'_>, errors_a: Vec<f64>, errors_b: Vec<f64>, h: usize, hln: bool) -> PyResult<Py<PyAny>> {
    let r = evaluation::dm_test(&errors_a, &errors_b, h, DmOptions { hln }).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn cumsfe(errors_benchmark: Vec<f64>, errors_model: Vec<f64>) -> PyResult<Vec<f64>> {
    evaluation::cumsfe(&errors_benchmark, &errors_model).map_err(err)
}

/// Accuracy report for `{name: [record, ...]}`.
#[pyfunction]
#[pyo3(signature = (forecasts, benchmark=None))]
fn evaluate(py: Python<'_>, forecasts: &Bound<'_, PyDict>, benchmark: Option<String>) -> PyResult<Py<PyAny>> {
    let mut models: Vec<(String, Vec<ForecastRecord>)> = Vec::new();
    for (k, v) in forecasts.iter() {
        models.push((k.extract()?, from_py(&v)?));
    }
    let r = evaluation::evaluate(&models, benchmark.as_deref(), DmOptions::default()).map_err(err)?;
    to_py(py, &r)
}

/// Runs a Monte Carlo experiment; `config` holds McExperiment keys.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn monte_carlo(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
    let exp: McExperiment = optional(config)?;
    exp.validate().map_err(err)?;
    let res = py.detach(|| simulation::run_monte_carlo(&exp)).map_err(err)?;
    to_py(py, &res)
}

#[pymodule]
#[pyo3(name = "mixfreq")]
fn mixfreq_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyFitted>()?;
    m.add_function(wrap_pyfunction!(frequency_align, m)?)?;
    m.add_function(wrap_pyfunction!(almon_weights, m)?)?;
    m.add_function(wrap_pyfunction!(rmsfe, m)?)?;
    m.add_function(wrap_pyfunction!(dm_test, m)?)?;
    m.add_function(wrap_pyfunction!(cumsfe, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
