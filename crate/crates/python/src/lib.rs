//! Python bindings: data sets, simulation, training, model selection,
//! prediction and metrics.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

use magmaclust::selection::train_best_of;
use magmaclust::{
    metrics, simulate_main, simulate_scheme_a, Dataset, HypothesisRegime, Individual, InitConfig, ModelConfig,
    PredictConfig, PredictMethod, SimConfig, StopConfig, TrainingState,
};

create_exception!(magmaclust_py, NumericalError, PyException, "Numerical breakdown during fitting or prediction.");

fn py_err(e: magmaclust::Error) -> PyErr {
    if e.is_numerical_error() {
        NumericalError::new_err(e.to_string())
    } else if matches!(e, magmaclust::Error::Io(_)) {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Groups long-format `(id, t, y)` columns into individuals, keeping
/// first-appearance order and sorting each by time.
pub fn individuals_from_columns(ids: &[String], t: &[f64], y: &[f64]) -> magmaclust::Result<Vec<Individual>> {
    if ids.len() != t.len() || t.len() != y.len() {
        return Err(magmaclust::Error::LengthMismatch { expected: ids.len(), found: t.len().min(y.len()) });
    }
    let mut order: Vec<&str> = Vec::new();
    let mut rows: std::collections::HashMap<&str, Vec<(f64, f64)>> = std::collections::HashMap::new();
    for ((id, &ti), &yi) in ids.iter().zip(t).zip(y) {
        rows.entry(id.as_str())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push((ti, yi));
    }
    order
        .into_iter()
        .map(|id| {
            let mut pts = rows.remove(id).unwrap_or_default();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (t, y) = pts.into_iter().unzip();
            Individual::new(id, t, y)
        })
        .collect()
}

pub fn parse_regime(s: &str) -> magmaclust::Result<HypothesisRegime> {
    s.parse()
}

pub fn parse_method(s: &str) -> magmaclust::Result<PredictMethod> {
    s.parse()
}

/// Training data: one series per individual.
#[pyclass(name = "Dataset", module = "magmaclust_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Builds from long-format columns.
    #[new]
    fn new(ids: Vec<String>, t: Vec<f64>, y: Vec<f64>) -> PyResult<Self> {
        let inds = individuals_from_columns(&ids, &t, &y).map_err(py_err)?;
        Ok(PyDataset { inner: Dataset::new(inds).map_err(py_err)? })
    }

    /// Reads an `id,t,y` CSV file.
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(PyDataset { inner: Dataset::from_csv_path(path).map_err(py_err)? })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// Size of the pooled timestamp grid.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.individuals.iter().map(|i| i.id.clone()).collect()
    }

    /// `(t, y)` of one individual.
    fn series(&self, id: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let ind = self
            .inner
            .individuals
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| PyValueError::new_err(format!("no individual `{id}`")))?;
        Ok((ind.t.clone(), ind.y.clone()))
    }

    fn __len__(&self) -> usize {
        self.inner.m()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(m={}, n={})", self.inner.m(), self.inner.n())
    }
}

/// Synthetic data with its ground truth.
#[pyclass(name = "Simulation", module = "magmaclust_py", frozen)]
struct PySimulation {
    #[pyo3(get)]
    data: PyDataset,
    #[pyo3(get)]
    labels: Vec<usize>,
    #[pyo3(get)]
    new_labels: Vec<usize>,
    /// Held-out individuals as `(id, t, y)`.
    #[pyo3(get)]
    new_individuals: Vec<(String, Vec<f64>, Vec<f64>)>,
}

#[pyfunction]
#[pyo3(signature = (seed=0, m=50, k=3, n_i=30, n_pool=200, regime="H00", n_new=0, common_grid=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    seed: u64,
    m: usize,
    k: usize,
    n_i: usize,
    n_pool: usize,
    regime: &str,
    n_new: usize,
    common_grid: bool,
) -> PyResult<PySimulation> {
    let cfg = SimConfig {
        seed,
        m,
        k,
        n_i,
        n_pool,
        n_new,
        common_grid,
        regime: parse_regime(regime).map_err(py_err)?,
        ..Default::default()
    };
    Ok(sim_to_py(simulate_main(&cfg).map_err(py_err)?))
}

/// Piecewise-linear bump curves on a common grid of `n` points.
#[pyfunction]
#[pyo3(signature = (seed=0, m=50, n=30))]
fn simulate_a(seed: u64, m: usize, n: usize) -> PyResult<PySimulation> {
    Ok(sim_to_py(simulate_scheme_a(seed, m, n).map_err(py_err)?))
}

fn sim_to_py(s: magmaclust::Simulation) -> PySimulation {
    PySimulation {
        data: PyDataset { inner: s.data },
        labels: s.truth.labels,
        new_labels: s.truth.new_labels,
        new_individuals: s.new_individuals.into_iter().map(|i| (i.id, i.t, i.y)).collect(),
    }
}

/// A fitted model.
#[pyclass(name = "Model", module = "magmaclust_py", frozen)]
struct PyModel {
    inner: TrainingState,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn regime(&self) -> String {
        self.inner.regime.to_string()
    }

    #[getter]
    fn elbo(&self) -> f64 {
        self.inner.elbo
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.hp.pi.clone()
    }

    /// Responsibilities, one row per individual.
    #[getter]
    fn tau(&self) -> Vec<Vec<f64>> {
        (0..self.inner.tau.m()).map(|i| self.inner.tau.row(i)).collect()
    }

    /// `(iteration, step, elbo)` after every step.
    #[getter]
    fn trace(&self) -> Vec<(usize, String, f64)> {
        self.inner
            .trace
            .iter()
            .map(|e| (e.iteration, format!("{:?}", e.step), e.elbo))
            .collect()
    }

    /// Grid and per-cluster posterior means of the mean processes.
    fn mean_processes(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = &self.inner.posterior;
        (p.grid.clone(), p.clusters.iter().map(|c| c.mean.as_slice().to_vec()).collect())
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    fn vbic(&self) -> f64 {
        magmaclust::vbic(&self.inner)
    }

    #[pyo3(signature = (t_obs, y_obs, t_pred, method="auto", include_training_grid=true))]
    fn predict(
        &self,
        py: Python<'_>,
        t_obs: Vec<f64>,
        y_obs: Vec<f64>,
        t_pred: Vec<f64>,
        method: &str,
        include_training_grid: bool,
    ) -> PyResult<PyPrediction> {
        let cfg = PredictConfig { method: parse_method(method).map_err(py_err)?, include_training_grid, ..Default::default() };
        let p = py
            .detach(|| magmaclust::predict(&self.inner, &t_obs, &y_obs, &t_pred, &cfg))
            .map_err(py_err)?;
        Ok(PyPrediction { inner: p })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel { inner: TrainingState::from_json(text).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel { inner: TrainingState::load(path).map_err(py_err)? })
    }

    fn __repr__(&self) -> String {
        format!("Model(k={}, regime={}, elbo={:.4})", self.inner.k(), self.inner.regime, self.inner.elbo)
    }
}

/// Mixture of per-cluster Gaussian predictions at the target timestamps.
#[pyclass(name = "Prediction", module = "magmaclust_py", frozen)]
struct PyPrediction {
    inner: magmaclust::Prediction,
}

#[pymethods]
impl PyPrediction {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.mixture.t.clone()
    }

    /// `τ_*`, the mixture weights.
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.mixture.weights.clone()
    }

    #[getter]
    fn method(&self) -> String {
        format!("{:?}", self.inner.new.method)
    }

    /// Mixture mean.
    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mixture.mean()
    }

    #[getter]
    fn cluster_means(&self) -> Vec<Vec<f64>> {
        self.inner.mixture.clusters.iter().map(|c| c.mean.as_slice().to_vec()).collect()
    }

    #[getter]
    fn cluster_variances(&self) -> Vec<Vec<f64>> {
        self.inner.mixture.clusters.iter().map(|c| c.cov.diagonal().as_slice().to_vec()).collect()
    }

    /// Full covariance of cluster `k`.
    fn cluster_cov(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        let c = self
            .inner
            .mixture
            .clusters
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("cluster {k} out of range")))?;
        Ok(c.cov.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    #[getter]
    fn intervals95(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner.mixture.clusters.iter().map(|c| c.interval95()).collect()
    }

    #[getter]
    fn most_probable(&self) -> usize {
        self.inner.mixture.most_probable()
    }

    /// Mixture density of the output at target index `j`.
    fn density(&self, j: usize, y: f64) -> PyResult<f64> {
        if j >= self.inner.mixture.t.len() {
            return Err(PyValueError::new_err(format!("target index {j} out of range")));
        }
        Ok(self.inner.mixture.density(j, y))
    }

    /// Density matrix indexed `[y][t]`.
    fn heatmap(&self, y_grid: Vec<f64>) -> Vec<Vec<f64>> {
        self.inner.mixture.heatmap(&y_grid)
    }
}

#[pyfunction]
#[pyo3(signature = (data, k, regime="H00", seed=0, tol=1e-3, max_iter=25, restarts=1))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &PyDataset,
    k: usize,
    regime: &str,
    seed: u64,
    tol: f64,
    max_iter: usize,
    restarts: usize,
) -> PyResult<PyModel> {
    let regime = parse_regime(regime).map_err(py_err)?;
    let stop = StopConfig { tol, max_iter };
    let state = py
        .detach(|| {
            train_best_of(&data.inner, k, regime, &InitConfig::with_seed(seed), &stop, &ModelConfig::default(), restarts)
        })
        .map_err(py_err)?;
    Ok(PyModel { inner: state })
}

/// Result of a VBIC sweep over K.
#[pyclass(name = "Selection", module = "magmaclust_py", frozen)]
struct PySelection {
    inner: magmaclust::SelectionReport,
}

#[pymethods]
impl PySelection {
    #[getter]
    fn selected(&self) -> usize {
        self.inner.selected
    }

    /// `(k, elbo, penalty, vbic)` per candidate.
    #[getter]
    fn table(&self) -> Vec<(usize, f64, f64, f64)> {
        self.inner.reports.iter().map(|r| (r.k, r.elbo, r.penalty, r.vbic)).collect()
    }

    /// Fitted model for candidate `k` (the selected one by default).
    #[pyo3(signature = (k=None))]
    fn model(&self, k: Option<usize>) -> PyResult<PyModel> {
        let k = k.unwrap_or(self.inner.selected);
        self.inner
            .reports
            .iter()
            .find(|r| r.k == k)
            .map(|r| PyModel { inner: r.state.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("K = {k} was not fitted")))
    }
}

#[pyfunction]
#[pyo3(signature = (data, ks, regime="H00", seed=0, restarts=1))]
fn select_k(py: Python<'_>, data: &PyDataset, ks: Vec<usize>, regime: &str, seed: u64, restarts: usize) -> PyResult<PySelection> {
    let regime = parse_regime(regime).map_err(py_err)?;
    let report = py
        .detach(|| {
            magmaclust::select_k(
                &data.inner,
                &ks,
                regime,
                &InitConfig::with_seed(seed),
                &StopConfig::default(),
                &ModelConfig::default(),
                restarts,
            )
        })
        .map_err(py_err)?;
    Ok(PySelection { inner: report })
}

#[pyfunction]
fn ari(a: Vec<i64>, b: Vec<i64>) -> PyResult<f64> {
    metrics::ari(&a, &b).map_err(py_err)
}

#[pyfunction]
fn mse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&pred, &truth).map_err(py_err)
}

/// Weighted 95% coverage in percent of held-out points `(t, y)`.
#[pyfunction]
fn wcic95(prediction: &PyPrediction, t: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    metrics::wcic95(&prediction.inner.mixture, &t, &y).map_err(py_err)
}

#[pymodule]
fn magmaclust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_a, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(wcic95, m)?)?;
    Ok(())
}
