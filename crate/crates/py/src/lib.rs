//! Python bindings: the main dataset, sampling, alignment, transition
//! tracking, metric, and pipeline operations, with plain lists crossing the
//! boundary.
//!
//! Build with `cargo build -p asd-py --release`, then import the produced
//! `libasd_py.so` as `asd_py` (see python/smoke_test.py).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use asd_core::ctt;
use asd_core::data;
use asd_core::error::Error;
use asd_core::mat::Mat;
use asd_core::metrics;
use asd_core::ot;
use asd_core::pipeline;
use asd_core::sampling;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParam { .. } | Error::Config { .. } | Error::Parse { .. } | Error::DimMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn mat_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Mat> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(PyValueError::new_err(format!("{what} must be non-empty")));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what} has ragged rows")));
    }
    Ok(Mat::from_rows(&rows))
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

/// A feature dataset with optional evaluation labels.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: data::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (features, labels=None, k=0, name="dataset".to_string()))]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        k: usize,
        name: String,
    ) -> PyResult<Self> {
        let inner = data::Dataset {
            features: mat_from_rows(features, "features")?,
            labels,
            k,
            name,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.inner.features)
    }

    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels.clone()
    }

    fn save(&self, path: String) -> PyResult<()> {
        data::save_fixture(&self.inner, path).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, n={}, d={}, k={})",
            self.inner.name,
            self.inner.n(),
            self.inner.dim(),
            self.inner.k
        )
    }
}

#[pyfunction]
fn generate_gaussian_mixture(
    k: usize,
    per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> PyResult<Dataset> {
    data::generate_gaussian_mixture(k, per_class, d, separation, seed)
        .map(|inner| Dataset { inner })
        .map_err(to_py_err)
}

#[pyfunction]
fn load_fixture(path: String) -> PyResult<Dataset> {
    data::load_fixture(path)
        .map(|inner| Dataset { inner })
        .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (x, weak_sigma, strong_sigma, strong_dropout, strength, seed))]
fn augment(
    x: Vec<f64>,
    weak_sigma: f64,
    strong_sigma: f64,
    strong_dropout: f64,
    strength: &str,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let spec = data::AugmentationSpec {
        weak_sigma,
        strong_sigma,
        strong_dropout,
    };
    spec.validate().map_err(to_py_err)?;
    let strength = match strength {
        "weak" => data::Strength::Weak,
        "strong" => data::Strength::Strong,
        other => {
            return Err(PyValueError::new_err(format!(
                "strength must be 'weak' or 'strong', got {other:?}"
            )))
        }
    };
    Ok(data::augment(&x, &spec, strength, seed))
}

/// Probability that a uniform subset of size n_l covers all k classes.
#[pyfunction]
fn coverage_probability(n_l: u64, k: u64, n: u64) -> PyResult<f64> {
    sampling::coverage_probability(n_l, k, n).map_err(to_py_err)
}

/// Monte-Carlo estimate of the same probability: (estimate, std_error).
#[pyfunction]
fn coverage_probability_mc(n_l: u64, k: u64, n: u64, trials: u64, seed: u64) -> PyResult<(f64, f64)> {
    sampling::coverage_probability_mc(n_l, k, n, trials, seed).map_err(to_py_err)
}

/// Cosine alignment cost between two row-wise feature sets.
#[pyfunction]
fn cost_matrix(feats_t: Vec<Vec<f64>>, feats_anchor: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let a = mat_from_rows(feats_t, "feats_t")?;
    let b = mat_from_rows(feats_anchor, "feats_anchor")?;
    ot::cost_matrix(&a, &b)
        .map(|c| mat_to_rows(&c.values))
        .map_err(to_py_err)
}

/// Entropic OT under uniform marginals. Returns (plan, iterations, max_violation).
#[pyfunction]
#[pyo3(signature = (cost, lam=0.3, max_iters=1000, tol=1e-6))]
fn sinkhorn(
    cost: Vec<Vec<f64>>,
    lam: f64,
    max_iters: usize,
    tol: f64,
) -> PyResult<(Vec<Vec<f64>>, usize, f64)> {
    let cost = ot::CostMatrix {
        values: mat_from_rows(cost, "cost")?,
    };
    let plan = ot::sinkhorn(&cost, lam, max_iters, tol).map_err(to_py_err)?;
    Ok((mat_to_rows(&plan.values), plan.iterations, plan.max_violation))
}

/// Row-normalizes a transport plan into soft labels.
#[pyfunction]
fn plan_to_soft_labels(plan: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let values = mat_from_rows(plan, "plan")?;
    let n = values.rows();
    let plan = ot::TransportPlan {
        values,
        row_marginal: vec![1.0 / n as f64; n],
        col_marginal: vec![1.0 / n as f64; n],
        lambda: f64::NAN,
        iterations: 0,
        max_violation: f64::NAN,
    };
    ot::plan_to_soft_labels(&plan)
        .map(|m| mat_to_rows(&m))
        .map_err(to_py_err)
}

/// Min-max normalization of a transition average into a [0, 1] similarity.
#[pyfunction]
fn normalize_minmax(matrix: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = mat_from_rows(matrix, "matrix")?;
    Ok(mat_to_rows(&ctt::normalize_minmax(&m)))
}

/// k-medoids grouping of instance-level classes from a similarity matrix.
#[pyfunction]
fn cluster_classes(similarity: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let s = mat_from_rows(similarity, "similarity")?;
    ctt::cluster_classes(&s, k, seed).map_err(to_py_err)
}

/// Tracks instance-level prediction changes and maintains the
/// instance-to-cluster label map.
#[pyclass]
struct TransitionTracker {
    ledger: ctt::PredictionLedger,
    transitions: ctt::TransitionMatrix,
    phi: Option<ctt::ClusterLabelMap>,
    seed: u64,
}

#[pymethods]
impl TransitionTracker {
    #[new]
    #[pyo3(signature = (n_classes, capacity=50, seed=0))]
    fn new(n_classes: usize, capacity: usize, seed: u64) -> PyResult<Self> {
        if capacity == 0 {
            return Err(PyValueError::new_err("capacity must be >= 1"));
        }
        Ok(TransitionTracker {
            ledger: ctt::PredictionLedger::new(),
            transitions: ctt::TransitionMatrix::new(n_classes, capacity),
            phi: None,
            seed,
        })
    }

    /// Records one batch of (sample index, instance-level prediction) pairs.
    fn observe(&mut self, indices: Vec<usize>, preds: Vec<usize>) -> PyResult<()> {
        let counts = ctt::track_batch(
            &mut self.ledger,
            self.transitions.n_classes(),
            &indices,
            &preds,
        )
        .map_err(to_py_err)?;
        self.transitions.push(counts);
        Ok(())
    }

    fn batches_tracked(&self) -> u64 {
        self.transitions.batches_tracked()
    }

    /// The batch-averaged transition matrix.
    fn averaged(&self) -> PyResult<Vec<Vec<f64>>> {
        self.transitions
            .average()
            .map(|m| mat_to_rows(&m))
            .map_err(to_py_err)
    }

    /// Refreshes and returns the instance-to-cluster mapping, index-aligned
    /// with the previous refresh.
    fn update_label_map(&mut self, k: usize) -> PyResult<Vec<usize>> {
        let next = ctt::update_phi(self.phi.as_ref(), &self.transitions, k, self.seed)
            .map_err(to_py_err)?;
        let mapping = next.mapping.clone();
        self.phi = Some(next);
        Ok(mapping)
    }
}

#[pyfunction]
fn accuracy(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    metrics::accuracy(&pred, &truth).map_err(to_py_err)
}

#[pyfunction]
fn nmi(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    metrics::nmi(&pred, &truth).map_err(to_py_err)
}

#[pyfunction]
fn ari(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    metrics::ari(&pred, &truth).map_err(to_py_err)
}

/// Runs the full training loop from a config file. Returns a dict with the
/// final metrics and run summary; artifacts stay in memory.
#[pyfunction]
#[pyo3(signature = (config_path, seed=None))]
fn run_experiment(
    py: Python<'_>,
    config_path: String,
    seed: Option<u64>,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let mut cfg = asd_core::config::ExperimentConfig::from_file(config_path).map_err(to_py_err)?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    let dataset = cfg.data.load().map_err(to_py_err)?;
    let (record, _model) = pipeline::run(&cfg.run, &dataset).map_err(to_py_err)?;

    let dict = pyo3::types::PyDict::new(py);
    if let Some(m) = &record.final_metrics {
        dict.set_item("acc", m.acc)?;
        dict.set_item("nmi", m.nmi)?;
        dict.set_item("ari", m.ari)?;
    }
    dict.set_item("n_l", record.resolved_n_l)?;
    dict.set_item("seed", record.seed)?;
    dict.set_item("iterations", record.losses.len())?;
    dict.set_item("cluster_histogram", record.cluster_histogram.clone())?;
    dict.set_item(
        "final_total_loss",
        record.losses.last().map(|r| r.total),
    )?;
    dict.set_item(
        "noise_rates",
        record.noise_rates.iter().map(|r| r.rate).collect::<Vec<_>>(),
    )?;
    Ok(dict.unbind())
}

#[pymodule]
fn asd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<TransitionTracker>()?;
    m.add_function(wrap_pyfunction!(generate_gaussian_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(load_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_probability, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_probability_mc, m)?)?;
    m.add_function(wrap_pyfunction!(cost_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(plan_to_soft_labels, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_minmax, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_classes, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
