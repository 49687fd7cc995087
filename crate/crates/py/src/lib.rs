//! Python bindings for the core types and operations: sparse vectors,
//! kernels, the two-sample MMD test, the built-in scorer, explanations, and
//! single-instance audits.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use limeaudit::audit::{self, AuditRow};
use limeaudit::blackbox::{train_kernel_logistic, KernelLogisticModel, Scorer, TrainParams};
use limeaudit::config::AuditConfig;
use limeaudit::corpus;
use limeaudit::dataset::{self, Dataset};
use limeaudit::error::Error;
use limeaudit::lime::{explain as lime_explain, Explanation, LimeParams};
use limeaudit::mmd;
use limeaudit::numkit::{self, KernelSpec, SparseVector};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Contract(_) | Error::Config(_) | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_kernel(kind: &str, gamma: Option<f64>) -> PyResult<KernelSpec> {
    match (kind, gamma) {
        ("cosine", None) => Ok(KernelSpec::cosine()),
        ("cosine", Some(_)) => Err(PyValueError::new_err("cosine kernel takes no gamma")),
        ("rbf", Some(g)) => KernelSpec::rbf(g).map_err(to_py_err),
        ("rbf", None) => Ok(KernelSpec::rbf_median_heuristic()),
        (other, _) => Err(PyValueError::new_err(format!(
            "unknown kernel {other:?} (cosine, rbf)"
        ))),
    }
}

#[pyclass(name = "SparseVector", from_py_object)]
#[derive(Clone)]
struct PySparseVector(SparseVector);

#[pymethods]
impl PySparseVector {
    #[new]
    fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> PyResult<Self> {
        SparseVector::new(dim, indices, values)
            .map(PySparseVector)
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn from_dense(values: Vec<f64>) -> Self {
        PySparseVector(SparseVector::from_dense(&values))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn indices(&self) -> Vec<u32> {
        self.0.indices().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn nnz(&self) -> usize {
        self.0.nnz()
    }

    fn get(&self, index: u32) -> f64 {
        self.0.get(index)
    }

    fn to_dense(&self) -> Vec<f64> {
        self.0.to_dense()
    }

    fn __repr__(&self) -> String {
        format!("SparseVector(dim={}, nnz={})", self.0.dim(), self.0.nnz())
    }
}

#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
struct PyDataset(Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        dataset::load_svmlight(&path).map(PyDataset).map_err(to_py_err)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        dataset::save_svmlight(&self.0, &path).map_err(to_py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    #[getter]
    fn labels(&self) -> Vec<i32> {
        self.0.labels.clone()
    }

    fn instances(&self) -> Vec<PySparseVector> {
        self.0.instances.iter().cloned().map(PySparseVector).collect()
    }

    fn instance(&self, index: usize) -> PyResult<PySparseVector> {
        self.0
            .instances
            .get(index)
            .cloned()
            .map(PySparseVector)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(len={}, dim={})", self.0.len(), self.0.dim)
    }
}

#[pyclass(name = "TwoSampleResult", get_all)]
struct PyTwoSampleResult {
    mmd_b: f64,
    scaled_stat: f64,
    threshold: f64,
    alpha: f64,
    m: usize,
    reject: bool,
}

impl From<mmd::TwoSampleResult> for PyTwoSampleResult {
    fn from(r: mmd::TwoSampleResult) -> Self {
        PyTwoSampleResult {
            mmd_b: r.mmd_b,
            scaled_stat: r.scaled_stat,
            threshold: r.threshold,
            alpha: r.alpha,
            m: r.m,
            reject: r.reject,
        }
    }
}

#[pymethods]
impl PyTwoSampleResult {
    fn __repr__(&self) -> String {
        format!(
            "TwoSampleResult(mmd_b={:.6}, threshold={:.6}, reject={})",
            self.mmd_b,
            self.threshold,
            if self.reject { "True" } else { "False" }
        )
    }
}

#[pyclass(name = "KernelLogisticModel", from_py_object)]
#[derive(Clone)]
struct PyModel(KernelLogisticModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        KernelLogisticModel::load(&path).map(PyModel).map_err(to_py_err)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(to_py_err)
    }

    #[getter]
    fn class_ids(&self) -> Vec<i32> {
        self.0.class_ids().to_vec()
    }

    fn predict_proba(&self, x: &PySparseVector) -> PyResult<Vec<f64>> {
        Ok(self.0.score(&x.0).map_err(to_py_err)?.scores().to_vec())
    }

    fn accuracy(&self, data: &PyDataset) -> PyResult<f64> {
        self.0
            .accuracy(&data.0.instances, &data.0.labels)
            .map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("KernelLogisticModel(dim={})", self.0.dim())
    }
}

#[pyclass(name = "Explanation")]
struct PyExplanation(Explanation);

#[pymethods]
impl PyExplanation {
    /// (feature id, weight) pairs sorted by |weight| descending.
    #[getter]
    fn features(&self) -> Vec<(u32, f64)> {
        self.0.features.iter().map(|f| (f.feature, f.weight)).collect()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept
    }

    #[getter]
    fn selected(&self) -> Vec<u32> {
        self.0.selected.clone()
    }

    #[getter]
    fn loss(&self) -> f64 {
        self.0.loss
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.0.n_samples
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn surrogate_at_parent(&self) -> f64 {
        self.0.surrogate_at_parent()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Explanation(class_id={}, features={}, loss={:.6})",
            self.0.class_id,
            self.0.features.len(),
            self.0.loss
        )
    }
}

#[pyclass(name = "AuditRow", get_all)]
struct PyAuditRow {
    instance_id: usize,
    n: usize,
    data_reject: bool,
    data_mmd_b: f64,
    data_scaled_stat: f64,
    data_threshold: f64,
    label_reject: bool,
    label_mmd_b: f64,
    label_scaled_stat: f64,
    label_threshold: f64,
    fidelity: f64,
    f_y_at_x: f64,
    g_y_at_x: f64,
}

impl From<AuditRow> for PyAuditRow {
    fn from(r: AuditRow) -> Self {
        PyAuditRow {
            instance_id: r.instance_id,
            n: r.n,
            data_reject: r.data_shift.reject,
            data_mmd_b: r.data_shift.mmd_b,
            data_scaled_stat: r.data_shift.scaled_stat,
            data_threshold: r.data_shift.threshold,
            label_reject: r.label_shift.reject,
            label_mmd_b: r.label_shift.mmd_b,
            label_scaled_stat: r.label_shift.scaled_stat,
            label_threshold: r.label_shift.threshold,
            fidelity: r.fidelity,
            f_y_at_x: r.f_y_at_x,
            g_y_at_x: r.g_y_at_x,
        }
    }
}

#[pymethods]
impl PyAuditRow {
    fn __repr__(&self) -> String {
        format!(
            "AuditRow(instance={}, n={}, data_reject={}, label_reject={}, fidelity={:.4})",
            self.instance_id,
            self.n,
            if self.data_reject { "True" } else { "False" },
            if self.label_reject { "True" } else { "False" },
            self.fidelity
        )
    }
}

#[pyfunction]
fn cosine_kernel(u: &PySparseVector, v: &PySparseVector) -> PyResult<f64> {
    numkit::cosine_kernel(&u.0, &v.0).map_err(to_py_err)
}

#[pyfunction]
fn rbf_kernel(u: &PySparseVector, v: &PySparseVector, gamma: f64) -> PyResult<f64> {
    numkit::rbf_kernel(&u.0, &v.0, gamma).map_err(to_py_err)
}

#[pyfunction]
fn median_heuristic_gamma(pooled: Vec<PySparseVector>) -> PyResult<f64> {
    let vs: Vec<SparseVector> = pooled.into_iter().map(|p| p.0).collect();
    numkit::median_heuristic_gamma(&vs).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (xs, ys, kernel="cosine", gamma=None))]
fn mmd_biased(
    xs: Vec<PySparseVector>,
    ys: Vec<PySparseVector>,
    kernel: &str,
    gamma: Option<f64>,
) -> PyResult<f64> {
    let spec = parse_kernel(kernel, gamma)?;
    let xs: Vec<SparseVector> = xs.into_iter().map(|p| p.0).collect();
    let ys: Vec<SparseVector> = ys.into_iter().map(|p| p.0).collect();
    let spec = if spec.is_resolved() {
        spec
    } else {
        let pooled: Vec<SparseVector> = xs.iter().chain(ys.iter()).cloned().collect();
        spec.resolve(&pooled).map_err(to_py_err)?
    };
    mmd::mmd_biased(&xs, &ys, &spec).map_err(to_py_err)
}

#[pyfunction]
fn mmd_threshold(m: usize, alpha: f64, kernel_bound: f64) -> PyResult<f64> {
    mmd::mmd_threshold(m, alpha, kernel_bound).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (xs, ys, kernel="cosine", gamma=None, alpha=0.05))]
fn two_sample_test(
    xs: Vec<PySparseVector>,
    ys: Vec<PySparseVector>,
    kernel: &str,
    gamma: Option<f64>,
    alpha: f64,
) -> PyResult<PyTwoSampleResult> {
    let spec = parse_kernel(kernel, gamma)?;
    let xs: Vec<SparseVector> = xs.into_iter().map(|p| p.0).collect();
    let ys: Vec<SparseVector> = ys.into_iter().map(|p| p.0).collect();
    mmd::two_sample_test(&xs, &ys, &spec, alpha)
        .map(PyTwoSampleResult::from)
        .map_err(to_py_err)
}

#[pyfunction]
fn fidelity(f_y: f64, g_y: f64) -> PyResult<f64> {
    audit::fidelity(f_y, g_y).map_err(to_py_err)
}

#[pyfunction]
fn pearson(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    audit::pearson(&xs, &ys).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (data, kernel="cosine", gamma=None, reg=1e-4, epochs=1500, lr=0.5))]
fn train(
    data: &PyDataset,
    kernel: &str,
    gamma: Option<f64>,
    reg: f64,
    epochs: usize,
    lr: f64,
) -> PyResult<PyModel> {
    let spec = parse_kernel(kernel, gamma)?;
    train_kernel_logistic(
        &data.0.instances,
        &data.0.labels,
        &spec,
        &TrainParams { reg, epochs, lr },
    )
    .map(PyModel)
    .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (x, class_id, model, n_samples=1000, k_features=6, ridge=1.0, seed=42))]
fn explain(
    x: &PySparseVector,
    class_id: i32,
    model: &PyModel,
    n_samples: usize,
    k_features: usize,
    ridge: f64,
    seed: u64,
) -> PyResult<PyExplanation> {
    lime_explain(
        &x.0,
        class_id,
        &model.0,
        &LimeParams {
            n_samples,
            k_features,
            proximity: KernelSpec::cosine(),
            ridge,
            seed,
        },
    )
    .map(PyExplanation)
    .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (x, instance_id, model, train, n, explained_class=1, seed=42, alpha=0.05, k_features=6, ridge=1.0))]
#[allow(clippy::too_many_arguments)]
fn audit_instance(
    x: &PySparseVector,
    instance_id: usize,
    model: &PyModel,
    train: &PyDataset,
    n: usize,
    explained_class: i32,
    seed: u64,
    alpha: f64,
    k_features: usize,
    ridge: f64,
) -> PyResult<PyAuditRow> {
    let config = AuditConfig {
        seed,
        alpha,
        n_grid: vec![n],
        explained_class,
        k_features,
        ridge,
        ..AuditConfig::default()
    };
    audit::audit_instance(&x.0, instance_id, &model.0, &train.0.instances, n, &config)
        .map(PyAuditRow::from)
        .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (seed=42))]
fn generate_corpus(seed: u64) -> (PyDataset, PyDataset) {
    let (train, test) = corpus::generate_corpus(seed);
    (PyDataset(train), PyDataset(test))
}

#[pymodule]
fn limeaudit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySparseVector>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTwoSampleResult>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyExplanation>()?;
    m.add_class::<PyAuditRow>()?;
    m.add_function(wrap_pyfunction!(cosine_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(median_heuristic_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_biased, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(two_sample_test, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(audit_instance, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    Ok(())
}
