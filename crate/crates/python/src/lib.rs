//! Python bindings: datasets, model fitting, and the IF/RIF/NS estimators
//! with their retraining ground truth.

use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rif_core::dataset::{self, DataFormat, Design, LabelModel, LoadOptions, SyntheticSpec, ThetaStar};
use rif_core::evaluation::{EvaluationFn, MetricKind};
use rif_core::glm::{self, Family, ModelSpec};
use rif_core::linalg::{self, SampleMatrix};
use rif_core::selection::{RemovalSet, Strategy};
use rif_core::{attribution, oracle, theory};

fn to_py_err(e: rif_core::Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_family(s: &str) -> PyResult<Family> {
    match s {
        "logistic" => Ok(Family::Logistic),
        "least-squares" => Ok(Family::LeastSquares),
        other => Err(PyValueError::new_err(format!("unknown family '{other}'"))),
    }
}

fn parse_metric(s: &str, test_subset: Option<Vec<usize>>) -> PyResult<EvaluationFn> {
    let kind: MetricKind = s
        .parse()
        .map_err(|e: rif_core::Error| PyValueError::new_err(e.to_string()))?;
    Ok(EvaluationFn::for_kind(kind, &test_subset.unwrap_or_default()))
}

fn removal_set(indices: Vec<usize>) -> PyResult<RemovalSet> {
    let mut sorted = indices;
    sorted.sort_unstable();
    sorted.dedup();
    RemovalSet::new(Strategy::Random, sorted.len(), 0, sorted).map_err(to_py_err)
}

/// An embedded binary-classification dataset.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Synthesize a Gaussian dataset with an optional power-law spectrum
    /// ((1+j)^-decay per-coordinate scale) and a random teacher of the given
    /// norm; `label_model` is "logistic" or "linear" (thresholded).
    #[staticmethod]
    #[pyo3(signature = (n, d, seed, scale=2.0, decay=0.0, label_model="logistic", noise=0.0))]
    fn synthesize(
        n: usize,
        d: usize,
        seed: u64,
        scale: f64,
        decay: f64,
        label_model: &str,
        noise: f64,
    ) -> PyResult<Self> {
        let theta_star = if scale == 0.0 {
            ThetaStar::Zero
        } else {
            ThetaStar::RandomUnit { scale }
        };
        let label_model = match label_model {
            "logistic" => LabelModel::Logistic { theta_star },
            "linear" => LabelModel::Linear { theta_star, noise },
            other => return Err(PyValueError::new_err(format!("unknown label model '{other}'"))),
        };
        let design = if decay == 0.0 {
            Design::GaussianIsotropic
        } else {
            Design::GaussianAnisotropic {
                spectrum: (0..d).map(|j| (1.0 + j as f64).powf(-decay)).collect(),
            }
        };
        let spec = SyntheticSpec {
            n,
            d,
            design,
            label_model,
            seed,
        };
        Ok(Self {
            inner: dataset::synthesize(&spec).map_err(to_py_err)?,
        })
    }

    /// Build from numpy arrays (features row-major n×d, labels in {0,1}).
    #[staticmethod]
    #[pyo3(signature = (features, labels, test_features=None, test_labels=None, name="python"))]
    fn from_arrays(
        features: PyReadonlyArray2<'_, f64>,
        labels: PyReadonlyArray1<'_, f64>,
        test_features: Option<PyReadonlyArray2<'_, f64>>,
        test_labels: Option<PyReadonlyArray1<'_, f64>>,
        name: &str,
    ) -> PyResult<Self> {
        let f = features.as_array();
        let (n, d) = (f.nrows(), f.ncols());
        let train = SampleMatrix::from_fn(d, n, |j, i| f[(i, j)]);
        let (test, tl) = match (test_features, test_labels) {
            (Some(tf), Some(tl)) => {
                let t = tf.as_array();
                (
                    SampleMatrix::from_fn(t.ncols(), t.nrows(), |j, i| t[(i, j)]),
                    tl.as_array().to_vec(),
                )
            }
            (None, None) => (SampleMatrix::zeros(d, 0), Vec::new()),
            _ => {
                return Err(PyValueError::new_err(
                    "test_features and test_labels must be given together",
                ))
            }
        };
        Ok(Self {
            inner: dataset::Dataset::new(name, train, labels.as_array().to_vec(), test, tl)
                .map_err(to_py_err)?,
        })
    }

    /// Load from disk ("csv" or "binary"); test file optional.
    #[staticmethod]
    #[pyo3(signature = (train, test=None, format="csv", map_pm_one=false, name="dataset"))]
    fn load(
        train: std::path::PathBuf,
        test: Option<std::path::PathBuf>,
        format: &str,
        map_pm_one: bool,
        name: &str,
    ) -> PyResult<Self> {
        let opts = LoadOptions {
            format: match format {
                "csv" => DataFormat::Csv,
                "binary" => DataFormat::Binary,
                other => return Err(PyValueError::new_err(format!("unknown format '{other}'"))),
            },
            map_pm_one,
        };
        Ok(Self {
            inner: dataset::load_split(name, &train, test.as_deref(), &opts).map_err(to_py_err)?,
        })
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
    fn test_n(&self) -> usize {
        self.inner.test_n()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    fn features<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        let (n, d) = (self.inner.n(), self.inner.dim());
        let mut flat = Vec::with_capacity(n * d);
        for i in 0..n {
            flat.extend(self.inner.features().iter_sample(i));
        }
        numpy::ndarray::Array2::from_shape_vec((n, d), flat)
            .unwrap()
            .into_pyarray(py)
    }

    fn labels<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        self.inner.labels().to_vec().into_pyarray(py)
    }

    fn content_hash(&self) -> u64 {
        self.inner.content_hash()
    }

    #[pyo3(signature = (train, test=None, format="csv"))]
    fn save(
        &self,
        train: std::path::PathBuf,
        test: Option<std::path::PathBuf>,
        format: &str,
    ) -> PyResult<()> {
        let format = match format {
            "csv" => DataFormat::Csv,
            "binary" => DataFormat::Binary,
            other => return Err(PyValueError::new_err(format!("unknown format '{other}'"))),
        };
        dataset::save(&self.inner, format, &train, test.as_deref()).map_err(to_py_err)
    }

    /// Append a flipped-label copy of a test sample to the training split.
    fn poison(&self, test_index: usize) -> PyResult<Self> {
        Ok(Self {
            inner: rif_core::poison::inject(&self.inner, test_index).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name='{}', n={}, d={}, test_n={})",
            self.inner.name,
            self.inner.n(),
            self.inner.dim(),
            self.inner.test_n()
        )
    }
}

/// A fitted regularized GLM bound to its training data.
#[pyclass(name = "Model")]
struct PyModel {
    model: glm::FittedModel,
    data: dataset::Dataset,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn theta<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        linalg::col_to_vec(self.model.theta()).into_pyarray(py)
    }

    #[getter]
    fn grad_norm(&self) -> f64 {
        self.model.grad_norm()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.model.iters()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.model.spec().lambda
    }

    fn test_accuracy(&self) -> Option<f64> {
        self.model.test_accuracy(&self.data)
    }

    fn leverage(&self, i: usize) -> PyResult<f64> {
        attribution::leverage(&self.model, &self.data, i).map_err(to_py_err)
    }

    fn leverages<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let batch = attribution::attribute_all(&self.model, &self.data).map_err(to_py_err)?;
        Ok(batch.leverages().to_vec().into_pyarray(py))
    }

    /// IF estimate of the parameter change from dropping sample i.
    fn influence<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let v = attribution::influence(&self.model, &self.data, i).map_err(to_py_err)?;
        Ok(linalg::col_to_vec(v.delta_theta.as_ref()).into_pyarray(py))
    }

    /// RIF estimate ((1-h)⁻¹-rescaled influence).
    fn rescaled_influence<'py>(
        &self,
        py: Python<'py>,
        i: usize,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let v = attribution::rescaled_influence(&self.model, &self.data, i).map_err(to_py_err)?;
        Ok(linalg::col_to_vec(v.delta_theta.as_ref()).into_pyarray(py))
    }

    /// One Newton step toward the leave-T-out optimum.
    fn newton_step<'py>(
        &self,
        py: Python<'py>,
        indices: Vec<usize>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let set = removal_set(indices)?;
        let delta =
            attribution::newton_step_delta(&self.model, &self.data, &set.indices).map_err(to_py_err)?;
        Ok(linalg::col_to_vec(delta.as_ref()).into_pyarray(py))
    }

    /// Ground-truth parameter vector after retraining without `indices`.
    fn retrain_without<'py>(
        &self,
        py: Python<'py>,
        indices: Vec<usize>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let set = removal_set(indices)?;
        let r = oracle::retrain_without(&self.model, &self.data, &set, None).map_err(to_py_err)?;
        Ok(r.theta_removed.clone().into_pyarray(py))
    }

    /// Ground-truth change of a metric when `indices` are removed.
    #[pyo3(signature = (indices, metric="self-loss", test_subset=None))]
    fn actual_effect(
        &self,
        indices: Vec<usize>,
        metric: &str,
        test_subset: Option<Vec<usize>>,
    ) -> PyResult<f64> {
        let set = removal_set(indices)?;
        let f = parse_metric(metric, test_subset)?;
        oracle::actual_effect(&self.model, &self.data, &set, &f, None).map_err(to_py_err)
    }

    /// (IF, RIF, NS) predicted changes of a metric, re-evaluation convention.
    #[pyo3(signature = (indices, metric="self-loss", test_subset=None))]
    fn predicted_effects(
        &self,
        indices: Vec<usize>,
        metric: &str,
        test_subset: Option<Vec<usize>>,
    ) -> PyResult<(f64, f64, f64)> {
        let set = removal_set(indices)?;
        let f = parse_metric(metric, test_subset)?;
        let batch = attribution::attribute_all(&self.model, &self.data).map_err(to_py_err)?;
        let vectors_if: Vec<_> = set
            .indices
            .iter()
            .map(|&i| batch.vector(i, attribution::Method::If))
            .collect();
        let vectors_rif: Vec<_> = set
            .indices
            .iter()
            .map(|&i| batch.vector(i, attribution::Method::Rif))
            .collect();
        let p_if = attribution::aggregate(&vectors_if, &set, &f, &self.model, &self.data)
            .map_err(to_py_err)?;
        let p_rif = attribution::aggregate(&vectors_rif, &set, &f, &self.model, &self.data)
            .map_err(to_py_err)?;
        let p_ns =
            attribution::newton_step(&self.model, &self.data, &set, &f).map_err(to_py_err)?;
        Ok((p_if.effect_reeval, p_rif.effect_reeval, p_ns.effect_reeval))
    }

    /// The five assumption constants as a dict.
    #[pyo3(signature = (metric="self-loss", test_subset=None))]
    fn assumption_constants<'py>(
        &self,
        py: Python<'py>,
        metric: &str,
        test_subset: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let f = parse_metric(metric, test_subset)?;
        let c = theory::compute_constants(&self.model, &self.data, &f).map_err(to_py_err)?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("c_ell", c.c_ell)?;
        dict.set_item("c_r", c.c_r)?;
        dict.set_item("delta", c.delta)?;
        dict.set_item("epsilon", c.epsilon)?;
        dict.set_item("eta", c.eta)?;
        dict.set_item("max_leverage", c.max_leverage)?;
        Ok(dict)
    }

    /// Verify the RIF–NS accuracy bound on random subsets of size k.
    #[pyo3(signature = (k, trials=100, seed=0, metric="self-loss", test_subset=None))]
    fn verify_bound<'py>(
        &self,
        py: Python<'py>,
        k: usize,
        trials: usize,
        seed: u64,
        metric: &str,
        test_subset: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let f = parse_metric(metric, test_subset)?;
        let r = theory::verify_accuracy_bound(&self.model, &self.data, &f, k, trials, seed, false)
            .map_err(to_py_err)?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("k", r.k)?;
        dict.set_item("k_max", r.k_max)?;
        dict.set_item("bound", r.bound)?;
        dict.set_item("observed_gap", r.observed_gap)?;
        dict.set_item("satisfied", r.satisfied)?;
        Ok(dict)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(family={}, lambda={:e}, d={}, grad_norm={:.2e})",
            self.model.spec().family,
            self.model.spec().lambda,
            self.data.dim(),
            self.model.grad_norm()
        )
    }
}

/// Fit the regularized GLM to a dataset.
#[pyfunction]
#[pyo3(signature = (data, lambda_, family="logistic"))]
fn fit(data: &PyDataset, lambda_: f64, family: &str) -> PyResult<PyModel> {
    let spec = ModelSpec::new(parse_family(family)?, lambda_);
    let model = glm::fit_full(&data.inner, &spec).map_err(to_py_err)?;
    Ok(PyModel {
        model,
        data: data.inner.clone(),
    })
}

#[pymodule]
fn rif_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    rif_core::init_parallelism(None);
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
