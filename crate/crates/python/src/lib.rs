//! Python module `clsurrogate`: datasets, experience streams, networks,
//! strategies, metrics and the benchmark harness.

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use engine::datasets as ds;
use engine::harness::{self, BenchmarkConfig};
use engine::metrics::{self, EvalMatrix};
use engine::nn::{self, Activation, GradientVector, NetworkSpec, OptimizerKind};
use engine::scenarios::{self, BinMode};
use engine::strategies::{self, StrategyParams, TrainConfig};
use engine::CoreError;

fn err(e: CoreError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        3 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged feature rows"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn eval_matrix(rows: Vec<Vec<f64>>) -> PyResult<EvalMatrix> {
    EvalMatrix::from_rows(rows.len(), rows).map_err(err)
}

fn activation(name: &str) -> PyResult<Activation> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        _ => Err(PyValueError::new_err(format!(
            "unknown activation `{name}`"
        ))),
    }
}

#[pyclass(name = "Dataset", module = "clsurrogate", from_py_object)]
#[derive(Clone)]
struct PyDataset(ds::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (path, feature_columns, target_column, category_column=None))]
    fn from_csv(
        path: &str,
        feature_columns: Vec<String>,
        target_column: String,
        category_column: Option<String>,
    ) -> PyResult<Self> {
        let schema = ds::CsvSchema {
            feature_columns,
            target_column,
            category_column,
        };
        ds::load_csv(path, &schema).map(Self).map_err(err)
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        ds::write_csv(&self.0, path).map(|_| ()).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.0.feature_names().to_vec()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.0
            .samples()
            .iter()
            .map(|s| s.features.clone())
            .collect()
    }

    fn targets(&self) -> Vec<f64> {
        self.0.targets().to_vec()
    }

    fn categories(&self) -> Vec<String> {
        self.0.categories()
    }
}

#[pyfunction]
#[pyo3(signature = (n_samples, feature_dim, n_categories, noise_std=0.0, seed=0))]
fn generate_synthetic(
    n_samples: usize,
    feature_dim: usize,
    n_categories: usize,
    noise_std: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    let spec = ds::SyntheticSpec {
        n_samples,
        feature_dim,
        n_categories,
        noise_std,
        seed,
    };
    ds::generate_synthetic(&spec).map(PyDataset).map_err(err)
}

#[pyclass(name = "ExperienceStream", module = "clsurrogate", from_py_object)]
#[derive(Clone)]
struct PyStream(scenarios::ExperienceStream);

#[pymethods]
impl PyStream {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn train_sizes(&self) -> Vec<usize> {
        self.0.experiences().iter().map(|e| e.train.len()).collect()
    }

    fn test_sizes(&self) -> Vec<usize> {
        self.0.experiences().iter().map(|e| e.test.len()).collect()
    }

    fn train_set(&self, k: usize) -> PyResult<PyDataset> {
        self.0
            .experiences()
            .get(k)
            .map(|e| PyDataset(e.train.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("no experience {k}")))
    }

    fn test_set(&self, k: usize) -> PyResult<PyDataset> {
        self.0
            .experiences()
            .get(k)
            .map(|e| PyDataset(e.test.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("no experience {k}")))
    }

    /// Copy with features standardized on the union of the training splits.
    fn normalized(&self) -> PyResult<Self> {
        self.0.normalized().map(|(s, _)| Self(s)).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (dataset, n_bins, mode="quantile", test_fraction=0.2, seed=0))]
fn bin_incremental(
    dataset: &PyDataset,
    n_bins: usize,
    mode: &str,
    test_fraction: f64,
    seed: u64,
) -> PyResult<PyStream> {
    let mode = match mode {
        "quantile" => BinMode::Quantile,
        "equal_width" => BinMode::EqualWidth,
        _ => return Err(PyValueError::new_err(format!("unknown bin mode `{mode}`"))),
    };
    scenarios::build_bin_incremental(&dataset.0, n_bins, mode, test_fraction, seed)
        .map(PyStream)
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dataset, category_order=None, test_fraction=0.2, seed=0))]
fn input_incremental(
    dataset: &PyDataset,
    category_order: Option<Vec<String>>,
    test_fraction: f64,
    seed: u64,
) -> PyResult<PyStream> {
    let order = category_order.unwrap_or_else(|| dataset.0.categories());
    scenarios::build_input_incremental(&dataset.0, &order, test_fraction, seed)
        .map(PyStream)
        .map_err(err)
}

#[pyclass(name = "RegressionNet", module = "clsurrogate")]
struct PyNet(nn::RegressionNet);

#[pymethods]
impl PyNet {
    #[new]
    #[pyo3(signature = (input_dim, hidden_layers=vec![64, 64, 64], activation="relu", residual=false, seed=0))]
    fn new(
        input_dim: usize,
        hidden_layers: Vec<usize>,
        activation: &str,
        residual: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = NetworkSpec {
            input_dim,
            hidden_layers,
            activation: self::activation(activation)?,
            residual,
        };
        nn::RegressionNet::init(spec, seed).map(Self).map_err(err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    fn parameters(&self) -> Vec<f64> {
        self.0.parameters().values().to_vec()
    }

    fn set_parameters(&mut self, values: Vec<f64>) -> PyResult<()> {
        self.0
            .set_parameters(nn::ParameterVector::new(values))
            .map_err(err)
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix(features)?;
        self.0
            .forward_batch(x.view())
            .map(|y| y.to_vec())
            .map_err(err)
    }

    /// Mean squared error gradient and loss over a batch.
    fn gradient(&self, features: Vec<Vec<f64>>, targets: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        let x = matrix(features)?;
        let y = Array1::from(targets);
        let (g, loss) = self.0.backward_batch(x.view(), y.view()).map_err(err)?;
        Ok((g.values().to_vec(), loss))
    }
}

#[pyclass(name = "RunResult", module = "clsurrogate", get_all)]
struct PyRunResult {
    strategy: String,
    eval_matrix: Vec<Vec<f64>>,
    final_test_mae: Option<f64>,
    final_test_mpe: Option<f64>,
    final_experience_mpe: Vec<f64>,
    wall_clock_seconds: f64,
    stored_samples: Vec<usize>,
    error: Option<String>,
    json: String,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(strategy={}, final_test_mpe={:?}, wall_clock_seconds={:.3})",
            self.strategy, self.final_test_mpe, self.wall_clock_seconds
        )
    }
}

/// Trains one strategy through a stream.
///
/// `strategy` is one of naive, joint, replay, ewc, gem; `budget`, `lambda_`,
/// `ppe` and `margin` override that strategy's defaults.
#[pyfunction]
#[pyo3(signature = (
    stream, strategy="naive", *, budget=None, lambda_=None, ppe=None, margin=None,
    epochs=30, batch_size=32, learning_rate=1e-3, optimizer="adam",
    hidden_layers=vec![64, 64, 64], activation="relu", residual=false, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn train_stream(
    py: Python<'_>,
    stream: &PyStream,
    strategy: &str,
    budget: Option<usize>,
    lambda_: Option<f64>,
    ppe: Option<usize>,
    margin: Option<f64>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    optimizer: &str,
    hidden_layers: Vec<usize>,
    activation: &str,
    residual: bool,
    seed: u64,
) -> PyResult<PyRunResult> {
    let kind: strategies::StrategyKind = strategy.parse().map_err(err)?;
    let params = match kind.default_params() {
        StrategyParams::Replay { budget: b } => StrategyParams::Replay {
            budget: budget.or(b),
        },
        StrategyParams::Ewc { lambda } => StrategyParams::Ewc {
            lambda: lambda_.unwrap_or(lambda),
        },
        StrategyParams::Gem { ppe: p, margin: m } => StrategyParams::Gem {
            ppe: ppe.unwrap_or(p),
            margin: margin.unwrap_or(m),
        },
        other => other,
    };
    let config = TrainConfig {
        epochs_per_experience: epochs,
        batch_size,
        optimizer: match optimizer {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            _ => {
                return Err(PyValueError::new_err(format!(
                    "unknown optimizer `{optimizer}`"
                )))
            }
        },
        learning_rate,
        hidden_layers,
        activation: self::activation(activation)?,
        residual,
        seed,
    };
    let stream = &stream.0;
    let r = py
        .detach(|| strategies::train_stream(stream, &params, &config))
        .map_err(err)?;
    Ok(PyRunResult {
        strategy: r.strategy.to_string(),
        eval_matrix: r.eval_matrix.rows().to_vec(),
        final_test_mae: r.final_test_mae,
        final_test_mpe: r.final_test_mpe,
        final_experience_mpe: r.final_experience_mpe.clone(),
        wall_clock_seconds: r.wall_clock_seconds,
        stored_samples: r.stored_samples.clone(),
        error: r.error.clone(),
        json: to_json(&r)?,
    })
}

#[pyfunction]
fn mae(predictions: Vec<f64>, targets: Vec<f64>) -> PyResult<f64> {
    metrics::mae(&predictions, &targets).map_err(err)
}

#[pyfunction]
fn mpe(predictions: Vec<f64>, targets: Vec<f64>) -> PyResult<f64> {
    metrics::mpe(&predictions, &targets).map_err(err)
}

#[pyfunction]
fn forgetting(eval_matrix: Vec<Vec<f64>>, k: usize, j: usize) -> PyResult<f64> {
    metrics::forgetting(&self::eval_matrix(eval_matrix)?, k, j).map_err(err)
}

#[pyfunction]
fn forgetting_ratio(eval_matrix: Vec<Vec<f64>>, k: usize, j: usize) -> PyResult<f64> {
    metrics::forgetting_ratio(&self::eval_matrix(eval_matrix)?, k, j).map_err(err)
}

/// `(average forgetting ratio, average forgetting)` after stage `k`.
#[pyfunction]
fn aggregate_forgetting(eval_matrix: Vec<Vec<f64>>, k: usize) -> PyResult<(f64, f64)> {
    metrics::aggregate_forgetting(&self::eval_matrix(eval_matrix)?, k).map_err(err)
}

#[pyfunction]
fn incremental_mae(eval_matrix: Vec<Vec<f64>>, j: usize) -> PyResult<f64> {
    metrics::incremental_mae(&self::eval_matrix(eval_matrix)?, j).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (gradient, memory_gradients, margin=0.0))]
fn gem_project(
    gradient: Vec<f64>,
    memory_gradients: Vec<Vec<f64>>,
    margin: f64,
) -> PyResult<Vec<f64>> {
    let mem: Vec<GradientVector> = memory_gradients
        .into_iter()
        .map(GradientVector::new)
        .collect();
    strategies::gem_project(&GradientVector::new(gradient), &mem, margin)
        .map(|g| g.values().to_vec())
        .map_err(err)
}

/// Runs a benchmark from TOML text and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config_toml, base_dir="."))]
fn run_benchmark(py: Python<'_>, config_toml: &str, base_dir: &str) -> PyResult<String> {
    let config = BenchmarkConfig::from_toml_str(config_toml).map_err(err)?;
    let report = py
        .detach(|| harness::run_benchmark_in(&config, std::path::Path::new(base_dir)))
        .map_err(err)?;
    to_json(&report)
}

/// Runs the Naive forgetting demonstration from TOML text and returns JSON.
#[pyfunction]
#[pyo3(signature = (config_toml, base_dir="."))]
fn demo_forgetting(py: Python<'_>, config_toml: &str, base_dir: &str) -> PyResult<String> {
    let config = BenchmarkConfig::from_toml_str(config_toml).map_err(err)?;
    let demo = py
        .detach(|| harness::demo_forgetting_in(&config, std::path::Path::new(base_dir)))
        .map_err(err)?;
    to_json(&demo)
}

#[pymodule]
fn clsurrogate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyStream>()?;
    m.add_class::<PyNet>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(bin_incremental, m)?)?;
    m.add_function(wrap_pyfunction!(input_incremental, m)?)?;
    m.add_function(wrap_pyfunction!(train_stream, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(mpe, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_forgetting, m)?)?;
    m.add_function(wrap_pyfunction!(incremental_mae, m)?)?;
    m.add_function(wrap_pyfunction!(gem_project, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(demo_forgetting, m)?)?;
    Ok(())
}
