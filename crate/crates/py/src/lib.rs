//! Python bindings: task construction and losses, VQE optimization,
//! dataset generation, diffusion training, and checkpoint sampling.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::{Path, PathBuf};

use diffq::dataset;
use diffq::ddpm;
use diffq::encoding::{decode_grid, denormalize_grid};
use diffq::error::Error;
use diffq::rng::{derive_seed, rng_from_seed};
use diffq::tasks;
use diffq::vqe;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A problem instance: loss target plus its fixed ansatz layout.
#[pyclass]
struct Task {
    inner: tasks::TaskInstance,
}

#[pymethods]
impl Task {
    /// Families: "xyz", "fh", "tfi", "qpulse", "random_vqe".
    #[new]
    #[pyo3(signature = (family, params, seed = 0))]
    fn new(family: &str, params: Vec<f64>, seed: u64) -> PyResult<Self> {
        let family = tasks::TaskFamily::parse(family).map_err(to_py)?;
        let inner = tasks::build_task(family, &params, seed).map_err(to_py)?;
        Ok(Task { inner })
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family.to_string()
    }

    #[getter]
    fn prompt(&self) -> String {
        self.inner.prompt.clone()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.layout.n_params
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.layout.n_qubits
    }

    /// Numeric conditioning features (length 16, zero-padded).
    fn conditioning(&self) -> PyResult<Vec<f64>> {
        Ok(tasks::conditioning_features(&self.inner).map_err(to_py)?.to_vec())
    }

    /// Task loss at the given angles.
    fn loss(&self, theta: Vec<f64>) -> PyResult<f64> {
        tasks::task_loss(&self.inner, &theta).map_err(to_py)
    }

    /// Exact parameter-shift gradient.
    fn gradient(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        vqe::parameter_shift_grad(&self.inner, &theta).map_err(to_py)
    }

    /// Smallest eigenvalue of the task Hamiltonian (observable tasks only).
    fn ground_energy(&self) -> PyResult<f64> {
        match &self.inner.observable {
            Some(obs) => diffq::sim::ground_energy(obs).map_err(to_py),
            None => Err(PyValueError::new_err(
                "ground_energy is defined for Hamiltonian tasks only",
            )),
        }
    }

    /// Adam on parameter-shift gradients; returns (losses, final_theta,
    /// converged_step).
    #[pyo3(signature = (theta0, max_steps = 500, learning_rate = 0.05))]
    fn optimize(
        &self,
        theta0: Vec<f64>,
        max_steps: usize,
        learning_rate: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Option<usize>)> {
        let cfg = vqe::OptimizerConfig {
            max_steps,
            learning_rate,
            ..vqe::OptimizerConfig::default()
        };
        let traj = vqe::optimize(&self.inner, &theta0, &cfg).map_err(to_py)?;
        Ok((traj.losses, traj.final_theta, traj.converged_step))
    }
}

/// A trained diffusion checkpoint.
#[pyclass]
struct Model {
    inner: ddpm::TrainedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: ddpm::load_checkpoint(Path::new(&path)).map_err(to_py)?,
        })
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family.to_string()
    }

    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.inner.loss_history.clone()
    }

    /// One decoded initialization sample for the task.
    #[pyo3(signature = (task, seed = 1))]
    fn sample(&self, task: &Task, seed: u64) -> PyResult<Vec<f64>> {
        if task.inner.family != self.inner.family {
            return Err(PyValueError::new_err(format!(
                "model family {} does not match task family {}",
                self.inner.family, task.inner.family
            )));
        }
        let features = tasks::conditioning_features(&task.inner).map_err(to_py)?;
        let sched = ddpm::linear_schedule(&self.inner.diffusion).map_err(to_py)?;
        let mut rng = rng_from_seed(seed);
        let grid = ddpm::sample_parameters(
            &self.inner.params,
            &task.inner.layout,
            &features,
            &sched,
            self.inner.diffusion.guidance_scale,
            &mut rng,
        )
        .map_err(to_py)?;
        decode_grid(&task.inner.layout, &denormalize_grid(&grid).map_err(to_py)?).map_err(to_py)
    }
}

/// Generates a dataset and writes records + manifest; returns the record
/// count.
#[pyfunction]
#[pyo3(signature = (family, n, seed, records_path, max_steps = 500))]
fn generate_dataset(
    family: &str,
    n: usize,
    seed: u64,
    records_path: PathBuf,
    max_steps: usize,
) -> PyResult<usize> {
    let family = tasks::TaskFamily::parse(family).map_err(to_py)?;
    let cfg = vqe::OptimizerConfig {
        max_steps,
        ..vqe::OptimizerConfig::default()
    };
    let (records, _) = dataset::generate_dataset(family, n, seed, &cfg).map_err(to_py)?;
    dataset::persist_records(&records, Path::new(&records_path)).map_err(to_py)?;
    Ok(records.len())
}

/// Splits a record file; returns (train_ids, test_ids) and writes the
/// manifest.
#[pyfunction]
#[pyo3(signature = (records_path, split_path, ratio = 0.7, seed = 1))]
fn split_dataset(
    records_path: PathBuf,
    split_path: PathBuf,
    ratio: f64,
    seed: u64,
) -> PyResult<(Vec<u64>, Vec<u64>)> {
    let records = dataset::load_records(Path::new(&records_path)).map_err(to_py)?;
    let split = dataset::split_dataset(&records, ratio, seed).map_err(to_py)?;
    dataset::persist_split(&split, Path::new(&split_path)).map_err(to_py)?;
    Ok((split.train_ids, split.test_ids))
}

/// Trains the diffusion model on the train side and writes a checkpoint.
#[pyfunction]
#[pyo3(signature = (records_path, checkpoint_path, split_path = None, epochs = 500, seed = 1, batch_size = None))]
fn train(
    records_path: PathBuf,
    checkpoint_path: PathBuf,
    split_path: Option<PathBuf>,
    epochs: usize,
    seed: u64,
    batch_size: Option<usize>,
) -> PyResult<Vec<f64>> {
    let records = dataset::load_records(Path::new(&records_path)).map_err(to_py)?;
    let selected: Vec<&dataset::DatasetRecord> = match split_path {
        None => records.iter().collect(),
        Some(p) => {
            let split = dataset::load_split(Path::new(&p)).map_err(to_py)?;
            records
                .iter()
                .filter(|r| split.train_ids.contains(&r.id))
                .collect()
        }
    };
    if selected.is_empty() {
        return Err(PyValueError::new_err("no training records selected"));
    }
    let mut dcfg = ddpm::DiffusionConfig {
        epochs,
        ..ddpm::DiffusionConfig::default()
    };
    if let Some(b) = batch_size {
        dcfg.batch_size = b;
    }
    let arch = diffq::denoiser::DenoiserArch::for_input_dim(selected[0].family.n_params());
    let model = ddpm::train_model(&selected, &dcfg, &arch, seed).map_err(to_py)?;
    ddpm::save_checkpoint(&model, Path::new(&checkpoint_path)).map_err(to_py)?;
    Ok(model.loss_history)
}

/// Per-item seed derivation used across the pipeline.
#[pyfunction]
fn derive_stream_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, index)
}

#[pyfunction]
fn version() -> &'static str {
    diffq::GENERATOR_VERSION
}

#[pymodule]
fn diffq_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Task>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(split_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(derive_stream_seed, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
