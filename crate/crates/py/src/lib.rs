//! Python bindings: scenario construction, dataset generation, HGNN
//! training/evaluation, WMMSE reference rates, and overhead accounting.

use hybeam::baselines::{wmmse, WmmseParams};
use hybeam::channel::{self, Scenario, Split, Structure};
use hybeam::eval;
use hybeam::hgnn::{self, HgnnConfig, HgnnModel};
use hybeam::nn::LrSchedule;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py_err(e: hybeam::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_structure(s: &str) -> PyResult<Structure> {
    match s.to_ascii_lowercase().as_str() {
        "fully" => Ok(Structure::Fully),
        "partially" => Ok(Structure::Partially),
        other => Err(PyValueError::new_err(format!("unknown structure '{other}'"))),
    }
}

#[pyclass(name = "Scenario")]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (ues_per_bs, n_mm, n_sub, n_bar, n_paths, power, noise, bw_mm, bw_sub, seed, structure))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        ues_per_bs: Vec<usize>,
        n_mm: usize,
        n_sub: usize,
        n_bar: usize,
        n_paths: usize,
        power: Vec<f64>,
        noise: f64,
        bw_mm: f64,
        bw_sub: f64,
        seed: u64,
        structure: &str,
    ) -> PyResult<Self> {
        let inner = Scenario {
            ues_per_bs,
            n_mm,
            n_sub,
            n_bar,
            n_paths,
            power,
            noise,
            bw_mm,
            bw_sub,
            seed,
            structure: parse_structure(structure)?,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(PyScenario { inner })
    }

    /// Desk-scale default scenario (2 cells of 2 UEs, 16 mmWave antennas).
    #[staticmethod]
    fn desk(structure: &str, seed: u64) -> PyResult<Self> {
        Ok(PyScenario { inner: Scenario::desk_default(parse_structure(structure)?, seed) })
    }

    #[getter]
    fn n_bs(&self) -> usize {
        self.inner.n_bs()
    }

    #[getter]
    fn n_ue(&self) -> usize {
        self.inner.n_ue()
    }

    #[getter]
    fn n_mm(&self) -> usize {
        self.inner.n_mm
    }

    #[getter]
    fn n_bar(&self) -> usize {
        self.inner.n_bar
    }

    #[getter]
    fn noise(&self) -> f64 {
        self.inner.noise
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(ues_per_bs={:?}, n_mm={}, n_sub={}, n_bar={}, structure={})",
            self.inner.ues_per_bs, self.inner.n_mm, self.inner.n_sub, self.inner.n_bar,
            self.inner.structure
        )
    }
}

#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: channel::Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn active_idx(&self) -> Vec<usize> {
        self.inner.samples.first().map(|s| s.active_idx.clone()).unwrap_or_default()
    }

    /// Sub-6GHz channel of one UE as a list of (re, im) pairs.
    fn sub6(&self, sample: usize, ue: usize) -> PyResult<Vec<(f64, f64)>> {
        let s = self.inner.samples.get(sample).ok_or_else(|| {
            PyValueError::new_err(format!("sample {sample} out of range"))
        })?;
        Ok(s.sub(ue).iter().map(|z| (z.re, z.im)).collect())
    }

    /// Full mmWave channel of one (UE, BS) link.
    fn mm_full(&self, sample: usize, ue: usize, bs: usize) -> PyResult<Vec<(f64, f64)>> {
        let s = self.inner.samples.get(sample).ok_or_else(|| {
            PyValueError::new_err(format!("sample {sample} out of range"))
        })?;
        Ok(s.mm(ue, bs).iter().map(|z| (z.re, z.im)).collect())
    }

    fn mm_partial(&self, sample: usize, ue: usize, bs: usize) -> PyResult<Vec<(f64, f64)>> {
        let s = self.inner.samples.get(sample).ok_or_else(|| {
            PyValueError::new_err(format!("sample {sample} out of range"))
        })?;
        Ok(s.mm_bar(ue, bs).iter().map(|z| (z.re, z.im)).collect())
    }

    /// Writes `<stem>.json` + `<stem>.bin`.
    fn save(&self, stem: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(stem)).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(stem: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: channel::Dataset::load(std::path::Path::new(stem)).map_err(to_py_err)?,
        })
    }
}

/// Generates a deterministic dataset (`split` is "train" or "test").
#[pyfunction]
fn gen_dataset(scenario: &PyScenario, n: usize, split: &str) -> PyResult<PyDataset> {
    let split = match split.to_ascii_lowercase().as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(PyValueError::new_err(format!("unknown split '{other}'"))),
    };
    Ok(PyDataset { inner: channel::gen_dataset(&scenario.inner, n, split).map_err(to_py_err)? })
}

/// ULA array response vector as (re, im) pairs.
#[pyfunction]
fn array_response(phi: f64, n: usize) -> Vec<(f64, f64)> {
    channel::array_response(phi, n).iter().map(|z| (z.re, z.im)).collect()
}

#[pyclass(name = "Hgnn")]
struct PyHgnn {
    model: HgnnModel,
}

#[pymethods]
impl PyHgnn {
    #[new]
    #[pyo3(signature = (scenario, layers=2, hidden=64, dropout=0.1, attention=true, residual=true, seed=1))]
    fn new(
        scenario: &PyScenario,
        layers: usize,
        hidden: usize,
        dropout: f64,
        attention: bool,
        residual: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let mut config = HgnnConfig::desk_default(&scenario.inner);
        config.layers = layers;
        config.hidden = hidden;
        config.dropout = dropout;
        config.attention = attention;
        config.residual = residual;
        config.msg_hidden = vec![hidden * 3 / 2];
        config.comb_hidden = vec![hidden * 3 / 2];
        config.rf_hidden = vec![hidden * 3 / 2];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PyHgnn { model: HgnnModel::new(config, &mut rng).map_err(to_py_err)? })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    /// Trains on the datasets and returns the learning curve as a list of
    /// (epoch, lr, train_sum_se, test_sum_se) tuples.
    #[pyo3(signature = (train_set, test_set, epochs=10, batch_size=10, lr_base=1e-3, seed=1))]
    fn train(
        &mut self,
        train_set: &PyDataset,
        test_set: &PyDataset,
        epochs: usize,
        batch_size: usize,
        lr_base: f64,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        let params = hgnn::TrainParams {
            epochs,
            batch_size,
            lr: LrSchedule { base: lr_base, decay: 0.9, every: 5 },
            seed,
            grad_clip: 1.0,
            tail_avg: 3,
        };
        let report = hgnn::train(&mut self.model, &train_set.inner, &test_set.inner, &params)
            .map_err(to_py_err)?;
        Ok(report
            .curve
            .iter()
            .map(|r| (r.epoch, r.lr, r.train_sum_se, r.test_sum_se))
            .collect())
    }

    /// Mean sum spectral efficiency over a dataset (eval mode).
    fn mean_sum_se(&mut self, dataset: &PyDataset) -> PyResult<f64> {
        hgnn::evaluate_mean_sum_se(&mut self.model, &dataset.inner).map_err(to_py_err)
    }

    /// Hybrid precoders of one sample: `(rf, bb)` per BS, entries as
    /// (re, im) pairs in row-major nested lists.
    #[allow(clippy::type_complexity)]
    fn solve(
        &mut self,
        dataset: &PyDataset,
        sample: usize,
    ) -> PyResult<Vec<(Vec<Vec<(f64, f64)>>, Vec<Vec<(f64, f64)>>)>> {
        let s = dataset.inner.samples.get(sample).ok_or_else(|| {
            PyValueError::new_err(format!("sample {sample} out of range"))
        })?;
        let graph = hybeam::graph::build_graph(s, &dataset.inner.scenario).map_err(to_py_err)?;
        let sol = self.model.solve(&graph, &dataset.inner.scenario).map_err(to_py_err)?;
        Ok(sol
            .per_bs
            .iter()
            .map(|p| {
                let rf = (0..p.rf.nrows())
                    .map(|r| p.rf.row(r).iter().map(|z| (z.re, z.im)).collect())
                    .collect();
                let bb = (0..p.bb.nrows())
                    .map(|r| p.bb.row(r).iter().map(|z| (z.re, z.im)).collect())
                    .collect();
                (rf, bb)
            })
            .collect())
    }

    /// Worst constraint violation of the solution for one sample.
    fn max_violation(&mut self, dataset: &PyDataset, sample: usize) -> PyResult<f64> {
        let s = dataset.inner.samples.get(sample).ok_or_else(|| {
            PyValueError::new_err(format!("sample {sample} out of range"))
        })?;
        let scenario = &dataset.inner.scenario;
        let graph = hybeam::graph::build_graph(s, scenario).map_err(to_py_err)?;
        let sol = self.model.solve(&graph, scenario).map_err(to_py_err)?;
        Ok(sol.max_violation(scenario.structure, &scenario.power))
    }

    fn save(&self, stem: &str) -> PyResult<()> {
        self.model.save(std::path::Path::new(stem)).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(stem: &str) -> PyResult<Self> {
        Ok(PyHgnn { model: HgnnModel::load(std::path::Path::new(stem)).map_err(to_py_err)? })
    }
}

/// Mean WMMSE (fully digital) sum rate over a dataset.
#[pyfunction]
fn wmmse_mean_sum_rate(dataset: &PyDataset) -> PyResult<f64> {
    let scenario = &dataset.inner.scenario;
    let mut total = 0.0;
    for sample in &dataset.inner.samples {
        let (sol, _) = wmmse(sample, scenario, &WmmseParams::default()).map_err(to_py_err)?;
        total += eval::rate_per_ue_digital(&sol.per_bs, sample, scenario).iter().sum::<f64>();
    }
    Ok(total / dataset.inner.len() as f64)
}

/// Pilot and backhaul overhead counts of a scheme ("hgnn", "mlp", "altmin").
#[pyfunction]
fn overhead(scenario: &PyScenario, method: &str) -> PyResult<(u64, u64)> {
    let m = eval::Method::parse(method).map_err(to_py_err)?;
    Ok(eval::overhead_report(&scenario.inner, m))
}

#[pymodule]
fn hybeam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyHgnn>()?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(array_response, m)?)?;
    m.add_function(wrap_pyfunction!(wmmse_mean_sum_rate, m)?)?;
    m.add_function(wrap_pyfunction!(overhead, m)?)?;
    Ok(())
}
