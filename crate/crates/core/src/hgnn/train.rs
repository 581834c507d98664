//! Minibatch Adam training of the HGNN on the negated sum spectral
//! efficiency. Training runs on feasible projected solutions, so the loss
//! is the objective itself evaluated on ground-truth full CSI.

use super::loss::solution_grads;
use super::{HgnnModel, PrecoderSolution};
use crate::channel::Dataset;
use crate::graph::{build_graph, HeteroGraph};
use crate::nn::{Adam, LrSchedule, Mode};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Average the parameters of the last K epochs into the emitted model
    /// (Polyak tail averaging); 0 or 1 disables it.
    pub tail_avg: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 30,
            batch_size: 10,
            lr: LrSchedule::default(),
            seed: 1,
            grad_clip: 1.0,
            tail_avg: 5,
        }
    }
}

/// Scales the gradient set so its global L2 norm is at most `clip`.
pub fn grad_global_norm(tensors: &[&ndarray::Array2<f64>]) -> f64 {
    tensors.iter().map(|t| t.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample sum SE over the training batches (train mode).
    pub train_sum_se: f64,
    /// Mean per-sample sum SE over the test set (eval mode).
    pub test_sum_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_test_sum_se(&self) -> f64 {
        self.curve.last().map(|r| r.test_sum_se).unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_sum_se,test_sum_se\n");
        for r in &self.curve {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e}\n",
                r.epoch, r.lr, r.train_sum_se, r.test_sum_se
            ));
        }
        out
    }
}

/// Mean sum SE of the model over a dataset (eval mode, batched for speed).
pub fn evaluate_mean_sum_se(model: &mut HgnnModel, dataset: &Dataset) -> Result<f64> {
    let graphs: Vec<HeteroGraph> = dataset
        .samples
        .iter()
        .map(|s| build_graph(s, &dataset.scenario))
        .collect::<Result<_>>()?;
    evaluate_mean_sum_se_graphs(model, &graphs, dataset)
}

fn evaluate_mean_sum_se_graphs(
    model: &mut HgnnModel,
    graphs: &[HeteroGraph],
    dataset: &Dataset,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let chunk = 32;
    for (ci, gs) in graphs.chunks(chunk).enumerate() {
        let (sols, _) = model.forward_batch(gs, &dataset.scenario, Mode::Eval, &mut rng)?;
        for (i, sol) in sols.iter().enumerate() {
            total += crate::eval::sum_se(sol, &dataset.samples[ci * chunk + i], &dataset.scenario);
        }
    }
    Ok(total / graphs.len() as f64)
}

/// Settles the BatchNorm running statistics at the current parameters by
/// forward passes over training batches (no optimizer steps). Keeps the
/// eval-mode behavior aligned with the freshly trained parameters.
pub fn refresh_running_stats(
    model: &mut HgnnModel,
    graphs: &[HeteroGraph],
    scenario: &crate::channel::Scenario,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    // dropout off: the statistics must match what eval-mode forward sees
    let dropout = model.config.dropout;
    model.set_dropout(0.0);
    let max_batches = 40usize;
    let mut result = Ok(());
    for chunk in graphs.chunks(batch_size).take(max_batches) {
        if let Err(e) = model.forward_batch(chunk, scenario, Mode::Train, rng) {
            result = Err(e);
            break;
        }
    }
    model.set_dropout(dropout);
    result
}

/// Trains the model in place and records per-epoch train/test sum SE.
/// Deterministic given the seed; aborts with a diagnostic on divergence.
pub fn train(
    model: &mut HgnnModel,
    train_set: &Dataset,
    test_set: &Dataset,
    params: &TrainParams,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    model.config.check_scenario(&train_set.scenario)?;
    let scenario = &train_set.scenario;
    let graphs: Vec<HeteroGraph> =
        train_set.samples.iter().map(|s| build_graph(s, scenario)).collect::<Result<_>>()?;
    let test_graphs: Vec<HeteroGraph> =
        test_set.samples.iter().map(|s| build_graph(s, &test_set.scenario)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut adam = Adam::new();
    let mut curve = Vec::with_capacity(params.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let tail = params.tail_avg.min(params.epochs);
    let mut snapshots: Vec<Vec<ndarray::Array2<f64>>> = Vec::new();
    for epoch in 0..params.epochs {
        let lr = params.lr.at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_se = 0.0;
        let mut epoch_samples = 0usize;
        for chunk in order.chunks(params.batch_size) {
            let batch_graphs: Vec<HeteroGraph> =
                chunk.iter().map(|&i| graphs[i].clone()).collect();
            let (solutions, trace) =
                model.forward_batch(&batch_graphs, scenario, Mode::Train, &mut rng)?;
            let b = solutions.len() as f64;
            let mut dsols = Vec::with_capacity(solutions.len());
            let mut batch_rate = 0.0;
            for (i, sol) in solutions.iter().enumerate() {
                let sample = &train_set.samples[chunk[i]];
                let (sum_rate, _, mut grads) = solution_grads(sol, sample, scenario);
                batch_rate += sum_rate;
                // loss = -(mean over batch of sum rate)
                let scale = -1.0 / b;
                for m in grads.d_rf.iter_mut().chain(grads.d_bb.iter_mut()) {
                    m.mapv_inplace(|v| v * scale);
                }
                dsols.push(grads);
            }
            let loss = -batch_rate / b;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged ({loss}) at epoch {epoch}"
                )));
            }
            let mut grads = model.backward(&trace, scenario, &solutions, &dsols);
            if params.grad_clip > 0.0 {
                let norm = grad_global_norm(&grads.tensors());
                if norm > params.grad_clip {
                    grads.scale(params.grad_clip / norm);
                }
            }
            let tensors = grads.tensors();
            adam.step(lr, &mut model.params_mut(), &tensors)?;
            epoch_se += batch_rate;
            epoch_samples += solutions.len();
        }
        let train_sum_se = epoch_se / epoch_samples as f64;
        if tail > 1 && epoch + tail >= params.epochs {
            snapshots.push(model.params().iter().map(|t| (*t).clone()).collect());
        }
        refresh_running_stats(model, &graphs, scenario, params.batch_size, &mut rng)?;
        let test_sum_se = evaluate_mean_sum_se_graphs(model, &test_graphs, test_set)?;
        if std::env::var("HYBEAM_DIAG").is_ok() {
            let n_diag = test_graphs.len().min(graphs.len());
            let eval_on_train =
                evaluate_mean_sum_se_graphs(model, &graphs[..n_diag], train_set)?;
            eprintln!("diag epoch {epoch}: eval-on-train {eval_on_train:.4} test {test_sum_se:.4}");
        }
        curve.push(EpochRecord { epoch, lr, train_sum_se, test_sum_se });
        if !model.all_finite() {
            return Err(Error::Training(format!("non-finite parameter after epoch {epoch}")));
        }
    }
    if snapshots.len() > 1 {
        let n = snapshots.len() as f64;
        let mut mean = snapshots.pop().unwrap();
        for snap in &snapshots {
            for (m, t) in mean.iter_mut().zip(snap.iter()) {
                *m += t;
            }
        }
        for (pi, p) in model.params_mut().into_iter().enumerate() {
            p.assign(&(&mean[pi] / n));
        }
        refresh_running_stats(model, &graphs, scenario, params.batch_size, &mut rng)?;
        let test_sum_se = evaluate_mean_sum_se_graphs(model, &test_graphs, test_set)?;
        if let Some(last) = curve.last_mut() {
            // the final entry reports the emitted (tail-averaged) model
            last.test_sum_se = test_sum_se;
        }
    }
    Ok(TrainReport { curve })
}

/// Solves every sample of a dataset in eval mode.
pub fn solve_dataset(model: &mut HgnnModel, dataset: &Dataset) -> Result<Vec<PrecoderSolution>> {
    let mut out = Vec::with_capacity(dataset.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let graphs: Vec<HeteroGraph> = dataset
        .samples
        .iter()
        .map(|s| build_graph(s, &dataset.scenario))
        .collect::<Result<_>>()?;
    for gs in graphs.chunks(32) {
        let (sols, _) = model.forward_batch(gs, &dataset.scenario, Mode::Eval, &mut rng)?;
        out.extend(sols);
    }
    Ok(out)
}
