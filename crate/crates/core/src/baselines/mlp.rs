//! Flat-MLP baseline: all node features, edge features and one-hot type
//! tags concatenated into one fixed-width vector per sample, a dense net
//! emitting every raw precoder entry, and the same output projections as
//! the HGNN for feasibility. The input width is scenario-bound, so the
//! model rejects samples of any other shape.

use crate::channel::{ChannelSample, Dataset, Scenario, Structure};
use crate::hgnn::{
    analog_backward, analog_from_raw, project_backward, project_power, solution_grads,
    AnalogCache, BsPrecoder, EpochRecord, PrecoderSolution, ProjCache, TrainParams, TrainReport,
};
use crate::linalg::{interleave, CMat};
use crate::nn::{Adam, DenseNet, Mode};
use crate::tensorstore::{Store, StoreWriter};
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct MlpModel {
    pub ues_per_bs: Vec<usize>,
    pub structure: Structure,
    pub n_mm: usize,
    pub n_sub: usize,
    pub n_bar: usize,
    pub net: DenseNet,
}

fn rf_width(structure: Structure, n_mm: usize, n_rf: usize) -> usize {
    match structure {
        Structure::Fully => 2 * n_mm * n_rf,
        Structure::Partially => 2 * n_mm,
    }
}

impl MlpModel {
    pub fn input_width_for(scenario: &Scenario) -> usize {
        let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
        k * 3 + i_sum * (1 + 2 * scenario.n_sub + 2) + k * i_sum * (2 * scenario.n_bar + 2)
    }

    pub fn output_width_for(scenario: &Scenario) -> usize {
        scenario
            .ues_per_bs
            .iter()
            .map(|&i_k| rf_width(scenario.structure, scenario.n_mm, i_k) + 2 * i_k * i_k)
            .sum()
    }

    /// Builds the net with the paper's hidden widths by default.
    pub fn new(scenario: &Scenario, hidden: &[usize], dropout: f64, rng: &mut impl Rng) -> Self {
        let mut widths = vec![Self::input_width_for(scenario)];
        widths.extend_from_slice(hidden);
        widths.push(Self::output_width_for(scenario));
        MlpModel {
            ues_per_bs: scenario.ues_per_bs.clone(),
            structure: scenario.structure,
            n_mm: scenario.n_mm,
            n_sub: scenario.n_sub,
            n_bar: scenario.n_bar,
            net: DenseNet::new(&widths, dropout, false, rng),
        }
    }

    pub fn default_hidden() -> Vec<usize> {
        vec![200, 300, 500]
    }

    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        if scenario.ues_per_bs != self.ues_per_bs
            || scenario.structure != self.structure
            || scenario.n_mm != self.n_mm
            || scenario.n_sub != self.n_sub
            || scenario.n_bar != self.n_bar
        {
            return Err(Error::Dimension(format!(
                "MLP input is bound to its training scenario shape (trained {:?}/{}, got {:?}/{})",
                self.ues_per_bs, self.structure, scenario.ues_per_bs, scenario.structure
            )));
        }
        Ok(())
    }

    /// Flattens one sample: BS features ascending k, UE features ascending
    /// global index, edge features ascending (BS, UE), each followed by its
    /// one-hot type tag.
    pub fn flatten(&self, sample: &ChannelSample, scenario: &Scenario) -> Result<Vec<f64>> {
        self.check_scenario(scenario)?;
        let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
        let mut out = Vec::with_capacity(Self::input_width_for(scenario));
        for b in 0..k {
            out.extend([scenario.power[b], 1.0, 0.0]);
        }
        for u in 0..i_sum {
            out.push(scenario.noise);
            out.extend(interleave(&sample.sub(u)));
            out.extend([0.0, 1.0]);
        }
        for b in 0..k {
            for u in 0..i_sum {
                out.extend(interleave(&sample.mm_bar(u, b)));
                if scenario.serving(u) == b {
                    out.extend([1.0, 0.0]);
                } else {
                    out.extend([0.0, 1.0]);
                }
            }
        }
        Ok(out)
    }

    /// Per-BS slices of the raw output row: `(rf_range, bb_range)`.
    fn output_ranges(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut out = Vec::with_capacity(self.ues_per_bs.len());
        let mut off = 0;
        for &i_k in &self.ues_per_bs {
            let rfw = rf_width(self.structure, self.n_mm, i_k);
            let bbw = 2 * i_k * i_k;
            out.push((off..off + rfw, off + rfw..off + rfw + bbw));
            off += rfw + bbw;
        }
        out
    }

    /// Assembles a feasible solution from one raw output row by the shared
    /// analog normalization and power projection.
    fn assemble(
        &self,
        row: &[f64],
        scenario: &Scenario,
    ) -> (PrecoderSolution, Vec<AnalogCache>, Vec<ProjCache>) {
        let ranges = self.output_ranges();
        let mut per_bs = Vec::with_capacity(ranges.len());
        let mut a_caches = Vec::with_capacity(ranges.len());
        let mut p_caches = Vec::with_capacity(ranges.len());
        for (b, (rf_r, bb_r)) in ranges.into_iter().enumerate() {
            let i_k = self.ues_per_bs[b];
            let (rf, a_cache) = analog_from_raw(&row[rf_r], self.structure, self.n_mm, i_k);
            let raw_bb = &row[bb_r];
            let mut bb: CMat = Array2::zeros((i_k, i_k));
            for local in 0..i_k {
                for j in 0..i_k {
                    let base = local * 2 * i_k + 2 * j;
                    bb[(j, local)] = Complex64::new(raw_bb[base], raw_bb[base + 1]);
                }
            }
            let (bb, p_cache) = project_power(&rf, &bb, scenario.power[b]);
            per_bs.push(BsPrecoder { rf, bb });
            a_caches.push(a_cache);
            p_caches.push(p_cache);
        }
        (PrecoderSolution { per_bs }, a_caches, p_caches)
    }

    /// Eval-mode solution for one sample.
    pub fn solve(&self, sample: &ChannelSample, scenario: &Scenario) -> Result<PrecoderSolution> {
        let x = self.flatten(sample, scenario)?;
        let row = Array2::from_shape_vec((1, x.len()), x).expect("row shape");
        let out = self.net.forward_eval(&row)?;
        let (sol, _, _) = self.assemble(out.row(0).as_slice().unwrap(), scenario);
        Ok(sol)
    }

    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        let header = serde_json::json!({
            "kind": "mlp-checkpoint",
            "ues_per_bs": self.ues_per_bs,
            "structure": self.structure,
            "n_mm": self.n_mm,
            "n_sub": self.n_sub,
            "n_bar": self.n_bar,
            "widths": self.net.widths(),
            "dropout": self.net.dropout,
        });
        let mut w = StoreWriter::new(header);
        crate::hgnn::push_net(&mut w, "mlp", &self.net);
        w.save(stem)
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let store = Store::load(stem)?;
        let h = &store.manifest.header;
        if h["kind"] != "mlp-checkpoint" {
            return Err(Error::Input(format!("{} is not an MLP checkpoint", stem.display())));
        }
        let widths: Vec<usize> =
            serde_json::from_value(h["widths"].clone()).map_err(|e| Error::Serde(e.to_string()))?;
        let dropout = h["dropout"].as_f64().unwrap_or(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = DenseNet::new(&widths, dropout, false, &mut rng);
        crate::hgnn::read_net(&store, "mlp", &mut net)?;
        Ok(MlpModel {
            ues_per_bs: serde_json::from_value(h["ues_per_bs"].clone())
                .map_err(|e| Error::Serde(e.to_string()))?,
            structure: serde_json::from_value(h["structure"].clone())
                .map_err(|e| Error::Serde(e.to_string()))?,
            n_mm: h["n_mm"].as_u64().unwrap_or(0) as usize,
            n_sub: h["n_sub"].as_u64().unwrap_or(0) as usize,
            n_bar: h["n_bar"].as_u64().unwrap_or(0) as usize,
            net,
        })
    }
}

/// Mean sum SE over a dataset in eval mode.
pub fn evaluate_mlp(model: &MlpModel, dataset: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for sample in &dataset.samples {
        let sol = model.solve(sample, &dataset.scenario)?;
        total += crate::eval::sum_se(&sol, sample, &dataset.scenario);
    }
    Ok(total / dataset.len() as f64)
}

/// Minibatch Adam training of the MLP on the negated sum rate, with the
/// same schedule semantics as the HGNN loop.
pub fn train_mlp(
    model: &mut MlpModel,
    train_set: &Dataset,
    test_set: &Dataset,
    params: &TrainParams,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    let scenario = &train_set.scenario;
    model.check_scenario(scenario)?;
    let flat: Vec<Vec<f64>> = train_set
        .samples
        .iter()
        .map(|s| model.flatten(s, scenario))
        .collect::<Result<_>>()?;
    let in_w = MlpModel::input_width_for(scenario);
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
            let b = chunk.len();
            let mut x = Array2::zeros((b, in_w));
            for (i, &si) in chunk.iter().enumerate() {
                for (j, &v) in flat[si].iter().enumerate() {
                    x[(i, j)] = v;
                }
            }
            let (out, cache) = model.net.forward(&x, Mode::Train, &mut rng)?;
            let mut g_out = Array2::zeros(out.raw_dim());
            let mut batch_rate = 0.0;
            for (i, &si) in chunk.iter().enumerate() {
                let sample = &train_set.samples[si];
                let (sol, a_caches, p_caches) =
                    model.assemble(out.row(i).as_slice().unwrap(), scenario);
                let (sum_rate, _, mut grads) = solution_grads(&sol, sample, scenario);
                batch_rate += sum_rate;
                let scale = -1.0 / b as f64;
                for m in grads.d_rf.iter_mut().chain(grads.d_bb.iter_mut()) {
                    m.mapv_inplace(|v| v * scale);
                }
                let ranges = model.output_ranges();
                for (bs, (rf_r, bb_r)) in ranges.into_iter().enumerate() {
                    let (g_bb_raw, g_rf_extra) = project_backward(
                        &p_caches[bs],
                        &sol.per_bs[bs].rf,
                        &grads.d_bb[bs],
                    );
                    let mut g_rf_total = grads.d_rf[bs].clone();
                    g_rf_total += &g_rf_extra;
                    let raw_grad = analog_backward(&a_caches[bs], &g_rf_total);
                    for (j, v) in raw_grad.iter().enumerate() {
                        g_out[(i, rf_r.start + j)] = *v;
                    }
                    let i_k = model.ues_per_bs[bs];
                    for local in 0..i_k {
                        for j in 0..i_k {
                            let base = bb_r.start + local * 2 * i_k + 2 * j;
                            g_out[(i, base)] = g_bb_raw[(j, local)].re;
                            g_out[(i, base + 1)] = g_bb_raw[(j, local)].im;
                        }
                    }
                }
            }
            let loss = -batch_rate / b as f64;
            if !loss.is_finite() {
                return Err(Error::Training(format!("MLP loss diverged ({loss}) at epoch {epoch}")));
            }
            let (mut grads, _) = model.net.backward(&cache, &g_out);
            if params.grad_clip > 0.0 {
                let norm = crate::hgnn::grad_global_norm(&grads.tensors());
                if norm > params.grad_clip {
                    grads.scale(params.grad_clip / norm);
                }
            }
            let tensors = grads.tensors();
            adam.step(lr, &mut model.net.params_mut(), &tensors)?;
            epoch_se += batch_rate;
            epoch_samples += b;
        }
        let train_sum_se = epoch_se / epoch_samples as f64;
        if tail > 1 && epoch + tail >= params.epochs {
            snapshots.push(model.net.params().iter().map(|t| (*t).clone()).collect());
        }
        let test_sum_se = evaluate_mlp(model, test_set)?;
        curve.push(EpochRecord { epoch, lr, train_sum_se, test_sum_se });
    }
    if snapshots.len() > 1 {
        let n = snapshots.len() as f64;
        let mut mean = snapshots.pop().unwrap();
        for snap in &snapshots {
            for (m, t) in mean.iter_mut().zip(snap.iter()) {
                *m += t;
            }
        }
        for (pi, p) in model.net.params_mut().into_iter().enumerate() {
            p.assign(&(&mean[pi] / n));
        }
        let test_sum_se = evaluate_mlp(model, test_set)?;
        if let Some(last) = curve.last_mut() {
            last.test_sum_se = test_sum_se;
        }
    }
    Ok(TrainReport { curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_dataset, gen_sample, Split};

    fn scenario(structure: Structure) -> Scenario {
        Scenario {
            ues_per_bs: vec![2, 2],
            n_mm: 4,
            n_sub: 2,
            n_bar: 2,
            n_paths: 2,
            power: vec![1.0, 1.3],
            noise: 0.1,
            bw_mm: 1e8,
            bw_sub: 1e7,
            seed: 44,
            structure,
        }
    }

    #[test]
    fn default_hidden_widths_match_baseline_spec() {
        assert_eq!(MlpModel::default_hidden(), vec![200, 300, 500]);
        let sc = scenario(Structure::Fully);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = MlpModel::new(&sc, &MlpModel::default_hidden(), 0.0, &mut rng);
        assert_eq!(model.net.widths()[1..4], [200, 300, 500]);
    }

    #[test]
    fn outputs_satisfy_constraints() {
        for structure in [Structure::Fully, Structure::Partially] {
            let sc = scenario(structure);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let model = MlpModel::new(&sc, &[20, 30], 0.0, &mut rng);
            for trial in 0..20 {
                let s = gen_sample(&sc, Split::Test, trial);
                let sol = model.solve(&s, &sc).unwrap();
                assert!(sol.max_violation(structure, &sc.power) < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_other_scenario_shapes() {
        let sc = scenario(Structure::Fully);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = MlpModel::new(&sc, &[16], 0.0, &mut rng);
        let mut bigger = sc.clone();
        bigger.ues_per_bs = vec![2, 2, 2];
        bigger.power = vec![1.0, 1.0, 1.0];
        let s = gen_sample(&bigger, Split::Test, 0);
        assert!(model.solve(&s, &bigger).is_err());
    }

    #[test]
    fn training_improves_and_roundtrips() {
        let sc = scenario(Structure::Fully);
        let train_set = gen_dataset(&sc, 120, Split::Train).unwrap();
        let test_set = gen_dataset(&sc, 30, Split::Test).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = MlpModel::new(&sc, &[32, 32], 0.0, &mut rng);
        let before = evaluate_mlp(&model, &test_set).unwrap();
        let params = TrainParams { epochs: 8, batch_size: 10, ..Default::default() };
        let report = train_mlp(&mut model, &train_set, &test_set, &params).unwrap();
        assert_eq!(report.curve.len(), 8);
        assert!(report.final_test_sum_se() > before, "{} vs {}", report.final_test_sum_se(), before);

        let dir = std::env::temp_dir().join(format!("hybeam-mlp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("mlp");
        model.save(&stem).unwrap();
        let loaded = MlpModel::load(&stem).unwrap();
        let s = &test_set.samples[0];
        assert_eq!(model.solve(s, &sc).unwrap(), loaded.solve(s, &sc).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }
}
