//! Heterogeneous graph neural network for hybrid precoding: typed input
//! embeddings, L rounds of (optionally attention-weighted) aggregation and
//! (optionally residual) combination, and constraint-satisfying output
//! heads for the analog and baseband precoders.

mod forward;
mod heads;
mod loss;
mod train;

pub use forward::HgnnTrace;
pub use heads::{
    analog_backward, analog_from_raw, project_backward, project_power, AnalogCache, ProjCache,
};
pub use loss::{solution_grads, sum_rate_loss, SolutionGrads};
pub use train::{evaluate_mean_sum_se, grad_global_norm, refresh_running_stats, solve_dataset, train, EpochRecord, TrainParams, TrainReport};

use crate::channel::{Scenario, Structure};
use crate::linalg::CMat;
use crate::nn::DenseNet;
use crate::tensorstore::{Store, StoreWriter};
use crate::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Message-net / attention slots, indexed by the node type being updated
/// and the edge kind aggregated over.
pub const NET_BS_DESIRED: usize = 0;
pub const NET_BS_INTERFERING: usize = 1;
pub const NET_UE_DESIRED: usize = 2;
pub const NET_UE_INTERFERING: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnConfig {
    /// Message-passing rounds (`L`).
    pub layers: usize,
    /// Node feature width (`D`).
    pub hidden: usize,
    /// Hidden widths of the four message nets (input `D + 2*n_bar`, output `D`).
    pub msg_hidden: Vec<usize>,
    /// Hidden widths of the two combination nets (input `2D`, output `D`).
    pub comb_hidden: Vec<usize>,
    /// Hidden widths of the analog head (input `D`).
    pub rf_hidden: Vec<usize>,
    /// Hidden widths of the baseband head (input `2D + 2*n_bar`, output `2*n_rf`).
    pub bb_hidden: Vec<usize>,
    pub dropout: f64,
    pub attention: bool,
    pub residual: bool,
    pub structure: Structure,
    pub n_mm: usize,
    pub n_sub: usize,
    pub n_bar: usize,
    /// RF chains the model emits per BS; fixed at build time.
    pub n_rf: usize,
}

impl HgnnConfig {
    pub fn desk_default(scenario: &Scenario) -> Self {
        let n_rf = scenario.ues_per_bs.iter().copied().max().unwrap_or(1);
        HgnnConfig {
            layers: 2,
            hidden: 64,
            msg_hidden: vec![96],
            comb_hidden: vec![96],
            rf_hidden: vec![96],
            bb_hidden: vec![50],
            dropout: 0.1,
            attention: true,
            residual: true,
            structure: scenario.structure,
            n_mm: scenario.n_mm,
            n_sub: scenario.n_sub,
            n_bar: scenario.n_bar,
            n_rf,
        }
    }

    pub fn msg_input_width(&self) -> usize {
        self.hidden + 2 * self.n_bar
    }

    pub fn att_width(&self) -> usize {
        2 * self.hidden + 2 * self.n_bar
    }

    pub fn comb_input_width(&self) -> usize {
        2 * self.hidden
    }

    pub fn bb_input_width(&self) -> usize {
        2 * self.hidden + 2 * self.n_bar
    }

    /// Analog head output width: all `F_RF` entries for the fully-connected
    /// structure, the block-diagonal entries only for partially-connected.
    pub fn rf_output_width(&self) -> usize {
        match self.structure {
            Structure::Fully => 2 * self.n_mm * self.n_rf,
            Structure::Partially => 2 * self.n_mm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("layer count must be >= 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        if self.n_rf < 1 || self.n_mm < 1 {
            return Err(Error::Config("n_rf and n_mm must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.structure == Structure::Partially && self.n_mm % self.n_rf != 0 {
            return Err(Error::Config(format!(
                "partially-connected blocks need n_mm ({}) divisible by n_rf ({})",
                self.n_mm, self.n_rf
            )));
        }
        Ok(())
    }

    /// Checks that a scenario is dimensionally compatible with this model.
    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        if scenario.n_mm != self.n_mm || scenario.n_sub != self.n_sub || scenario.n_bar != self.n_bar
        {
            return Err(Error::Dimension(format!(
                "scenario dims (n_mm {}, n_sub {}, n_bar {}) do not match model (n_mm {}, n_sub {}, n_bar {})",
                scenario.n_mm, scenario.n_sub, scenario.n_bar, self.n_mm, self.n_sub, self.n_bar
            )));
        }
        Ok(())
    }
}

/// Hybrid precoders of one BS. `rf` is `n_mm x n_rf` with unit-modulus
/// structure, `bb` is `n_rf x I_k` with one column per served UE.
#[derive(Debug, Clone, PartialEq)]
pub struct BsPrecoder {
    pub rf: CMat,
    pub bb: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    pub per_bs: Vec<BsPrecoder>,
}

impl PrecoderSolution {
    /// Effective per-UE precoding columns `F_RF * F_BB` of BS `k`.
    pub fn columns(&self, k: usize) -> CMat {
        self.per_bs[k].rf.dot(&self.per_bs[k].bb)
    }

    /// Largest violation of the power constraint and the analog modulus /
    /// block-structure constraints over all BSs (0 when feasible).
    pub fn max_violation(&self, structure: Structure, power: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (k, p) in self.per_bs.iter().enumerate() {
            let tx = crate::linalg::frob_sq(&p.rf.dot(&p.bb));
            worst = worst.max(tx - power[k]);
            let n_m = p.rf.nrows();
            let n_rf = p.rf.ncols();
            let target = 1.0 / (n_m as f64).sqrt();
            match structure {
                Structure::Fully => {
                    for v in p.rf.iter() {
                        worst = worst.max((v.norm() - target).abs());
                    }
                }
                Structure::Partially => {
                    let block = n_m / n_rf;
                    for ((m, j), v) in p.rf.indexed_iter() {
                        if m / block == j {
                            worst = worst.max((v.norm() - target).abs());
                        } else {
                            worst = worst.max(v.norm());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// All trainable state of the HGNN.
pub struct HgnnModel {
    pub config: HgnnConfig,
    pub(crate) emb_bs: DenseNet,
    pub(crate) emb_ue: DenseNet,
    pub(crate) msg: [DenseNet; 4],
    pub(crate) att: [Array2<f64>; 4],
    pub(crate) comb_bs: DenseNet,
    pub(crate) comb_ue: DenseNet,
    pub(crate) head_rf: DenseNet,
    pub(crate) head_bb: DenseNet,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl HgnnModel {
    pub fn new(config: HgnnConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let p = config.dropout;
        let msg_w = widths(config.msg_input_width(), &config.msg_hidden, d);
        let emb_bs = DenseNet::new(&[1, d], p, true, rng);
        let emb_ue = DenseNet::new(&[1 + 2 * config.n_sub, d], p, true, rng);
        let msg = [
            DenseNet::new(&msg_w, p, false, rng),
            DenseNet::new(&msg_w, p, false, rng),
            DenseNet::new(&msg_w, p, false, rng),
            DenseNet::new(&msg_w, p, false, rng),
        ];
        let att_limit = (6.0 / (config.att_width() + 1) as f64).sqrt();
        let mk_att = |rng: &mut dyn rand::RngCore| {
            Array2::from_shape_fn((1, config.att_width()), |_| {
                rand::Rng::gen_range(&mut *rng, -att_limit..att_limit)
            })
        };
        let att = [mk_att(rng), mk_att(rng), mk_att(rng), mk_att(rng)];
        let comb_w = widths(config.comb_input_width(), &config.comb_hidden, d);
        let comb_bs = DenseNet::new(&comb_w, p, false, rng);
        let comb_ue = DenseNet::new(&comb_w, p, false, rng);
        let head_rf = DenseNet::new(&widths(d, &config.rf_hidden, config.rf_output_width()), p, false, rng);
        let head_bb = DenseNet::new(
            &widths(config.bb_input_width(), &config.bb_hidden, 2 * config.n_rf),
            p,
            false,
            rng,
        );
        Ok(HgnnModel { config, emb_bs, emb_ue, msg, att, comb_bs, comb_ue, head_rf, head_bb })
    }

    fn nets(&self) -> Vec<(&'static str, &DenseNet)> {
        vec![
            ("emb_bs", &self.emb_bs),
            ("emb_ue", &self.emb_ue),
            ("msg_bs_d", &self.msg[NET_BS_DESIRED]),
            ("msg_bs_i", &self.msg[NET_BS_INTERFERING]),
            ("msg_ue_d", &self.msg[NET_UE_DESIRED]),
            ("msg_ue_i", &self.msg[NET_UE_INTERFERING]),
            ("comb_bs", &self.comb_bs),
            ("comb_ue", &self.comb_ue),
            ("head_rf", &self.head_rf),
            ("head_bb", &self.head_bb),
        ]
    }

    fn nets_mut(&mut self) -> Vec<(&'static str, &mut DenseNet)> {
        let HgnnModel { emb_bs, emb_ue, msg, comb_bs, comb_ue, head_rf, head_bb, .. } = self;
        let [msg_bs_d, msg_bs_i, msg_ue_d, msg_ue_i] = msg;
        vec![
            ("emb_bs", emb_bs),
            ("emb_ue", emb_ue),
            ("msg_bs_d", msg_bs_d),
            ("msg_bs_i", msg_bs_i),
            ("msg_ue_d", msg_ue_d),
            ("msg_ue_i", msg_ue_i),
            ("comb_bs", comb_bs),
            ("comb_ue", comb_ue),
            ("head_rf", head_rf),
            ("head_bb", head_bb),
        ]
    }

    /// Every trainable tensor in canonical order (nets first, then the four
    /// attention vectors). Matches [`HgnnGrads::tensors`].
    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let HgnnModel { emb_bs, emb_ue, msg, att, comb_bs, comb_ue, head_rf, head_bb, .. } = self;
        let mut out = Vec::new();
        out.extend(emb_bs.params_mut());
        out.extend(emb_ue.params_mut());
        for net in msg.iter_mut() {
            out.extend(net.params_mut());
        }
        out.extend(comb_bs.params_mut());
        out.extend(comb_ue.params_mut());
        out.extend(head_rf.params_mut());
        out.extend(head_bb.params_mut());
        out.extend(att.iter_mut());
        out
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        out.extend(self.emb_bs.params());
        out.extend(self.emb_ue.params());
        for net in self.msg.iter() {
            out.extend(net.params());
        }
        out.extend(self.comb_bs.params());
        out.extend(self.comb_ue.params());
        out.extend(self.head_rf.params());
        out.extend(self.head_bb.params());
        out.extend(self.att.iter());
        out
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Overrides the dropout rate of every net (used to settle running
    /// statistics on dropout-free activations).
    pub fn set_dropout(&mut self, p: f64) {
        for (_, net) in self.nets_mut() {
            net.dropout = p;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Saves config, parameters and BatchNorm running statistics.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let header = serde_json::json!({
            "kind": "hgnn-checkpoint",
            "config": self.config,
        });
        let mut w = StoreWriter::new(header);
        for (name, net) in self.nets() {
            push_net(&mut w, name, net);
        }
        for (i, att) in self.att.iter().enumerate() {
            w.push(&format!("att_{i}"), &[att.nrows(), att.ncols()], false, att.as_slice().unwrap());
        }
        w.save(stem)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        use rand::SeedableRng;
        let store = Store::load(stem)?;
        if store.manifest.header["kind"] != "hgnn-checkpoint" {
            return Err(Error::Input(format!("{} is not an HGNN checkpoint", stem.display())));
        }
        let config: HgnnConfig = serde_json::from_value(store.manifest.header["config"].clone())
            .map_err(|e| Error::Serde(e.to_string()))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = HgnnModel::new(config, &mut rng)?;
        for (name, net) in model.nets_mut() {
            read_net(&store, name, net)?;
        }
        for (i, att) in model.att.iter_mut().enumerate() {
            let (_, vals) = store.get(&format!("att_{i}"))?;
            *att = Array2::from_shape_vec(att.raw_dim(), vals.to_vec())
                .map_err(|e| Error::Dimension(e.to_string()))?;
        }
        Ok(model)
    }
}

pub(crate) fn push_net(w: &mut StoreWriter, name: &str, net: &DenseNet) {
    for (li, p) in net.params().chunks(4).enumerate() {
        for (tag, t) in ["w", "b", "gamma", "beta"].iter().zip(p.iter()) {
            w.push(&format!("{name}.l{li}.{tag}"), &[t.nrows(), t.ncols()], false, t.as_slice().unwrap());
        }
    }
    for (li, (mean, var)) in net.stats().iter().enumerate() {
        w.push(&format!("{name}.l{li}.rmean"), &[1, mean.ncols()], false, mean.as_slice().unwrap());
        w.push(&format!("{name}.l{li}.rvar"), &[1, var.ncols()], false, var.as_slice().unwrap());
    }
}

pub(crate) fn read_net(store: &Store, name: &str, net: &mut DenseNet) -> Result<()> {
    let n_layers = net.n_layers();
    let read = |tensor: &str, expect: (usize, usize)| -> Result<Array2<f64>> {
        let (meta, vals) = store.get(tensor)?;
        if meta.shape != vec![expect.0, expect.1] {
            return Err(Error::Dimension(format!(
                "checkpoint tensor {tensor} has shape {:?}, expected {:?}",
                meta.shape, expect
            )));
        }
        Array2::from_shape_vec(expect, vals.to_vec()).map_err(|e| Error::Dimension(e.to_string()))
    };
    for li in 0..n_layers {
        let shapes: Vec<(usize, usize)> = {
            let ps = net.params();
            (0..4).map(|j| (ps[4 * li + j].nrows(), ps[4 * li + j].ncols())).collect()
        };
        for (j, tag) in ["w", "b", "gamma", "beta"].iter().enumerate() {
            let t = read(&format!("{name}.l{li}.{tag}"), shapes[j])?;
            *net.params_mut()[4 * li + j] = t;
        }
        let mw = {
            let st = net.stats();
            (st[li].0.ncols(), st[li].1.ncols())
        };
        let rmean = read(&format!("{name}.l{li}.rmean"), (1, mw.0))?;
        let rvar = read(&format!("{name}.l{li}.rvar"), (1, mw.1))?;
        let mut stats = net.stats_mut();
        stats[li].0.assign(&rmean);
        stats[li].1.assign(&rvar);
    }
    Ok(())
}

/// Gradients for every trainable tensor of the model.
pub struct HgnnGrads {
    pub emb_bs: crate::nn::NetGrads,
    pub emb_ue: crate::nn::NetGrads,
    pub msg: [crate::nn::NetGrads; 4],
    pub att: [Array2<f64>; 4],
    pub comb_bs: crate::nn::NetGrads,
    pub comb_ue: crate::nn::NetGrads,
    pub head_rf: crate::nn::NetGrads,
    pub head_bb: crate::nn::NetGrads,
}

impl HgnnGrads {
    pub fn zeros(model: &HgnnModel) -> Self {
        HgnnGrads {
            emb_bs: model.emb_bs.zero_grads(),
            emb_ue: model.emb_ue.zero_grads(),
            msg: [
                model.msg[0].zero_grads(),
                model.msg[1].zero_grads(),
                model.msg[2].zero_grads(),
                model.msg[3].zero_grads(),
            ],
            att: [
                Array2::zeros(model.att[0].raw_dim()),
                Array2::zeros(model.att[1].raw_dim()),
                Array2::zeros(model.att[2].raw_dim()),
                Array2::zeros(model.att[3].raw_dim()),
            ],
            comb_bs: model.comb_bs.zero_grads(),
            comb_ue: model.comb_ue.zero_grads(),
            head_rf: model.head_rf.zero_grads(),
            head_bb: model.head_bb.zero_grads(),
        }
    }

    /// Tensors in the same canonical order as [`HgnnModel::params_mut`].
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        out.extend(self.emb_bs.tensors());
        out.extend(self.emb_ue.tensors());
        for g in self.msg.iter() {
            out.extend(g.tensors());
        }
        out.extend(self.comb_bs.tensors());
        out.extend(self.comb_ue.tensors());
        out.extend(self.head_rf.tensors());
        out.extend(self.head_bb.tensors());
        out.extend(self.att.iter());
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.emb_bs.scale(s);
        self.emb_ue.scale(s);
        for g in self.msg.iter_mut() {
            g.scale(s);
        }
        for a in self.att.iter_mut() {
            *a *= s;
        }
        self.comb_bs.scale(s);
        self.comb_ue.scale(s);
        self.head_rf.scale(s);
        self.head_bb.scale(s);
    }
}
