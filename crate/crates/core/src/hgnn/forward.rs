//! Batched forward and backward passes of the HGNN. One call processes a
//! whole minibatch of graphs so BatchNorm statistics pool over every
//! node/edge instance in the batch. Node updates are Jacobi-style: layer
//! `l` reads only layer `l-1` features for both node types.

use super::heads::{
    analog_backward, analog_from_raw, project_backward, project_power, AnalogCache, ProjCache,
};
use super::loss::SolutionGrads;
use super::{BsPrecoder, HgnnGrads, HgnnModel, PrecoderSolution};
use super::{NET_BS_DESIRED, NET_BS_INTERFERING, NET_UE_DESIRED, NET_UE_INTERFERING};
use crate::channel::Scenario;
use crate::graph::HeteroGraph;
use crate::linalg::CMat;
use crate::nn::{DenseNet, ForwardCache, Mode, NetGrads};
use crate::{Error, Result};
use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::Rng;

/// Neighborhood plan for one (target type, edge kind) pair, shared by all
/// graphs in a batch. Indices are graph-local.
struct AggPlan {
    /// Per target: `(neighbor, edge)` pairs in ascending neighbor order.
    per_target: Vec<Vec<(usize, usize)>>,
}

fn edge_index(i_sum: usize, bs: usize, ue: usize) -> usize {
    bs * i_sum + ue
}

fn build_plans(scenario: &Scenario) -> [AggPlan; 4] {
    let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
    let mut bs_d = Vec::with_capacity(k);
    let mut bs_i = Vec::with_capacity(k);
    for b in 0..k {
        let mut d = Vec::new();
        let mut i = Vec::new();
        for u in 0..i_sum {
            let e = edge_index(i_sum, b, u);
            if scenario.serving(u) == b {
                d.push((u, e));
            } else {
                i.push((u, e));
            }
        }
        bs_d.push(d);
        bs_i.push(i);
    }
    let mut ue_d = Vec::with_capacity(i_sum);
    let mut ue_i = Vec::with_capacity(i_sum);
    for u in 0..i_sum {
        let serving = scenario.serving(u);
        let mut d = Vec::new();
        let mut i = Vec::new();
        for b in 0..k {
            let e = edge_index(i_sum, b, u);
            if b == serving {
                d.push((b, e));
            } else {
                i.push((b, e));
            }
        }
        ue_d.push(d);
        ue_i.push(i);
    }
    [
        AggPlan { per_target: bs_d },
        AggPlan { per_target: bs_i },
        AggPlan { per_target: ue_d },
        AggPlan { per_target: ue_i },
    ]
}

/// Recording of one aggregation (one net slot, one layer).
struct AggTrace {
    msg_cache: ForwardCache,
    /// Messages before weighting, one row per (target, neighbor) pair.
    msgs: Array2<f64>,
    alphas: Vec<f64>,
    /// Raw attention scores (pre-ReLU); only meaningful where `att_active`.
    pres: Vec<f64>,
    att_active: Vec<bool>,
    row_target: Vec<usize>,
    row_neighbor: Vec<usize>,
    row_edge: Vec<usize>,
    /// Per global target: half-open row range.
    groups: Vec<(usize, usize)>,
    agg: Array2<f64>,
}

struct LayerTrace {
    aggs: [AggTrace; 4],
    comb_bs_cache: ForwardCache,
    comb_ue_cache: ForwardCache,
}

/// Full recording of one batched forward pass.
pub struct HgnnTrace {
    batch: usize,
    emb_bs_cache: ForwardCache,
    emb_ue_cache: ForwardCache,
    /// Layer features 0..=L, `(batch * nodes) x D`.
    v_bs: Vec<Array2<f64>>,
    v_ue: Vec<Array2<f64>>,
    layers: Vec<LayerTrace>,
    rf_cache: ForwardCache,
    bb_cache: ForwardCache,
    analog: Vec<Vec<AnalogCache>>,
    proj: Vec<Vec<ProjCache>>,
    edge_feats: Array2<f64>,
}

#[allow(dead_code)] // trace introspection used by tests
impl HgnnTrace {
    pub(crate) fn v_bs_layer(&self, l: usize) -> &Array2<f64> {
        &self.v_bs[l]
    }

    pub(crate) fn v_ue_layer(&self, l: usize) -> &Array2<f64> {
        &self.v_ue[l]
    }

    /// `(alphas, messages, aggregate)` of one slot at one layer.
    pub(crate) fn agg_parts(&self, layer: usize, slot: usize) -> (&[f64], &Array2<f64>, &Array2<f64>) {
        let a = &self.layers[layer].aggs[slot];
        (&a.alphas, &a.msgs, &a.agg)
    }
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    net: &mut DenseNet,
    att_vec: &Array2<f64>,
    use_attention: bool,
    plan: &AggPlan,
    v_self: &Array2<f64>,
    v_neigh: &Array2<f64>,
    edges: &Array2<f64>,
    batch: usize,
    d: usize,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<AggTrace> {
    let t_count = plan.per_target.len();
    let n_count = v_neigh.nrows() / batch;
    let e_count = edges.nrows() / batch;
    let edge_w = edges.ncols();
    let rows_per_graph: usize = plan.per_target.iter().map(|v| v.len()).sum();
    let total = batch * rows_per_graph;
    let mut m_in = Array2::zeros((total, d + edge_w));
    let mut row_target = Vec::with_capacity(total);
    let mut row_neighbor = Vec::with_capacity(total);
    let mut row_edge = Vec::with_capacity(total);
    let mut groups = vec![(0usize, 0usize); batch * t_count];
    let mut r = 0usize;
    for g in 0..batch {
        for t in 0..t_count {
            let start = r;
            for &(nb, e) in &plan.per_target[t] {
                let n_row = g * n_count + nb;
                let e_row = g * e_count + e;
                m_in.slice_mut(s![r, 0..d]).assign(&v_neigh.row(n_row));
                if edge_w > 0 {
                    m_in.slice_mut(s![r, d..]).assign(&edges.row(e_row));
                }
                row_target.push(g * t_count + t);
                row_neighbor.push(n_row);
                row_edge.push(e_row);
                r += 1;
            }
            groups[g * t_count + t] = (start, r);
        }
    }
    let (msgs, msg_cache) = net.forward(&m_in, mode, rng)?;
    let mut alphas = vec![1.0f64; total];
    let mut pres = vec![0.0f64; total];
    let mut att_active = vec![false; total];
    if use_attention {
        let a = att_vec.row(0);
        for &(start, end) in &groups {
            if end - start < 2 {
                continue; // singleton groups pass the message through unweighted
            }
            let mut max_s = f64::NEG_INFINITY;
            for row in start..end {
                let vt = v_self.row(row_target[row]);
                let vn = v_neigh.row(row_neighbor[row]);
                let mut pre = 0.0;
                for j in 0..d {
                    pre += a[j] * vt[j] + a[d + j] * vn[j];
                }
                if edge_w > 0 {
                    let ev = edges.row(row_edge[row]);
                    for j in 0..edge_w {
                        pre += a[2 * d + j] * ev[j];
                    }
                }
                pres[row] = pre;
                att_active[row] = true;
                max_s = max_s.max(pre.max(0.0));
            }
            let mut denom = 0.0;
            for row in start..end {
                let e = (pres[row].max(0.0) - max_s).exp();
                alphas[row] = e;
                denom += e;
            }
            for row in start..end {
                alphas[row] /= denom;
            }
        }
    }
    let mut agg = Array2::zeros((batch * t_count, d));
    for row in 0..total {
        let t = row_target[row];
        let alpha = alphas[row];
        let mrow = msgs.row(row);
        let mut arow = agg.row_mut(t);
        for j in 0..d {
            arow[j] += alpha * mrow[j];
        }
    }
    Ok(AggTrace { msg_cache, msgs, alphas, pres, att_active, row_target, row_neighbor, row_edge, groups, agg })
}

#[allow(clippy::too_many_arguments)]
fn aggregate_backward(
    net: &DenseNet,
    att_vec: &Array2<f64>,
    tr: &AggTrace,
    v_self: &Array2<f64>,
    v_neigh: &Array2<f64>,
    edges: &Array2<f64>,
    g_agg: &Array2<f64>,
    g_v_self: &mut Array2<f64>,
    g_v_neigh: &mut Array2<f64>,
    net_grads: &mut NetGrads,
    att_grad: &mut Array2<f64>,
    d: usize,
) {
    let total = tr.row_target.len();
    let edge_w = edges.ncols();
    let mut g_msgs = Array2::zeros(tr.msgs.raw_dim());
    for row in 0..total {
        let t = tr.row_target[row];
        let alpha = tr.alphas[row];
        let grow = g_agg.row(t);
        let mut out = g_msgs.row_mut(row);
        for j in 0..d {
            out[j] = alpha * grow[j];
        }
    }
    // attention weights
    for &(start, end) in &tr.groups {
        if end - start < 2 || !tr.att_active[start] {
            continue;
        }
        let t = tr.row_target[start];
        let grow = g_agg.row(t);
        let mut g_alpha = vec![0.0; end - start];
        for (i, row) in (start..end).enumerate() {
            let mrow = tr.msgs.row(row);
            let mut acc = 0.0;
            for j in 0..d {
                acc += grow[j] * mrow[j];
            }
            g_alpha[i] = acc;
        }
        let dot: f64 =
            (start..end).enumerate().map(|(i, row)| tr.alphas[row] * g_alpha[i]).sum();
        let a = att_vec.row(0);
        for (i, row) in (start..end).enumerate() {
            let gs = tr.alphas[row] * (g_alpha[i] - dot);
            if tr.pres[row] <= 0.0 {
                continue; // ReLU gate on the raw score
            }
            let gpre = gs;
            let vt = v_self.row(tr.row_target[row]);
            let vn = v_neigh.row(tr.row_neighbor[row]);
            {
                let mut ag = att_grad.row_mut(0);
                for j in 0..d {
                    ag[j] += gpre * vt[j];
                    ag[d + j] += gpre * vn[j];
                }
                if edge_w > 0 {
                    let ev = edges.row(tr.row_edge[row]);
                    for j in 0..edge_w {
                        ag[2 * d + j] += gpre * ev[j];
                    }
                }
            }
            {
                let mut gs_row = g_v_self.row_mut(tr.row_target[row]);
                for j in 0..d {
                    gs_row[j] += gpre * a[j];
                }
            }
            {
                let mut gn_row = g_v_neigh.row_mut(tr.row_neighbor[row]);
                for j in 0..d {
                    gn_row[j] += gpre * a[d + j];
                }
            }
        }
    }
    let (ng, g_m_in) = net.backward(&tr.msg_cache, &g_msgs);
    net_grads.add_assign(&ng);
    for row in 0..total {
        let gin = g_m_in.row(row);
        let mut gn_row = g_v_neigh.row_mut(tr.row_neighbor[row]);
        for j in 0..d {
            gn_row[j] += gin[j];
        }
    }
}

fn hcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., 0..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}

impl HgnnModel {
    /// Batched forward pass over a minibatch of graphs sharing one scenario.
    /// Returns feasible precoder solutions per graph plus the recording
    /// needed for [`Self::backward`].
    pub fn forward_batch(
        &mut self,
        graphs: &[HeteroGraph],
        scenario: &Scenario,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Vec<PrecoderSolution>, HgnnTrace)> {
        self.config.check_scenario(scenario)?;
        let batch = graphs.len();
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
        let d = self.config.hidden;
        for g in graphs {
            if g.n_bs() != k || g.n_ue() != i_sum {
                return Err(Error::Dimension("graph does not match scenario shape".into()));
            }
        }
        // raw feature matrices
        let mut x_bs = Array2::zeros((batch * k, 1));
        let mut x_ue = Array2::zeros((batch * i_sum, 1 + 2 * self.config.n_sub));
        let mut edge_feats = Array2::zeros((batch * k * i_sum, 2 * self.config.n_bar));
        for (g, graph) in graphs.iter().enumerate() {
            for (b, node) in graph.bs_nodes.iter().enumerate() {
                if node.feature.len() != 1 {
                    return Err(Error::Dimension("BS feature width must be 1".into()));
                }
                x_bs[(g * k + b, 0)] = node.feature[0];
            }
            for (u, node) in graph.ue_nodes.iter().enumerate() {
                if node.feature.len() != 1 + 2 * self.config.n_sub {
                    return Err(Error::Dimension("UE feature width mismatch".into()));
                }
                for (j, &v) in node.feature.iter().enumerate() {
                    x_ue[(g * i_sum + u, j)] = v;
                }
            }
            for (e, edge) in graph.edges.iter().enumerate() {
                if edge.feature.len() != 2 * self.config.n_bar {
                    return Err(Error::Dimension("edge feature width mismatch".into()));
                }
                for (j, &v) in edge.feature.iter().enumerate() {
                    edge_feats[(g * k * i_sum + e, j)] = v;
                }
            }
        }
        let (v_bs0, emb_bs_cache) = self.emb_bs.forward(&x_bs, mode, rng)?;
        let (v_ue0, emb_ue_cache) = self.emb_ue.forward(&x_ue, mode, rng)?;
        let plans = build_plans(scenario);
        let mut v_bs = vec![v_bs0];
        let mut v_ue = vec![v_ue0];
        let mut layers = Vec::with_capacity(self.config.layers);
        for _ in 0..self.config.layers {
            let vb = v_bs.last().unwrap().clone();
            let vu = v_ue.last().unwrap().clone();
            let attention = self.config.attention;
            let bs_d = aggregate(
                &mut self.msg[NET_BS_DESIRED], &self.att[NET_BS_DESIRED], attention,
                &plans[NET_BS_DESIRED], &vb, &vu, &edge_feats, batch, d, mode, rng,
            )?;
            let bs_i = aggregate(
                &mut self.msg[NET_BS_INTERFERING], &self.att[NET_BS_INTERFERING], attention,
                &plans[NET_BS_INTERFERING], &vb, &vu, &edge_feats, batch, d, mode, rng,
            )?;
            let ue_d = aggregate(
                &mut self.msg[NET_UE_DESIRED], &self.att[NET_UE_DESIRED], attention,
                &plans[NET_UE_DESIRED], &vu, &vb, &edge_feats, batch, d, mode, rng,
            )?;
            let ue_i = aggregate(
                &mut self.msg[NET_UE_INTERFERING], &self.att[NET_UE_INTERFERING], attention,
                &plans[NET_UE_INTERFERING], &vu, &vb, &edge_feats, batch, d, mode, rng,
            )?;
            // the two edge-kind aggregates are summed before combination
            let comb_in_bs = hcat(&vb, &(&bs_d.agg + &bs_i.agg));
            let (q_bs, comb_bs_cache) = self.comb_bs.forward(&comb_in_bs, mode, rng)?;
            let comb_in_ue = hcat(&vu, &(&ue_d.agg + &ue_i.agg));
            let (q_ue, comb_ue_cache) = self.comb_ue.forward(&comb_in_ue, mode, rng)?;
            let v_bs_next = if self.config.residual { q_bs + &vb } else { q_bs };
            let v_ue_next = if self.config.residual { q_ue + &vu } else { q_ue };
            v_bs.push(v_bs_next);
            v_ue.push(v_ue_next);
            layers.push(LayerTrace { aggs: [bs_d, bs_i, ue_d, ue_i], comb_bs_cache, comb_ue_cache });
        }
        // heads
        let v_bs_last = v_bs.last().unwrap().clone();
        let v_ue_last = v_ue.last().unwrap().clone();
        let (rf_out, rf_cache) = self.head_rf.forward(&v_bs_last, mode, rng)?;
        let mut bb_in = Array2::zeros((batch * i_sum, self.config.bb_input_width()));
        for g in 0..batch {
            for u in 0..i_sum {
                let serving = scenario.serving(u);
                let row = g * i_sum + u;
                bb_in.slice_mut(s![row, 0..d]).assign(&v_bs_last.row(g * k + serving));
                bb_in.slice_mut(s![row, d..2 * d]).assign(&v_ue_last.row(row));
                if self.config.n_bar > 0 {
                    let e_row = g * k * i_sum + edge_index(i_sum, serving, u);
                    bb_in.slice_mut(s![row, 2 * d..]).assign(&edge_feats.row(e_row));
                }
            }
        }
        let (bb_out, bb_cache) = self.head_bb.forward(&bb_in, mode, rng)?;
        let n_rf = self.config.n_rf;
        let mut solutions = Vec::with_capacity(batch);
        let mut analog = Vec::with_capacity(batch);
        let mut proj = Vec::with_capacity(batch);
        for g in 0..batch {
            let mut per_bs = Vec::with_capacity(k);
            let mut a_caches = Vec::with_capacity(k);
            let mut p_caches = Vec::with_capacity(k);
            for b in 0..k {
                let raw_row = rf_out.row(g * k + b);
                let (rf, a_cache) = analog_from_raw(
                    raw_row.as_slice().expect("contiguous row"),
                    self.config.structure,
                    self.config.n_mm,
                    n_rf,
                );
                let ues = scenario.ues_of(b);
                let i_k = ues.len();
                let mut bb_raw: CMat = Array2::zeros((n_rf, i_k));
                for (local, u) in ues.enumerate() {
                    let row = bb_out.row(g * i_sum + u);
                    for j in 0..n_rf {
                        bb_raw[(j, local)] = Complex64::new(row[2 * j], row[2 * j + 1]);
                    }
                }
                let (bb, p_cache) = project_power(&rf, &bb_raw, scenario.power[b]);
                per_bs.push(BsPrecoder { rf, bb });
                a_caches.push(a_cache);
                p_caches.push(p_cache);
            }
            solutions.push(PrecoderSolution { per_bs });
            analog.push(a_caches);
            proj.push(p_caches);
        }
        let trace = HgnnTrace {
            batch,
            emb_bs_cache,
            emb_ue_cache,
            v_bs,
            v_ue,
            layers,
            rf_cache,
            bb_cache,
            analog,
            proj,
            edge_feats,
        };
        Ok((solutions, trace))
    }

    /// Eval-mode solution for a single sample graph.
    pub fn solve(&mut self, graph: &HeteroGraph, scenario: &Scenario) -> Result<PrecoderSolution> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let (mut sols, _) = self.forward_batch(std::slice::from_ref(graph), scenario, Mode::Eval, &mut rng)?;
        Ok(sols.pop().unwrap())
    }

    /// Backward pass: gradients of a scalar objective given its gradients
    /// with respect to every final precoder entry.
    pub fn backward(
        &self,
        trace: &HgnnTrace,
        scenario: &Scenario,
        solutions: &[PrecoderSolution],
        dsols: &[SolutionGrads],
    ) -> HgnnGrads {
        let batch = trace.batch;
        let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
        let d = self.config.hidden;
        let n_rf = self.config.n_rf;
        let mut grads = HgnnGrads::zeros(self);

        // heads
        let rf_width = self.config.rf_output_width();
        let mut g_rf_out = Array2::zeros((batch * k, rf_width));
        let mut g_bb_out = Array2::zeros((batch * i_sum, 2 * n_rf));
        for g in 0..batch {
            for b in 0..k {
                let mut g_rf_total = dsols[g].d_rf[b].clone();
                let (g_bb_raw, g_rf_extra) =
                    project_backward(&trace.proj[g][b], &solutions[g].per_bs[b].rf, &dsols[g].d_bb[b]);
                g_rf_total += &g_rf_extra;
                let raw_grad = analog_backward(&trace.analog[g][b], &g_rf_total);
                for (j, v) in raw_grad.iter().enumerate() {
                    g_rf_out[(g * k + b, j)] = *v;
                }
                for (local, u) in scenario.ues_of(b).enumerate() {
                    let mut row = g_bb_out.row_mut(g * i_sum + u);
                    for j in 0..n_rf {
                        row[2 * j] = g_bb_raw[(j, local)].re;
                        row[2 * j + 1] = g_bb_raw[(j, local)].im;
                    }
                }
            }
        }
        let mut g_v_bs = Array2::zeros((batch * k, d));
        let mut g_v_ue = Array2::zeros((batch * i_sum, d));
        {
            let (ng, g_rf_in) = self.head_rf.backward(&trace.rf_cache, &g_rf_out);
            grads.head_rf.add_assign(&ng);
            g_v_bs += &g_rf_in;
        }
        {
            let (ng, g_bb_in) = self.head_bb.backward(&trace.bb_cache, &g_bb_out);
            grads.head_bb.add_assign(&ng);
            for g in 0..batch {
                for u in 0..i_sum {
                    let row = g_bb_in.row(g * i_sum + u);
                    let serving = scenario.serving(u);
                    {
                        let mut t = g_v_bs.row_mut(g * k + serving);
                        for j in 0..d {
                            t[j] += row[j];
                        }
                    }
                    {
                        let mut t = g_v_ue.row_mut(g * i_sum + u);
                        for j in 0..d {
                            t[j] += row[d + j];
                        }
                    }
                }
            }
        }
        // layers, in reverse
        for (li, lt) in trace.layers.iter().enumerate().rev() {
            let vb_prev = &trace.v_bs[li];
            let vu_prev = &trace.v_ue[li];
            let mut g_vb_prev = Array2::zeros(vb_prev.raw_dim());
            let mut g_vu_prev = Array2::zeros(vu_prev.raw_dim());
            if self.config.residual {
                g_vb_prev += &g_v_bs;
                g_vu_prev += &g_v_ue;
            }
            // combination nets
            let (ng_bs, g_comb_in_bs) = self.comb_bs.backward(&lt.comb_bs_cache, &g_v_bs);
            grads.comb_bs.add_assign(&ng_bs);
            let (ng_ue, g_comb_in_ue) = self.comb_ue.backward(&lt.comb_ue_cache, &g_v_ue);
            grads.comb_ue.add_assign(&ng_ue);
            g_vb_prev += &g_comb_in_bs.slice(s![.., 0..d]);
            g_vu_prev += &g_comb_in_ue.slice(s![.., 0..d]);
            let g_agg_bs = g_comb_in_bs.slice(s![.., d..]).to_owned();
            let g_agg_ue = g_comb_in_ue.slice(s![.., d..]).to_owned();
            // aggregations: both edge kinds receive the same summed gradient
            for (slot, g_agg, v_self, v_neigh) in [
                (NET_BS_DESIRED, &g_agg_bs, vb_prev, vu_prev),
                (NET_BS_INTERFERING, &g_agg_bs, vb_prev, vu_prev),
                (NET_UE_DESIRED, &g_agg_ue, vu_prev, vb_prev),
                (NET_UE_INTERFERING, &g_agg_ue, vu_prev, vb_prev),
            ] {
                let (g_self, g_neigh): (&mut Array2<f64>, &mut Array2<f64>) =
                    if slot == NET_BS_DESIRED || slot == NET_BS_INTERFERING {
                        (&mut g_vb_prev, &mut g_vu_prev)
                    } else {
                        (&mut g_vu_prev, &mut g_vb_prev)
                    };
                aggregate_backward(
                    &self.msg[slot],
                    &self.att[slot],
                    &lt.aggs[slot],
                    v_self,
                    v_neigh,
                    &trace.edge_feats,
                    g_agg,
                    g_self,
                    g_neigh,
                    &mut grads.msg[slot],
                    &mut grads.att[slot],
                    d,
                );
            }
            g_v_bs = g_vb_prev;
            g_v_ue = g_vu_prev;
        }
        // embeddings
        {
            let (ng, _) = self.emb_bs.backward(&trace.emb_bs_cache, &g_v_bs);
            grads.emb_bs.add_assign(&ng);
            let (ng, _) = self.emb_ue.backward(&trace.emb_ue_cache, &g_v_ue);
            grads.emb_ue.add_assign(&ng);
        }
        grads
    }
}
