//! Minimal dense-network engine: affine layers with BatchNorm on every
//! layer input, ReLU on hidden layers, inverted dropout, exact reverse-mode
//! gradients (including through batch statistics), and Adam.

use crate::{Error, Result};
use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct Layer {
    /// Affine weight, `in x out`.
    w: Array2<f64>,
    /// Bias, `1 x out`.
    b: Array2<f64>,
    /// BatchNorm scale on the layer input, `1 x in`.
    gamma: Array2<f64>,
    /// BatchNorm shift, `1 x in`.
    beta: Array2<f64>,
    running_mean: Array2<f64>,
    running_var: Array2<f64>,
}

/// Fully-connected network. Per layer: BatchNorm(input) -> affine -> ReLU
/// (hidden layers; the output layer is linear unless `output_relu`) ->
/// dropout (train mode, hidden layers only).
#[derive(Debug, Clone)]
pub struct DenseNet {
    widths: Vec<usize>,
    layers: Vec<Layer>,
    pub dropout: f64,
    output_relu: bool,
}

pub(crate) struct LayerCache {
    x: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array2<f64>,
    z: Array2<f64>,
    drop_mask: Option<Array2<f64>>,
    batch_stats: bool,
    relu: bool,
}

/// Recording of one forward pass, consumed by [`DenseNet::backward`].
pub struct ForwardCache {
    pub(crate) layers: Vec<LayerCache>,
}

impl ForwardCache {
#[allow(dead_code)]
    pub(crate) fn batch_mean_var(&self, layer: usize) -> (Array2<f64>, Array2<f64>) {
        let c = &self.layers[layer];
        let mean = c.x.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let centered = &c.x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        (mean, var)
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Array2<f64>,
    pub db: Array2<f64>,
    pub dgamma: Array2<f64>,
    pub dbeta: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn add_assign(&mut self, other: &NetGrads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.dw += &b.dw;
            a.db += &b.db;
            a.dgamma += &b.dgamma;
            a.dbeta += &b.dbeta;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            l.dw *= s;
            l.db *= s;
            l.dgamma *= s;
            l.dbeta *= s;
        }
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.dw, &l.db, &l.dgamma, &l.dbeta])
            .collect()
    }
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases, identity BatchNorm.
    pub fn new(widths: &[usize], dropout: f64, output_relu: bool, rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        assert!((0.0..1.0).contains(&dropout));
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for win in widths.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit));
            layers.push(Layer {
                w,
                b: Array2::zeros((1, fan_out)),
                gamma: Array2::ones((1, fan_in)),
                beta: Array2::zeros((1, fan_in)),
                running_mean: Array2::zeros((1, fan_in)),
                running_var: Array2::ones((1, fan_in)),
            });
        }
        DenseNet { widths: widths.to_vec(), layers, dropout, output_relu }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Forward pass. Train mode normalizes with batch statistics (and
    /// updates the running statistics); eval mode uses running statistics
    /// and disables dropout. Returns the output and a recording for
    /// [`Self::backward`].
    pub fn forward(
        &mut self,
        x: &Array2<f64>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension(format!(
                "input width {} != expected {}",
                x.ncols(),
                self.input_width()
            )));
        }
        let n_layers = self.layers.len();
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(n_layers);
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let is_output = li == n_layers - 1;
            let relu = !is_output || self.output_relu;
            let xin = cur;
            let (mean, var, batch_stats) = match mode {
                Mode::Train => {
                    let mean = xin.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
                    let centered = &xin - &mean;
                    let var = centered
                        .mapv(|v| v * v)
                        .mean_axis(Axis(0))
                        .unwrap()
                        .insert_axis(Axis(0));
                    layer.running_mean =
                        &layer.running_mean * (1.0 - BN_MOMENTUM) + &mean * BN_MOMENTUM;
                    layer.running_var =
                        &layer.running_var * (1.0 - BN_MOMENTUM) + &var * BN_MOMENTUM;
                    (mean, var, true)
                }
                Mode::Eval => (layer.running_mean.clone(), layer.running_var.clone(), false),
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = (&xin - &mean) * &inv_std;
            let y = &xhat * &layer.gamma + &layer.beta;
            let mut z = y.dot(&layer.w);
            z += &layer.b;
            let mut act = if relu { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            let drop_mask = if mode == Mode::Train && !is_output && self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                let mask = Array2::from_shape_fn(act.raw_dim(), |_| {
                    if rng.gen_range(0.0..1.0) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                act = &act * &mask;
                Some(mask)
            } else {
                None
            };
            caches.push(LayerCache { x: xin, xhat, inv_std, z, drop_mask, batch_stats, relu });
            cur = act;
        }
        Ok((cur, ForwardCache { layers: caches }))
    }

    /// Eval-mode forward without recording; does not touch any state.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension(format!(
                "input width {} != expected {}",
                x.ncols(),
                self.input_width()
            )));
        }
        let n_layers = self.layers.len();
        let mut cur = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let relu = li != n_layers - 1 || self.output_relu;
            let inv_std = layer.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let y = (&cur - &layer.running_mean) * &inv_std * &layer.gamma + &layer.beta;
            let mut z = y.dot(&layer.w);
            z += &layer.b;
            cur = if relu { z.mapv(|v| v.max(0.0)) } else { z };
        }
        Ok(cur)
    }

    /// Exact reverse-mode gradients of the recorded forward pass. Returns
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> (NetGrads, Array2<f64>) {
        assert_eq!(cache.layers.len(), self.layers.len(), "cache does not match network");
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut dact = grad_out.clone();
        for (layer, lc) in self.layers.iter().zip(cache.layers.iter()).rev() {
            let mut dz_post = dact;
            if let Some(mask) = &lc.drop_mask {
                dz_post = &dz_post * mask;
            }
            let dz = if lc.relu {
                let gate = lc.z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                &dz_post * &gate
            } else {
                dz_post
            };
            // z = y W + b with y = gamma * xhat + beta
            let y = &lc.xhat * &layer.gamma + &layer.beta;
            let dw = y.t().dot(&dz);
            let db = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dy = dz.dot(&layer.w.t());
            let dgamma = (&dy * &lc.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
            let dbeta = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dxhat = &dy * &layer.gamma;
            let dx = if lc.batch_stats {
                let n = lc.x.nrows() as f64;
                let sum_dxhat = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                let sum_dxhat_xhat =
                    (&dxhat * &lc.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                (&(&dxhat * n) - &sum_dxhat - &(&lc.xhat * &sum_dxhat_xhat)) * &lc.inv_std / n
            } else {
                &dxhat * &lc.inv_std
            };
            grads.push(LayerGrads { dw, db, dgamma, dbeta });
            dact = dx;
        }
        grads.reverse();
        (NetGrads { layers: grads }, dact)
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: Array2::zeros(l.w.raw_dim()),
                    db: Array2::zeros(l.b.raw_dim()),
                    dgamma: Array2::zeros(l.gamma.raw_dim()),
                    dbeta: Array2::zeros(l.beta.raw_dim()),
                })
                .collect(),
        }
    }

    /// Trainable tensors in a fixed order (matching [`NetGrads::tensors`]).
    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b, &mut l.gamma, &mut l.beta])
            .collect()
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.w, &l.b, &l.gamma, &l.beta])
            .collect()
    }

    /// Running statistics, per layer, in order `(mean, var)`.
    pub fn stats(&self) -> Vec<(&Array2<f64>, &Array2<f64>)> {
        self.layers.iter().map(|l| (&l.running_mean, &l.running_var)).collect()
    }

    pub fn stats_mut(&mut self) -> Vec<(&mut Array2<f64>, &mut Array2<f64>)> {
        self.layers
            .iter_mut()
            .map(|l| (&mut l.running_mean, &mut l.running_var))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Learning-rate schedule: `base * decay^floor(epoch / every)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub every: usize,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        self.base * self.decay.powi((epoch / self.every.max(1)) as i32)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base: 1e-3, decay: 0.9, every: 5 }
    }
}

/// Adam state over a fixed ordered set of parameter tensors.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. `params` and `grads` must be aligned and keep the
    /// same order across calls.
    pub fn step(
        &mut self,
        lr: f64,
        params: &mut [&mut Array2<f64>],
        grads: &[&Array2<f64>],
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Training(format!(
                "parameter/gradient count mismatch: {} vs {}",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
        }
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in tensor {i} at step {}",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(*g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> StdRng {
        StdRng::seed_from_u64(seed)
    }

    fn random_mat(r: usize, c: usize, rng: &mut StdRng) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_configuration_passes_input_through() {
        let mut r = rng(0);
        let mut net = DenseNet::new(&[3, 3], 0.0, false, &mut r);
        {
            let mut ps = net.params_mut();
            *ps[0] = Array2::eye(3); // w
            *ps[1] = Array2::zeros((1, 3)); // b
        }
        for (_, var) in net.stats_mut() {
            var.fill(1.0 - BN_EPS); // exact identity normalization
        }
        let x = random_mat(5, 3, &mut r);
        let out = net.forward_eval(&x).unwrap();
        for (a, b) in out.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn dropout_zero_train_matches_eval_with_frozen_stats() {
        let mut r = rng(1);
        let mut net = DenseNet::new(&[4, 6, 2], 0.0, false, &mut r);
        let x = random_mat(8, 4, &mut r);
        let (train_out, cache) = net.forward(&x, Mode::Train, &mut r).unwrap();
        // freeze running statistics at this batch's statistics
        let n_layers = net.n_layers();
        for li in 0..n_layers {
            let (mean, var) = cache.batch_mean_var(li);
            let stats = &mut net.stats_mut()[li];
            stats.0.assign(&mean);
            stats.1.assign(&var);
        }
        let eval_out = net.forward_eval(&x).unwrap();
        for (a, b) in eval_out.iter().zip(train_out.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let mut r = rng(2);
        let mut net = DenseNet::new(&[3, 4, 2], 0.0, false, &mut r);
        let x = random_mat(6, 3, &mut r);
        let (out, _) = net.forward(&x, Mode::Train, &mut r).unwrap();

        // independent re-evaluation
        let ps = net.params();
        let layer = |x: &Array2<f64>,
                     w: &Array2<f64>,
                     b: &Array2<f64>,
                     gamma: &Array2<f64>,
                     beta: &Array2<f64>,
                     relu: bool| {
            let n = x.nrows();
            let d = x.ncols();
            let mut y = Array2::zeros((n, w.ncols()));
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            for j in 0..d {
                for i in 0..n {
                    mean[j] += x[(i, j)];
                }
                mean[j] /= n as f64;
                for i in 0..n {
                    var[j] += (x[(i, j)] - mean[j]).powi(2);
                }
                var[j] /= n as f64;
            }
            for i in 0..n {
                for o in 0..w.ncols() {
                    let mut acc = b[(0, o)];
                    for j in 0..d {
                        let xh = (x[(i, j)] - mean[j]) / (var[j] + BN_EPS).sqrt();
                        acc += (gamma[(0, j)] * xh + beta[(0, j)]) * w[(j, o)];
                    }
                    y[(i, o)] = if relu { acc.max(0.0) } else { acc };
                }
            }
            y
        };
        let h = layer(&x, ps[0], ps[1], ps[2], ps[3], true);
        let expected = layer(&h, ps[4], ps[5], ps[6], ps[7], false);
        for (a, b) in out.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let widths = [4usize, 6, 5, 3];
        let mut r = rng(12);
        let mut net = DenseNet::new(&widths, 0.0, false, &mut r);
        let x = random_mat(7, widths[0], &mut r);
        let probe = random_mat(7, widths[3], &mut r);
        let loss = |net: &mut DenseNet, r: &mut StdRng| -> f64 {
            let (out, _) = net.forward(&x, Mode::Train, r).unwrap();
            (&out * &probe).sum()
        };
        let (_, cache) = net.forward(&x, Mode::Train, &mut r).unwrap();
        let (grads, _) = net.backward(&cache, &probe);
        let analytic: Vec<f64> = grads
            .tensors()
            .iter()
            .flat_map(|t| t.iter().copied().collect::<Vec<_>>())
            .collect();

        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        let n_params = net.params().len();
        let mut flat_idx = 0;
        for pi in 0..n_params {
            let n_el = net.params()[pi].len();
            for e in 0..n_el {
                let orig = net.params()[pi].as_slice().unwrap()[e];
                net.params_mut()[pi].as_slice_mut().unwrap()[e] = orig + h;
                let lp = loss(&mut net, &mut r);
                net.params_mut()[pi].as_slice_mut().unwrap()[e] = orig - h;
                let lm = loss(&mut net, &mut r);
                net.params_mut()[pi].as_slice_mut().unwrap()[e] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = analytic[flat_idx];
                let rel = (an - fd).abs() / (an.abs() + fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
                flat_idx += 1;
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut r = rng(5);
        let mut net = DenseNet::new(&[3, 4, 2], 0.0, false, &mut r);
        let x = random_mat(5, 3, &mut r);
        let (out, cache) = net.forward(&x, Mode::Train, &mut r).unwrap();
        let (grads, dx) = net.backward(&cache, &Array2::zeros(out.raw_dim()));
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_unit_gets_zero_weight_gradient() {
        let mut r = rng(6);
        let mut net = DenseNet::new(&[3, 4, 2], 0.0, false, &mut r);
        // clamp hidden unit 1 dead via a very negative bias
        {
            let mut ps = net.params_mut();
            ps[1][(0, 1)] = -1e6;
        }
        let x = random_mat(5, 3, &mut r);
        let (out, cache) = net.forward(&x, Mode::Train, &mut r).unwrap();
        let upstream = Array2::ones(out.raw_dim());
        let (grads, _) = net.backward(&cache, &upstream);
        let dw0 = &grads.layers[0].dw;
        for j in 0..3 {
            assert_eq!(dw0[(j, 1)], 0.0);
        }
        assert_eq!(grads.layers[0].db[(0, 1)], 0.0);
    }

    #[test]
    fn eval_forward_is_pure() {
        let mut r = rng(7);
        let net = DenseNet::new(&[3, 5, 2], 0.3, false, &mut r);
        let x = random_mat(4, 3, &mut r);
        let a = net.forward_eval(&x).unwrap();
        let b = net.forward_eval(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batchnorm_is_batch_permutation_equivariant() {
        let mut r = rng(8);
        let mut net = DenseNet::new(&[4, 5, 3], 0.0, false, &mut r);
        let x = random_mat(6, 4, &mut r);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut xp = Array2::zeros((6, 4));
        for (i, &p) in perm.iter().enumerate() {
            xp.row_mut(i).assign(&x.row(p));
        }
        let (out, _) = net.forward(&x, Mode::Train, &mut r).unwrap();
        let (outp, _) = net.forward(&xp, Mode::Train, &mut r).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..3 {
                assert_abs_diff_eq!(outp[(i, j)], out[(p, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut r = rng(9);
        let mut net = DenseNet::new(&[3, 2], 0.0, false, &mut r);
        let x = random_mat(4, 5, &mut r);
        assert!(net.forward(&x, Mode::Eval, &mut r).is_err());
        assert!(net.forward_eval(&x).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut r = rng(10);
        let mut p = random_mat(3, 3, &mut r);
        let orig = p.clone();
        let g = Array2::zeros((3, 3));
        let mut adam = Adam::new();
        adam.step(1e-3, &mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, orig);
    }

    #[test]
    fn adam_constant_gradient_update_magnitude_approaches_lr() {
        let mut p = Array2::from_elem((1, 1), 5.0);
        let g = Array2::from_elem((1, 1), 0.37);
        let mut adam = Adam::new();
        let lr = 1e-3;
        let mut prev = p[(0, 0)];
        let mut last_step = 0.0;
        for _ in 0..2000 {
            adam.step(lr, &mut [&mut p], &[&g]).unwrap();
            last_step = (p[(0, 0)] - prev).abs();
            prev = p[(0, 0)];
        }
        // bias-corrected moments saturate at |m / sqrt(v)| -> 1
        assert!((last_step - lr).abs() < 1e-6, "step magnitude {last_step}");
    }

    #[test]
    fn adam_rejects_nan_gradient() {
        let mut p = Array2::from_elem((1, 1), 1.0);
        let g = Array2::from_elem((1, 1), f64::NAN);
        let mut adam = Adam::new();
        assert!(adam.step(1e-3, &mut [&mut p], &[&g]).is_err());
    }

    #[test]
    fn lr_schedule_matches_table() {
        let s = LrSchedule { base: 1e-3, decay: 0.9, every: 5 };
        for e in 0..5 {
            assert_abs_diff_eq!(s.at(e), 1e-3, epsilon = 1e-15);
        }
        for e in 5..10 {
            assert_abs_diff_eq!(s.at(e), 9e-4, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.at(12), 1e-3 * 0.9 * 0.9, epsilon = 1e-15);
    }
}
