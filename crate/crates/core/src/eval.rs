//! Rates and spectral efficiency, complexity and overhead accounting,
//! experiment drivers, and the CSV result schema.

use crate::channel::{ChannelSample, Scenario, Structure};
use crate::hgnn::{HgnnConfig, PrecoderSolution};
use crate::linalg::CMat;
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Cross gains `c[u1][u2] = h_{u1, serving(u2)}^H f_{u2}`: the complex
/// amplitude of UE `u2`'s stream as seen by UE `u1`. Rates and their
/// gradients both derive from this matrix.
pub fn cross_gains(sol: &PrecoderSolution, sample: &ChannelSample, scenario: &Scenario) -> CMat {
    let i_sum = scenario.n_ue();
    let mut c: CMat = Array2::zeros((i_sum, i_sum));
    for k in 0..scenario.n_bs() {
        let cols = sol.columns(k);
        for (local, u2) in scenario.ues_of(k).enumerate() {
            for u1 in 0..i_sum {
                let h = sample.mm_full.index_axis(ndarray::Axis(0), u1);
                let hk = h.row(k);
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..hk.len() {
                    acc += hk[n].conj() * cols[(n, local)];
                }
                c[(u1, u2)] = acc;
            }
        }
    }
    c
}

/// Per-UE rates from the cross-gain matrix: desired power over intracell
/// plus intercell interference plus noise.
pub fn rates_from_cross_gains(c: &CMat, noise: f64) -> Vec<f64> {
    let i_sum = c.nrows();
    (0..i_sum)
        .map(|u| {
            let s = c[(u, u)].norm_sqr();
            let t: f64 = (0..i_sum).filter(|&v| v != u).map(|v| c[(u, v)].norm_sqr()).sum();
            (1.0 + s / (t + noise)).log2()
        })
        .collect()
}

/// Per-UE achievable rates of a hybrid solution evaluated on the full
/// mmWave CSI.
pub fn rate_per_ue(sol: &PrecoderSolution, sample: &ChannelSample, scenario: &Scenario) -> Vec<f64> {
    rates_from_cross_gains(&cross_gains(sol, sample, scenario), scenario.noise)
}

pub fn sum_se(sol: &PrecoderSolution, sample: &ChannelSample, scenario: &Scenario) -> f64 {
    rate_per_ue(sol, sample, scenario).iter().sum()
}

/// Same rate formula for fully digital precoders (one `n_mm x I_k` matrix
/// per BS).
pub fn rate_per_ue_digital(v: &[CMat], sample: &ChannelSample, scenario: &Scenario) -> Vec<f64> {
    let i_sum = scenario.n_ue();
    let mut c: CMat = Array2::zeros((i_sum, i_sum));
    for k in 0..scenario.n_bs() {
        for (local, u2) in scenario.ues_of(k).enumerate() {
            for u1 in 0..i_sum {
                let h = sample.mm_full.index_axis(ndarray::Axis(0), u1);
                let hk = h.row(k);
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..hk.len() {
                    acc += hk[n].conj() * v[k][(n, local)];
                }
                c[(u1, u2)] = acc;
            }
        }
    }
    rates_from_cross_gains(&c, scenario.noise)
}

/// FLOPs of one dense net: per layer `4*in` for BatchNorm, `2*in*out` for
/// the affine map, `4*out` for activations on hidden layers.
pub fn dense_flops(widths: &[usize]) -> u64 {
    let n_layers = widths.len() - 1;
    let mut total = 0u64;
    for (li, win) in widths.windows(2).enumerate() {
        let (w_in, w_out) = (win[0] as u64, win[1] as u64);
        total += 4 * w_in + 2 * w_in * w_out;
        if li + 1 < n_layers {
            total += 4 * w_out;
        }
    }
    total
}

/// FLOPs of one attention evaluation: a dot product over the concatenated
/// feature width plus the scalar ReLU/exp/normalization tail.
pub fn attention_flops(att_width: usize) -> u64 {
    2 * att_width as u64 + 8
}

fn net_widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Total forward FLOPs of the HGNN on one sample: the aggregation and
/// combination terms scale with the layer count, the heads run once. The
/// per-BS term sums over cells to support unequal cell sizes.
pub fn flops_estimate(config: &HgnnConfig, scenario: &Scenario) -> u64 {
    let (k, i_sum) = (scenario.n_bs() as u64, scenario.n_ue() as u64);
    let d = config.hidden;
    let c_p = dense_flops(&net_widths(config.msg_input_width(), &config.msg_hidden, d));
    let c_att = if config.attention { attention_flops(config.att_width()) } else { 0 };
    let c_q = dense_flops(&net_widths(config.comb_input_width(), &config.comb_hidden, d));
    let c_rf = dense_flops(&net_widths(d, &config.rf_hidden, config.rf_output_width()));
    let c_bb = dense_flops(&net_widths(config.bb_input_width(), &config.bb_hidden, 2 * config.n_rf));
    let mut per_layer = 0u64;
    for ik in scenario.ues_per_bs.iter().map(|&i| i as u64) {
        per_layer += ik * (c_p + c_att) + (i_sum - ik) * (c_p + c_att) + c_q;
    }
    per_layer += i_sum * ((c_p + c_att) + (k - 1) * (c_p + c_att) + c_q);
    config.layers as u64 * per_layer + k * c_rf + i_sum * c_bb
}

/// Precoding schemes compared in the overhead table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Hgnn,
    Mlp,
    AltMin,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "hgnn" => Ok(Method::Hgnn),
            "mlp" => Ok(Method::Mlp),
            "altmin" => Ok(Method::AltMin),
            other => Err(Error::Input(format!("unknown overhead method '{other}'"))),
        }
    }
}

/// Pilot symbols needed to sound `n` active antennas: one orthogonal pilot
/// per antenna.
pub fn pilots(n: usize) -> u64 {
    n as u64
}

/// Extra mmWave pilot count and backhaul scalar count of a scheme.
pub fn overhead_report(scenario: &Scenario, method: Method) -> (u64, u64) {
    let (k, i_sum) = (scenario.n_bs() as u64, scenario.n_ue() as u64);
    let (n_m, n_bar) = (scenario.n_mm, scenario.n_bar);
    let csi_antennas = match method {
        Method::Hgnn | Method::Mlp => n_bar,
        Method::AltMin => n_m,
    };
    let pilot = k * i_sum * pilots(csi_antennas);
    let backhaul = match method {
        Method::Mlp => 0,
        Method::Hgnn | Method::AltMin => {
            let csi = k * i_sum * csi_antennas as u64;
            let matrices: u64 = scenario
                .ues_per_bs
                .iter()
                .map(|&ik| {
                    let ik = ik as u64;
                    match scenario.structure {
                        Structure::Fully => n_m as u64 * ik + ik * ik,
                        Structure::Partially => n_m as u64 + ik * ik,
                    }
                })
                .sum();
            csi + matrices
        }
    };
    (pilot, backhaul)
}

/// Permutes the UEs of one cell (by local index) in a sample, reordering
/// the sub-6GHz rows and the mmWave tensors consistently.
pub fn permute_ues_within_cell(
    sample: &ChannelSample,
    scenario: &Scenario,
    cell: usize,
    perm: &[usize],
) -> ChannelSample {
    let range = scenario.ues_of(cell);
    assert_eq!(perm.len(), range.len());
    let map_ue = |u: usize| -> usize {
        if range.contains(&u) {
            range.start + perm[u - range.start]
        } else {
            u
        }
    };
    let i_sum = scenario.n_ue();
    let mut out = sample.clone();
    for u in 0..i_sum {
        let src = map_ue(u);
        out.sub6.row_mut(u).assign(&sample.sub6.row(src));
        out.mm_full
            .index_axis_mut(ndarray::Axis(0), u)
            .assign(&sample.mm_full.index_axis(ndarray::Axis(0), src));
        out.mm_partial
            .index_axis_mut(ndarray::Axis(0), u)
            .assign(&sample.mm_partial.index_axis(ndarray::Axis(0), src));
    }
    out
}

/// Permutes the BS order of a scenario and sample, carrying each cell's
/// UEs along with their BS. Returns the permuted sample, the permuted
/// scenario, and the induced global UE permutation (`new index ->
/// old index`).
pub fn permute_bs(
    sample: &ChannelSample,
    scenario: &Scenario,
    perm: &[usize],
) -> (ChannelSample, Scenario, Vec<usize>) {
    let k = scenario.n_bs();
    assert_eq!(perm.len(), k);
    let mut new_scenario = scenario.clone();
    new_scenario.ues_per_bs = perm.iter().map(|&p| scenario.ues_per_bs[p]).collect();
    new_scenario.power = perm.iter().map(|&p| scenario.power[p]).collect();
    let mut ue_map = Vec::with_capacity(scenario.n_ue());
    for &p in perm {
        ue_map.extend(scenario.ues_of(p));
    }
    let i_sum = scenario.n_ue();
    let mut out = sample.clone();
    for u in 0..i_sum {
        let src_u = ue_map[u];
        out.sub6.row_mut(u).assign(&sample.sub6.row(src_u));
        for (b, &src_b) in perm.iter().enumerate() {
            for n in 0..scenario.n_mm {
                out.mm_full[(u, b, n)] = sample.mm_full[(src_u, src_b, n)];
            }
            for n in 0..scenario.n_bar {
                out.mm_partial[(u, b, n)] = sample.mm_partial[(src_u, src_b, n)];
            }
        }
    }
    (out, new_scenario, ue_map)
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub structure: String,
    pub k: usize,
    pub i_sum: usize,
    pub n_bar: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub mean_sum_se: f64,
    pub wallclock_s: f64,
    pub flops: u64,
    pub pilot_overhead: u64,
    pub backhaul_overhead: u64,
}

pub const CSV_HEADER: &str =
    "experiment,method,structure,K,I_sum,N_bar,snr_db,seed,mean_sum_se,wallclock_s,flops,pilot_overhead,backhaul_overhead";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{},{:.12e},{:.6},{},{},{}",
            self.experiment,
            self.method,
            self.structure,
            self.k,
            self.i_sum,
            self.n_bar,
            self.snr_db,
            self.seed,
            self.mean_sum_se,
            self.wallclock_s,
            self.flops,
            self.pilot_overhead,
            self.backhaul_overhead
        )
    }

    pub fn from_csv(line: &str) -> Result<ResultRow> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(Error::Input(format!("CSV row has {} fields, expected 13", f.len())));
        }
        let num =
            |s: &str| s.parse::<f64>().map_err(|e| Error::Input(format!("bad number '{s}': {e}")));
        let int =
            |s: &str| s.parse::<u64>().map_err(|e| Error::Input(format!("bad integer '{s}': {e}")));
        Ok(ResultRow {
            experiment: f[0].to_string(),
            method: f[1].to_string(),
            structure: f[2].to_string(),
            k: int(f[3])? as usize,
            i_sum: int(f[4])? as usize,
            n_bar: int(f[5])? as usize,
            snr_db: num(f[6])?,
            seed: int(f[7])?,
            mean_sum_se: num(f[8])?,
            wallclock_s: num(f[9])?,
            flops: int(f[10])?,
            pilot_overhead: int(f[11])?,
            backhaul_overhead: int(f[12])?,
        })
    }

    /// Join key: everything that identifies a measurement.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{:.6}|{}",
            self.experiment,
            self.method,
            self.structure,
            self.k,
            self.i_sum,
            self.n_bar,
            self.snr_db,
            self.seed
        )
    }
}

/// Learned model handle used by the experiment drivers.
pub enum ModelHandle<'a> {
    Hgnn(&'a mut crate::hgnn::HgnnModel),
    Mlp(&'a crate::baselines::MlpModel),
}

impl ModelHandle<'_> {
    pub fn solve(&mut self, sample: &ChannelSample, scenario: &Scenario) -> Result<PrecoderSolution> {
        match self {
            ModelHandle::Hgnn(m) => {
                let graph = crate::graph::build_graph(sample, scenario)?;
                m.solve(&graph, scenario)
            }
            ModelHandle::Mlp(m) => m.solve(sample, scenario),
        }
    }

    pub fn flops(&self, scenario: &Scenario) -> u64 {
        match self {
            ModelHandle::Hgnn(m) => flops_estimate(&m.config, scenario),
            ModelHandle::Mlp(m) => dense_flops(m.net.widths()),
        }
    }

    pub fn overhead_method(&self) -> Method {
        match self {
            ModelHandle::Hgnn(_) => Method::Hgnn,
            ModelHandle::Mlp(_) => Method::Mlp,
        }
    }
}

fn snr_db_of(scenario: &Scenario) -> f64 {
    10.0 * (scenario.power[0] / scenario.noise).log10()
}

fn noise_for_snr_db(scenario: &Scenario, snr_db: f64) -> f64 {
    scenario.power[0] / 10f64.powf(snr_db / 10.0)
}

fn base_row(experiment: &str, method: &str, scenario: &Scenario, seed: u64) -> ResultRow {
    ResultRow {
        experiment: experiment.into(),
        method: method.into(),
        structure: scenario.structure.to_string(),
        k: scenario.n_bs(),
        i_sum: scenario.n_ue(),
        n_bar: scenario.n_bar,
        snr_db: snr_db_of(scenario),
        seed,
        mean_sum_se: 0.0,
        wallclock_s: 0.0,
        flops: 0,
        pilot_overhead: 0,
        backhaul_overhead: 0,
    }
}

fn model_mean_se(
    model: &mut ModelHandle,
    dataset: &crate::channel::Dataset,
    scenario: &Scenario,
) -> Result<f64> {
    let mut total = 0.0;
    for sample in &dataset.samples {
        let sol = model.solve(sample, scenario)?;
        total += sum_se(&sol, sample, scenario);
    }
    Ok(total / dataset.len() as f64)
}

/// Experiment driver for a trained model: evaluates the configured kind on
/// the test set and emits one CSV row per (method, grid point).
pub fn run_experiment(
    kind: &str,
    label: &str,
    mut model: ModelHandle,
    test: &crate::channel::Dataset,
    snr_grid: &[f64],
    phase_error_deg: f64,
    scalability_ues: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let scenario = &test.scenario;
    let fill = |row: &mut ResultRow, model: &ModelHandle, scenario: &Scenario| {
        row.flops = model.flops(scenario);
        let (pilot, backhaul) = overhead_report(scenario, model.overhead_method());
        row.pilot_overhead = pilot;
        row.backhaul_overhead = backhaul;
    };
    let mut rows = Vec::new();
    match kind {
        "basic" => {
            let start = std::time::Instant::now();
            let se = model_mean_se(&mut model, test, scenario)?;
            let mut row = base_row("basic", label, scenario, seed);
            row.mean_sum_se = se;
            row.wallclock_s = start.elapsed().as_secs_f64();
            fill(&mut row, &model, scenario);
            rows.push(row);
        }
        "snr_sweep" => {
            for &snr in snr_grid {
                let mut sc = scenario.clone();
                sc.noise = noise_for_snr_db(scenario, snr);
                let start = std::time::Instant::now();
                let se = model_mean_se(&mut model, test, &sc)?;
                let mut row = base_row("snr_sweep", label, &sc, seed);
                row.mean_sum_se = se;
                row.wallclock_s = start.elapsed().as_secs_f64();
                fill(&mut row, &model, &sc);
                rows.push(row);
            }
        }
        "phase_robustness" => {
            let clean = model_mean_se(&mut model, test, scenario)?;
            let mut row = base_row("phase_robustness", label, scenario, seed);
            row.mean_sum_se = clean;
            fill(&mut row, &model, scenario);
            rows.push(row);
            // rotate every partial-CSI edge vector by one random phase
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::channel::derive_seed(
                seed,
                &[0x70686173],
            ));
            let mut total = 0.0;
            for sample in &test.samples {
                let mut noisy = sample.clone();
                for u in 0..scenario.n_ue() {
                    for b in 0..scenario.n_bs() {
                        let h = noisy.mm_bar(u, b);
                        let rotated = crate::channel::apply_phase_error(&h, phase_error_deg, &mut rng);
                        for (j, v) in rotated.iter().enumerate() {
                            noisy.mm_partial[(u, b, j)] = *v;
                        }
                    }
                }
                let sol = model.solve(&noisy, scenario)?;
                // rates always evaluate on the clean full CSI
                total += sum_se(&sol, sample, scenario);
            }
            let mut row = base_row("phase_robustness", &format!("{label}+phase{phase_error_deg}"), scenario, seed);
            row.mean_sum_se = total / test.len() as f64;
            fill(&mut row, &model, scenario);
            rows.push(row);
        }
        "scalability" => {
            for layout in scalability_ues {
                let mut sc = scenario.clone();
                sc.ues_per_bs = layout.clone();
                sc.power = vec![scenario.power[0]; layout.len()];
                sc.seed = crate::channel::derive_seed(scenario.seed, &[0x7363616c]);
                sc.validate()?;
                let eval_set = crate::channel::gen_dataset(&sc, test.len(), crate::channel::Split::Test)?;
                let start = std::time::Instant::now();
                let se = model_mean_se(&mut model, &eval_set, &sc)?;
                let mut row = base_row("scalability", label, &sc, seed);
                row.mean_sum_se = se;
                row.wallclock_s = start.elapsed().as_secs_f64();
                fill(&mut row, &model, &sc);
                rows.push(row);
            }
        }
        "timing" => {
            let start = std::time::Instant::now();
            let se = model_mean_se(&mut model, test, scenario)?;
            let mut row = base_row("timing", label, scenario, seed);
            row.mean_sum_se = se;
            row.wallclock_s = start.elapsed().as_secs_f64();
            fill(&mut row, &model, scenario);
            rows.push(row);
            rows.extend(baseline_rows("timing", test, &[], seed)?);
        }
        other => {
            return Err(Error::Input(format!(
                "experiment kind '{other}' is not driven by eval (use the dedicated command)"
            )));
        }
    }
    Ok(rows)
}

/// Classical baseline rows: WMMSE fully digital precoding plus the two
/// AltMin hybrid factorizations of its output. Honors the SNR grid when
/// `kind == "snr_sweep"`.
pub fn baseline_rows(
    kind: &str,
    test: &crate::channel::Dataset,
    snr_grid: &[f64],
    seed: u64,
) -> Result<Vec<ResultRow>> {
    use crate::baselines::{mo_altmin, pc_altmin, wmmse, AltMinParams, WmmseParams};
    let scenario = &test.scenario;
    let scenarios: Vec<Scenario> = if kind == "snr_sweep" {
        snr_grid
            .iter()
            .map(|&snr| {
                let mut sc = scenario.clone();
                sc.noise = noise_for_snr_db(scenario, snr);
                sc
            })
            .collect()
    } else {
        vec![scenario.clone()]
    };
    let altmin_params = AltMinParams { seed: crate::channel::derive_seed(seed, &[0x616c74]), ..Default::default() };
    let mut rows = Vec::new();
    for sc in &scenarios {
        let pc_ok = sc.ues_per_bs.iter().all(|&i_k| sc.n_mm % i_k == 0);
        let mut wmmse_se = 0.0;
        let mut mo_se = 0.0;
        let mut pc_se = 0.0;
        let mut wmmse_time = 0.0;
        let mut mo_time = 0.0;
        let mut pc_time = 0.0;
        for sample in &test.samples {
            let t0 = std::time::Instant::now();
            let (digital, _) = wmmse(sample, sc, &WmmseParams::default())?;
            wmmse_time += t0.elapsed().as_secs_f64();
            wmmse_se += rate_per_ue_digital(&digital.per_bs, sample, sc).iter().sum::<f64>();
            let t1 = std::time::Instant::now();
            let mo_sol = PrecoderSolution {
                per_bs: (0..sc.n_bs())
                    .map(|k| {
                        let (rf, bb, _) = mo_altmin(
                            &digital.per_bs[k],
                            sc.n_rf(k),
                            sc.power[k],
                            &altmin_params,
                        );
                        crate::hgnn::BsPrecoder { rf, bb }
                    })
                    .collect(),
            };
            mo_time += t1.elapsed().as_secs_f64();
            mo_se += sum_se(&mo_sol, sample, sc);
            if pc_ok {
                let t2 = std::time::Instant::now();
                let pc_sol = PrecoderSolution {
                    per_bs: (0..sc.n_bs())
                        .map(|k| {
                            let (rf, bb, _) = pc_altmin(
                                &digital.per_bs[k],
                                sc.n_rf(k),
                                sc.power[k],
                                &altmin_params,
                            );
                            crate::hgnn::BsPrecoder { rf, bb }
                        })
                        .collect(),
                };
                pc_time += t2.elapsed().as_secs_f64();
                pc_se += sum_se(&pc_sol, sample, sc);
            }
        }
        let n = test.len() as f64;
        let (pilot, backhaul) = overhead_report(sc, Method::AltMin);
        let mut w_row = base_row(kind, "WMMSE", sc, seed);
        w_row.structure = "digital".into();
        w_row.mean_sum_se = wmmse_se / n;
        w_row.wallclock_s = wmmse_time;
        rows.push(w_row);
        let mut mo_row = base_row(kind, "MO-AltMin", sc, seed);
        mo_row.structure = "fully".into();
        mo_row.mean_sum_se = mo_se / n;
        mo_row.wallclock_s = wmmse_time + mo_time;
        mo_row.pilot_overhead = pilot;
        mo_row.backhaul_overhead = backhaul;
        rows.push(mo_row);
        if pc_ok {
            let mut sc_part = sc.clone();
            sc_part.structure = Structure::Partially;
            let (p_pilot, p_backhaul) = overhead_report(&sc_part, Method::AltMin);
            let mut pc_row = base_row(kind, "PC-AltMin (LS)", sc, seed);
            pc_row.structure = "partially".into();
            pc_row.mean_sum_se = pc_se / n;
            pc_row.wallclock_s = wmmse_time + pc_time;
            pc_row.pilot_overhead = p_pilot;
            pc_row.backhaul_overhead = p_backhaul;
            rows.push(pc_row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_sample, Split};
    use crate::hgnn::BsPrecoder;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scenario(ues: Vec<usize>, structure: Structure) -> Scenario {
        let k = ues.len();
        Scenario {
            ues_per_bs: ues,
            n_mm: 8,
            n_sub: 4,
            n_bar: 2,
            n_paths: 3,
            power: vec![1.0; k],
            noise: 0.1,
            bw_mm: 1e8,
            bw_sub: 1e7,
            seed: 21,
            structure,
        }
    }

    fn random_solution(scenario: &Scenario, rng: &mut StdRng) -> PrecoderSolution {
        let per_bs = (0..scenario.n_bs())
            .map(|k| {
                let n_rf = scenario.n_rf(k);
                let rf = Array2::from_shape_fn((scenario.n_mm, n_rf), |_| {
                    Complex64::from_polar(
                        1.0 / (scenario.n_mm as f64).sqrt(),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                });
                let bb = Array2::from_shape_fn((n_rf, scenario.ues_per_bs[k]), |_| {
                    Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3))
                });
                BsPrecoder { rf, bb }
            })
            .collect();
        PrecoderSolution { per_bs }
    }

    #[test]
    fn zero_precoders_zero_rates() {
        let sc = scenario(vec![2, 2], Structure::Fully);
        let s = gen_sample(&sc, Split::Test, 0);
        let sol = PrecoderSolution {
            per_bs: (0..2)
                .map(|k| BsPrecoder {
                    rf: Array2::zeros((sc.n_mm, sc.n_rf(k))),
                    bb: Array2::zeros((sc.n_rf(k), sc.ues_per_bs[k])),
                })
                .collect(),
        };
        let rates = rate_per_ue(&sol, &s, &sc);
        assert!(rates.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn unit_sinr_single_link_gives_one_bit() {
        let sc = scenario(vec![1], Structure::Fully);
        let s = gen_sample(&sc, Split::Test, 0);
        let h = s.mm(0, 0);
        // f = sqrt(noise)/||h||^2 * h so that |h^H f|^2 = noise
        let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let f = h.mapv(|z| z * (sc.noise.sqrt() / hn));
        let rf = Array2::from_shape_fn((sc.n_mm, 1), |(m, _)| f[m]);
        let bb = Array2::from_elem((1, 1), Complex64::new(1.0, 0.0));
        let sol = PrecoderSolution { per_bs: vec![BsPrecoder { rf, bb }] };
        let rates = rate_per_ue(&sol, &s, &sc);
        assert_abs_diff_eq!(rates[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rates_match_straight_line_sinr_oracle() {
        let sc = scenario(vec![2, 2], Structure::Fully);
        let mut rng = StdRng::seed_from_u64(5);
        for trial in 0..20 {
            let s = gen_sample(&sc, Split::Test, trial);
            let sol = random_solution(&sc, &mut rng);
            let rates = rate_per_ue(&sol, &s, &sc);
            // independent term-by-term evaluation
            for u1 in 0..4 {
                let k1 = sc.serving(u1);
                let amp = |k: usize, local: usize| -> f64 {
                    let hv = s.mm(u1, k);
                    let g = sol.per_bs[k].rf.dot(&sol.per_bs[k].bb);
                    let c: Complex64 =
                        hv.iter().zip(g.column(local).iter()).map(|(a, b)| a.conj() * b).sum();
                    c.norm_sqr()
                };
                let local1 = u1 - sc.ues_of(k1).start;
                let sig = amp(k1, local1);
                let mut intra = 0.0;
                for l in 0..sc.ues_per_bs[k1] {
                    if l != local1 {
                        intra += amp(k1, l);
                    }
                }
                let mut inter = 0.0;
                for m in 0..sc.n_bs() {
                    if m != k1 {
                        for l in 0..sc.ues_per_bs[m] {
                            inter += amp(m, l);
                        }
                    }
                }
                let expected = (1.0 + sig / (intra + inter + sc.noise)).log2();
                let rel = (rates[u1] - expected).abs() / expected.abs().max(1e-300);
                assert!(rel < 1e-12, "UE {u1}: {} vs {}", rates[u1], expected);
            }
        }
    }

    #[test]
    fn rates_depend_only_on_precoder_product() {
        let sc = scenario(vec![2, 2], Structure::Fully);
        let s = gen_sample(&sc, Split::Test, 3);
        let mut rng = StdRng::seed_from_u64(9);
        let sol = random_solution(&sc, &mut rng);
        // replace (rf, bb) by (rf A, A^-1 bb) leaving the product unchanged
        let mut sol2 = sol.clone();
        for k in 0..2 {
            let a = Array2::from_shape_vec(
                (2, 2),
                vec![
                    Complex64::new(1.2, 0.3),
                    Complex64::new(-0.4, 0.1),
                    Complex64::new(0.2, -0.7),
                    Complex64::new(0.9, 0.5),
                ],
            )
            .unwrap();
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let ainv = Array2::from_shape_vec(
                (2, 2),
                vec![a[(1, 1)] / det, -a[(0, 1)] / det, -a[(1, 0)] / det, a[(0, 0)] / det],
            )
            .unwrap();
            sol2.per_bs[k].rf = sol.per_bs[k].rf.dot(&a);
            sol2.per_bs[k].bb = ainv.dot(&sol.per_bs[k].bb);
        }
        let r1 = rate_per_ue(&sol, &s, &sc);
        let r2 = rate_per_ue(&sol2, &s, &sc);
        for (a, b) in r1.iter().zip(r2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn flops_without_layers_is_heads_only() {
        let sc = scenario(vec![2, 2], Structure::Fully);
        let mut cfg = HgnnConfig::desk_default(&sc);
        cfg.layers = 0;
        let d = cfg.hidden;
        let c_rf = dense_flops(&net_widths(d, &cfg.rf_hidden, cfg.rf_output_width()));
        let c_bb = dense_flops(&net_widths(cfg.bb_input_width(), &cfg.bb_hidden, 2 * cfg.n_rf));
        assert_eq!(flops_estimate(&cfg, &sc), 2 * c_rf + 4 * c_bb);
    }

    #[test]
    fn flops_linear_in_layer_count() {
        let sc = scenario(vec![2, 2], Structure::Fully);
        let mut cfg = HgnnConfig::desk_default(&sc);
        cfg.layers = 0;
        let heads = flops_estimate(&cfg, &sc);
        cfg.layers = 1;
        let one = flops_estimate(&cfg, &sc) - heads;
        cfg.layers = 2;
        let two = flops_estimate(&cfg, &sc) - heads;
        assert_eq!(two, 2 * one);
    }

    #[test]
    fn flops_matches_independent_tally() {
        let sc = scenario(vec![2, 3], Structure::Fully);
        let cfg = HgnnConfig::desk_default(&sc);
        // independent per-term tally
        let dense = |ws: &[usize]| -> u64 {
            let mut t = 0u64;
            for (li, w) in ws.windows(2).enumerate() {
                t += 4 * w[0] as u64 + 2 * (w[0] * w[1]) as u64;
                if li + 1 < ws.len() - 1 {
                    t += 4 * w[1] as u64;
                }
            }
            t
        };
        let d = cfg.hidden;
        let c_p = dense(&net_widths(cfg.msg_input_width(), &cfg.msg_hidden, d));
        let c_att = 2 * cfg.att_width() as u64 + 8;
        let c_q = dense(&net_widths(cfg.comb_input_width(), &cfg.comb_hidden, d));
        let c_rf = dense(&net_widths(d, &cfg.rf_hidden, cfg.rf_output_width()));
        let c_bb = dense(&net_widths(cfg.bb_input_width(), &cfg.bb_hidden, 2 * cfg.n_rf));
        let (k, i_sum) = (2u64, 5u64);
        let mut per_layer = 0u64;
        for ik in [2u64, 3] {
            per_layer += ik * (c_p + c_att) + (i_sum - ik) * (c_p + c_att) + c_q;
        }
        per_layer += i_sum * ((c_p + c_att) + (k - 1) * (c_p + c_att) + c_q);
        let expected = cfg.layers as u64 * per_layer + k * c_rf + i_sum * c_bb;
        assert_eq!(flops_estimate(&cfg, &sc), expected);
    }

    #[test]
    fn overhead_matches_table_formulas() {
        let mut sc16 = scenario(vec![2, 2], Structure::Fully);
        sc16.n_mm = 16;
        sc16.n_bar = 4;
        let (pilot, backhaul) = overhead_report(&sc16, Method::Hgnn);
        assert_eq!(pilot, 2 * 4 * 4); // 32
        assert_eq!(backhaul, 2 * 4 * 4 + 2 * (16 * 2 + 4)); // 104
        let (_, mlp_backhaul) = overhead_report(&sc16, Method::Mlp);
        assert_eq!(mlp_backhaul, 0);
        let (alt_pilot, alt_backhaul) = overhead_report(&sc16, Method::AltMin);
        assert_eq!(alt_pilot, 2 * 4 * 16);
        assert_eq!(alt_backhaul, 2 * 4 * 16 + 2 * (16 * 2 + 4));
        let mut part = sc16.clone();
        part.structure = Structure::Partially;
        let (_, p_backhaul) = overhead_report(&part, Method::Hgnn);
        assert_eq!(p_backhaul, 2 * 4 * 4 + 2 * (16 + 4));
        assert!(Method::parse("wmmse-ish").is_err());
        assert_eq!(Method::parse("HGNN").unwrap(), Method::Hgnn);
    }

    #[test]
    fn result_row_roundtrip() {
        let row = ResultRow {
            experiment: "snr_sweep".into(),
            method: "HGNN-FULLY".into(),
            structure: "fully".into(),
            k: 2,
            i_sum: 4,
            n_bar: 4,
            snr_db: 10.0,
            seed: 7,
            mean_sum_se: 12.345678901234,
            wallclock_s: 1.25,
            flops: 123456,
            pilot_overhead: 32,
            backhaul_overhead: 104,
        };
        let line = row.to_csv();
        let back = ResultRow::from_csv(&line).unwrap();
        assert_eq!(back.experiment, row.experiment);
        assert_eq!(back.key(), row.key());
        assert!((back.mean_sum_se - row.mean_sum_se).abs() < 1e-9);
    }
}
