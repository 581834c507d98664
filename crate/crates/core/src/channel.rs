//! Synthetic correlated sub-6GHz / mmWave multi-cell channel generator.
//!
//! Channels are geometric cluster sums over shared path sets: one path set
//! per (UE, serving-band link), reused for both bands so that the spatial
//! structure (AoDs, delays) coincides across bands while the per-band
//! synthesis differs in antenna count and bandwidth.

use crate::linalg::CVec;
use crate::tensorstore::{Store, StoreWriter};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Hybrid analog architecture of the mmWave transmitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Fully,
    Partially,
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Structure::Fully => write!(f, "fully"),
            Structure::Partially => write!(f, "partially"),
        }
    }
}

/// Full experiment configuration for channel generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// UEs served by each mmWave BS (`I_k`); the number of BSs is the length.
    pub ues_per_bs: Vec<usize>,
    /// mmWave antennas per BS (`N_m`).
    pub n_mm: usize,
    /// Sub-6GHz antennas at the central BS (`N_s`).
    pub n_sub: usize,
    /// Active mmWave antennas for partial CSI (`N̄_m ≤ N_m`).
    pub n_bar: usize,
    /// Paths per link (`N_c`).
    pub n_paths: usize,
    /// Max transmit power per BS, linear watts (`P_k`).
    pub power: Vec<f64>,
    /// Per-UE noise power, linear watts (`σ²`).
    pub noise: f64,
    /// mmWave bandwidth in Hz.
    pub bw_mm: f64,
    /// Sub-6GHz bandwidth in Hz.
    pub bw_sub: f64,
    pub seed: u64,
    pub structure: Structure,
}

impl Scenario {
    /// Number of mmWave BSs (`K`).
    pub fn n_bs(&self) -> usize {
        self.ues_per_bs.len()
    }

    /// Total UE count (`I_sum`).
    pub fn n_ue(&self) -> usize {
        self.ues_per_bs.iter().sum()
    }

    /// RF chains at BS `k`; one per served UE.
    pub fn n_rf(&self, k: usize) -> usize {
        self.ues_per_bs[k]
    }

    /// Serving BS of a UE by global index (cells are laid out consecutively).
    pub fn serving(&self, ue: usize) -> usize {
        let mut acc = 0;
        for (k, &ik) in self.ues_per_bs.iter().enumerate() {
            acc += ik;
            if ue < acc {
                return k;
            }
        }
        panic!("UE index {ue} out of range");
    }

    /// Global UE indices served by BS `k`.
    pub fn ues_of(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.ues_per_bs[..k].iter().sum();
        start..start + self.ues_per_bs[k]
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.ues_per_bs.is_empty() {
            violations.push("at least one BS required".to_string());
        }
        if self.ues_per_bs.iter().any(|&i| i == 0) {
            violations.push("every BS must serve at least one UE".to_string());
        }
        if self.n_mm == 0 || self.n_sub == 0 {
            violations.push("antenna counts must be >= 1".to_string());
        }
        if self.n_bar > self.n_mm {
            violations.push(format!("n_bar ({}) must not exceed n_mm ({})", self.n_bar, self.n_mm));
        }
        if self.n_paths == 0 {
            violations.push("n_paths must be >= 1".to_string());
        }
        if self.power.len() != self.ues_per_bs.len() {
            violations.push("power list length must equal BS count".to_string());
        }
        if self.power.iter().any(|&p| !(p > 0.0)) {
            violations.push("all powers must be > 0".to_string());
        }
        if !(self.noise > 0.0) {
            violations.push("noise power must be > 0".to_string());
        }
        if !(self.bw_mm > 0.0) || !(self.bw_sub > 0.0) {
            violations.push("bandwidths must be > 0".to_string());
        }
        if self.structure == Structure::Partially {
            for (k, &ik) in self.ues_per_bs.iter().enumerate() {
                if ik > 0 && self.n_mm % ik != 0 {
                    violations.push(format!(
                        "partially-connected requires n_mm divisible by RF chains: BS {k} has {} chains for n_mm {}",
                        ik, self.n_mm
                    ));
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations.join("; ")))
        }
    }

    /// Desk-scale default: two cells of two UEs each.
    pub fn desk_default(structure: Structure, seed: u64) -> Self {
        Scenario {
            ues_per_bs: vec![2, 2],
            n_mm: 16,
            n_sub: 8,
            n_bar: 4,
            n_paths: 5,
            power: vec![1.0, 1.0],
            noise: 0.1,
            bw_mm: 1e8,
            bw_sub: 1e7,
            seed,
            structure,
        }
    }
}

/// Geometry of one (UE, BS) link: shared by both bands.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub aods: Vec<f64>,
    pub gains: Vec<f64>,
    pub phases: Vec<f64>,
    pub delays: Vec<f64>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.aods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aods.is_empty()
    }
}

/// One network realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    /// Sub-6GHz channels from the central BS, one row per UE (`I_sum x N_s`).
    pub sub6: Array2<Complex64>,
    /// Full mmWave channels indexed `(ue, bs, antenna)`.
    pub mm_full: Array3<Complex64>,
    /// Sorted active antenna indices shared by all links.
    pub active_idx: Vec<usize>,
    /// Partial mmWave channels indexed `(ue, bs, active-antenna)`.
    pub mm_partial: Array3<Complex64>,
}

impl ChannelSample {
    /// Full channel from BS `bs` to UE `ue`.
    pub fn mm(&self, ue: usize, bs: usize) -> CVec {
        self.mm_full.index_axis(ndarray::Axis(0), ue).row(bs).to_owned()
    }

    pub fn mm_bar(&self, ue: usize, bs: usize) -> CVec {
        self.mm_partial.index_axis(ndarray::Axis(0), ue).row(bs).to_owned()
    }

    pub fn sub(&self, ue: usize) -> CVec {
        self.sub6.row(ue).to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenario: Scenario,
    pub samples: Vec<ChannelSample>,
    pub split: Split,
}

/// ULA array response: `(1/sqrt(N)) * [1, e^{j period sin(phi)}, ...]` with
/// half-wavelength spacing, so the phase step is `pi * sin(phi)`.
pub fn array_response(phi: f64, n: usize) -> CVec {
    assert!(n >= 1);
    let scale = 1.0 / (n as f64).sqrt();
    let step = PI * phi.sin();
    CVec::from_iter((0..n).map(|t| Complex64::from_polar(scale, step * t as f64)))
}

/// Delay spread of the synthetic generator (per-path delay is uniform on
/// `[0, DELAY_SPREAD]`).
pub const DELAY_SPREAD: f64 = 100e-9;

/// Draws the shared dual-band geometry of one link. The dominant path has
/// unit gain; later paths draw `|CN(0, 0.1)|` magnitudes, i.e. 10 dB below
/// the dominant path in expectation.
pub fn gen_paths(scenario: &Scenario, rng: &mut impl Rng) -> PathSet {
    let n_c = scenario.n_paths;
    let gauss = Normal::new(0.0, 0.05f64.sqrt()).expect("valid stddev");
    let mut aods = Vec::with_capacity(n_c);
    let mut gains = Vec::with_capacity(n_c);
    let mut phases = Vec::with_capacity(n_c);
    let mut delays = Vec::with_capacity(n_c);
    for l in 0..n_c {
        aods.push(rng.gen_range(-PI / 2.0..PI / 2.0));
        gains.push(if l == 0 {
            1.0
        } else {
            let re: f64 = gauss.sample(rng);
            let im: f64 = gauss.sample(rng);
            (re * re + im * im).sqrt()
        });
        phases.push(rng.gen_range(0.0..2.0 * PI));
        delays.push(rng.gen_range(0.0..=DELAY_SPREAD));
    }
    PathSet { aods, gains, phases, delays }
}

/// Synthesizes a channel vector from a path set at a given array size and
/// bandwidth: `sqrt(N/N_c) * sum_l beta_l e^{j(theta_l + 2 pi tau_l B)} a(phi_l)`.
pub fn synth_channel(paths: &PathSet, n: usize, bw: f64) -> CVec {
    let n_c = paths.len();
    let mut h: CVec = CVec::zeros(n);
    for l in 0..n_c {
        let rot = Complex64::from_polar(paths.gains[l], paths.phases[l] + 2.0 * PI * paths.delays[l] * bw);
        let a = array_response(paths.aods[l], n);
        h.zip_mut_with(&a, |acc, &av| *acc += rot * av);
    }
    let norm = (n as f64 / n_c as f64).sqrt();
    h.mapv_inplace(|z| z * norm);
    h
}

/// Gathers the entries of a full channel at the active antenna indices.
pub fn extract_partial(h_full: &CVec, active_idx: &[usize]) -> Result<CVec> {
    let mut out = CVec::zeros(active_idx.len());
    for (j, &idx) in active_idx.iter().enumerate() {
        if idx >= h_full.len() {
            return Err(Error::Dimension(format!(
                "active index {idx} out of range for {}-antenna channel",
                h_full.len()
            )));
        }
        out[j] = h_full[idx];
    }
    Ok(out)
}

/// Rotates a whole channel vector by one random phase
/// `theta ~ N(0, (sigma_deg * pi/180)^2)`; per-entry magnitudes are unchanged.
pub fn apply_phase_error(h: &CVec, sigma_deg: f64, rng: &mut impl Rng) -> CVec {
    assert!(sigma_deg >= 0.0);
    if sigma_deg == 0.0 {
        return h.clone();
    }
    let sigma = sigma_deg * PI / 180.0;
    let theta: f64 = Normal::new(0.0, sigma).expect("valid stddev").sample(rng);
    let rot = Complex64::from_polar(1.0, theta);
    h.mapv(|z| z * rot)
}

/// Uniformly spaced active-antenna indices `{floor(t * N_m / N_bar)}`.
pub fn active_indices(n_mm: usize, n_bar: usize) -> Vec<usize> {
    (0..n_bar).map(|t| t * n_mm / n_bar).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derivation for independent sub-streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &p in parts {
        s = splitmix64(s ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    s
}

fn split_tag(split: Split) -> u64 {
    match split {
        Split::Train => 0x7261_696e, // "rain"
        Split::Test => 0x7465_7374,  // "test"
    }
}

/// Generates one network realization. Each (UE, BS) link gets an
/// independently seeded path set; the serving link's path set also
/// synthesizes the UE's sub-6GHz channel (the cross-band coupling).
pub fn gen_sample(scenario: &Scenario, split: Split, sample_idx: u64) -> ChannelSample {
    let (k, i_sum) = (scenario.n_bs(), scenario.n_ue());
    let active_idx = active_indices(scenario.n_mm, scenario.n_bar);
    let mut sub6 = Array2::zeros((i_sum, scenario.n_sub));
    let mut mm_full = Array3::zeros((i_sum, k, scenario.n_mm));
    let mut mm_partial = Array3::zeros((i_sum, k, scenario.n_bar));
    for ue in 0..i_sum {
        for bs in 0..k {
            let seed = derive_seed(scenario.seed, &[split_tag(split), sample_idx, ue as u64, bs as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let paths = gen_paths(scenario, &mut rng);
            let h = synth_channel(&paths, scenario.n_mm, scenario.bw_mm);
            let hb = extract_partial(&h, &active_idx).expect("active indices validated");
            mm_full.slice_mut(ndarray::s![ue, bs, ..]).assign(&h);
            mm_partial.slice_mut(ndarray::s![ue, bs, ..]).assign(&hb);
            if bs == scenario.serving(ue) {
                let hs = synth_channel(&paths, scenario.n_sub, scenario.bw_sub);
                sub6.row_mut(ue).assign(&hs);
            }
        }
    }
    ChannelSample { sub6, mm_full, active_idx, mm_partial }
}

/// Generates `n` independent realizations; the active antenna set is fixed
/// across all samples.
pub fn gen_dataset(scenario: &Scenario, n: usize, split: Split) -> Result<Dataset> {
    scenario.validate()?;
    if n < 1 {
        return Err(Error::Input("dataset needs at least one sample".into()));
    }
    let samples = (0..n as u64).map(|i| gen_sample(scenario, split, i)).collect();
    Ok(Dataset { scenario: scenario.clone(), samples, split })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Saves the dataset as `<stem>.json` + `<stem>.bin`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let sc = &self.scenario;
        let n = self.samples.len();
        let header = serde_json::json!({
            "kind": "dataset",
            "scenario": sc,
            "split": self.split,
            "n_samples": n,
            "active_idx": self.samples.first().map(|s| s.active_idx.clone()).unwrap_or_default(),
        });
        let mut w = StoreWriter::new(header);
        let flat = |name: &str, shape: &[usize], get: &dyn Fn(&ChannelSample) -> Vec<f64>| {
            let mut vals = Vec::new();
            for s in &self.samples {
                vals.extend(get(s));
            }
            let mut full_shape = vec![n];
            full_shape.extend_from_slice(shape);
            (name.to_string(), full_shape, vals)
        };
        let tensors = [
            flat("sub6", &[sc.n_ue(), sc.n_sub], &|s| {
                s.sub6.iter().flat_map(|z| [z.re, z.im]).collect()
            }),
            flat("mm_full", &[sc.n_ue(), sc.n_bs(), sc.n_mm], &|s| {
                s.mm_full.iter().flat_map(|z| [z.re, z.im]).collect()
            }),
            flat("mm_partial", &[sc.n_ue(), sc.n_bs(), sc.n_bar], &|s| {
                s.mm_partial.iter().flat_map(|z| [z.re, z.im]).collect()
            }),
        ];
        for (name, shape, vals) in tensors {
            w.push(&name, &shape, true, &vals);
        }
        w.save(stem)
    }

    pub fn load(stem: &Path) -> Result<Dataset> {
        let store = Store::load(stem)?;
        let header = &store.manifest.header;
        let scenario: Scenario = serde_json::from_value(header["scenario"].clone())
            .map_err(|e| Error::Serde(e.to_string()))?;
        let split: Split = serde_json::from_value(header["split"].clone())
            .map_err(|e| Error::Serde(e.to_string()))?;
        let n = header["n_samples"].as_u64().ok_or_else(|| Error::Serde("missing n_samples".into()))? as usize;
        let active_idx: Vec<usize> = serde_json::from_value(header["active_idx"].clone())
            .map_err(|e| Error::Serde(e.to_string()))?;
        let (i_sum, k) = (scenario.n_ue(), scenario.n_bs());
        let read_complex = |name: &str, per_sample: usize| -> Result<Vec<Vec<Complex64>>> {
            let (_, vals) = store.get(name)?;
            if vals.len() != 2 * per_sample * n {
                return Err(Error::Dimension(format!("tensor {name} has unexpected length")));
            }
            if per_sample == 0 {
                return Ok(vec![Vec::new(); n]);
            }
            Ok(vals
                .chunks_exact(2 * per_sample)
                .map(|c| c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
                .collect())
        };
        let sub6_all = read_complex("sub6", i_sum * scenario.n_sub)?;
        let full_all = read_complex("mm_full", i_sum * k * scenario.n_mm)?;
        let part_all = read_complex("mm_partial", i_sum * k * scenario.n_bar)?;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            samples.push(ChannelSample {
                sub6: Array2::from_shape_vec((i_sum, scenario.n_sub), sub6_all[i].clone())
                    .map_err(|e| Error::Dimension(e.to_string()))?,
                mm_full: Array3::from_shape_vec((i_sum, k, scenario.n_mm), full_all[i].clone())
                    .map_err(|e| Error::Dimension(e.to_string()))?,
                active_idx: active_idx.clone(),
                mm_partial: Array3::from_shape_vec((i_sum, k, scenario.n_bar), part_all[i].clone())
                    .map_err(|e| Error::Dimension(e.to_string()))?,
            });
        }
        Ok(Dataset { scenario, samples, split })
    }
}
