//! Output heads: analog-precoder normalization (unit-modulus projection,
//! full or block-diagonal) and baseband power projection, with exact
//! gradients. Complex gradients use the packed convention: the gradient of
//! a real loss with respect to a complex entry `x + jy` is stored as
//! `dL/dx + j dL/dy`.

use crate::channel::Structure;
use crate::linalg::{conj_t, frob_sq, CMat};
use ndarray::Array2;
use num_complex::Complex64;

/// Raw analog entries with modulus below this are replaced by `1 + 0j`
/// before normalizing, which keeps the projection total.
pub const DEGENERATE_EPS: f64 = 1e-12;

pub struct AnalogCache {
    /// Raw complex entries after degenerate replacement, in raw-slot order.
    z: Vec<Complex64>,
    degenerate: Vec<bool>,
    structure: Structure,
    n_mm: usize,
    n_rf: usize,
}

/// Builds `F_RF` from a raw head output row. Fully-connected rows carry
/// `2 * n_mm * n_rf` reals (entry `(m, j)` at slot `m * n_rf + j`);
/// partially-connected rows carry `2 * n_mm` reals that populate the block
/// diagonal (antenna `m` belongs to chain `m / (n_mm / n_rf)`). Every
/// populated entry is scaled to modulus `1/sqrt(n_mm)`.
pub fn analog_from_raw(
    raw: &[f64],
    structure: Structure,
    n_mm: usize,
    n_rf: usize,
) -> (CMat, AnalogCache) {
    let n_slots = match structure {
        Structure::Fully => n_mm * n_rf,
        Structure::Partially => n_mm,
    };
    assert_eq!(raw.len(), 2 * n_slots, "raw analog width mismatch");
    let scale = 1.0 / (n_mm as f64).sqrt();
    let mut z = Vec::with_capacity(n_slots);
    let mut degenerate = Vec::with_capacity(n_slots);
    let mut rf: CMat = Array2::zeros((n_mm, n_rf));
    let block = n_mm / n_rf.max(1);
    for slot in 0..n_slots {
        let mut v = Complex64::new(raw[2 * slot], raw[2 * slot + 1]);
        let degen = v.norm() < DEGENERATE_EPS;
        if degen {
            v = Complex64::new(1.0, 0.0);
        }
        z.push(v);
        degenerate.push(degen);
        let entry = v / v.norm() * scale;
        match structure {
            Structure::Fully => rf[(slot / n_rf, slot % n_rf)] = entry,
            Structure::Partially => rf[(slot, slot / block)] = entry,
        }
    }
    (rf, AnalogCache { z, degenerate, structure, n_mm, n_rf })
}

/// Gradient of the analog normalization with respect to the raw head row.
/// Off-block gradients (partially-connected) and degenerate entries
/// contribute zero.
pub fn analog_backward(cache: &AnalogCache, g_rf: &CMat) -> Vec<f64> {
    let n_slots = cache.z.len();
    let c = (cache.n_mm as f64).sqrt();
    let block = cache.n_mm / cache.n_rf.max(1);
    let mut out = vec![0.0; 2 * n_slots];
    for slot in 0..n_slots {
        if cache.degenerate[slot] {
            continue;
        }
        let (m, j) = match cache.structure {
            Structure::Fully => (slot / cache.n_rf, slot % cache.n_rf),
            Structure::Partially => (slot, slot / block),
        };
        let g = g_rf[(m, j)];
        let zv = cache.z[slot];
        let (x, y) = (zv.re, zv.im);
        let r3 = zv.norm().powi(3);
        out[2 * slot] = (g.re * y * y - g.im * x * y) / (c * r3);
        out[2 * slot + 1] = (-g.re * x * y + g.im * x * x) / (c * r3);
    }
    out
}

pub struct ProjCache {
    bb_raw: CMat,
    /// `F_RF * F'_BB`.
    prod: CMat,
    norm_sq: f64,
    /// Applied scale, `None` when the raw precoder was already feasible.
    scale: Option<f64>,
    power: f64,
}

/// Projects the raw baseband precoder onto the power constraint: identity
/// when `||F_RF F'_BB||_F^2 <= P`, otherwise scaled so the transmit power
/// equals `P` exactly. An all-zero raw precoder is feasible and kept.
pub fn project_power(rf: &CMat, bb_raw: &CMat, power: f64) -> (CMat, ProjCache) {
    let prod = rf.dot(bb_raw);
    let norm_sq = frob_sq(&prod);
    if norm_sq <= power {
        let bb = bb_raw.clone();
        (bb, ProjCache { bb_raw: bb_raw.clone(), prod, norm_sq, scale: None, power })
    } else {
        let s = (power / norm_sq).sqrt();
        let bb = bb_raw.mapv(|v| v * s);
        (bb, ProjCache { bb_raw: bb_raw.clone(), prod, norm_sq, scale: Some(s), power })
    }
}

/// Gradients of the power projection: returns the gradient with respect to
/// the raw baseband precoder and the extra gradient the scaling induces on
/// `F_RF` (zero when no scaling was applied).
pub fn project_backward(cache: &ProjCache, rf: &CMat, g_bb: &CMat) -> (CMat, CMat) {
    match cache.scale {
        None => (g_bb.clone(), Array2::zeros((rf.nrows(), rf.ncols()))),
        Some(s) => {
            let ip: f64 = g_bb
                .iter()
                .zip(cache.bb_raw.iter())
                .map(|(g, b)| g.re * b.re + g.im * b.im)
                .sum();
            let n = cache.norm_sq.sqrt();
            let coef = -ip * cache.power.sqrt() / (cache.norm_sq * n);
            // d n / d bb_raw = rf^H * prod / n ; d n / d rf = prod * bb_raw^H / n
            let g_raw = {
                let mut g = g_bb.mapv(|v| v * s);
                g += &(conj_t(rf).dot(&cache.prod).mapv(|v| v * coef));
                g
            };
            let g_rf_extra = {
                let bb_h = conj_t(&cache.bb_raw);
                cache.prod.dot(&bb_h).mapv(|v| v * coef)
            };
            (g_raw, g_rf_extra)
        }
    }
}
