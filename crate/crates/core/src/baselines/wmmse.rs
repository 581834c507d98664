//! Weighted-MMSE sum-rate maximization for the multi-cell MISO downlink.
//! Alternates closed-form receive-coefficient and MSE-weight updates with
//! per-BS regularized least-squares transmit updates whose Lagrange
//! multiplier is found by bisection on the power constraint.

use super::DigitalPrecoder;
use crate::channel::{ChannelSample, Scenario};
use crate::eval::rate_per_ue_digital;
use crate::linalg::{herm_solve, CMat, CVec};
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct WmmseParams {
    pub max_iter: usize,
    /// Stop when the sum-rate improvement falls below this.
    pub tol: f64,
}

impl Default for WmmseParams {
    fn default() -> Self {
        WmmseParams { max_iter: 100, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct WmmseReport {
    /// Sum rate after every outer iteration (including the initial point).
    pub sum_rate_trace: Vec<f64>,
}

/// Solves the per-BS transmit update `(A + mu I) v_u = rhs_u` with the
/// smallest `mu >= 0` meeting the power budget.
fn transmit_update(a: &CMat, rhs: &CMat, power: f64) -> CMat {
    let n = a.nrows();
    let solve_at = |mu: f64| -> Option<CMat> {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += Complex64::new(mu, 0.0);
        }
        herm_solve(&m, rhs)
    };
    let pow_of = |v: &CMat| crate::linalg::frob_sq(v);
    // unconstrained solution when the Gram matrix is invertible and feasible
    if let Some(v) = solve_at(0.0) {
        if pow_of(&v) <= power {
            return v;
        }
    }
    // bracket: power(mu) is decreasing in mu
    let scale = a.diag().iter().map(|z| z.re).fold(0.0, f64::max).max(1e-12);
    let mut hi = scale * 1e-6;
    let mut v_hi = loop {
        match solve_at(hi) {
            Some(v) if pow_of(&v) <= power => break v,
            _ => {
                hi *= 4.0;
                if hi > scale * 1e12 {
                    break solve_at(hi).expect("heavily regularized system must solve");
                }
            }
        }
    };
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match solve_at(mid) {
            Some(v) if pow_of(&v) <= power => {
                hi = mid;
                v_hi = v;
            }
            _ => lo = mid,
        }
        if (pow_of(&v_hi) - power).abs() <= 1e-12 * power || (hi - lo) <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    v_hi
}

/// WMMSE on the full mmWave CSI of one sample. Returns per-BS digital
/// precoders and the per-iteration sum-rate trace.
pub fn wmmse(
    sample: &ChannelSample,
    scenario: &Scenario,
    params: &WmmseParams,
) -> Result<(DigitalPrecoder, WmmseReport)> {
    if sample.mm_full.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Input("non-finite channel entry".into()));
    }
    let (k, i_sum, n_m) = (scenario.n_bs(), scenario.n_ue(), scenario.n_mm);
    let h = |u: usize, b: usize| -> CVec { sample.mm(u, b) };
    // matched-filter initialization with the per-BS power split evenly
    let mut v: Vec<CMat> = (0..k)
        .map(|b| {
            let ues = scenario.ues_of(b);
            let i_k = ues.len();
            let mut m: CMat = Array2::zeros((n_m, i_k));
            for (local, u) in ues.enumerate() {
                let hv = h(u, b);
                let norm = hv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
                let scale = (scenario.power[b] / i_k as f64).sqrt() / norm;
                for n in 0..n_m {
                    m[(n, local)] = hv[n] * scale;
                }
            }
            m
        })
        .collect();
    let serving: Vec<usize> = (0..i_sum).map(|u| scenario.serving(u)).collect();
    let local_of: Vec<usize> = (0..i_sum).map(|u| u - scenario.ues_of(serving[u]).start).collect();
    let mut trace = vec![rate_per_ue_digital(&v, sample, scenario).iter().sum::<f64>()];
    for _ in 0..params.max_iter {
        // receive coefficients and MSE weights
        let mut g = vec![Complex64::new(0.0, 0.0); i_sum];
        let mut w = vec![0.0f64; i_sum];
        for u in 0..i_sum {
            let mut denom = scenario.noise;
            let mut c_des = Complex64::new(0.0, 0.0);
            for u2 in 0..i_sum {
                let b2 = serving[u2];
                let hv = h(u, b2);
                let mut c = Complex64::new(0.0, 0.0);
                for n in 0..n_m {
                    c += hv[n].conj() * v[b2][(n, local_of[u2])];
                }
                denom += c.norm_sqr();
                if u2 == u {
                    c_des = c;
                }
            }
            g[u] = c_des / denom;
            let e = 1.0 - c_des.norm_sqr() / denom;
            w[u] = 1.0 / e.max(1e-300);
        }
        // transmit update per BS
        for b in 0..k {
            let mut a: CMat = Array2::zeros((n_m, n_m));
            for u in 0..i_sum {
                let coef = w[u] * g[u].norm_sqr();
                let hv = h(u, b);
                for r in 0..n_m {
                    for c in 0..n_m {
                        a[(r, c)] += hv[r] * hv[c].conj() * coef;
                    }
                }
            }
            let ues = scenario.ues_of(b);
            let i_k = ues.len();
            let mut rhs: CMat = Array2::zeros((n_m, i_k));
            for (local, u) in ues.enumerate() {
                let hv = h(u, b);
                let coef = g[u] * w[u];
                for n in 0..n_m {
                    rhs[(n, local)] = hv[n] * coef;
                }
            }
            v[b] = transmit_update(&a, &rhs, scenario.power[b]);
        }
        let sum_rate: f64 = rate_per_ue_digital(&v, sample, scenario).iter().sum();
        let prev = *trace.last().unwrap();
        trace.push(sum_rate);
        if sum_rate - prev < params.tol {
            break;
        }
    }
    Ok((DigitalPrecoder { per_bs: v }, WmmseReport { sum_rate_trace: trace }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_sample, Split, Structure};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scenario(ues: Vec<usize>, n_mm: usize) -> Scenario {
        let k = ues.len();
        Scenario {
            ues_per_bs: ues,
            n_mm,
            n_sub: 2,
            n_bar: 2,
            n_paths: 3,
            power: vec![1.0; k],
            noise: 0.1,
            bw_mm: 1e8,
            bw_sub: 1e7,
            seed: 33,
            structure: Structure::Fully,
        }
    }

    #[test]
    fn single_link_matches_matched_filter() {
        let sc = scenario(vec![1], 8);
        for trial in 0..5 {
            let s = gen_sample(&sc, Split::Test, trial);
            let params = WmmseParams { max_iter: 500, tol: 1e-14 };
            let (sol, _) = wmmse(&s, &sc, &params).unwrap();
            let h = s.mm(0, 0);
            let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
            let expected_rate = (1.0 + sc.power[0] * hn / sc.noise).log2();
            let rate: f64 = rate_per_ue_digital(&sol.per_bs, &s, &sc).iter().sum();
            assert!(
                (rate - expected_rate).abs() < 1e-8,
                "trial {trial}: {rate} vs {expected_rate}"
            );
            // direction matches the matched filter up to a common phase
            let v = sol.per_bs[0].column(0).to_owned();
            let ip: Complex64 = h.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let cos2 = ip.norm_sqr() / (hn * vn);
            assert!(cos2 > 1.0 - 1e-8, "alignment {cos2}");
            assert!((vn - sc.power[0]).abs() < 1e-6, "power {vn}");
        }
    }

    #[test]
    fn sum_rate_trace_non_decreasing() {
        let sc = scenario(vec![2, 2], 8);
        for trial in 0..20 {
            let s = gen_sample(&sc, Split::Test, trial);
            let (_, report) = wmmse(&s, &sc, &WmmseParams::default()).unwrap();
            for w in report.sum_rate_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "trial {trial}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn beats_random_search_on_small_instance() {
        let sc = scenario(vec![1, 1], 2);
        let s = gen_sample(&sc, Split::Test, 7);
        let (sol, _) = wmmse(&s, &sc, &WmmseParams { max_iter: 300, tol: 1e-12 }).unwrap();
        let wmmse_rate: f64 = rate_per_ue_digital(&sol.per_bs, &s, &sc).iter().sum();
        let mut rng = StdRng::seed_from_u64(4);
        let mut best = 0.0f64;
        for _ in 0..10_000 {
            let v: Vec<CMat> = (0..2)
                .map(|b| {
                    let mut m: CMat = Array2::zeros((2, 1));
                    for n in 0..2 {
                        m[(n, 0)] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                    let p = crate::linalg::frob_sq(&m);
                    let scale = (sc.power[b] / p).sqrt() * rng.gen_range(0.0f64..1.0).sqrt();
                    m.mapv(|z| z * scale)
                })
                .collect();
            let rate: f64 = rate_per_ue_digital(&v, &s, &sc).iter().sum();
            best = best.max(rate);
        }
        assert!(
            wmmse_rate >= best - 1e-6,
            "wmmse {wmmse_rate} below random search {best}"
        );
    }

    #[test]
    fn power_feasible() {
        let sc = scenario(vec![2, 3], 8);
        for trial in 0..10 {
            let s = gen_sample(&sc, Split::Test, trial);
            let (sol, _) = wmmse(&s, &sc, &WmmseParams::default()).unwrap();
            assert!(sol.max_power_violation(&sc.power) < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite_channel() {
        let sc = scenario(vec![1], 4);
        let mut s = gen_sample(&sc, Split::Test, 0);
        s.mm_full[(0, 0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(wmmse(&s, &sc, &WmmseParams::default()).is_err());
    }
}
