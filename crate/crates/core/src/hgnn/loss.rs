//! Unsupervised training objective: the negative sum spectral efficiency,
//! with exact gradients with respect to the final precoder entries. The
//! rates are always computed on the full mmWave CSI.

use super::PrecoderSolution;
use crate::channel::{ChannelSample, Scenario};
use crate::eval::{cross_gains, rates_from_cross_gains};
use crate::linalg::{conj_t, CMat};
use ndarray::Array2;
use num_complex::Complex64;

/// Gradient of the sum rate with respect to the final `F_RF` and `F_BB`
/// entries of every BS, in the packed complex convention
/// (`dL/d re + j dL/d im`).
pub struct SolutionGrads {
    pub d_rf: Vec<CMat>,
    pub d_bb: Vec<CMat>,
}

/// Sum rate of a solution plus its gradient. The per-UE rates are returned
/// alongside so callers can reuse them for metrics.
pub fn solution_grads(
    sol: &PrecoderSolution,
    sample: &ChannelSample,
    scenario: &Scenario,
) -> (f64, Vec<f64>, SolutionGrads) {
    let i_sum = scenario.n_ue();
    let c = cross_gains(sol, sample, scenario);
    let rates = rates_from_cross_gains(&c, scenario.noise);
    let sum_rate: f64 = rates.iter().sum();

    let ln2 = std::f64::consts::LN_2;
    // per-UE desired power and interference totals
    let mut d_sig = vec![0.0; i_sum];
    let mut d_intf = vec![0.0; i_sum];
    for u in 0..i_sum {
        let s = c[(u, u)].norm_sqr();
        let t: f64 = (0..i_sum).filter(|&v| v != u).map(|v| c[(u, v)].norm_sqr()).sum();
        let d = t + scenario.noise;
        d_sig[u] = 1.0 / (ln2 * (d + s));
        d_intf[u] = -s / (ln2 * d * (d + s));
    }
    // packed gradient wrt the cross gains: 2 * w * c
    let mut gc: CMat = Array2::zeros((i_sum, i_sum));
    for u1 in 0..i_sum {
        for u2 in 0..i_sum {
            let w = if u1 == u2 { d_sig[u1] } else { d_intf[u1] };
            gc[(u1, u2)] = c[(u1, u2)] * (2.0 * w);
        }
    }
    // back through c[u1][u2] = h_{u1, serving(u2)}^H f_{u2}
    let mut d_rf = Vec::with_capacity(scenario.n_bs());
    let mut d_bb = Vec::with_capacity(scenario.n_bs());
    for k in 0..scenario.n_bs() {
        let n_mm = sol.per_bs[k].rf.nrows();
        let i_k = sol.per_bs[k].bb.ncols();
        let mut g_cols: CMat = Array2::zeros((n_mm, i_k));
        for (local, u2) in scenario.ues_of(k).enumerate() {
            for u1 in 0..i_sum {
                let g = gc[(u1, u2)];
                if g == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let h = sample.mm_full.index_axis(ndarray::Axis(0), u1);
                let hk = h.row(k);
                for n in 0..n_mm {
                    g_cols[(n, local)] += g * hk[n];
                }
            }
        }
        d_bb.push(conj_t(&sol.per_bs[k].rf).dot(&g_cols));
        d_rf.push(g_cols.dot(&conj_t(&sol.per_bs[k].bb)));
    }
    (sum_rate, rates, SolutionGrads { d_rf, d_bb })
}

/// The training loss of one sample: the negated sum rate.
pub fn sum_rate_loss(sol: &PrecoderSolution, sample: &ChannelSample, scenario: &Scenario) -> f64 {
    let (sum_rate, _, _) = solution_grads(sol, sample, scenario);
    -sum_rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_sample, Split, Structure};
    use crate::eval::rate_per_ue;
    use crate::hgnn::BsPrecoder;
    use ndarray::Array2;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scenario() -> Scenario {
        Scenario {
            ues_per_bs: vec![2, 1],
            n_mm: 4,
            n_sub: 2,
            n_bar: 2,
            n_paths: 2,
            power: vec![1.0, 1.0],
            noise: 0.1,
            bw_mm: 1e8,
            bw_sub: 1e7,
            seed: 17,
            structure: Structure::Fully,
        }
    }

    #[test]
    fn zero_precoder_zero_loss() {
        let sc = scenario();
        let s = gen_sample(&sc, Split::Test, 0);
        let sol = PrecoderSolution {
            per_bs: (0..2)
                .map(|k| BsPrecoder {
                    rf: Array2::zeros((sc.n_mm, sc.n_rf(k))),
                    bb: Array2::zeros((sc.n_rf(k), sc.ues_per_bs[k])),
                })
                .collect(),
        };
        assert_eq!(sum_rate_loss(&sol, &s, &sc), 0.0);
    }

    #[test]
    fn precoder_gradients_match_finite_differences() {
        let sc = scenario();
        let s = gen_sample(&sc, Split::Test, 1);
        let mut rng = StdRng::seed_from_u64(3);
        let mut sol = PrecoderSolution {
            per_bs: (0..2)
                .map(|k| BsPrecoder {
                    rf: Array2::from_shape_fn((sc.n_mm, sc.n_rf(k)), |_| {
                        Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
                    }),
                    bb: Array2::from_shape_fn((sc.n_rf(k), sc.ues_per_bs[k]), |_| {
                        Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
                    }),
                })
                .collect(),
        };
        let (_, _, grads) = solution_grads(&sol, &s, &sc);
        let h = 1e-6;
        let sum_rate =
            |sol: &PrecoderSolution| -> f64 { rate_per_ue(sol, &s, &sc).iter().sum() };
        for k in 0..2 {
            for idx in 0..sol.per_bs[k].rf.len() {
                let (r, c) = (idx / sol.per_bs[k].rf.ncols(), idx % sol.per_bs[k].rf.ncols());
                for part in 0..2 {
                    let delta =
                        if part == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
                    let orig = sol.per_bs[k].rf[(r, c)];
                    sol.per_bs[k].rf[(r, c)] = orig + delta;
                    let up = sum_rate(&sol);
                    sol.per_bs[k].rf[(r, c)] = orig - delta;
                    let dn = sum_rate(&sol);
                    sol.per_bs[k].rf[(r, c)] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let an = if part == 0 { grads.d_rf[k][(r, c)].re } else { grads.d_rf[k][(r, c)].im };
                    assert!(
                        (fd - an).abs() < 1e-5 * (1.0 + fd.abs()),
                        "rf k={k} ({r},{c}) part {part}: fd {fd} vs {an}"
                    );
                }
            }
            for idx in 0..sol.per_bs[k].bb.len() {
                let (r, c) = (idx / sol.per_bs[k].bb.ncols(), idx % sol.per_bs[k].bb.ncols());
                for part in 0..2 {
                    let delta =
                        if part == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
                    let orig = sol.per_bs[k].bb[(r, c)];
                    sol.per_bs[k].bb[(r, c)] = orig + delta;
                    let up = sum_rate(&sol);
                    sol.per_bs[k].bb[(r, c)] = orig - delta;
                    let dn = sum_rate(&sol);
                    sol.per_bs[k].bb[(r, c)] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let an = if part == 0 { grads.d_bb[k][(r, c)].re } else { grads.d_bb[k][(r, c)].im };
                    assert!(
                        (fd - an).abs() < 1e-5 * (1.0 + fd.abs()),
                        "bb k={k} ({r},{c}) part {part}: fd {fd} vs {an}"
                    );
                }
            }
        }
    }
}
