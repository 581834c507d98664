//! Classical and learned baselines: WMMSE fully digital precoding, the
//! manifold-optimization AltMin for fully-connected hybrid precoding, a
//! least-squares AltMin substitute for the partially-connected structure,
//! and a flat MLP learner sharing the HGNN's output projections.

mod altmin;
mod mlp;
mod wmmse;

pub use altmin::{mo_altmin, pc_altmin, AltMinParams, AltMinReport};
pub use mlp::{evaluate_mlp, train_mlp, MlpModel};
pub use wmmse::{wmmse, WmmseParams, WmmseReport};

use crate::linalg::CMat;

/// Fully digital precoders, one `n_mm x I_k` matrix per BS.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoder {
    pub per_bs: Vec<CMat>,
}

impl DigitalPrecoder {
    /// Largest per-BS transmit-power violation (0 when feasible).
    pub fn max_power_violation(&self, power: &[f64]) -> f64 {
        self.per_bs
            .iter()
            .zip(power.iter())
            .map(|(v, &p)| crate::linalg::frob_sq(v) - p)
            .fold(0.0, f64::max)
    }
}
