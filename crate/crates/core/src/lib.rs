//! Dual-band hybrid beamforming workbench.
//!
//! Simulates correlated sub-6GHz / mmWave multi-cell channels, trains a
//! heterogeneous graph neural network that emits feasible hybrid precoders
//! from sub-6GHz CSI plus partial mmWave CSI, and benchmarks it against
//! classical optimization baselines (WMMSE, manifold and least-squares
//! alternating minimization) and a flat MLP learner.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod eval;
pub mod graph;
pub mod hgnn;
pub mod linalg;
pub mod nn;
pub mod tensorstore;

pub use channel::{ChannelSample, Dataset, Scenario, Structure};
pub use graph::HeteroGraph;

use thiserror::Error;

/// Workbench-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
