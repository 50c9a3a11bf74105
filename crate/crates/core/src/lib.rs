//! Offline dead-end discovery on the LifeGate gridworld.
//!
//! The library trains twin value heads on outcome-relabeled offline data — a
//! D-head for negative outcomes (returns in [-1, 0]) and an R-head for
//! positive outcomes (returns in [0, 1]) — as either point estimators (double
//! DQN) or return-distribution estimators (implicit quantile networks), with
//! an optional conservative penalty on out-of-data actions. Distributional
//! heads are assessed through the conditional value-at-risk of their sampled
//! return particles, which lower-bounds the expected value and so flags
//! dead-end states earlier than point estimates at matched thresholds.
//!
//! Modules:
//! - [`net`]: dense nets with explicit forward/backward and Adam.
//! - [`risk`]: empirical VaR/CVaR and a dual-representation reference.
//! - [`lifegate`]: the gridworld and its hand-designed evaluation policies.
//! - [`dataset`]: offline transition store, relabeling, sampling, file format.
//! - [`learner`]: DDQN/IQN training with target networks and the CQL penalty.
//! - [`assess`]: per-state dead-end verdicts and trajectory alarms.
//! - [`eval`]: early-warning gaps, ROC/AUC sweeps, ablations, histograms.
//! - [`pipeline`]: file-producing entry points shared by the CLI and tests.

pub mod assess;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod learner;
pub mod lifegate;
pub mod net;
pub mod pipeline;
pub mod risk;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Derive a child seed from a base seed and a stream label. Streams with
/// distinct labels are independent, and the derivation is stable across runs.
pub fn derive_seed(base: u64, stream: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
