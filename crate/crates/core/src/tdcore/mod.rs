//! Return and loss arithmetic: n-step returns, the actor-critic loss, the
//! scaled TD-AE loss and their combination.
//!
//! Pure functions over a [`SegmentBatch`]; graph-building functions take the
//! caller's [`crate::tensorgrad::Graph`].

mod batch;
mod losses;
mod returns;

pub use batch::SegmentBatch;
pub use losses::{a2c_loss, tdae_loss, tdae_targets, total_loss, A2cTerms, LossBreakdown, LossWeights, TdaeSpec};
pub use returns::{brute_force_return_oracle, nstep_returns, nstep_returns_row, scaled_cumulant_returns, RowView};

use crate::tensorgrad::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("{term} is not finite ({value})")]
    NonFinite { term: &'static str, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
