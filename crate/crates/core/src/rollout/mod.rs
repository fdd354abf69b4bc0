//! Lock-step experience collection across `W` workers and the learner update.

mod collect;
mod learn;

pub use collect::{
    collect_segment, episode_seed, init_workers, policy_step, select_action, ActionSelection, EpisodeSummary,
    RolloutConfig, WorkerSlot,
};
pub use learn::{assemble_loss, compute_targets, forward_segment, train_update, SegmentForward, Targets, UpdateConfig, UpdateStats};

use crate::gridpix::EnvError;
use crate::netcore::NetError;
use crate::tdcore::TdError;
use crate::tensorgrad::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("rollout configuration error: {0}")]
    Config(String),
    #[error("worker {worker}: {source}")]
    Env { worker: usize, source: EnvError },
    #[error("update {update}: {source}")]
    Update { update: u64, source: Box<RolloutError> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Td(#[from] TdError),
}
