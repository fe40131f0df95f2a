//! Dataset-side transforms applied before and during training: trajectory
//! filtering, reward remaps, returns-to-go, observation normalization,
//! Monte-Carlo returns and weighted batch sampling over datasets and replay
//! buffers.

mod buffer;
mod sampling;
mod transforms;

pub use buffer::ReplayBuffer;
pub use sampling::{sample_batch, BatchSource, TransitionBatch};
pub use transforms::{
    filter_top_fraction, mc_returns, normalize_dataset, remap_rewards, returns_to_go,
    rtg_for_episode, NormalizationStats, RewardScheme,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("source {0} is empty but has positive weight")]
    EmptySource(usize),
    #[error("source weights must be non-negative and sum to 1, got {0}")]
    BadWeights(f64),
}
