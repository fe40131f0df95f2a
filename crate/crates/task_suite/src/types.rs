use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("unknown flavor '{0}'")]
    UnknownFlavor(String),
    #[error("episode already finished; call reset")]
    EpisodeOver,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    Dense,
    SparseSuccess,
}

/// Static description of a registered task, including the frozen reference
/// returns used for score normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub horizon: usize,
    pub reward_kind: RewardKind,
    /// Mean return of the uniform random policy (frozen at registry build).
    pub random_score: f64,
    /// Mean return of the scripted expert (frozen at registry build).
    pub expert_score: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<f32>,
    pub reward: f32,
    pub terminal: bool,
    pub timeout: bool,
}

/// One environment interaction in the flat dataset schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_observation: Vec<f32>,
    pub terminal: bool,
    pub timeout: bool,
}

pub trait Environment {
    fn spec(&self) -> &TaskSpec;

    /// Deterministic initial observation for (task, seed); resets the
    /// internal step counter.
    fn reset(&mut self, seed: u64) -> Vec<f32>;

    /// Advances one control tick. Actions outside the box are clipped.
    fn step(&mut self, action: &[f32]) -> Result<StepResult, TaskError>;

    /// Scripted expert action for the current internal state.
    fn expert_action(&mut self) -> Vec<f32>;
}
