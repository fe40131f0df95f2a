//! Dense-tensor reverse-mode automatic differentiation plus the small set of
//! network layers, optimizers and learning-rate schedules the trainers need.
//!
//! The primitive set is closed: add/sub/mul/div (broadcasting), matmul,
//! reductions (sum/mean/min/max), elementwise exp/log/sqrt/tanh/relu/gelu,
//! clamp, softmax, layer-norm, gather, concat, slice and reshape. Trainers
//! compose everything else (logsumexp, squared error, cosine similarity,
//! dropout masks) from these, which keeps the finite-difference suite
//! exhaustive.

mod checkpoint;
pub mod nn;
pub mod optim;
mod schedule;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry, CheckpointError};
pub use schedule::Schedule;
pub use tensor::Tensor;
