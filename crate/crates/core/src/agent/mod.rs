//! Soft actor-critic with sample-weighted policy updates.

mod buffer;
mod sac;
mod train;

pub use buffer::{ReplayBuffer, SampledBatch, Transition};
pub use sac::{CriticLoss, PolicySample, SacAgent, SacConfig, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{Method, StepReport, Trainer};
