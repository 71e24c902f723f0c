// Range checks are written as `!(x >= lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod agent;
pub mod decorrelation;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rff;
pub mod rng;
pub mod saliency;
mod scalar;

pub use error::{Result, SgfdError};
pub use scalar::Scalar;

pub type FeatureBatchF32 = decorrelation::FeatureBatch<f32>;
pub type FeatureBatchF64 = decorrelation::FeatureBatch<f64>;
pub type WeightVectorF32 = decorrelation::WeightVector<f32>;
pub type WeightVectorF64 = decorrelation::WeightVector<f64>;
pub type DecorrProblemF32 = decorrelation::DecorrProblem<f32>;
pub type DecorrProblemF64 = decorrelation::DecorrProblem<f64>;
pub type FeatureMapsF32 = rff::FeatureMaps<f32>;
pub type FeatureMapsF64 = rff::FeatureMaps<f64>;
pub type MlpF32 = nn::Mlp<f32>;
pub type MlpF64 = nn::Mlp<f64>;
pub type EnvClassifierF32 = saliency::EnvClassifier<f32>;
pub type EnvClassifierF64 = saliency::EnvClassifier<f64>;
pub type SacAgentF32 = agent::SacAgent<f32>;
pub type SacAgentF64 = agent::SacAgent<f64>;
pub type TrainerF32 = agent::Trainer<f32>;
pub type TrainerF64 = agent::Trainer<f64>;
