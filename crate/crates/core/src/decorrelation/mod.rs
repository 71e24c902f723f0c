//! Sample reweighting that removes statistical dependence between features.

mod batch;
mod estimator;
mod objective;
mod optimize;
mod permutation;

pub use batch::{project_weights, standardize_columns, FeatureBatch, WeightVector};
pub use estimator::{
    cross_cov, frob_norm_sq, weighted_cross_cov, weighted_moment_cross_cov, CrossCovEstimator,
};
pub use objective::{decorrelation_objective, objective_grad_w, pair_independence, DecorrProblem};
pub use optimize::{optimize_problem, optimize_weights, DecorrConfig, TracePoint, WeightOutcome};
pub use permutation::{percentile, permutation_test, PermutationTest};

#[cfg(test)]
mod tests;
