//! Pearson correlation matrices (raw and weighted) and return evaluation.

mod correlation;
mod returns;

pub use correlation::{
    correlation_matrix, pearson, resampled_correlation_matrix, weighted_pearson, CorrelationReport,
    CORRELATION_FORMAT_VERSION,
};
pub use returns::{evaluate_agent, evaluate_return, ReturnStats};

#[cfg(test)]
mod tests;
