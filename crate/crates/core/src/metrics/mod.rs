//! Evaluation metrics for Gaussian regression predictives and classification probabilities.

mod classification;
mod regression;
mod report;

pub use classification::{
    accuracy, brier, class_probabilities, ece, entropy, nll_categorical, ood_auc, predictive_class_probs, ECE_BINS,
};
pub use regression::{cqm, crps_gaussian, nll_gaussian, CqmCurve, CQM_GRID};
pub use report::{evaluate, nll, write_coverage_csv, MetricsReport};
