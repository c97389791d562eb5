//! Linearized Laplace posterior over network functions: the exact function-space GP, its
//! weight-space counterpart, and the diagonal and last-layer baselines.

mod exact;
mod likelihood;
mod predictive;
mod tuning;
mod weight;

pub use exact::{fit_exact, fit_exact_with_cap, LlaExactState, DEFAULT_EXACT_CAP};
pub use likelihood::{lambda_of, lambda_sqrt_blocks, LikelihoodModel};
pub use predictive::{GaussianPredictive, Predictions};
pub use tuning::{
    laplace_log_evidence, log_grid, log_marginal_likelihood, tune_prior_variance, GridSearch, PRIOR_GRID,
};
pub use weight::{
    fit_diag, fit_last_layer, fit_weight_space, fit_weight_space_with_cap, last_layer_jacobian, LlaWeightState,
    WeightSpaceKind, DEFAULT_PARAM_CAP,
};
