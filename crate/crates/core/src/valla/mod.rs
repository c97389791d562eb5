//! Sparse variational LLA: a decoupled inducing-point posterior whose mean stays the network
//! output while the covariance factor, inducing locations and hyperparameters are trained.

mod fit;
mod kmeans;
mod objective;
mod state;

pub use fit::{fit_valla, fit_valla_from, write_valla_log, TrainSchedule, VallaFit, VallaLogRow, VallaOptions};
pub use kmeans::{kmeans_init, KMEANS_ITERATIONS};
pub use objective::{
    alpha_objective, alpha_objective_gradient, elbo_objective, elbo_objective_gradient, DataTerm, DualBasisReport,
    ObjectiveGradient,
};
pub use state::{optimal_a, VallaState, INITIAL_FACTOR_SCALE, VALLA_MAGIC, VALLA_VERSION};
