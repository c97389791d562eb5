//! Nyström-feature baseline: eigen-features from the kernel on a random anchor subset and a
//! Gaussian posterior over feature weights accumulated in one pass over the training inputs.

mod state;

pub use state::{fit_ella, EllaConfig, EllaState, EIGEN_FLOOR, ELLA_MAGIC, ELLA_VERSION};
