pub mod cli;
pub mod data;
pub mod ella;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod lla;
pub mod metrics;
pub mod nn;
pub mod valla;

pub use error::{Error, Result};
