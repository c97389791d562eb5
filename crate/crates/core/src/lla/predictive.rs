use super::LikelihoodModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Gaussian predictive over the `C` outputs at one input.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPredictive {
    pub mean: Vec<f64>,
    /// Function-space covariance `C × C`.
    pub covariance: Matrix,
    pub likelihood: LikelihoodModel,
}

impl GaussianPredictive {
    /// Variance of the observation `y_c`: function variance plus σ² for Gaussian likelihoods.
    pub fn observation_variance(&self, c: usize) -> f64 {
        self.covariance[(c, c)] + self.likelihood.noise_variance().unwrap_or(0.0)
    }
}

/// Predictives for a batch: means `N × C` and covariance blocks stacked `(N·C) × C`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub mean: Matrix,
    pub covariance: Matrix,
    pub likelihood: LikelihoodModel,
}

impl Predictions {
    pub fn new(mean: Matrix, covariance: Matrix, likelihood: LikelihoodModel) -> Result<Self> {
        let (n, c) = mean.shape();
        if covariance.shape() != (n * c, c) {
            return Err(Error::dims(format!(
                "covariance {:?} for {n} points with {c} outputs",
                covariance.shape()
            )));
        }
        if !mean.is_finite() || !covariance.is_finite() {
            return Err(Error::non_finite("predictive distribution"));
        }
        Ok(Predictions {
            mean,
            covariance,
            likelihood,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn outputs(&self) -> usize {
        self.mean.cols()
    }

    pub fn block(&self, i: usize) -> Matrix {
        let c = self.outputs();
        self.covariance.row_block(i * c, (i + 1) * c)
    }

    pub fn get(&self, i: usize) -> GaussianPredictive {
        GaussianPredictive {
            mean: self.mean.row(i).to_vec(),
            covariance: self.block(i),
            likelihood: self.likelihood,
        }
    }

    /// Function-space variance of output `c` at point `i`.
    pub fn function_variance(&self, i: usize, c: usize) -> f64 {
        self.covariance[(i * self.outputs() + c, c)]
    }

    /// Observation-space variance (adds σ² for Gaussian likelihoods).
    pub fn observation_variance(&self, i: usize, c: usize) -> f64 {
        self.function_variance(i, c) + self.likelihood.noise_variance().unwrap_or(0.0)
    }

    /// Rescales a regression predictive to original target units. The isotropic noise variance
    /// is rescaled with the first column's scale; regression targets here are single-column.
    pub fn unstandardize(&self, target_mean: &[f64], target_std: &[f64]) -> Predictions {
        let c = self.outputs();
        let mean = Matrix::from_fn(self.len(), c, |i, j| self.mean[(i, j)] * target_std[j] + target_mean[j]);
        let covariance = Matrix::from_fn(self.covariance.rows(), c, |r, j| {
            self.covariance[(r, j)] * target_std[r % c] * target_std[j]
        });
        let likelihood = match self.likelihood {
            LikelihoodModel::Gaussian { noise_variance } => LikelihoodModel::Gaussian {
                noise_variance: noise_variance * target_std[0] * target_std[0],
            },
            other => other,
        };
        Predictions {
            mean,
            covariance,
            likelihood,
        }
    }
}
