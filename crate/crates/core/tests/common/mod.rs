//! Shared toy-problem pipeline for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use valla::data::{synth_toy1d, Dataset, Normalization};
use valla::kernel::KernelContext;
use valla::linalg::Matrix;
use valla::lla::{log_grid, tune_prior_variance, LikelihoodModel, PRIOR_GRID};
use valla::nn::{train_map, LossKind, MlpArchitecture, TrainConfig};

pub const TOY_POINTS: usize = 200;
pub const TOY_SEED: u64 = 0;
pub const GRID_POINTS: usize = 200;
pub const GRID_RANGE: (f64, f64) = (-3.0, 3.0);
/// Fine σ² grid; the coarse 7-point default lands on 0.01 where the marginal likelihood peaks near 0.014.
pub const NOISE_GRID: (f64, f64, usize) = (1e-3, 1.0, 61);

/// Trained MAP network on the standardized toy data, with hyperparameters picked by the
/// exact marginal likelihood on the default grids.
pub struct Toy {
    pub train: Dataset,
    pub normalization: Normalization,
    pub ctx: KernelContext,
    pub likelihood: LikelihoodModel,
    /// Probe grid in standardized input units.
    pub grid: Matrix,
}

pub fn toy() -> Toy {
    let raw = synth_toy1d(TOY_POINTS, TOY_SEED);
    let normalization = Normalization::fit(&raw);
    let train = normalization.apply(&raw).unwrap();
    let arch = MlpArchitecture::new(1, &[50, 50], 1);
    let cfg = TrainConfig {
        iterations: 12_000,
        batch_size: 64,
        learning_rate: 1e-3,
        weight_decay: 0.0,
        seed: TOY_SEED,
        loss: LossKind::Rmse,
    };
    let net = Arc::new(train_map(&arch, &train, &cfg).unwrap().network);
    let base = KernelContext::new(net, 0.0).unwrap();
    let search = tune_prior_variance(
        &base,
        LikelihoodModel::Gaussian { noise_variance: 1.0 },
        &train.inputs,
        &train.targets,
        &log_grid(PRIOR_GRID.0, PRIOR_GRID.1, PRIOR_GRID.2),
        Some(&log_grid(NOISE_GRID.0, NOISE_GRID.1, NOISE_GRID.2)),
    )
    .unwrap();
    let ctx = base.with_log_prior_variance(search.prior_variance.ln()).unwrap();
    let likelihood = LikelihoodModel::Gaussian {
        noise_variance: search.noise_variance.unwrap(),
    };
    let (lo, hi) = GRID_RANGE;
    let raw_grid = Matrix::from_fn(GRID_POINTS, 1, |i, _| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64);
    let grid = normalization.transform_inputs(&raw_grid).unwrap();
    Toy {
        train,
        normalization,
        ctx,
        likelihood,
        grid,
    }
}

/// Per-point predictive standard deviation including observation noise.
pub fn predictive_std(pred: &valla::lla::Predictions) -> Vec<f64> {
    (0..pred.len()).map(|i| pred.observation_variance(i, 0).sqrt()).collect()
}

pub fn function_std(pred: &valla::lla::Predictions) -> Vec<f64> {
    (0..pred.len()).map(|i| pred.function_variance(i, 0).sqrt()).collect()
}
