use super::{Dataset, Task};
use crate::linalg::{rng_stream, Matrix};

pub const TOY_CLUSTER_CENTER: f64 = 1.0;
pub const TOY_CLUSTER_HALF_WIDTH: f64 = 0.6;
pub const TOY_NOISE_STD: f64 = 0.1;

/// Noise-free toy regression function `sin(3x) + x/2`.
pub fn toy1d_mean(x: f64) -> f64 {
    (3.0 * x).sin() + 0.5 * x
}

/// `n` points drawn from two clusters `[-1.6, -0.4] ∪ [0.4, 1.6]` (cluster chosen by a fair coin,
/// uniform within it) with targets `toy1d_mean(x) + N(0, 0.1²)`. The gap around zero is where
/// a well-calibrated model should become uncertain.
pub fn synth_toy1d(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_stream(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let center = if rng.uniform() < 0.5 { -TOY_CLUSTER_CENTER } else { TOY_CLUSTER_CENTER };
        let xi = rng.uniform_range(center - TOY_CLUSTER_HALF_WIDTH, center + TOY_CLUSTER_HALF_WIDTH);
        x.push(xi);
        y.push(toy1d_mean(xi) + TOY_NOISE_STD * rng.standard_normal());
    }
    Dataset::new(
        Matrix::from_vec(n, 1, x).expect("shape"),
        Matrix::from_vec(n, 1, y).expect("shape"),
        Task::Regression,
    )
    .expect("generated data is finite")
}
