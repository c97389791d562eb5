use crate::error::{Error, Result};
use crate::kernel::{KernelContext, KernelFeatures};
use crate::linalg::{cholesky, CholeskyFactor, Matrix};

use super::likelihood::{blockdiag_left, blockdiag_right};
use super::{lambda_sqrt_blocks, LikelihoodModel, Predictions};

/// Largest `N·C` accepted by the exact GP path.
pub const DEFAULT_EXACT_CAP: usize = 3000;

/// Test points are processed in chunks of this many rows.
const PREDICT_CHUNK: usize = 256;

/// Exact function-space posterior
/// `K*(x, x′) = κ(x, x′) − κ(x, X) Q⁻¹ κ(X, x′)` with `Q = Λ⁻¹ + κ(X, X)`.
///
/// `Λ` is singular for the softmax likelihood, so `Q⁻¹` is applied as
/// `Λ^{1/2} (I + Λ^{1/2} κ(X, X) Λ^{1/2})⁻¹ Λ^{1/2}`, which equals it whenever `Λ` is invertible
/// and stays defined when it is not.
#[derive(Clone, Debug)]
pub struct LlaExactState {
    pub ctx: KernelContext,
    pub likelihood: LikelihoodModel,
    pub train_inputs: Matrix,
    train_features: KernelFeatures,
    /// `Λ^{1/2}` blocks, `(N·C) × C`.
    lambda_sqrt: Matrix,
    /// Factor of `I + Λ^{1/2} κ(X, X) Λ^{1/2}`; `None` without data.
    q_factor: Option<CholeskyFactor>,
}

pub fn fit_exact(ctx: &KernelContext, likelihood: LikelihoodModel, x: &Matrix) -> Result<LlaExactState> {
    fit_exact_with_cap(ctx, likelihood, x, DEFAULT_EXACT_CAP)
}

pub fn fit_exact_with_cap(
    ctx: &KernelContext,
    likelihood: LikelihoodModel,
    x: &Matrix,
    cap: usize,
) -> Result<LlaExactState> {
    likelihood.validate()?;
    if x.cols() != ctx.input_dim() {
        return Err(Error::dims(format!("inputs have {} columns, network expects {}", x.cols(), ctx.input_dim())));
    }
    let c = ctx.outputs();
    let size = x.rows() * c;
    if size > cap {
        return Err(Error::CapExceeded {
            what: "N·C for the exact posterior",
            value: size,
            cap,
            advice: Some("use VaLLA, ELLA or a weight-space baseline for larger data".into()),
        });
    }
    let features = ctx.features(x)?;
    let g = ctx.net().predict(x)?;
    let lambda_sqrt = lambda_sqrt_blocks(&likelihood, &g)?;
    let q_factor = if x.rows() == 0 {
        None
    } else {
        let k = ctx.gram(&features, &features)?;
        let mut q = blockdiag_right(&blockdiag_left(&lambda_sqrt, &k), &lambda_sqrt);
        q.symmetrize();
        q.add_diag(1.0);
        Some(cholesky(&q, 0.0)?)
    };
    Ok(LlaExactState {
        ctx: ctx.clone(),
        likelihood,
        train_inputs: x.clone(),
        train_features: features,
        lambda_sqrt,
        q_factor,
    })
}

impl LlaExactState {
    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        let c = self.ctx.outputs();
        let mean = self.ctx.net().predict(x)?;
        let mut cov = Matrix::zeros(x.rows() * c, c);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + PREDICT_CHUNK).min(x.rows());
            let idx: Vec<usize> = (start..end).collect();
            let f = self.ctx.features(&x.select_rows(&idx))?;
            let mut blocks = self.ctx.diag_blocks(&f);
            if let Some(factor) = &self.q_factor {
                // V = R⁻¹ Λ^{1/2} κ(X, x*)
                let k_xs = self.ctx.gram(&self.train_features, &f)?;
                let v = factor.solve_lower(&blockdiag_left(&self.lambda_sqrt, &k_xs))?;
                for i in 0..idx.len() {
                    let vi = v.submatrix(0, i * c, v.rows(), c);
                    let reduction = vi.t_matmul(&vi)?;
                    for o in 0..c {
                        for p in 0..c {
                            blocks[(i * c + o, p)] -= reduction[(o, p)];
                        }
                    }
                }
            }
            cov.set_submatrix(start * c, 0, &blocks);
            start = end;
        }
        Predictions::new(mean, cov, self.likelihood)
    }

    /// Full posterior covariance `K*(X₁, X₂)` in point-major layout.
    pub fn posterior_covariance(&self, x1: &Matrix, x2: &Matrix) -> Result<Matrix> {
        let f1 = self.ctx.features(x1)?;
        let f2 = self.ctx.features(x2)?;
        let mut k = self.ctx.gram(&f1, &f2)?;
        if let Some(factor) = &self.q_factor {
            let a = factor.solve_lower(&blockdiag_left(&self.lambda_sqrt, &self.ctx.gram(&self.train_features, &f1)?))?;
            let b = factor.solve_lower(&blockdiag_left(&self.lambda_sqrt, &self.ctx.gram(&self.train_features, &f2)?))?;
            k = k.sub(&a.t_matmul(&b)?)?;
        }
        Ok(k)
    }

    pub fn jitter(&self) -> f64 {
        self.q_factor.as_ref().map_or(0.0, |f| f.jitter())
    }
}
