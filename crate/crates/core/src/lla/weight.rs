use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{jacobian_matrix, KernelContext};
use crate::linalg::{cholesky, CholeskyFactor, Matrix};

use super::likelihood::blockdiag_left;
use super::{lambda_sqrt_blocks, LikelihoodModel, Predictions};

/// Largest parameter count for which a dense `P × P` precision is formed.
pub const DEFAULT_PARAM_CAP: usize = 2000;

/// Points per Jacobian chunk are limited so a chunk holds at most this many values.
const CHUNK_VALUES: usize = 1 << 23;

fn chunk_points(outputs: usize, params: usize) -> usize {
    (CHUNK_VALUES / (outputs * params).max(1)).clamp(1, 256)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpaceKind {
    /// Dense GGN precision over all parameters.
    Full,
    /// Diagonal of the GGN precision.
    Diagonal,
    /// Dense GGN precision over the final layer only.
    LastLayer,
}

/// Weight-space Laplace posterior `Σ⁻¹ = Σ_n Jᵀ Λ J + I/σ₀²` with predictive `J Σ Jᵀ`.
#[derive(Clone, Debug)]
pub struct LlaWeightState {
    pub ctx: KernelContext,
    pub likelihood: LikelihoodModel,
    pub kind: WeightSpaceKind,
    /// `P′ × P′`, or `1 × P′` holding the diagonal for [`WeightSpaceKind::Diagonal`].
    pub precision: Matrix,
    factor: Option<CholeskyFactor>,
}

/// Jacobian w.r.t. the final layer's parameters only: for output `o` the nonzero columns are
/// `(a_{L−1}ᵀ, 1)` placed at class `o`, in the final layer's checkpoint order.
pub fn last_layer_jacobian(ctx: &KernelContext, x: &Matrix) -> Result<Matrix> {
    let f = ctx.features(x)?;
    let c = ctx.outputs();
    let a = f.activations.last().expect("at least one layer");
    let h = a.cols();
    let mut jac = Matrix::zeros(x.rows() * c, (h + 1) * c);
    for i in 0..x.rows() {
        for o in 0..c {
            let row = jac.row_mut(i * c + o);
            for (k, ak) in a.row(i).iter().enumerate() {
                row[k * c + o] = *ak;
            }
            row[h * c + o] = 1.0;
        }
    }
    Ok(jac)
}

fn kind_jacobian(ctx: &KernelContext, kind: WeightSpaceKind, x: &Matrix) -> Result<Matrix> {
    match kind {
        WeightSpaceKind::Full | WeightSpaceKind::Diagonal => jacobian_matrix(ctx, x),
        WeightSpaceKind::LastLayer => last_layer_jacobian(ctx, x),
    }
}

fn kind_param_count(ctx: &KernelContext, kind: WeightSpaceKind) -> usize {
    match kind {
        WeightSpaceKind::Full | WeightSpaceKind::Diagonal => ctx.param_count(),
        WeightSpaceKind::LastLayer => {
            let net = ctx.net();
            let w = net.weights.last().expect("at least one layer");
            (w.rows() + 1) * w.cols()
        }
    }
}

pub fn fit_weight_space(ctx: &KernelContext, likelihood: LikelihoodModel, x: &Matrix) -> Result<LlaWeightState> {
    fit_weight_space_with_cap(ctx, likelihood, x, WeightSpaceKind::Full, DEFAULT_PARAM_CAP)
}

pub fn fit_diag(ctx: &KernelContext, likelihood: LikelihoodModel, x: &Matrix) -> Result<LlaWeightState> {
    fit_weight_space_with_cap(ctx, likelihood, x, WeightSpaceKind::Diagonal, usize::MAX)
}

pub fn fit_last_layer(ctx: &KernelContext, likelihood: LikelihoodModel, x: &Matrix) -> Result<LlaWeightState> {
    fit_weight_space_with_cap(ctx, likelihood, x, WeightSpaceKind::LastLayer, DEFAULT_PARAM_CAP)
}

pub fn fit_weight_space_with_cap(
    ctx: &KernelContext,
    likelihood: LikelihoodModel,
    x: &Matrix,
    kind: WeightSpaceKind,
    cap: usize,
) -> Result<LlaWeightState> {
    likelihood.validate()?;
    if x.cols() != ctx.input_dim() {
        return Err(Error::dims(format!("inputs have {} columns, network expects {}", x.cols(), ctx.input_dim())));
    }
    let p = kind_param_count(ctx, kind);
    if kind != WeightSpaceKind::Diagonal && p > cap {
        return Err(Error::CapExceeded {
            what: "parameter count for a dense weight-space posterior",
            value: p,
            cap,
            advice: Some("use the diagonal or last-layer variant".into()),
        });
    }
    let prior_precision = 1.0 / ctx.prior_variance();
    let mut precision = match kind {
        WeightSpaceKind::Diagonal => Matrix::zeros(1, p),
        _ => Matrix::zeros(p, p),
    };
    let chunk = chunk_points(ctx.outputs(), ctx.param_count());
    let mut start = 0;
    while start < x.rows() {
        let end = (start + chunk).min(x.rows());
        let idx: Vec<usize> = (start..end).collect();
        let xs = x.select_rows(&idx);
        let g = ctx.net().predict(&xs)?;
        let lj = blockdiag_left(&lambda_sqrt_blocks(&likelihood, &g)?, &kind_jacobian(ctx, kind, &xs)?);
        match kind {
            WeightSpaceKind::Diagonal => {
                let d = precision.as_mut_slice();
                for r in 0..lj.rows() {
                    for (dp, v) in d.iter_mut().zip(lj.row(r)) {
                        *dp += v * v;
                    }
                }
            }
            _ => precision.add_assign(&lj.t_matmul(&lj)?),
        }
        start = end;
    }
    match kind {
        WeightSpaceKind::Diagonal => precision.as_mut_slice().iter_mut().for_each(|d| *d += prior_precision),
        _ => {
            precision.symmetrize();
            precision.add_diag(prior_precision);
        }
    }
    LlaWeightState::from_precision(ctx, likelihood, kind, precision)
}

impl LlaWeightState {
    /// Rebuilds a state from a stored precision.
    pub fn from_precision(
        ctx: &KernelContext,
        likelihood: LikelihoodModel,
        kind: WeightSpaceKind,
        precision: Matrix,
    ) -> Result<Self> {
        let p = kind_param_count(ctx, kind);
        let expected = match kind {
            WeightSpaceKind::Diagonal => (1, p),
            _ => (p, p),
        };
        if precision.shape() != expected {
            return Err(Error::dims(format!("precision {:?}, expected {expected:?}", precision.shape())));
        }
        let factor = match kind {
            WeightSpaceKind::Diagonal => {
                if precision.as_slice().iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::NotPositiveDefinite { jitter: 0.0 });
                }
                None
            }
            _ => Some(cholesky(&precision, 0.0)?),
        };
        Ok(LlaWeightState {
            ctx: ctx.clone(),
            likelihood,
            kind,
            precision,
            factor,
        })
    }

    pub fn param_count(&self) -> usize {
        self.precision.cols()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Predictions> {
        let c = self.ctx.outputs();
        let mean = self.ctx.net().predict(x)?;
        let mut cov = Matrix::zeros(x.rows() * c, c);
        let chunk = chunk_points(c, self.ctx.param_count());
        let mut start = 0;
        while start < x.rows() {
            let end = (start + chunk).min(x.rows());
            let idx: Vec<usize> = (start..end).collect();
            let j = kind_jacobian(&self.ctx, self.kind, &x.select_rows(&idx))?;
            for i in 0..idx.len() {
                let ji = j.row_block(i * c, (i + 1) * c);
                let block = match &self.factor {
                    Some(f) => {
                        let v = f.solve_lower(&ji.transpose())?;
                        v.t_matmul(&v)?
                    }
                    None => {
                        let d = self.precision.as_slice();
                        let scaled = Matrix::from_fn(c, ji.cols(), |o, p| ji[(o, p)] / d[p]);
                        scaled.matmul_t(&ji)?
                    }
                };
                cov.set_submatrix((start + i) * c, 0, &block);
            }
            start = end;
        }
        Predictions::new(mean, cov, self.likelihood)
    }
}
