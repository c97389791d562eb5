use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::{psd_sqrt, Matrix};
use crate::nn::softmax;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LikelihoodModel {
    Gaussian { noise_variance: f64 },
    Categorical,
}

impl LikelihoodModel {
    pub fn validate(&self) -> Result<()> {
        if let LikelihoodModel::Gaussian { noise_variance } = self {
            if !(*noise_variance > 0.0) || !noise_variance.is_finite() {
                return Err(Error::config(format!("noise variance must be > 0, got {noise_variance}")));
            }
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> Option<f64> {
        match self {
            LikelihoodModel::Gaussian { noise_variance } => Some(*noise_variance),
            LikelihoodModel::Categorical => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, LikelihoodModel::Categorical)
    }

    pub fn encode(&self, w: &mut ByteWriter) {
        match self {
            LikelihoodModel::Gaussian { noise_variance } => {
                w.u8(0);
                w.f64(*noise_variance);
            }
            LikelihoodModel::Categorical => w.u8(1),
        }
    }

    pub fn decode(r: &mut ByteReader) -> Result<LikelihoodModel> {
        let lik = match r.u8()? {
            0 => LikelihoodModel::Gaussian {
                noise_variance: r.f64()?,
            },
            1 => LikelihoodModel::Categorical,
            k => return Err(Error::format(format!("unknown likelihood tag {k}"))),
        };
        lik.validate().map_err(|_| Error::format("stored noise variance is not positive"))?;
        Ok(lik)
    }
}

/// Negative Hessian of the log-likelihood w.r.t. the network output `g` (`C × C`).
pub fn lambda_of(likelihood: &LikelihoodModel, g: &[f64]) -> Matrix {
    match likelihood {
        LikelihoodModel::Gaussian { noise_variance } => Matrix::identity(g.len()).scale(1.0 / noise_variance),
        LikelihoodModel::Categorical => {
            let p = softmax(g);
            Matrix::from_fn(p.len(), p.len(), |i, j| if i == j { p[i] } else { 0.0 } - p[i] * p[j])
        }
    }
}

/// `Λ^{1/2}` for every row of the output matrix `g` (`N × C`), stacked as `(N·C) × C`.
pub fn lambda_sqrt_blocks(likelihood: &LikelihoodModel, g: &Matrix) -> Result<Matrix> {
    let (n, c) = g.shape();
    let mut out = Matrix::zeros(n * c, c);
    for i in 0..n {
        let block = match likelihood {
            LikelihoodModel::Gaussian { noise_variance } => Matrix::identity(c).scale(1.0 / noise_variance.sqrt()),
            LikelihoodModel::Categorical => psd_sqrt(&lambda_of(likelihood, g.row(i)))?,
        };
        out.set_submatrix(i * c, 0, &block);
    }
    Ok(out)
}

/// `blockdiag(B) · M` where `blocks` stacks the `C × C` blocks as `(N·C) × C`.
pub(crate) fn blockdiag_left(blocks: &Matrix, m: &Matrix) -> Matrix {
    let c = blocks.cols();
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() / c {
        let b = blocks.row_block(i * c, (i + 1) * c);
        let rows = m.row_block(i * c, (i + 1) * c);
        out.set_submatrix(i * c, 0, &b.matmul(&rows).expect("block shapes"));
    }
    out
}

/// `M · blockdiag(B)` for symmetric blocks.
pub(crate) fn blockdiag_right(m: &Matrix, blocks: &Matrix) -> Matrix {
    blockdiag_left(blocks, &m.transpose()).transpose()
}
