use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{backward, forward, MlpNetwork};

use super::KernelFeatures;

/// A trained network together with the log prior variance `log σ₀²` that scales its kernel.
#[derive(Clone, Debug)]
pub struct KernelContext {
    net: Arc<MlpNetwork>,
    pub log_prior_variance: f64,
}

impl KernelContext {
    pub fn new(net: Arc<MlpNetwork>, log_prior_variance: f64) -> Result<Self> {
        if !log_prior_variance.is_finite() {
            return Err(Error::non_finite("log prior variance"));
        }
        Ok(KernelContext {
            net,
            log_prior_variance,
        })
    }

    pub fn with_log_prior_variance(&self, log_prior_variance: f64) -> Result<Self> {
        KernelContext::new(self.net.clone(), log_prior_variance)
    }

    pub fn net(&self) -> &MlpNetwork {
        &self.net
    }

    pub fn shared_net(&self) -> Arc<MlpNetwork> {
        self.net.clone()
    }

    /// `σ₀²`.
    pub fn prior_variance(&self) -> f64 {
        self.log_prior_variance.exp()
    }

    pub fn outputs(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Per-layer activations and output sensitivities for a batch of inputs.
    pub fn features(&self, x: &Matrix) -> Result<KernelFeatures> {
        KernelFeatures::new(&self.net, x)
    }

    /// `κ(X, Z)` in point-major layout.
    pub fn gram(&self, x: &KernelFeatures, z: &KernelFeatures) -> Result<Matrix> {
        Ok(x.gram(z, self.prior_variance())?.values)
    }

    /// `κ(x_i, x_i)` for every row, stacked into an `(N·C) × C` matrix.
    pub fn diag_blocks(&self, x: &KernelFeatures) -> Matrix {
        x.diag_blocks(self.prior_variance())
    }
}

/// Parameter Jacobian at one input.
#[derive(Clone, Debug)]
pub struct Jacobian {
    pub point: Vec<f64>,
    /// `C × P`, columns in checkpoint (layer-major) order.
    pub values: Matrix,
}

/// Jacobian by one backward pass per output.
pub fn jacobian(ctx: &KernelContext, x: &[f64]) -> Result<Jacobian> {
    let net = ctx.net();
    if x.len() != net.input_dim() {
        return Err(Error::dims(format!(
            "point has {} coordinates, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let c = net.output_dim();
    let trace = forward(net, &Matrix::row_vector(x), true)?;
    let mut values = Matrix::zeros(c, net.param_count());
    for o in 0..c {
        let mut seed = Matrix::zeros(1, c);
        seed[(0, o)] = 1.0;
        let g = backward(net, &trace, &seed)?.to_flat();
        values.row_mut(o).copy_from_slice(&g);
    }
    Ok(Jacobian {
        point: x.to_vec(),
        values,
    })
}

/// Stacked Jacobians of all rows of `x` as an `(N·C) × P` matrix. This materializes the full
/// tensor and is intended for weight-space methods with small `P`.
pub fn jacobian_matrix(ctx: &KernelContext, x: &Matrix) -> Result<Matrix> {
    let f = ctx.features(x)?;
    let net = ctx.net();
    let c = net.output_dim();
    let offsets = net.arch.layer_offsets();
    let mut jac = Matrix::zeros(x.rows() * c, net.param_count());
    for (l, w) in net.weights.iter().enumerate() {
        let (fan_in, fan_out) = w.shape();
        let acts = &f.activations[l];
        let sens = &f.sensitivities[l];
        for i in 0..x.rows() {
            let a = acts.row(i);
            for o in 0..c {
                let s = sens.row(i * c + o);
                let row = jac.row_mut(i * c + o);
                let block = &mut row[offsets[l]..offsets[l] + (fan_in + 1) * fan_out];
                for (k, ak) in a.iter().enumerate() {
                    for (j, sj) in s.iter().enumerate() {
                        block[k * fan_out + j] = ak * sj;
                    }
                }
                block[fan_in * fan_out..].copy_from_slice(s);
            }
        }
    }
    Ok(jac)
}

/// `σ₀² J(x) J(x′)ᵀ` from explicit Jacobians.
pub fn kernel_block(ctx: &KernelContext, x: &[f64], x_prime: &[f64]) -> Result<Matrix> {
    let a = jacobian(ctx, x)?;
    let b = jacobian(ctx, x_prime)?;
    Ok(a.values.matmul_t(&b.values)?.scale(ctx.prior_variance()))
}
