use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{KernelContext, KernelFeatures};

/// Gradient of `Σ adjoint ∘ κ(X, Z)` w.r.t. the rows of `Z` (`N₂ × D`), by reverse-mode
/// differentiation through the layerwise kernel: first into the activations and sensitivities
/// of `Z`, then back down the sensitivity recursion and the forward pass.
pub fn kernel_input_vjp(
    ctx: &KernelContext,
    fx: &KernelFeatures,
    fz: &KernelFeatures,
    adjoint: &Matrix,
) -> Result<Matrix> {
    let c = fx.outputs;
    let (n1, n2) = (fx.points, fz.points);
    if adjoint.shape() != (n1 * c, n2 * c) || fz.outputs != c {
        return Err(Error::dims(format!(
            "adjoint {:?} for a {}×{} block with {c} outputs",
            adjoint.shape(),
            n1,
            n2
        )));
    }
    let net = ctx.net();
    let act = net.arch.activation;
    let depth = net.depth();
    let sigma2 = ctx.prior_variance();

    let mut act_bar: Vec<Matrix> = fz.activations.iter().map(|a| Matrix::zeros(a.rows(), a.cols())).collect();
    let mut sens_bar: Vec<Matrix> = Vec::with_capacity(depth);
    for l in 0..depth {
        let g = fx.activations[l].matmul_t(&fz.activations[l])?;
        let m = fx.sensitivities[l].matmul_t(&fz.sensitivities[l])?;
        // Ḡ[i, j] = σ₀² Σ_{o,p} adj ∘ M over block (i, j); M̄ = σ₀² adj ∘ (G + 1) blockwise.
        let mut g_bar = Matrix::zeros(n1, n2);
        let mut m_bar = Matrix::zeros(n1 * c, n2 * c);
        for r in 0..n1 * c {
            let i = r / c;
            let arow = adjoint.row(r);
            let mrow = m.row(r);
            let grow = g.row(i);
            let mbrow = m_bar.row_mut(r);
            for col in 0..n2 * c {
                mbrow[col] = sigma2 * arow[col] * (grow[col / c] + 1.0);
            }
            let gb = g_bar.row_mut(i);
            for col in 0..n2 * c {
                gb[col / c] += sigma2 * arow[col] * mrow[col];
            }
        }
        act_bar[l].add_assign(&g_bar.t_matmul(&fx.activations[l])?);
        sens_bar.push(m_bar.t_matmul(&fx.sensitivities[l])?);
    }

    // S_l = (S_{l+1} W_{l+1}ᵀ) diag(d_l), d_l = act′ expressed through a_l = activations[l + 1].
    for l in 0..depth - 1 {
        let t = fz.sensitivities[l + 1].matmul_t(&net.weights[l + 1])?;
        let a = &fz.activations[l + 1];
        let mut t_bar = sens_bar[l].clone();
        let mut d_bar = Matrix::zeros(n2, a.cols());
        for i in 0..n2 {
            let ai = a.row(i).to_vec();
            for o in 0..c {
                let r = i * c + o;
                let sb = sens_bar[l].row(r).to_vec();
                let trow = t.row(r);
                let db = d_bar.row_mut(i);
                for j in 0..ai.len() {
                    db[j] += sb[j] * trow[j];
                }
                for (v, av) in t_bar.row_mut(r).iter_mut().zip(&ai) {
                    *v *= act.derivative_from_output(*av);
                }
            }
            let db = d_bar.row(i).to_vec();
            for (j, ab) in act_bar[l + 1].row_mut(i).iter_mut().enumerate() {
                *ab += db[j] * act.derivative_slope_from_output(ai[j]);
            }
        }
        let upstream = t_bar.matmul(&net.weights[l + 1])?;
        sens_bar[l + 1].add_assign(&upstream);
    }

    // Forward pass in reverse: a_l = act(a_{l−1} W_{l−1} + b).
    for l in (1..depth).rev() {
        let a = &fz.activations[l];
        let mut h_bar = act_bar[l].clone();
        for (hb, av) in h_bar.as_mut_slice().iter_mut().zip(a.as_slice()) {
            *hb *= act.derivative_from_output(*av);
        }
        let down = h_bar.matmul_t(&net.weights[l - 1])?;
        act_bar[l - 1].add_assign(&down);
    }
    Ok(act_bar.swap_remove(0))
}

/// `∂κ_{op}(x, z)/∂z_k` for a single pair.
#[derive(Clone, Debug)]
pub struct InputGradient {
    pub outputs: usize,
    pub dim: usize,
    /// Index `(o·C + p)·D + k`.
    pub values: Vec<f64>,
}

impl InputGradient {
    pub fn get(&self, o: usize, p: usize, k: usize) -> f64 {
        self.values[(o * self.outputs + p) * self.dim + k]
    }
}

/// Full `C × C × D` derivative of `κ(x, z)` w.r.t. `z`, one reverse sweep per entry.
pub fn kernel_gradient_wrt_inputs(ctx: &KernelContext, x: &[f64], z: &[f64]) -> Result<InputGradient> {
    let d = ctx.input_dim();
    if x.len() != d || z.len() != d {
        return Err(Error::dims(format!("points must have {d} coordinates")));
    }
    let c = ctx.outputs();
    let fx = ctx.features(&Matrix::row_vector(x))?;
    let fz = ctx.features(&Matrix::row_vector(z))?;
    let mut values = vec![0.0; c * c * d];
    for o in 0..c {
        for p in 0..c {
            let mut adj = Matrix::zeros(c, c);
            adj[(o, p)] = 1.0;
            let g = kernel_input_vjp(ctx, &fx, &fz, &adj)?;
            values[(o * c + p) * d..(o * c + p + 1) * d].copy_from_slice(g.row(0));
        }
    }
    Ok(InputGradient { outputs: c, dim: d, values })
}
