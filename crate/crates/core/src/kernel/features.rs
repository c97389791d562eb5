use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{forward, MlpNetwork};

use super::KernelContext;

/// What the layer-by-layer kernel needs from each point: the input to every layer `a_{l−1}`
/// and the sensitivity `S_l = ∂g/∂h_l` (`C × out_l`). Since `∂g_o/∂W_l[i, j] = a_{l−1, i}
/// S_l[o, j]`, the Jacobian inner product collapses to
/// `Σ_l (a_{l−1}(x)·a_{l−1}(z) + 1) · S_l(x) S_l(z)ᵀ`, and no `C × P` Jacobian is ever formed.
#[derive(Clone, Debug)]
pub struct KernelFeatures {
    pub points: usize,
    pub outputs: usize,
    /// Per layer, `N × in_l`.
    pub activations: Vec<Matrix>,
    /// Per layer, `(N·C) × out_l`, point-major rows.
    pub sensitivities: Vec<Matrix>,
}

impl KernelFeatures {
    pub fn new(net: &MlpNetwork, x: &Matrix) -> Result<Self> {
        let trace = forward(net, x, true)?;
        let n = x.rows();
        let c = net.output_dim();
        let depth = net.depth();
        let mut activations = Vec::with_capacity(depth);
        activations.push(x.clone());
        activations.extend(trace.post_activations.iter().cloned());

        let mut sensitivities = vec![Matrix::zeros(0, 0); depth];
        sensitivities[depth - 1] = Matrix::from_fn(n * c, c, |r, j| if r % c == j { 1.0 } else { 0.0 });
        let act = net.arch.activation;
        for l in (0..depth - 1).rev() {
            let mut s = sensitivities[l + 1].matmul_t(&net.weights[l + 1])?;
            let a = &activations[l + 1];
            for i in 0..n {
                let ai = a.row(i);
                for o in 0..c {
                    for (v, av) in s.row_mut(i * c + o).iter_mut().zip(ai) {
                        *v *= act.derivative_from_output(*av);
                    }
                }
            }
            sensitivities[l] = s;
        }
        Ok(KernelFeatures {
            points: n,
            outputs: c,
            activations,
            sensitivities,
        })
    }

    /// Number of stored values; grows with `N·C·Σ_l width_l`, never with `P`.
    pub fn stored_values(&self) -> usize {
        self.activations.iter().map(|m| m.as_slice().len()).sum::<usize>()
            + self.sensitivities.iter().map(|m| m.as_slice().len()).sum::<usize>()
    }

    pub fn select(&self, idx: &[usize]) -> KernelFeatures {
        let c = self.outputs;
        let rows: Vec<usize> = idx.iter().flat_map(|&i| (0..c).map(move |o| i * c + o)).collect();
        KernelFeatures {
            points: idx.len(),
            outputs: c,
            activations: self.activations.iter().map(|m| m.select_rows(idx)).collect(),
            sensitivities: self.sensitivities.iter().map(|m| m.select_rows(&rows)).collect(),
        }
    }

    fn check_compatible(&self, other: &KernelFeatures) -> Result<()> {
        if self.outputs != other.outputs || self.activations.len() != other.activations.len() {
            return Err(Error::dims("kernel features come from different networks"));
        }
        Ok(())
    }

    /// Full Gram block `κ(self, other)` in point-major layout.
    pub fn gram(&self, other: &KernelFeatures, prior_variance: f64) -> Result<KernelBlockMatrix> {
        self.check_compatible(other)?;
        let c = self.outputs;
        let (n1, n2) = (self.points, other.points);
        let mut values = Matrix::zeros(n1 * c, n2 * c);
        for l in 0..self.activations.len() {
            let g = self.activations[l].matmul_t(&other.activations[l])?;
            let m = self.sensitivities[l].matmul_t(&other.sensitivities[l])?;
            let width = n2 * c;
            let out = values.as_mut_slice();
            for r in 0..n1 * c {
                let grow = g.row(r / c);
                let mrow = m.row(r);
                let orow = &mut out[r * width..(r + 1) * width];
                for (col, (o, mv)) in orow.iter_mut().zip(mrow).enumerate() {
                    *o += (grow[col / c] + 1.0) * mv;
                }
            }
        }
        values.scale_in_place(prior_variance);
        Ok(KernelBlockMatrix {
            left_points: n1,
            right_points: n2,
            outputs: c,
            values,
            auxiliary_values: self.stored_values() + other.stored_values(),
        })
    }

    /// `κ(x_i, x_i)` for every point, stacked as `(N·C) × C`.
    pub fn diag_blocks(&self, prior_variance: f64) -> Matrix {
        let c = self.outputs;
        let mut out = Matrix::zeros(self.points * c, c);
        for l in 0..self.activations.len() {
            let a = &self.activations[l];
            let s = &self.sensitivities[l];
            for i in 0..self.points {
                let g = crate::linalg::dot(a.row(i), a.row(i)) + 1.0;
                for o in 0..c {
                    for p in 0..c {
                        out[(i * c + o, p)] += g * crate::linalg::dot(s.row(i * c + o), s.row(i * c + p));
                    }
                }
            }
        }
        out.scale_in_place(prior_variance);
        out
    }
}

/// Gram matrix between two batches.
#[derive(Clone, Debug)]
pub struct KernelBlockMatrix {
    pub left_points: usize,
    pub right_points: usize,
    pub outputs: usize,
    /// `(N₁·C) × (N₂·C)`; block `(i, j)` is `κ(x_i, z_j)`.
    pub values: Matrix,
    /// Values held in per-point features while assembling (excludes the output itself).
    pub auxiliary_values: usize,
}

impl KernelBlockMatrix {
    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let c = self.outputs;
        self.values.submatrix(i * c, j * c, c, c)
    }
}

/// Layer-by-layer Gram matrix `κ(X, Z)`.
pub fn kernel_block_fast(ctx: &KernelContext, x: &Matrix, z: &Matrix) -> Result<KernelBlockMatrix> {
    if x.rows() == 0 || z.rows() == 0 {
        return Err(Error::dims("kernel batches must be nonempty"));
    }
    let fx = ctx.features(x)?;
    let fz = ctx.features(z)?;
    fx.gram(&fz, ctx.prior_variance())
}
