//! Neural tangent kernel of a trained network, `κ(x, x′) = σ₀² J(x) J(x′)ᵀ`, with `J(x)` the
//! `C × P` Jacobian of the outputs w.r.t. the parameters.
//!
//! Multi-output Gram matrices use a point-major layout: row `i·C + c` is output `c` at point `i`.

mod context;
mod features;
mod gradient;

pub use context::{jacobian, jacobian_matrix, kernel_block, Jacobian, KernelContext};
pub use features::{kernel_block_fast, KernelBlockMatrix, KernelFeatures};
pub use gradient::{kernel_gradient_wrt_inputs, kernel_input_vjp, InputGradient};

#[cfg(test)]
mod tests;
