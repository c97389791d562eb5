use std::sync::Arc;

use super::*;
use crate::linalg::{cholesky, rng_stream, sym_eig, Matrix, RngStream};
use crate::nn::{MlpArchitecture, MlpNetwork};

fn random_ctx(dims: &[usize], seed: u64, log_s2: f64) -> KernelContext {
    let arch = MlpArchitecture::new(dims[0], &dims[1..dims.len() - 1], dims[dims.len() - 1]);
    let mut r = rng_stream(seed);
    let mut net = MlpNetwork::init(&arch, &mut r).unwrap();
    for b in net.biases.iter_mut().flatten() {
        *b = 0.5 * r.standard_normal();
    }
    KernelContext::new(Arc::new(net), log_s2).unwrap()
}

fn random_dims(r: &mut RngStream, max_width: usize, max_c: usize) -> Vec<usize> {
    let depth = 1 + r.index(3);
    let mut dims = vec![1 + r.index(6)];
    for _ in 1..depth {
        dims.push(1 + r.index(max_width));
    }
    dims.push(1 + r.index(max_c));
    dims
}

fn pairwise(ctx: &KernelContext, x: &Matrix, z: &Matrix) -> Matrix {
    let c = ctx.outputs();
    let mut k = Matrix::zeros(x.rows() * c, z.rows() * c);
    for i in 0..x.rows() {
        for j in 0..z.rows() {
            k.set_submatrix(i * c, j * c, &kernel_block(ctx, x.row(i), z.row(j)).unwrap());
        }
    }
    k
}

#[test]
fn linear_model_jacobian_is_input_and_one() {
    let ctx = random_ctx(&[3, 1], 1, 0.0);
    let x = [0.5, -2.0, 1.25];
    let j = jacobian(&ctx, &x).unwrap();
    assert_eq!(j.values.as_slice(), &[0.5, -2.0, 1.25, 1.0]);
}

#[test]
fn jacobian_matches_finite_differences() {
    let ctx = random_ctx(&[3, 6, 4, 2], 2, 0.0);
    let x = [0.3, -0.7, 1.1];
    let j = jacobian(&ctx, &x).unwrap();
    let theta = ctx.net().to_flat();
    let h = 1e-5;
    for k in 0..theta.len() {
        let mut p = theta.clone();
        p[k] += h;
        let up = MlpNetwork::from_flat(&ctx.net().arch, &p).unwrap().predict(&Matrix::row_vector(&x)).unwrap();
        p[k] -= 2.0 * h;
        let dn = MlpNetwork::from_flat(&ctx.net().arch, &p).unwrap().predict(&Matrix::row_vector(&x)).unwrap();
        for o in 0..2 {
            let fd = (up[(0, o)] - dn[(0, o)]) / (2.0 * h);
            let an = j.values[(o, k)];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(an.abs()).max(1e-3), "{k} {o}: {fd} {an}");
        }
    }
}

#[test]
fn zero_input_zero_bias_kills_first_layer_weight_columns() {
    let arch = MlpArchitecture::new(2, &[4], 3);
    let net = MlpNetwork::init(&arch, &mut rng_stream(3)).unwrap();
    let ctx = KernelContext::new(Arc::new(net), 0.0).unwrap();
    let j = jacobian(&ctx, &[0.0, 0.0]).unwrap();
    for o in 0..3 {
        for k in 0..2 * 4 {
            assert_eq!(j.values[(o, k)], 0.0);
        }
    }
}

#[test]
fn stacked_jacobians_match_per_point() {
    let ctx = random_ctx(&[2, 5, 3, 3], 4, 0.0);
    let x = rng_stream(5).normal_matrix(4, 2, 1.0);
    let stacked = jacobian_matrix(&ctx, &x).unwrap();
    for i in 0..4 {
        let j = jacobian(&ctx, x.row(i)).unwrap();
        assert!(stacked.row_block(i * 3, i * 3 + 3).max_abs_diff(&j.values) <= 1e-12);
    }
}

#[test]
fn linear_model_kernel() {
    let ctx = random_ctx(&[2, 1], 6, 0.7f64.ln());
    let k = kernel_block(&ctx, &[1.0, 2.0], &[-0.5, 3.0]).unwrap();
    assert!((k[(0, 0)] - 0.7 * (-0.5 + 6.0 + 1.0)).abs() <= 1e-12);
    // Multi-output linear: blocks are diagonal.
    let ctx = random_ctx(&[2, 3], 6, 0.0);
    let k = kernel_block(&ctx, &[1.0, 2.0], &[-0.5, 3.0]).unwrap();
    assert!(k.max_abs_diff(&Matrix::identity(3).scale(6.5)) <= 1e-12);
}

#[test]
fn self_block_is_psd_and_symmetric() {
    let ctx = random_ctx(&[3, 8, 4], 7, 0.0);
    let x = [0.2, 0.1, -0.4];
    let z = [1.0, -1.0, 0.5];
    let k = kernel_block(&ctx, &x, &x).unwrap();
    assert!(sym_eig(&k).unwrap().values.iter().all(|v| *v >= -1e-10));
    let a = kernel_block(&ctx, &x, &z).unwrap();
    let b = kernel_block(&ctx, &z, &x).unwrap();
    assert!(a.max_abs_diff(&b.transpose()) <= 1e-12);
}

#[test]
fn prior_variance_scales_linearly() {
    let a = random_ctx(&[2, 5, 2], 8, 0.3);
    let b = a.with_log_prior_variance(0.3 + 2f64.ln()).unwrap();
    let x = Matrix::from_fn(3, 2, |i, j| (i as f64) - j as f64 * 0.3);
    let ka = kernel_block_fast(&a, &x, &x).unwrap().values;
    let kb = kernel_block_fast(&b, &x, &x).unwrap().values;
    // exp(log a + ln 2) is 2a up to one rounding of exp.
    assert!(kb.max_abs_diff(&ka.scale(2.0)) <= 1e-14 * ka.max_abs().max(1.0) * 4.0);
    let ka = kernel_block(&a, x.row(0), x.row(1)).unwrap();
    let kb = kernel_block(&b, x.row(0), x.row(1)).unwrap();
    assert!(kb.max_abs_diff(&ka.scale(2.0)) <= 1e-14 * ka.max_abs().max(1.0) * 4.0);
}

#[test]
fn fast_single_pair_matches_explicit() {
    let ctx = random_ctx(&[3, 7, 5, 2], 9, -0.4);
    let x = Matrix::row_vector(&[0.1, 0.9, -0.3]);
    let z = Matrix::row_vector(&[-1.0, 0.4, 0.2]);
    let fast = kernel_block_fast(&ctx, &x, &z).unwrap();
    let slow = kernel_block(&ctx, x.row(0), z.row(0)).unwrap();
    assert!(fast.values.max_abs_diff(&slow) <= 1e-10);
}

#[test]
fn fast_ten_by_ten_matches_pairwise() {
    let ctx = random_ctx(&[2, 20, 20, 3], 10, 0.0);
    let mut r = rng_stream(11);
    let x = r.normal_matrix(10, 2, 1.0);
    let z = r.normal_matrix(10, 2, 1.0);
    let fast = kernel_block_fast(&ctx, &x, &z).unwrap();
    assert!(fast.values.max_abs_diff(&pairwise(&ctx, &x, &z)) <= 1e-10);
    assert!(fast.block(3, 7).max_abs_diff(&kernel_block(&ctx, x.row(3), z.row(7)).unwrap()) <= 1e-10);
}

#[test]
fn fast_matches_pairwise_across_architectures() {
    let mut r = rng_stream(12);
    for case in 0..25 {
        let dims = random_dims(&mut r, 50, 5);
        let ctx = random_ctx(&dims, 100 + case, r.uniform_range(-1.0, 1.0));
        let (n1, n2) = (1 + r.index(4), 1 + r.index(4));
        let x = r.normal_matrix(n1, dims[0], 1.0);
        let z = r.normal_matrix(n2, dims[0], 1.0);
        let fast = kernel_block_fast(&ctx, &x, &z).unwrap().values;
        let slow = pairwise(&ctx, &x, &z);
        assert!(fast.max_abs_diff(&slow) <= 1e-10, "{dims:?}");
    }
}

#[test]
fn auxiliary_storage_does_not_scale_with_parameters() {
    let n = 6;
    let x = rng_stream(13).normal_matrix(n, 4, 1.0);
    for width in [10usize, 40, 160] {
        let ctx = random_ctx(&[4, width, width, 3], 14, 0.0);
        let k = kernel_block_fast(&ctx, &x, &x).unwrap();
        let widths = 4 + 2 * width + 3;
        // activations N·Σ in_l plus sensitivities N·C·Σ out_l, on both sides
        assert!(k.auxiliary_values <= 2 * n * (1 + 3) * widths, "{}", k.auxiliary_values);
        if width == 160 {
            assert!(k.auxiliary_values * 10 < n * 3 * ctx.param_count());
        }
    }
}

#[test]
fn gram_matrices_admit_cholesky() {
    let mut r = rng_stream(15);
    for case in 0..50 {
        let dims = random_dims(&mut r, 20, 3);
        let ctx = random_ctx(&dims, 200 + case, 0.0);
        let n = 1 + r.index(8);
        let x = r.normal_matrix(n, dims[0], 1.0);
        let mut k = kernel_block_fast(&ctx, &x, &x).unwrap().values;
        assert!(k.is_symmetric(1e-10 * k.max_abs().max(1.0)));
        k.symmetrize();
        k.add_diag(1e-8);
        cholesky(&k, 0.0).unwrap();
    }
}

#[test]
fn diag_blocks_match_gram_diagonal() {
    let ctx = random_ctx(&[3, 6, 2], 16, 0.2);
    let x = rng_stream(17).normal_matrix(5, 3, 1.0);
    let f = ctx.features(&x).unwrap();
    let full = ctx.gram(&f, &f).unwrap();
    let diag = ctx.diag_blocks(&f);
    for i in 0..5 {
        assert!(diag.row_block(2 * i, 2 * i + 2).max_abs_diff(&full.submatrix(2 * i, 2 * i, 2, 2)) <= 1e-12);
    }
}

#[test]
fn linear_model_input_gradient() {
    let ctx = random_ctx(&[3, 2], 18, 1.5f64.ln());
    let x = [0.5, -1.0, 2.0];
    let g = kernel_gradient_wrt_inputs(&ctx, &x, &[0.1, 0.2, 0.3]).unwrap();
    for o in 0..2 {
        for p in 0..2 {
            for k in 0..3 {
                let expected = if o == p { 1.5 * x[k] } else { 0.0 };
                assert!((g.get(o, p, k) - expected).abs() <= 1e-12);
            }
        }
    }
}

fn fd_input_gradient(ctx: &KernelContext, x: &[f64], z: &[f64]) -> Vec<f64> {
    let c = ctx.outputs();
    let d = z.len();
    let h = 1e-5;
    let mut out = vec![0.0; c * c * d];
    for k in 0..d {
        let mut zp = z.to_vec();
        zp[k] += h;
        let up = kernel_block(ctx, x, &zp).unwrap();
        zp[k] -= 2.0 * h;
        let dn = kernel_block(ctx, x, &zp).unwrap();
        for o in 0..c {
            for p in 0..c {
                out[(o * c + p) * d + k] = (up[(o, p)] - dn[(o, p)]) / (2.0 * h);
            }
        }
    }
    out
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut r = rng_stream(19);
    for case in 0..15 {
        let dims = random_dims(&mut r, 12, 3);
        let ctx = random_ctx(&dims, 300 + case, 0.0);
        let x: Vec<f64> = (0..dims[0]).map(|_| r.standard_normal()).collect();
        let z: Vec<f64> = (0..dims[0]).map(|_| r.standard_normal()).collect();
        let an = kernel_gradient_wrt_inputs(&ctx, &x, &z).unwrap();
        let fd = fd_input_gradient(&ctx, &x, &z);
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        for (a, f) in an.values.iter().zip(&fd) {
            assert!((a - f).abs() <= 1e-5 * scale, "{dims:?}: {a} vs {f}");
        }
    }
}

#[test]
fn input_gradient_at_coincident_points() {
    let ctx = random_ctx(&[2, 10, 10, 2], 20, 0.0);
    let x = [0.4, -0.9];
    let an = kernel_gradient_wrt_inputs(&ctx, &x, &x).unwrap();
    assert!(an.values.iter().all(|v| v.is_finite()));
    let fd = fd_input_gradient(&ctx, &x, &x);
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, f) in an.values.iter().zip(&fd) {
        assert!((a - f).abs() <= 1e-5 * scale);
    }
}

#[test]
fn batched_vjp_matches_finite_differences() {
    let ctx = random_ctx(&[2, 8, 6, 2], 21, 0.3);
    let mut r = rng_stream(22);
    let x = r.normal_matrix(3, 2, 1.0);
    let z = r.normal_matrix(4, 2, 1.0);
    let adj = r.normal_matrix(6, 8, 1.0);
    let fx = ctx.features(&x).unwrap();
    let fz = ctx.features(&z).unwrap();
    let g = kernel_input_vjp(&ctx, &fx, &fz, &adj).unwrap();
    let objective = |zz: &Matrix| {
        let k = kernel_block_fast(&ctx, &x, zz).unwrap().values;
        k.as_slice().iter().zip(adj.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    };
    let h = 1e-5;
    for j in 0..4 {
        for k in 0..2 {
            let mut zp = z.clone();
            zp[(j, k)] += h;
            let up = objective(&zp);
            zp[(j, k)] -= 2.0 * h;
            let fd = (up - objective(&zp)) / (2.0 * h);
            assert!((fd - g[(j, k)]).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {}", g[(j, k)]);
        }
    }
}

#[test]
fn dimension_errors() {
    let ctx = random_ctx(&[2, 3, 1], 23, 0.0);
    assert!(jacobian(&ctx, &[1.0]).is_err());
    assert!(kernel_block(&ctx, &[1.0, 2.0], &[1.0]).is_err());
    assert!(kernel_block_fast(&ctx, &Matrix::zeros(0, 2), &Matrix::zeros(1, 2)).is_err());
    assert!(kernel_gradient_wrt_inputs(&ctx, &[1.0, 2.0], &[0.0]).is_err());
}
