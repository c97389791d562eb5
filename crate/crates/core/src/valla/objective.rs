use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::state::kl_from_factor;
use super::VallaState;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::lla::LikelihoodModel;
use crate::nn::softmax;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Value of the training objective on one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBasisReport {
    pub kl_value: f64,
    /// `(N/|B|)·Σ_b` per-point data term.
    pub data_term: f64,
    /// `data_term − kl_value`.
    pub objective: f64,
}

/// Which per-point data term enters the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataTerm {
    /// `(1/α) log E_q[p(y|f)^α]` with the state's α.
    Alpha,
    /// Expected log-likelihood `E_q[log p(y|f)]` (Gaussian only).
    Elbo,
}

/// Gradient of the objective (to be maximized) w.r.t. every trainable quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGradient {
    /// W.r.t. every entry of the covariance factor (not masked to the lower triangle).
    pub a_factor: Matrix,
    pub inducing: Matrix,
    pub log_prior_variance: f64,
    /// Zero for categorical likelihoods.
    pub log_noise_variance: f64,
}

/// Mini-batch α-divergence objective `(N/|B|) Σ_b (1/α) log E_q[p(y_b|f_b)^α] − KL`.
pub fn alpha_objective(state: &VallaState, x: &Matrix, y: &Matrix, n_total: usize) -> Result<DualBasisReport> {
    Ok(evaluate(state, x, y, n_total, DataTerm::Alpha, false)?.0)
}

pub fn alpha_objective_gradient(
    state: &VallaState,
    x: &Matrix,
    y: &Matrix,
    n_total: usize,
) -> Result<(DualBasisReport, ObjectiveGradient)> {
    let (report, grad) = evaluate(state, x, y, n_total, DataTerm::Alpha, true)?;
    Ok((report, grad.expect("gradient requested")))
}

/// Mini-batch ELBO `(N/|B|) Σ_b E_q[log p(y_b|f_b)] − KL` with the mean pinned.
pub fn elbo_objective(state: &VallaState, x: &Matrix, y: &Matrix, n_total: usize) -> Result<DualBasisReport> {
    Ok(evaluate(state, x, y, n_total, DataTerm::Elbo, false)?.0)
}

pub fn elbo_objective_gradient(
    state: &VallaState,
    x: &Matrix,
    y: &Matrix,
    n_total: usize,
) -> Result<(DualBasisReport, ObjectiveGradient)> {
    let (report, grad) = evaluate(state, x, y, n_total, DataTerm::Elbo, true)?;
    Ok((report, grad.expect("gradient requested")))
}

/// Per-point data term with its derivatives w.r.t. the marginal covariance `S` and `σ²`.
struct PointTerm {
    value: f64,
    d_cov: Matrix,
    d_noise: f64,
}

fn gaussian_alpha_term(r: &[f64], s: &Matrix, noise: f64, alpha: f64) -> Result<PointTerm> {
    let c = r.len() as f64;
    let mut sigma = s.clone();
    sigma.symmetrize();
    sigma.add_diag(noise / alpha);
    let f = cholesky(&sigma, 0.0)?;
    let inv = f.inverse();
    let q = inv.matvec(r)?;
    let quad: f64 = q.iter().zip(r).map(|(a, b)| a * b).sum();
    let log_n = -0.5 * (c * LN_2PI + f.log_det() + quad);
    let value = ((1.0 - alpha) * 0.5 * c * (LN_2PI + noise.ln()) - 0.5 * c * alpha.ln() + log_n) / alpha;
    // ∂ log N / ∂Σ = ½ (q qᵀ − Σ⁻¹)
    let d_sigma = Matrix::from_fn(r.len(), r.len(), |i, j| 0.5 * (q[i] * q[j] - inv[(i, j)]));
    let d_noise = (1.0 - alpha) * c / (2.0 * noise * alpha) + d_sigma.trace() / (alpha * alpha);
    Ok(PointTerm {
        value,
        d_cov: d_sigma.scale(1.0 / alpha),
        d_noise,
    })
}

fn gaussian_elbo_term(r: &[f64], s: &Matrix, noise: f64) -> PointTerm {
    let c = r.len() as f64;
    let rr: f64 = r.iter().map(|v| v * v).sum();
    let tr = s.trace();
    let mut d_cov = Matrix::identity(r.len());
    d_cov.scale_in_place(-0.5 / noise);
    PointTerm {
        value: -0.5 * c * (LN_2PI + noise.ln()) - (rr + tr) / (2.0 * noise),
        d_cov,
        d_noise: -0.5 * c / noise + (rr + tr) / (2.0 * noise * noise),
    }
}

/// `log softmax(m_c / √(1 + π/8·S_cc))_y`.
fn categorical_term(m: &[f64], s: &Matrix, label: usize) -> PointTerm {
    let c = m.len();
    let scale: Vec<f64> = (0..c).map(|k| 1.0 + PI / 8.0 * s[(k, k)]).collect();
    let z: Vec<f64> = (0..c).map(|k| m[k] / scale[k].sqrt()).collect();
    let p = softmax(&z);
    let mut d_cov = Matrix::zeros(c, c);
    for k in 0..c {
        let dz = if k == label { 1.0 } else { 0.0 } - p[k];
        d_cov[(k, k)] = dz * (-PI / 16.0) * m[k] * scale[k].powf(-1.5);
    }
    PointTerm {
        value: p[label].max(f64::MIN_POSITIVE).ln(),
        d_cov,
        d_noise: 0.0,
    }
}

fn label_of(v: f64, classes: usize) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && (v as usize) < classes {
        Ok(v as usize)
    } else {
        Err(Error::config(format!("invalid class label {v} for {classes} classes")))
    }
}

pub(crate) fn evaluate(
    state: &VallaState,
    x: &Matrix,
    y: &Matrix,
    n_total: usize,
    term: DataTerm,
    want_grad: bool,
) -> Result<(DualBasisReport, Option<ObjectiveGradient>)> {
    let ctx = &state.ctx;
    let c = state.outputs();
    let nb = x.rows();
    if nb == 0 {
        return Err(Error::config("objective needs a nonempty batch"));
    }
    if x.cols() != ctx.input_dim() {
        return Err(Error::dims(format!("batch has {} columns, network expects {}", x.cols(), ctx.input_dim())));
    }
    let categorical = state.likelihood.is_categorical();
    let y_cols = if categorical { 1 } else { c };
    if y.shape() != (nb, y_cols) {
        return Err(Error::dims(format!("targets {:?} for a batch of {nb} with {y_cols} columns", y.shape())));
    }
    if categorical && term == DataTerm::Elbo {
        return Err(Error::config("the ELBO data term is implemented for Gaussian likelihoods only"));
    }
    let scale = n_total as f64 / nb as f64;

    let core = state.core()?;
    let l = &state.a_factor;
    let n = l.rows();
    let bf = ctx.features(x)?;
    let k_bz = ctx.gram(&bf, &core.zf)?;
    let k_bb = ctx.diag_blocks(&bf);
    let mean = ctx.net().predict(x)?;

    let b_inv = core.b_factor.inverse();
    let kl = kl_from_factor(&core.b_factor);
    let u = k_bz.matmul(l)?;
    let w = u.matmul(&b_inv)?;

    let noise = state.likelihood.noise_variance().unwrap_or(0.0);
    let mut data = 0.0;
    let mut d_noise = 0.0;
    // Ḡ_b blocks stacked (nb·C) × C
    let mut g_bar = Matrix::zeros(nb * c, c);
    for b in 0..nb {
        let wb = w.submatrix(b * c, 0, c, n);
        let ub = u.submatrix(b * c, 0, c, n);
        let mut s = k_bb.submatrix(b * c, 0, c, c).sub(&wb.matmul_t(&ub)?)?;
        s.symmetrize();
        let m = mean.row(b);
        let point = if categorical {
            categorical_term(m, &s, label_of(y[(b, 0)], c)?)
        } else {
            let r: Vec<f64> = (0..c).map(|k| y[(b, k)] - m[k]).collect();
            match term {
                DataTerm::Alpha => gaussian_alpha_term(&r, &s, noise, state.alpha)?,
                DataTerm::Elbo => gaussian_elbo_term(&r, &s, noise),
            }
        };
        data += point.value;
        d_noise += point.d_noise;
        g_bar.set_submatrix(b * c, 0, &point.d_cov.scale(scale));
    }
    let data_term = scale * data;
    let report = DualBasisReport {
        kl_value: kl,
        data_term,
        objective: data_term - kl,
    };
    if !want_grad {
        return Ok((report, None));
    }

    // ḠW, blockwise
    let mut gw = Matrix::zeros(nb * c, n);
    for b in 0..nb {
        let gb = g_bar.submatrix(b * c, 0, c, c);
        gw.set_submatrix(b * c, 0, &gb.matmul(&w.submatrix(b * c, 0, c, n))?);
    }
    // B̄ = Wᵀ Ḡ W − ½ (B⁻¹ − B⁻²)
    let mut b_bar = w.t_matmul(&gw)?;
    b_bar.axpy(-0.5, &b_inv);
    b_bar.axpy(0.5, &b_inv.matmul(&b_inv)?);
    b_bar.symmetrize();
    let u_bar = gw.scale(-2.0);

    let mut l_bar = core.k_zz.matmul(&l.matmul(&b_bar)?)?.scale(2.0);
    l_bar.add_assign(&k_bz.t_matmul(&u_bar)?);
    let mut k_zz_bar = l.matmul(&b_bar.matmul_t(l)?)?;
    k_zz_bar.symmetrize();
    let k_bz_bar = u_bar.matmul_t(l)?;

    let frob = |a: &Matrix, b: &Matrix| -> f64 { a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum() };
    let d_log_prior = frob(&k_zz_bar, &core.k_zz) + frob(&k_bz_bar, &k_bz) + frob(&g_bar, &k_bb);

    let mut d_z = crate::kernel::kernel_input_vjp(ctx, &core.zf, &core.zf, &k_zz_bar)?.scale(2.0);
    d_z.add_assign(&crate::kernel::kernel_input_vjp(ctx, &bf, &core.zf, &k_bz_bar)?);

    let d_log_noise = match state.likelihood {
        LikelihoodModel::Gaussian { noise_variance } => scale * d_noise * noise_variance,
        LikelihoodModel::Categorical => 0.0,
    };
    Ok((
        report,
        Some(ObjectiveGradient {
            a_factor: l_bar,
            inducing: d_z,
            log_prior_variance: d_log_prior,
            log_noise_variance: d_log_noise,
        }),
    ))
}
