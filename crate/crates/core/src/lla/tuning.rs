use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::linalg::{cholesky, Matrix};
use crate::nn::softmax;

use super::likelihood::{blockdiag_left, blockdiag_right};
use super::{lambda_sqrt_blocks, LikelihoodModel, DEFAULT_EXACT_CAP};

/// Default σ₀² search: 10 log-spaced values in `[1e-3, 1e3]`.
pub const PRIOR_GRID: (f64, f64, usize) = (1e-3, 1e3, 10);

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn check_cap(x: &Matrix, c: usize) -> Result<()> {
    if x.rows() * c > DEFAULT_EXACT_CAP {
        return Err(Error::CapExceeded {
            what: "N·C for the marginal likelihood",
            value: x.rows() * c,
            cap: DEFAULT_EXACT_CAP,
            advice: Some("evaluate on a subset of the training data".into()),
        });
    }
    Ok(())
}

/// `log N(y | g(X), κ(X, X) + σ² I)` of the linearized regression model.
pub fn log_marginal_likelihood(
    ctx: &KernelContext,
    likelihood: LikelihoodModel,
    x: &Matrix,
    y: &Matrix,
) -> Result<f64> {
    let noise = match likelihood {
        LikelihoodModel::Gaussian { noise_variance } => noise_variance,
        LikelihoodModel::Categorical => {
            return Err(Error::config("the marginal likelihood is only available for Gaussian likelihoods"))
        }
    };
    likelihood.validate()?;
    let c = ctx.outputs();
    check_cap(x, c)?;
    if y.shape() != (x.rows(), c) {
        return Err(Error::dims(format!("targets {:?} for {} points with {c} outputs", y.shape(), x.rows())));
    }
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let f = ctx.features(x)?;
    let mut k = ctx.gram(&f, &f)?;
    k.symmetrize();
    k.add_diag(noise);
    let g = ctx.net().predict(x)?;
    let r = Matrix::column(&y.sub(&g)?.into_vec());
    let chol = cholesky(&k, 0.0)?;
    let alpha = chol.solve_lower(&r)?;
    let quad: f64 = alpha.as_slice().iter().map(|v| v * v).sum();
    Ok(-0.5 * quad - 0.5 * chol.log_det() - 0.5 * (x.rows() * c) as f64 * LN_2PI)
}

/// Laplace estimate of the evidence,
/// `log p(y | θ̂) − ‖θ̂‖²/(2σ₀²) − ½ log |I + Λ^{1/2} κ(X, X) Λ^{1/2}|`,
/// where the determinant is the function-space form of `log |σ₀² Σ⁻¹|`.
pub fn laplace_log_evidence(
    ctx: &KernelContext,
    likelihood: LikelihoodModel,
    x: &Matrix,
    y: &Matrix,
) -> Result<f64> {
    likelihood.validate()?;
    let c = ctx.outputs();
    check_cap(x, c)?;
    let g = ctx.net().predict(x)?;
    let mut log_lik = 0.0;
    match likelihood {
        LikelihoodModel::Gaussian { noise_variance } => {
            if y.shape() != g.shape() {
                return Err(Error::dims("targets do not match the network outputs"));
            }
            for (gi, yi) in g.as_slice().iter().zip(y.as_slice()) {
                log_lik += -0.5 * (LN_2PI + noise_variance.ln()) - 0.5 * (yi - gi).powi(2) / noise_variance;
            }
        }
        LikelihoodModel::Categorical => {
            if y.shape() != (x.rows(), 1) {
                return Err(Error::dims("classification targets must be one label column"));
            }
            for i in 0..x.rows() {
                let p = softmax(g.row(i));
                log_lik += p[y[(i, 0)] as usize].max(f64::MIN_POSITIVE).ln();
            }
        }
    }
    let theta_sq: f64 = ctx.net().to_flat().iter().map(|v| v * v).sum();
    let log_det = if x.rows() == 0 {
        0.0
    } else {
        let f = ctx.features(x)?;
        let k = ctx.gram(&f, &f)?;
        let ls = lambda_sqrt_blocks(&likelihood, &g)?;
        let mut q = blockdiag_right(&blockdiag_left(&ls, &k), &ls);
        q.symmetrize();
        q.add_diag(1.0);
        cholesky(&q, 0.0)?.log_det()
    };
    Ok(log_lik - 0.5 * theta_sq / ctx.prior_variance() - 0.5 * log_det)
}

/// Result of a hyperparameter grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSearch {
    pub prior_variance: f64,
    pub noise_variance: Option<f64>,
    pub objective: f64,
    /// `(σ₀², σ², objective)` for every grid point.
    pub evaluated: Vec<(f64, Option<f64>, f64)>,
}

/// Maximizes the marginal likelihood (Gaussian) or the Laplace evidence (categorical) over a
/// σ₀² grid, and over a σ² grid when one is given. Uses at most the first `cap / C` points.
pub fn tune_prior_variance(
    ctx: &KernelContext,
    likelihood: LikelihoodModel,
    x: &Matrix,
    y: &Matrix,
    prior_grid: &[f64],
    noise_grid: Option<&[f64]>,
) -> Result<GridSearch> {
    if prior_grid.is_empty() || prior_grid.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::config("prior variance grid must be nonempty and positive"));
    }
    let keep = (DEFAULT_EXACT_CAP / ctx.outputs()).min(x.rows());
    if keep < x.rows() {
        log::info!("hyperparameter search uses the first {keep} of {} points", x.rows());
    }
    let idx: Vec<usize> = (0..keep).collect();
    let (xs, ys) = (x.select_rows(&idx), y.select_rows(&idx));
    let noises: Vec<Option<f64>> = match (likelihood, noise_grid) {
        (LikelihoodModel::Gaussian { .. }, Some(grid)) => grid.iter().map(|v| Some(*v)).collect(),
        (LikelihoodModel::Gaussian { noise_variance }, None) => vec![Some(noise_variance)],
        (LikelihoodModel::Categorical, _) => vec![None],
    };
    let mut evaluated = Vec::new();
    let mut best: Option<(f64, Option<f64>, f64)> = None;
    for &s2 in prior_grid {
        let c = ctx.with_log_prior_variance(s2.ln())?;
        for &noise in &noises {
            let value = match noise {
                Some(n) => log_marginal_likelihood(&c, LikelihoodModel::Gaussian { noise_variance: n }, &xs, &ys),
                None => laplace_log_evidence(&c, likelihood, &xs, &ys),
            };
            let value = match value {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(Error::NotPositiveDefinite { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            evaluated.push((s2, noise, value));
            if best.map_or(true, |b| value > b.2) {
                best = Some((s2, noise, value));
            }
        }
    }
    let (prior_variance, noise_variance, objective) = best.expect("grid is nonempty");
    if !objective.is_finite() {
        return Err(Error::non_finite("every grid point of the hyperparameter search"));
    }
    Ok(GridSearch {
        prior_variance,
        noise_variance,
        objective,
        evaluated,
    })
}
