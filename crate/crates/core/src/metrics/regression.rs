use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::lla::Predictions;

/// Default number of α values in the CQM grid.
pub const CQM_GRID: usize = 11;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check(pred: &Predictions, y: &Matrix) -> Result<()> {
    if y.shape() != pred.mean.shape() {
        return Err(Error::dims(format!("targets {:?} vs predictive means {:?}", y.shape(), pred.mean.shape())));
    }
    if pred.likelihood.is_categorical() {
        return Err(Error::config("regression metric applied to a categorical predictive"));
    }
    Ok(())
}

/// Mean of `−log N(y_i | m_i, S_i + σ² I)`; for one output this is the familiar scalar density.
pub fn nll_gaussian(pred: &Predictions, y: &Matrix) -> Result<f64> {
    check(pred, y)?;
    let c = pred.outputs();
    let noise = pred.likelihood.noise_variance().unwrap_or(0.0);
    let mut total = 0.0;
    for i in 0..pred.len() {
        let r: Vec<f64> = (0..c).map(|k| y[(i, k)] - pred.mean[(i, k)]).collect();
        if c == 1 {
            let v = pred.observation_variance(i, 0);
            total += 0.5 * (LN_2PI + v.ln()) + 0.5 * r[0] * r[0] / v;
        } else {
            let mut cov = pred.block(i);
            cov.add_diag(noise);
            cov.symmetrize();
            let f = cholesky(&cov, 0.0)?;
            let z = f.solve_lower(&Matrix::column(&r))?;
            let quad: f64 = z.as_slice().iter().map(|v| v * v).sum();
            total += 0.5 * (c as f64 * LN_2PI + f.log_det()) + 0.5 * quad;
        }
    }
    Ok(total / pred.len().max(1) as f64)
}

/// Mean closed-form CRPS `σ [z(2Φ(z) − 1) + 2φ(z) − 1/√π]` over points and outputs, using the
/// observation-space standard deviation.
pub fn crps_gaussian(pred: &Predictions, y: &Matrix) -> Result<f64> {
    check(pred, y)?;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let c = pred.outputs();
    let mut total = 0.0;
    for i in 0..pred.len() {
        for k in 0..c {
            let s = pred.observation_variance(i, k).max(0.0).sqrt();
            let r = y[(i, k)] - pred.mean[(i, k)];
            total += if s == 0.0 {
                r.abs()
            } else {
                let z = r / s;
                s * (z * (2.0 * std_normal.cdf(z) - 1.0) + 2.0 * std_normal.pdf(z) - inv_sqrt_pi)
            };
        }
    }
    Ok(total / (pred.len() * c).max(1) as f64)
}

/// Coverage of centered predictive intervals on a uniform α grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CqmCurve {
    pub alphas: Vec<f64>,
    pub coverage: Vec<f64>,
    /// Trapezoid integral of `|coverage(α) − α|`.
    pub value: f64,
}

/// Centered quantile metric. A point is covered at level α when
/// `|y − m| ≤ Φ⁻¹((1 + α)/2)·sd` (closed interval, so a point exactly at the mean is covered
/// at every level and the all-at-mean case attains the upper bound 0.5).
pub fn cqm(pred: &Predictions, y: &Matrix, grid_size: usize) -> Result<CqmCurve> {
    check(pred, y)?;
    if grid_size < 2 {
        return Err(Error::config("CQM grid needs at least two points"));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let c = pred.outputs();
    let n = (pred.len() * c) as f64;
    let mut scaled: Vec<f64> = Vec::with_capacity(pred.len() * c);
    for i in 0..pred.len() {
        for k in 0..c {
            let s = pred.observation_variance(i, k).max(0.0).sqrt();
            let r = (y[(i, k)] - pred.mean[(i, k)]).abs();
            scaled.push(if r == 0.0 { 0.0 } else if s == 0.0 { f64::INFINITY } else { r / s });
        }
    }
    let alphas: Vec<f64> = (0..grid_size).map(|k| k as f64 / (grid_size - 1) as f64).collect();
    let coverage: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            if n == 0.0 {
                return 0.0;
            }
            let z = if a >= 1.0 { f64::INFINITY } else { std_normal.inverse_cdf((1.0 + a) / 2.0) };
            scaled.iter().filter(|&&s| s <= z).count() as f64 / n
        })
        .collect();
    let h = 1.0 / (grid_size - 1) as f64;
    let err: Vec<f64> = coverage.iter().zip(&alphas).map(|(c, a)| (c - a).abs()).collect();
    let value = h * (err.iter().sum::<f64>() - 0.5 * (err[0] + err[grid_size - 1]));
    Ok(CqmCurve {
        alphas,
        coverage,
        value,
    })
}
