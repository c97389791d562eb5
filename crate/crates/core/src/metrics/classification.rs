use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lla::Predictions;
use crate::nn::softmax;

/// Equal-width confidence bins used by [`ece`].
pub const ECE_BINS: usize = 15;

/// Probit-style soft-max approximation `softmax(m_c / √(1 + π/8 · Σ_cc))`.
pub fn predictive_class_probs(mean: &[f64], covariance: &Matrix) -> Vec<f64> {
    let scaled: Vec<f64> = mean
        .iter()
        .enumerate()
        .map(|(c, m)| m / (1.0 + std::f64::consts::PI / 8.0 * covariance[(c, c)].max(0.0)).sqrt())
        .collect();
    softmax(&scaled)
}

/// Class probabilities for every point, `N × C`.
pub fn class_probabilities(pred: &Predictions) -> Matrix {
    let c = pred.outputs();
    let mut out = Matrix::zeros(pred.len(), c);
    for i in 0..pred.len() {
        let p = predictive_class_probs(pred.mean.row(i), &pred.block(i));
        out.row_mut(i).copy_from_slice(&p);
    }
    out
}

fn check_simplex(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::dims(format!("{} probability rows vs {} labels", probs.rows(), labels.len())));
    }
    for i in 0..probs.rows() {
        let row = probs.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|p| *p < -1e-12 || !p.is_finite()) {
            return Err(Error::SimplexViolation { row: i, sum });
        }
        if labels[i] >= probs.cols() {
            return Err(Error::dims(format!("label {} out of range for {} classes", labels[i], probs.cols())));
        }
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

pub fn accuracy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_simplex(probs, labels)?;
    let hits = (0..probs.rows()).filter(|&i| argmax(probs.row(i)) == labels[i]).count();
    Ok(hits as f64 / probs.rows().max(1) as f64)
}

pub fn nll_categorical(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_simplex(probs, labels)?;
    let total: f64 = (0..probs.rows()).map(|i| -probs[(i, labels[i])].max(f64::MIN_POSITIVE).ln()).sum();
    Ok(total / probs.rows().max(1) as f64)
}

/// Top-label expected calibration error with `bins` equal-width bins `(k/B, (k+1)/B]`.
pub fn ece(probs: &Matrix, labels: &[usize], bins: usize) -> Result<f64> {
    check_simplex(probs, labels)?;
    if bins == 0 {
        return Err(Error::config("ECE needs at least one bin"));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];
    for i in 0..probs.rows() {
        let k = argmax(probs.row(i));
        let conf = probs[(i, k)];
        let b = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[b] += 1;
        conf_sum[b] += conf;
        hit_sum[b] += if k == labels[i] { 1.0 } else { 0.0 };
    }
    let n = probs.rows().max(1) as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (hit_sum[b] - conf_sum[b]).abs() / n)
        .sum())
}

/// Mean of `Σ_c (p_c − 1[c = y])²`.
pub fn brier(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_simplex(probs, labels)?;
    let mut total = 0.0;
    for i in 0..probs.rows() {
        for (c, p) in probs.row(i).iter().enumerate() {
            let e = if c == labels[i] { 1.0 } else { 0.0 };
            total += (p - e) * (p - e);
        }
    }
    Ok(total / probs.rows().max(1) as f64)
}

/// Shannon entropy (nats) of each row.
pub fn entropy(probs: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|i| -probs.row(i).iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>())
        .collect()
}

/// Probability that an out-of-distribution score exceeds an in-distribution one, ties
/// counting ½ (Mann–Whitney). Computed from tie-averaged ranks.
pub fn ood_auc(scores_in: &[f64], scores_out: &[f64]) -> f64 {
    let (n_in, n_out) = (scores_in.len(), scores_out.len());
    if n_in == 0 || n_out == 0 {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = scores_in
        .iter()
        .map(|s| (*s, false))
        .chain(scores_out.iter().map(|s| (*s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum of the out-distribution scores (ranks are 1-based, ties averaged).
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let outs = all[i..j].iter().filter(|e| e.1).count() as u128;
        // average rank of the tie group times two: (i+1) + j
        twice_rank_sum += outs * (i as u128 + 1 + j as u128);
        i = j;
    }
    let twice_u = twice_rank_sum - (n_out as u128) * (n_out as u128 + 1);
    let twice_total = 2 * n_in as u128 * n_out as u128;
    // Evaluate the smaller side and complement so that auc(a, b) + auc(b, a) == 1 exactly.
    if 2 * twice_u <= twice_total {
        twice_u as f64 / twice_total as f64
    } else {
        1.0 - (twice_total - twice_u) as f64 / twice_total as f64
    }
}
