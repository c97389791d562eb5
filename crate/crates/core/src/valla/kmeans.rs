use crate::error::{Error, Result};
use crate::linalg::{rng_stream, Matrix};

/// Maximum Lloyd iterations after seeding.
pub const KMEANS_ITERATIONS: usize = 50;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..centers.rows() {
        let d = sq_dist(point, centers.row(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd's algorithm. A cluster that loses all its points keeps
/// its previous center. Deterministic for a fixed seed.
pub fn kmeans_init(x: &Matrix, m: usize, seed: u64) -> Result<Matrix> {
    let n = x.rows();
    if m == 0 || m > n {
        return Err(Error::config(format!("k-means needs 1 ≤ M ≤ N, got M = {m} with N = {n}")));
    }
    let mut rng = rng_stream(seed);
    let mut chosen = vec![false; n];
    let first = rng.index(n);
    chosen[first] = true;
    let mut centers = Matrix::zeros(m, x.cols());
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for k in 1..m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 {
                    pick = Some(i);
                    if u < *d {
                        break;
                    }
                    u -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // every point coincides with a center; fall back to a uniform unchosen index
            let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
            free[rng.index(free.len())]
        };
        chosen[pick] = true;
        centers.row_mut(k).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERATIONS {
        let mut changed = false;
        for i in 0..n {
            let (k, _) = nearest(x.row(i), &centers);
            if assignment[i] != k {
                assignment[i] = k;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(m, x.cols());
        let mut counts = vec![0usize; m];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, v) in sums.row_mut(assignment[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                for (c, s) in centers.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *c = s / counts[k] as f64;
                }
            }
        }
    }
    Ok(centers)
}
