use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// First escalation step, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-8;
/// Largest jitter tried, relative to the mean diagonal.
pub const JITTER_CAP: f64 = 1e-2;

/// Lower Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    lower: Matrix,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// Diagonal shift that was actually added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `log |L Lᵀ|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `L X = B` in place of a copy of `b`.
    pub fn solve_lower(&self, b: &Matrix) -> Result<Matrix> {
        self.check(b)?;
        let n = self.dim();
        let l = &self.lower;
        let mut x = b.clone();
        let m = b.cols();
        for i in 0..n {
            let lii = l[(i, i)];
            for k in 0..i {
                let lik = l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                let (head, tail) = x.as_mut_slice().split_at_mut(i * m);
                let src = &head[k * m..(k + 1) * m];
                let dst = &mut tail[..m];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= lik * s;
                }
            }
            for v in x.row_mut(i) {
                *v /= lii;
            }
        }
        Ok(x)
    }

    /// Solves `Lᵀ X = B`.
    pub fn solve_upper(&self, b: &Matrix) -> Result<Matrix> {
        self.check(b)?;
        let n = self.dim();
        let l = &self.lower;
        let mut x = b.clone();
        let m = b.cols();
        for i in (0..n).rev() {
            let lii = l[(i, i)];
            for v in x.row_mut(i) {
                *v /= lii;
            }
            // Row i is final; eliminate it from the rows above.
            let (head, tail) = x.as_mut_slice().split_at_mut(i * m);
            let src = &tail[..m];
            for k in 0..i {
                let lik = l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                for (d, s) in head[k * m..(k + 1) * m].iter_mut().zip(src) {
                    *d -= lik * s;
                }
            }
        }
        Ok(x)
    }

    /// Solves `(L Lᵀ) X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let y = self.solve_lower(b)?;
        self.solve_upper(&y)
    }

    /// `(L Lᵀ)⁻¹`.
    pub fn inverse(&self) -> Matrix {
        let mut inv = self
            .solve(&Matrix::identity(self.dim()))
            .expect("identity has matching dimension");
        inv.symmetrize();
        inv
    }

    fn check(&self, b: &Matrix) -> Result<()> {
        if b.rows() != self.dim() {
            return Err(Error::dims(format!(
                "factor of dim {} applied to {} rows",
                self.dim(),
                b.rows()
            )));
        }
        Ok(())
    }
}

/// Cholesky factorization of `a + jitter·I`.
///
/// When the factorization breaks down the jitter is raised geometrically (×10), starting from
/// `JITTER_START·trace(a)/dim`, until it would exceed `JITTER_CAP·trace(a)/dim`.
pub fn cholesky(a: &Matrix, jitter: f64) -> Result<CholeskyFactor> {
    cholesky_with_cap(a, jitter, JITTER_CAP)
}

/// [`cholesky`] with an explicit relative cap on the escalated jitter.
pub fn cholesky_with_cap(a: &Matrix, jitter: f64, relative_cap: f64) -> Result<CholeskyFactor> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::dims(format!("cholesky of {:?} matrix", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::non_finite("cholesky input"));
    }
    let n = a.rows();
    let mean_diag = a.trace() / n as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let cap = relative_cap * scale;
    let mut current = jitter.max(0.0);
    loop {
        if let Some(lower) = try_factor(a, current) {
            return Ok(CholeskyFactor {
                lower,
                jitter: current,
            });
        }
        current = (current * 10.0).max(JITTER_START * scale);
        if current > cap * (1.0 + 1e-12) {
            return Err(Error::NotPositiveDefinite { jitter: current / 10.0 });
        }
    }
}

fn try_factor(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let d = a[(i, i)] + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn solve_psd(factor: &CholeskyFactor, b: &Matrix) -> Result<Matrix> {
    factor.solve(b)
}
