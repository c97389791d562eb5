use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Relative off-diagonal tolerance for the Jacobi sweeps.
pub const EIG_TOLERANCE: f64 = 1e-12;

/// Spectral decomposition `A = V diag(values) Vᵀ`, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let scaled = Matrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.values[j]);
        scaled.matmul_t(&self.vectors).expect("square")
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::dims(format!("sym_eig of {:?} matrix", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::non_finite("sym_eig input"));
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    let max_sweeps = 100 * n.max(1);
    let mut converged = n <= 1 || total == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, p, q, c, s);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        converged = off <= EIG_TOLERANCE * total;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

// Applies the rotation Jᵀ M J on rows/columns p and q.
fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
}

/// Symmetric PSD square root `V diag(√max(λ,0)) Vᵀ`.
pub fn psd_sqrt(a: &Matrix) -> Result<Matrix> {
    let e = sym_eig(a)?;
    let n = e.values.len();
    let scaled = Matrix::from_fn(n, n, |i, j| e.vectors[(i, j)] * e.values[j].max(0.0).sqrt());
    let mut out = scaled.matmul_t(&e.vectors)?;
    out.symmetrize();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let e = sym_eig(&Matrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_characteristic_roots() {
        // λ² − 4λ + 3 = 0 → {3, 1}
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        for (k, lambda) in e.values.iter().enumerate() {
            let v = e.vectors.col_to_vec(k);
            let av = a.matvec(&v).unwrap();
            for i in 0..2 {
                assert!((av[i] - lambda * v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_input() {
        let e = sym_eig(&Matrix::from_rows(&[vec![5.0]]).unwrap()).unwrap();
        assert_eq!(e.values, vec![5.0]);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = psd_sqrt(&a).unwrap();
        assert!(r.matmul(&r).unwrap().max_abs_diff(&a) < 1e-12);
    }
}
