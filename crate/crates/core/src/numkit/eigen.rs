use crate::error::{Error, Result};

use super::Matrix;

/// Sweep cap for the cyclic Jacobi iteration. Quadratic convergence means
/// well-conditioned inputs finish in under ten sweeps at the sizes used here.
pub const MAX_SWEEPS: usize = 100;

/// Entrywise tolerance for the symmetry precondition.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigen-decomposition of a symmetric matrix: `m = V diag(values) V^T`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns; column `i` pairs with
    /// `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// Rebuilds `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n).map(|k| v[(i, k)] * self.eigenvalues[k] * v[(j, k)]).sum();
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Each sweep visits every upper off-diagonal pair `(p, q)` and applies the
/// plane rotation that zeroes it. Iteration stops once the off-diagonal
/// Frobenius norm falls below `1e-14 * ||m||_F` (or is exactly zero), and
/// fails with [`Error::NoConvergence`] after [`MAX_SWEEPS`] sweeps.
pub fn symmetric_eigen(m: &Matrix) -> Result<EigenDecomposition> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("symmetric_eigen"));
    }
    let n = rows;
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if diff > SYMMETRY_TOL {
                return Err(Error::NotSymmetric { i, j, diff });
            }
        }
    }

    // work on the symmetrized copy
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let tol = 1e-14 * m.frobenius_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off == 0.0 || off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // stable rotation: t = sgn(theta) / (|theta| + sqrt(theta^2 + 1))
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                if t == 0.0 {
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a);
        if !(off == 0.0 || off <= tol) {
            return Err(Error::NoConvergence {
                sweeps: MAX_SWEEPS,
                off_norm: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // descending, stable on ties so the result is deterministic
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::transposed_matmul;

    fn assert_orthonormal(v: &Matrix) {
        let g = transposed_matmul(v, v).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(v.rows())) < 1e-9, "{g:?}");
    }

    #[test]
    fn diagonal_input() {
        let e = symmetric_eigen(&Matrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 1.0]);
        assert_eq!(e.eigenvectors[(0, 0)].abs(), 0.0);
        assert_eq!(e.eigenvectors[(1, 0)].abs(), 1.0);
        assert_eq!(e.eigenvectors[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn two_by_two_by_hand() {
        // characteristic polynomial (2 - l)^2 - 1 = 0 gives l = 3, 1
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.eigenvectors.col(0);
        let v1 = e.eigenvectors.col(1);
        assert!((v0[0].abs() - h).abs() < 1e-12 && (v0[0] - v0[1]).abs() < 1e-12);
        assert!((v1[0].abs() - h).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
        assert_orthonormal(&e.eigenvectors);
    }

    #[test]
    fn identity_any_orthonormal_basis() {
        let e = symmetric_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 3]);
        assert_orthonormal(&e.eigenvectors);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            symmetric_eigen(&Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]).unwrap();
        assert!(matches!(symmetric_eigen(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn psd_64x64_converges() {
        let mut rng = crate::numkit::SeededRng::new(11);
        let g = Matrix::from_vec(64, 64, (0..64 * 64).map(|_| rng.normal()).collect()).unwrap();
        let m = transposed_matmul(&g, &g).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_orthonormal(&e.eigenvectors);
        let rel = e.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(rel < 1e-8, "relative reconstruction error {rel:e}");
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}
