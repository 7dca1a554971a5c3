//! PCA whitening.
//!
//! Samples are rows. Fitting centers the data, takes the unbiased sample
//! covariance `S = E D E^T` and builds
//!
//! ```text
//! W    = diag(1 / sqrt(l_i + eps)) E^T      (whiten:   z = (x - mu) W^T)
//! W^-1 = E diag(sqrt(l_i + eps))            (dewhiten: x = z (W^-1)^T + mu)
//! ```
//!
//! The same `eps` enters both matrices, so `W^-1 W = I` holds exactly in exact
//! arithmetic and dewhitening undoes whitening regardless of `eps`. A fitted
//! whitener is frozen; there is no update API.

use log::warn;

use crate::error::{Error, Result};
use crate::numkit::{matmul_transposed, symmetric_eigen, Matrix};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    mean: Vec<f64>,
    whiten_matrix: Matrix,
    dewhiten_matrix: Matrix,
    eigenvalues: Vec<f64>,
    epsilon: f64,
}

impl Whitener {
    /// Fits the whitening transform to the rows of `samples`.
    pub fn fit(samples: &Matrix, epsilon: f64) -> Result<Whitener> {
        let (n, d) = samples.shape();
        if n < 2 {
            return Err(Error::invalid(format!("whitener fit needs n >= 2 samples, got {n}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !samples.is_finite() {
            return Err(Error::NonFinite("Whitener::fit samples"));
        }
        if n < d {
            warn!("fitting a {d}-dimensional whitener on only {n} samples; covariance is rank deficient");
        }

        let (mean, cov) = samples.covariance()?;
        let eig = symmetric_eigen(&cov)?;
        // tiny negative eigenvalues are round-off on a PSD matrix
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();

        let e = &eig.eigenvectors;
        let mut whiten_matrix = Matrix::zeros(d, d);
        let mut dewhiten_matrix = Matrix::zeros(d, d);
        for (i, &l) in eigenvalues.iter().enumerate() {
            let s = (l + epsilon).sqrt();
            for k in 0..d {
                // row i of W is eigenvector i scaled by 1/s; column i of W^-1 is eigenvector i scaled by s
                whiten_matrix[(i, k)] = e[(k, i)] / s;
                dewhiten_matrix[(k, i)] = e[(k, i)] * s;
            }
        }
        Ok(Whitener {
            mean,
            whiten_matrix,
            dewhiten_matrix,
            eigenvalues,
            epsilon,
        })
    }

    /// Reassembles a whitener from stored parts (used by the model file loader).
    pub fn from_parts(
        mean: Vec<f64>,
        whiten_matrix: Matrix,
        dewhiten_matrix: Matrix,
        eigenvalues: Vec<f64>,
        epsilon: f64,
    ) -> Result<Whitener> {
        let d = mean.len();
        if whiten_matrix.shape() != (d, d) || dewhiten_matrix.shape() != (d, d) || eigenvalues.len() != d {
            return Err(Error::DimensionMismatch {
                op: "Whitener::from_parts",
                left: format!("mean of length {d}"),
                right: format!(
                    "W {:?}, W^-1 {:?}, {} eigenvalues",
                    whiten_matrix.shape(),
                    dewhiten_matrix.shape(),
                    eigenvalues.len()
                ),
            });
        }
        Ok(Whitener {
            mean,
            whiten_matrix,
            dewhiten_matrix,
            eigenvalues,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `W`, whose rows are principal directions scaled by `1/sqrt(l_i + eps)`.
    pub fn whiten_matrix(&self) -> &Matrix {
        &self.whiten_matrix
    }

    /// `W^-1`.
    pub fn dewhiten_matrix(&self) -> &Matrix {
        &self.dewhiten_matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(x - mu) W^T`, row by row.
    pub fn whiten(&self, x: &Matrix) -> Result<Matrix> {
        self.check_cols("whiten", x)?;
        let mut centered = x.clone();
        for row in 0..centered.rows() {
            for (v, &m) in centered.row_mut(row).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        matmul_transposed(&centered, &self.whiten_matrix)
    }

    /// `z (W^-1)^T + mu`, row by row.
    pub fn dewhiten(&self, z: &Matrix) -> Result<Matrix> {
        self.check_cols("dewhiten", z)?;
        matmul_transposed(z, &self.dewhiten_matrix)?.add_row_vector(&self.mean)
    }

    /// Applies only the linear part of dewhitening, `z (W^-1)^T`. Maps
    /// directions (not points) from whitened space back to input space.
    pub fn dewhiten_directions(&self, z: &Matrix) -> Result<Matrix> {
        self.check_cols("dewhiten_directions", z)?;
        matmul_transposed(z, &self.dewhiten_matrix)
    }

    /// Applies only the linear part of whitening, `v W^T`.
    pub fn whiten_directions(&self, v: &Matrix) -> Result<Matrix> {
        self.check_cols("whiten_directions", v)?;
        matmul_transposed(v, &self.whiten_matrix)
    }

    fn check_cols(&self, op: &'static str, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                op,
                left: format!("input {}x{}", x.rows(), x.cols()),
                right: format!("whitener of dimension {}", self.dim()),
            });
        }
        Ok(())
    }
}
