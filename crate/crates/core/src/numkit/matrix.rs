use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects a length mismatch or any
    /// non-finite entry.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_vec"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "Matrix::from_rows",
                    left: format!("row 0 has {cols} columns"),
                    right: format!("row {i} has {} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; an empty matrix has no rows to yield anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch(op, self, other));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Adds `v` to every row.
    pub fn add_row_vector(&self, v: &[f64]) -> Result<Matrix> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "add_row_vector",
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("vector of length {}", v.len()),
            });
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols.max(1)) {
            for (x, &b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(out)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns a copy with every row scaled to unit Euclidean norm.
    pub fn normalize_rows(&self) -> Result<Matrix> {
        let mut out = self.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroRow(i));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(out)
    }

    /// Sample covariance `(X - mean)^T (X - mean) / (n - 1)` together with the
    /// column mean. The result is exactly symmetric.
    pub fn covariance(&self) -> Result<(Vec<f64>, Matrix)> {
        if self.rows < 2 {
            return Err(Error::invalid(format!(
                "covariance needs at least 2 rows, got {}",
                self.rows
            )));
        }
        let mean = self.column_means();
        let d = self.cols;
        let mut cov = Matrix::zeros(d, d);
        let mut centered = vec![0.0; d];
        for row in self.row_iter() {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = v - m;
            }
            for i in 0..d {
                let ci = centered[i];
                let out = &mut cov.data[i * d..(i + 1) * d];
                for j in i..d {
                    out[j] += ci * centered[j];
                }
            }
        }
        let denom = (self.rows - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok((mean, cov))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.row_iter() {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn shape_mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::DimensionMismatch {
        op,
        left: format!("{}x{}", a.rows, a.cols),
        right: format!("{}x{}", b.rows, b.cols),
    }
}

/// Standard product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(shape_mismatch("matmul", a, b));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out.data[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a * b^T` without materializing the transpose.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            op: "matmul_transposed",
            left: format!("{}x{}", a.rows, a.cols),
            right: format!("({}x{})^T", b.rows, b.cols),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(arow, b.row(j));
        }
    }
    Ok(out)
}

/// `a^T * b` without materializing the transpose.
pub fn transposed_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "transposed_matmul",
            left: format!("({}x{})^T", a.rows, a.cols),
            right: format!("{}x{}", b.rows, b.cols),
        });
    }
    let (k, m) = (a.cols, b.cols);
    let mut out = Matrix::zeros(k, m);
    for r in 0..a.rows {
        let arow = a.row(r);
        let brow = b.row(r);
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Default singularity floor for [`invert_2x2`].
pub const SINGULAR_FLOOR: f64 = 1e-10;

/// Inverts a 2x2 matrix via the adjugate, using the default singularity floor.
pub fn invert_2x2(m: &Matrix) -> Result<Matrix> {
    invert_2x2_with_floor(m, SINGULAR_FLOOR)
}

pub fn invert_2x2_with_floor(m: &Matrix, floor: f64) -> Result<Matrix> {
    if m.shape() != (2, 2) {
        return Err(Error::DimensionMismatch {
            op: "invert_2x2",
            left: format!("{}x{}", m.rows, m.cols),
            right: "2x2".into(),
        });
    }
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let det = a * d - b * c;
    if !(det.abs() > floor) {
        return Err(Error::Singular { det, floor });
    }
    Ok(Matrix {
        rows: 2,
        cols: 2,
        data: vec![d / det, -b / det, -c / det, a / det],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = m(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
    }

    #[test]
    fn matmul_annihilation() {
        let a = m(&[[1.0, 0.0], [0.0, 0.0]]);
        let b = m(&[[0.0, 0.0], [0.0, 1.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn matmul_hand_computed() {
        let a = m(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = m(&[[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[[19.0, 22.0], [43.0, 50.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "{msg}");
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn transposed_variants_agree_with_matmul() {
        let a = Matrix::from_vec(3, 2, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let b = Matrix::from_vec(4, 2, vec![2.0, 1.0, 0.0, 1.0, -3.0, 2.0, 1.5, 0.5]).unwrap();
        let want = matmul(&a, &b.transpose()).unwrap();
        assert_eq!(matmul_transposed(&a, &b).unwrap(), want);
        let c = Matrix::from_vec(3, 4, (0..12).map(|v| v as f64 - 5.0).collect()).unwrap();
        let want = matmul(&a.transpose(), &c).unwrap();
        assert_eq!(transposed_matmul(&a, &c).unwrap(), want);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_2x2(&Matrix::identity(2)).unwrap(), Matrix::identity(2));
        assert_eq!(
            invert_2x2(&m(&[[2.0, 0.0], [0.0, 4.0]])).unwrap(),
            m(&[[0.5, 0.0], [0.0, 0.25]])
        );
        assert_eq!(
            invert_2x2(&m(&[[1.0, 1.0], [0.0, 1.0]])).unwrap(),
            m(&[[1.0, -1.0], [0.0, 1.0]])
        );
    }

    #[test]
    fn invert_singular_is_an_error() {
        let err = invert_2x2(&m(&[[1.0, 2.0], [2.0, 4.0]])).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(invert_2x2_with_floor(&m(&[[1.0, 0.0], [0.0, 1e-7]]), 1e-6).is_err());
    }

    #[test]
    fn from_vec_rejects_non_finite_and_bad_length() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn covariance_small() {
        let x = m(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        let (mean, cov) = x.covariance().unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);
        assert!((cov[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cov[(0, 1)], 0.0);
    }
}
