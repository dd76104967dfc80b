//! Dense vector/matrix primitives and the statistics every other module
//! builds on.
//!
//! Everything here is 64-bit: the Spearman-equivalence guarantees downstream
//! need ~1e-9 agreement, which 32-bit similarity math cannot provide. Values
//! are checked finite at construction so no NaN/Inf ever reaches an
//! operation.

use crate::error::{Error, Result};

/// A non-empty vector of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Row-major matrix of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch {
                context: format!("rows and cols must be positive, got {rows}x{cols}"),
            });
        }
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "expected {} values for {rows}x{cols}, got {}",
                    rows * cols,
                    values.len()
                ),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self::new(n, n, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
///
/// Errors on dimension mismatch or a zero-norm input.
pub fn cosine(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Arithmetic mean and population standard deviation (1/n, not 1/(n-1)).
pub fn mean_std(v: &DenseVector) -> (f64, f64) {
    mean_std_slice(v.as_slice())
}

pub(crate) fn mean_std_slice(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Matrix product with a fixed summation order, so results are
/// bit-reproducible for a given build.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            context: format!(
                "cannot multiply {}x{} by {}x{}",
                a.rows, a.cols, b.rows, b.cols
            ),
        });
    }
    let mut out = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out[i * b.cols..(i + 1) * b.cols];
        for (k, &a_ik) in a_row.iter().enumerate() {
            let b_row = b.row(k);
            for (j, &b_kj) in b_row.iter().enumerate() {
                out_row[j] += a_ik * b_kj;
            }
        }
    }
    DenseMatrix::new(a.rows, b.cols, out)
}

/// Matrix-vector product (same deterministic order as [`matmul`]).
pub fn matvec(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.cols != x.len() {
        return Err(Error::DimensionMismatch {
            left: a.cols,
            right: x.len(),
        });
    }
    let mut out = vec![0.0; a.rows];
    for (i, o) in out.iter_mut().enumerate() {
        let row = a.row(i);
        let mut acc = 0.0;
        for (a_ij, x_j) in row.iter().zip(x.iter()) {
            acc += a_ij * x_j;
        }
        *o = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(values: &[f64]) -> DenseVector {
        DenseVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_identity() {
        assert_eq!(cosine(&dv(&[1.0, 0.0]), &dv(&[1.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn cosine_orthogonal() {
        assert_eq!(cosine(&dv(&[1.0, 0.0]), &dv(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cosine_half_angle() {
        let c = cosine(&dv(&[1.0, 1.0]), &dv(&[1.0, 0.0])).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let err = cosine(&dv(&[1.0]), &dv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn cosine_zero_norm() {
        let err = cosine(&dv(&[0.0, 0.0]), &dv(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm));
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&dv(&[1.0, 2.0, 3.0]));
        assert_eq!(m, 2.0);
        assert!((s - 0.816496580927726).abs() < 1e-15);
    }

    #[test]
    fn mean_std_single() {
        assert_eq!(mean_std(&dv(&[5.0])), (5.0, 0.0));
    }

    #[test]
    fn mean_std_constant() {
        assert_eq!(mean_std(&dv(&[2.0, 2.0, 2.0, 2.0])), (2.0, 0.0));
    }

    #[test]
    fn matmul_identity() {
        let a = DenseMatrix::identity(2).unwrap();
        let b = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap(), b);
    }

    #[test]
    fn matmul_zero() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = DenseMatrix::new(2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(matmul(&a, &z).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_hand_case() {
        let a = DenseMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let b = DenseMatrix::new(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().as_slice(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = DenseMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let err = matmul(&a, &a).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn vector_rejects_nan() {
        let err = DenseVector::new(vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn vector_rejects_empty() {
        assert!(matches!(
            DenseVector::new(vec![]).unwrap_err(),
            Error::EmptyVector
        ));
    }

    #[test]
    fn matrix_rejects_bad_length() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }
}
