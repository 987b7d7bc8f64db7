//! Dense row-major matrix of feature vectors.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major matrix; each row is one sample's feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<S> {
    data: Vec<S>,
    rows: usize,
    cols: usize,
}

impl<S: Real> FeatureMatrix<S> {
    /// Build from a flat row-major buffer, checking shape consistency and finiteness.
    pub fn new(data: Vec<S>, rows: usize, cols: usize) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidArgument("matrix must have cols >= 1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "FeatureMatrix::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FeatureMatrix::new"));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(cols >= 1);
        Self {
            data: vec![S::zero(); rows * cols],
            rows,
            cols,
        }
    }

    /// Build from an iterator of rows; all rows must share the same length.
    pub fn from_rows<I, R>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[S]>,
    {
        let mut data = Vec::new();
        let mut cols = 0usize;
        let mut n = 0usize;
        for row in rows {
            let r = row.as_ref();
            if n == 0 {
                cols = r.len();
            } else if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "FeatureMatrix::from_rows",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("FeatureMatrix::from_rows"));
        }
        Self::new(data, n, cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.cols)
    }

    /// Select a subset of rows by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            rows: indices.len(),
            cols: self.cols,
        }
    }

    /// Stack the rows of two matrices with matching column counts.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "FeatureMatrix::vstack",
                expected: self.cols,
                found: other.cols,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            data,
            rows: self.rows + other.rows,
            cols: self.cols,
        })
    }
}

/// Dot product of two equal-length slices.
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Squared Euclidean distance between two equal-length slices.
pub fn sq_dist<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Matrix of squared Euclidean distances between the rows of `x` and `y`.
pub fn pairwise_sq_dist<S: Real>(
    x: &FeatureMatrix<S>,
    y: &FeatureMatrix<S>,
) -> Result<FeatureMatrix<S>> {
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            context: "pairwise_sq_dist",
            expected: x.cols(),
            found: y.cols(),
        });
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::EmptyInput("pairwise_sq_dist"));
    }
    let mut out = FeatureMatrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            out.set(i, j, sq_dist(x.row(i), y.row(j)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pairwise_345_triangle() {
        let x = FeatureMatrix::from_rows([[0.0, 0.0]]).unwrap();
        let y = FeatureMatrix::from_rows([[3.0, 4.0]]).unwrap();
        let d = pairwise_sq_dist(&x, &y).unwrap();
        assert_eq!(d.get(0, 0), 25.0);
    }

    #[test]
    fn pairwise_diagonal_zero() {
        let x = FeatureMatrix::from_rows([[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let d = pairwise_sq_dist(&x, &x).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn pairwise_matches_scalar_loop_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 4, 3);
        let y = random_matrix(&mut rng, 5, 3);
        let d = pairwise_sq_dist(&x, &y).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut acc = 0.0;
                for c in 0..3 {
                    let diff = x.get(i, c) - y.get(j, c);
                    acc += diff * diff;
                }
                assert!((d.get(i, j) - acc).abs() < 1e-12);
                assert!(d.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn pairwise_rejects_dim_mismatch() {
        let x = FeatureMatrix::<f64>::zeros(2, 3);
        let y = FeatureMatrix::<f64>::zeros(2, 4);
        assert!(pairwise_sq_dist(&x, &y).is_err());
    }

    #[test]
    fn new_rejects_nonfinite() {
        assert!(FeatureMatrix::new(vec![1.0, f64::NAN], 1, 2).is_err());
    }

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> FeatureMatrix<f64> {
        let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        FeatureMatrix::new(data, rows, cols).unwrap()
    }
}
