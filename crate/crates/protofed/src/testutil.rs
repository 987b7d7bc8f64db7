//! Shared helpers for unit tests: random inputs and central finite differences.

use crate::mat::FeatureMatrix;
use rand::rngs::StdRng;
use rand::Rng;

pub fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> FeatureMatrix<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
    FeatureMatrix::new(data, rows, cols).unwrap()
}

/// Max relative error between `analytic` and a central finite-difference
/// gradient of `f` at `point` (h = 1e-5, denominators clamped at 1e-8).
pub fn finite_diff_check<F>(mut point: FeatureMatrix<f64>, mut f: F, analytic: &[f64]) -> f64
where
    F: FnMut(&FeatureMatrix<f64>) -> f64,
{
    let h = 1e-5;
    let n = point.as_slice().len();
    assert_eq!(analytic.len(), n);
    let mut max_rel = 0.0f64;
    for idx in 0..n {
        let orig = point.as_slice()[idx];
        point.as_mut_slice()[idx] = orig + h;
        let plus = f(&point);
        point.as_mut_slice()[idx] = orig - h;
        let minus = f(&point);
        point.as_mut_slice()[idx] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let denom = fd.abs().max(analytic[idx].abs()).max(1e-8);
        max_rel = max_rel.max((fd - analytic[idx]).abs() / denom);
    }
    max_rel
}

/// Same check for a flat parameter vector rather than a matrix.
pub fn finite_diff_check_vec<F>(mut point: Vec<f64>, mut f: F, analytic: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let h = 1e-5;
    assert_eq!(analytic.len(), point.len());
    let mut max_rel = 0.0f64;
    for idx in 0..point.len() {
        let orig = point[idx];
        point[idx] = orig + h;
        let plus = f(&point);
        point[idx] = orig - h;
        let minus = f(&point);
        point[idx] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let denom = fd.abs().max(analytic[idx].abs()).max(1e-8);
        max_rel = max_rel.max((fd - analytic[idx]).abs() / denom);
    }
    max_rel
}
