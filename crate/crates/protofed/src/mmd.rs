//! Squared maximum mean discrepancy (biased V-statistic) with analytic gradients.

use crate::error::{Error, Result};
use crate::kernel::{kernel_gram, KernelSpec};
use crate::mat::FeatureMatrix;
use crate::scalar::Real;

fn check_inputs<S: Real>(x: &FeatureMatrix<S>, y: &FeatureMatrix<S>) -> Result<()> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::EmptyInput("mmd2"));
    }
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            context: "mmd2",
            expected: x.cols(),
            found: y.cols(),
        });
    }
    Ok(())
}

/// Biased V-statistic: mean(K_XX) + mean(K_YY) - 2 mean(K_XY).
///
/// The kernel must already carry a resolved bandwidth; use
/// [`KernelSpec::resolve`] first when the median heuristic is in play.
pub fn mmd2<S: Real>(x: &FeatureMatrix<S>, y: &FeatureMatrix<S>, k: &KernelSpec<S>) -> Result<S> {
    check_inputs(x, y)?;
    let kxx = kernel_gram(x, x, k)?;
    let kyy = kernel_gram(y, y, k)?;
    let kxy = kernel_gram(x, y, k)?;
    let mean = |g: &FeatureMatrix<S>| -> S {
        let total: S = g.as_slice().iter().copied().sum();
        total / S::of((g.rows() * g.cols()) as f64)
    };
    Ok(mean(&kxx) + mean(&kyy) - S::of(2.0) * mean(&kxy))
}

/// Analytic gradient of [`mmd2`] with respect to each entry of `x`.
///
/// The bandwidth is treated as a constant during differentiation.
pub fn mmd2_grad_wrt_x<S: Real>(
    x: &FeatureMatrix<S>,
    y: &FeatureMatrix<S>,
    k: &KernelSpec<S>,
) -> Result<FeatureMatrix<S>> {
    check_inputs(x, y)?;
    let m = S::of(x.rows() as f64);
    let n = S::of(y.rows() as f64);
    let mut grad = FeatureMatrix::zeros(x.rows(), x.cols());
    // d/dx_i [ (1/m^2) sum_ab k(x_a,x_b) ] = (2/m^2) sum_b d1 k(x_i, x_b)
    let w_xx = S::of(2.0) / (m * m);
    let w_xy = -S::of(2.0) / (m * n);
    for i in 0..x.rows() {
        // split borrow: copy the anchor row so we can mutate grad
        let xi: Vec<S> = x.row(i).to_vec();
        let gi = grad.row_mut(i);
        for b in 0..x.rows() {
            k.accum_grad_a(&xi, x.row(b), w_xx, gi)?;
        }
        for b in 0..y.rows() {
            k.accum_grad_a(&xi, y.row(b), w_xy, gi)?;
        }
    }
    Ok(grad)
}
