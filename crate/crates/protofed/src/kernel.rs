//! Kernel functions and the Gaussian bandwidth heuristic.

use crate::error::{Error, Result};
use crate::mat::{dot, sq_dist, FeatureMatrix};
use crate::scalar::Real;

/// Gaussian bandwidth: fixed, or resolved from the data at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth<S> {
    Fixed(S),
    /// Median of pairwise squared distances over the stacked inputs.
    MedianHeuristic,
}

/// Kernel choice for the MMD estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec<S> {
    /// k(x, y) = x . y
    Linear,
    /// k(x, y) = (x . y + offset)^2, matching first and second moments.
    PolyDegree2 { offset: S },
    /// k(x, y) = exp(-|x - y|^2 / (2 sigma^2))
    Gaussian { bandwidth: Bandwidth<S> },
}

impl<S: Real> KernelSpec<S> {
    pub fn gaussian_median() -> Self {
        KernelSpec::Gaussian {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }

    /// Resolve a median-heuristic bandwidth against concrete data. Fixed
    /// bandwidths and non-Gaussian kernels pass through unchanged.
    pub fn resolve(&self, x: &FeatureMatrix<S>, y: &FeatureMatrix<S>) -> Result<Self> {
        match self {
            KernelSpec::Gaussian {
                bandwidth: Bandwidth::MedianHeuristic,
            } => {
                let sigma = median_heuristic_bandwidth(x, y)?;
                Ok(KernelSpec::Gaussian {
                    bandwidth: Bandwidth::Fixed(sigma),
                })
            }
            other => Ok(*other),
        }
    }

    fn fixed_sigma(&self) -> Result<Option<S>> {
        match self {
            KernelSpec::Gaussian {
                bandwidth: Bandwidth::Fixed(s),
            } => {
                if *s <= S::zero() || !s.is_finite() {
                    return Err(Error::InvalidArgument(
                        "Gaussian bandwidth must be positive and finite".into(),
                    ));
                }
                Ok(Some(*s))
            }
            KernelSpec::Gaussian {
                bandwidth: Bandwidth::MedianHeuristic,
            } => Err(Error::InvalidArgument(
                "bandwidth must be resolved before kernel evaluation".into(),
            )),
            _ => Ok(None),
        }
    }

    /// Evaluate k(a, b) for a single pair of rows.
    pub fn eval(&self, a: &[S], b: &[S]) -> Result<S> {
        match self {
            KernelSpec::Linear => Ok(dot(a, b)),
            KernelSpec::PolyDegree2 { offset } => {
                if !offset.is_finite() {
                    return Err(Error::NonFinite("poly_offset"));
                }
                let v = dot(a, b) + *offset;
                Ok(v * v)
            }
            KernelSpec::Gaussian { .. } => {
                let sigma = self.fixed_sigma()?.expect("gaussian");
                let two = S::of(2.0);
                Ok((-sq_dist(a, b) / (two * sigma * sigma)).exp())
            }
        }
    }

    /// Derivative of k(a, b) with respect to `a`, written into `out` (accumulated
    /// with weight `w`). Bandwidth is treated as a constant.
    pub fn accum_grad_a(&self, a: &[S], b: &[S], w: S, out: &mut [S]) -> Result<()> {
        match self {
            KernelSpec::Linear => {
                for (o, &bv) in out.iter_mut().zip(b) {
                    *o += w * bv;
                }
            }
            KernelSpec::PolyDegree2 { offset } => {
                let coef = w * S::of(2.0) * (dot(a, b) + *offset);
                for (o, &bv) in out.iter_mut().zip(b) {
                    *o += coef * bv;
                }
            }
            KernelSpec::Gaussian { .. } => {
                let sigma = self.fixed_sigma()?.expect("gaussian");
                let s2 = sigma * sigma;
                let k = (-sq_dist(a, b) / (S::of(2.0) * s2)).exp();
                let coef = -w * k / s2;
                for ((o, &av), &bv) in out.iter_mut().zip(a).zip(b) {
                    *o += coef * (av - bv);
                }
            }
        }
        Ok(())
    }
}

/// Gram matrix K[i][j] = k(X[i], Y[j]).
pub fn kernel_gram<S: Real>(
    x: &FeatureMatrix<S>,
    y: &FeatureMatrix<S>,
    k: &KernelSpec<S>,
) -> Result<FeatureMatrix<S>> {
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            context: "kernel_gram",
            expected: x.cols(),
            found: y.cols(),
        });
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::EmptyInput("kernel_gram"));
    }
    let mut out = FeatureMatrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            let v = k.eval(x.row(i), y.row(j))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("kernel_gram"));
            }
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Median-heuristic bandwidth: sigma^2 is the median of all pairwise squared
/// distances over the stacked rows of `x` and `y`, excluding exact zeros.
/// Falls back to sigma = 1 when every distance is zero.
pub fn median_heuristic_bandwidth<S: Real>(
    x: &FeatureMatrix<S>,
    y: &FeatureMatrix<S>,
) -> Result<S> {
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            context: "median_heuristic_bandwidth",
            expected: x.cols(),
            found: y.cols(),
        });
    }
    let stacked: Vec<&[S]> = x.iter_rows().chain(y.iter_rows()).collect();
    if stacked.len() < 2 {
        return Err(Error::EmptyInput(
            "median_heuristic_bandwidth requires at least 2 rows",
        ));
    }
    let mut dists = Vec::new();
    for i in 0..stacked.len() {
        for j in (i + 1)..stacked.len() {
            let d = sq_dist(stacked[i], stacked[j]);
            if d > S::zero() {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Ok(S::one());
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        (dists[n / 2 - 1] + dists[n / 2]) / S::of(2.0)
    };
    Ok(median.sqrt())
}
