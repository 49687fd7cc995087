//! Biased MMD estimator and the bounded-kernel two-sample hypothesis test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{gram, KahanSum, KernelSpec, SparseVector};

/// Outcome of one two-sample test.
///
/// `mmd_b` drives the reject decision against the closed-form threshold.
/// `scaled_stat = m * mmd_b^2` is reported alongside because it grows with
/// the sample size and is the quantity comparable across m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleResult {
    pub mmd_b: f64,
    pub scaled_stat: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub m: usize,
    pub reject: bool,
}

fn block_mean(block: &[Vec<f64>]) -> f64 {
    let mut sum = KahanSum::new();
    let mut count = 0usize;
    for row in block {
        for &v in row {
            sum.add(v);
            count += 1;
        }
    }
    sum.value() / count as f64
}

/// Biased (V-statistic) MMD estimate: all index pairs including the diagonal,
/// clamped at zero before the square root to absorb cancellation noise.
pub fn mmd_biased(xs: &[SparseVector], ys: &[SparseVector], kernel: &KernelSpec) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "mmd requires equal non-empty sample sizes, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let kxx = block_mean(&gram(xs, xs, kernel)?);
    let kyy = block_mean(&gram(ys, ys, kernel)?);
    let kxy = block_mean(&gram(xs, ys, kernel)?);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0).sqrt())
}

/// Acceptance-region boundary for the level-alpha test with a kernel bounded
/// by `kernel_bound`: sqrt(2K/m) * (1 + sqrt(2 ln(1/alpha))).
pub fn mmd_threshold(m: usize, alpha: f64, kernel_bound: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Contract("sample size must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(kernel_bound > 0.0) {
        return Err(Error::Contract(format!(
            "kernel bound must be positive, got {kernel_bound}"
        )));
    }
    Ok((2.0 * kernel_bound / m as f64).sqrt() * (1.0 + (2.0 * alpha.recip().ln()).sqrt()))
}

/// Runs the two-sample test. A median-heuristic kernel is resolved on the
/// pooled sample before evaluation.
pub fn two_sample_test(
    xs: &[SparseVector],
    ys: &[SparseVector],
    kernel: &KernelSpec,
    alpha: f64,
) -> Result<TwoSampleResult> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "two-sample test requires equal non-empty sample sizes, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let kernel = if kernel.is_resolved() {
        *kernel
    } else {
        let pooled: Vec<SparseVector> = xs.iter().chain(ys.iter()).cloned().collect();
        kernel.resolve(&pooled)?
    };
    let m = xs.len();
    let mmd_b = mmd_biased(xs, ys, &kernel)?;
    let threshold = mmd_threshold(m, alpha, kernel.bound())?;
    Ok(TwoSampleResult {
        mmd_b,
        scaled_stat: m as f64 * mmd_b * mmd_b,
        threshold,
        alpha,
        m,
        reject: mmd_b > threshold,
    })
}
