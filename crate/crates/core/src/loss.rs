//! Cross-entropy over in-batch negatives.
//!
//! Both variants take a square normalized score matrix whose diagonal holds
//! the gold pairs, and use `logit = score / temperature`.
//!
//! - [`global_inbatch_loss`]: each positive competes against all `N² − N`
//!   off-diagonal logits of the batch. Other positives never enter its
//!   denominator.
//! - [`onedim_inbatch_loss`]: each positive competes against the `N − 1`
//!   negatives of its own row.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    /// Mean over positives.
    pub loss: f64,
    pub positives: usize,
    /// Distinct negative logits in the batch.
    pub negatives: usize,
    /// Negatives in each positive's denominator.
    pub negatives_per_positive: usize,
}

/// Loss value plus its gradient with respect to the normalized scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub report: LossReport,
    pub grad: Matrix,
}

fn check(scores: &Matrix, temperature: f64) -> Result<usize> {
    if scores.rows() != scores.cols() {
        return Err(Error::NotSquare {
            rows: scores.rows(),
            cols: scores.cols(),
        });
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if scores.rows() == 0 {
        return Err(Error::EmptyInput("loss batch"));
    }
    if !scores.is_finite() {
        return Err(Error::NonFinite {
            context: "loss logits",
        });
    }
    Ok(scores.rows())
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + libm::log(libm::exp(a - m) + libm::exp(b - m))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(values.map(|v| libm::exp(v - m)).sum::<f64>())
}

/// Global in-batch-negative loss with its gradient.
pub fn global_inbatch_loss(scores: &Matrix, temperature: f64) -> Result<LossWithGrad> {
    let n = check(scores, temperature)?;
    let logits = scores.map(|s| s / temperature);
    let off_diag = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
    let lse_negatives = log_sum_exp(off_diag.clone().map(|(i, j)| logits[(i, j)]));

    let mut grad = Matrix::zeros(n, n);
    let mut total = 0.0;
    // Σ_i exp(lse_negatives − log D_i), shared by every off-diagonal logit.
    let mut neg_weight = 0.0;
    for i in 0..n {
        let pos = logits[(i, i)];
        let log_denom = log_add_exp(pos, lse_negatives);
        total += log_denom - pos;
        grad[(i, i)] += libm::exp(pos - log_denom) - 1.0;
        neg_weight += libm::exp(lse_negatives - log_denom);
    }
    for (i, j) in off_diag {
        grad[(i, j)] = libm::exp(logits[(i, j)] - lse_negatives) * neg_weight;
    }
    let scale = 1.0 / (n as f64 * temperature);
    for g in grad.as_mut_slice() {
        *g *= scale;
    }
    Ok(LossWithGrad {
        report: LossReport {
            loss: total / n as f64,
            positives: n,
            negatives: n * n - n,
            negatives_per_positive: n * n - n,
        },
        grad,
    })
}

/// Row-wise (one-dimensional) in-batch-negative loss with its gradient.
pub fn onedim_inbatch_loss(scores: &Matrix, temperature: f64) -> Result<LossWithGrad> {
    let n = check(scores, temperature)?;
    let logits = scores.map(|s| s / temperature);
    let mut grad = Matrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let lse = log_sum_exp(row.iter().copied());
        total += lse - row[i];
        let probs: Vec<f64> = row.iter().map(|&z| libm::exp(z - lse)).collect();
        let g = grad.row_mut(i);
        g.copy_from_slice(&probs);
        g[i] -= 1.0;
    }
    let scale = 1.0 / (n as f64 * temperature);
    for g in grad.as_mut_slice() {
        *g *= scale;
    }
    Ok(LossWithGrad {
        report: LossReport {
            loss: total / n as f64,
            positives: n,
            negatives: n * n - n,
            negatives_per_positive: n - 1,
        },
        grad,
    })
}
