//! Empirical statistics over chains: streaming moments, log-log slope fits,
//! batch-means standard errors, the 1D empirical Wasserstein distance and
//! the Monte Carlo drift fit for the Lyapunov function `W`.
//!
//! Standard errors are normal-approximation: `sd / sqrt(n)` for independent
//! draws and the batch-means estimator for correlated chains.

mod drift;
mod moments;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use drift::{drift_fit, drift_probes, DriftFit, ProbeEstimate, CI_Z};
pub use moments::MomentAccumulator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("nonpositive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("samples must be sorted in nondecreasing order")]
    NotSorted,
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = DiagnosticsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares of `ln value` on `ln scale`.
pub fn scaling_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(DiagnosticsError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    for (index, &(s, v)) in points.iter().enumerate() {
        for value in [s, v] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DiagnosticsError::NonPositive { index, value });
            }
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DiagnosticsError::Invalid("all scales are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
    })
}

/// `sqrt(mean (a_(i) - b_(i))^2)` over order statistics of two sorted samples.
pub fn w1d_empirical(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.len() != samples_b.len() {
        return Err(DiagnosticsError::LengthMismatch(samples_a.len(), samples_b.len()));
    }
    if samples_a.is_empty() {
        return Err(DiagnosticsError::TooFewPoints { need: 1, got: 0 });
    }
    let sorted = |s: &[f64]| s.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(samples_a) || !sorted(samples_b) {
        return Err(DiagnosticsError::NotSorted);
    }
    let ss: f64 = samples_a
        .iter()
        .zip(samples_b)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((ss / samples_a.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
    pub batch_len: usize,
}

/// Batch-means estimate of the mean of a correlated series and its
/// standard error `sd(batch means) / sqrt(batches)`. A trailing partial
/// batch is dropped.
pub fn batch_means(series: &[f64], batches: usize) -> Result<BatchMeans> {
    if batches < 2 {
        return Err(DiagnosticsError::Invalid("need at least two batches".into()));
    }
    let batch_len = series.len() / batches;
    if batch_len == 0 {
        return Err(DiagnosticsError::TooFewPoints {
            need: batches,
            got: series.len(),
        });
    }
    let means: Vec<f64> = series
        .chunks_exact(batch_len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / batch_len as f64)
        .collect();
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(BatchMeans {
        mean,
        se: (var / b).sqrt(),
        batches,
        batch_len,
    })
}
