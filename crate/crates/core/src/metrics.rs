//! Evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Area under the ROC curve via the Mann-Whitney rank statistic.
///
/// Tied scores get their average rank, which counts a tied positive/negative
/// pair as one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuroc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based) ranks of the positives, doubled to stay integral.
    let mut rank_sum_x2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Average rank of the block [start, end) is (start + 1 + end) / 2.
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        rank_sum_x2 += positives * (start + 1 + end) as u64;
        start = end;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * q) as f64)
}

/// One operating point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points from the strictest threshold down, one per distinct score,
/// starting at `(0, 0)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    // Validates inputs with the same rules as auroc.
    auroc(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_block = order.get(pos + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_block {
            points.push(RocPoint {
                threshold: scores[i],
                fpr: fp as f64 / n_neg,
                tpr: tp as f64 / n_pos,
            });
        }
    }
    Ok(points)
}

/// Fraction of equal entries.
pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Squared error averaged over rows and dimensions.
pub fn mse(preds: &FeatureMatrix, targets: &FeatureMatrix) -> Result<f64> {
    if preds.rows() != targets.rows() || preds.dim() != targets.dim() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            preds.rows(),
            preds.dim(),
            targets.rows(),
            targets.dim()
        )));
    }
    let total: f64 = preds
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(total / preds.as_slice().len() as f64)
}

/// Mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
    /// False when computed from a single value; the half-width is then 0.
    pub defined: bool,
}

/// `(mean, 1.96 * std / sqrt(n))` with the population standard deviation.
pub fn confidence_interval(values: &[f64]) -> Result<Interval> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(Interval {
            mean,
            half_width: 0.0,
            defined: false,
        });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Interval {
        mean,
        half_width: 1.96 * var.sqrt() / n.sqrt(),
        defined: true,
    })
}
