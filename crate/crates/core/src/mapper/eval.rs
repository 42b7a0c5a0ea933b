//! Standardized MSE of trained heads against the constant-mean baseline.

use serde::{Deserialize, Serialize};

use super::TextStatsModel;
use crate::error::{Error, Result};
use crate::features::TextEmbedding;
use crate::metrics::confidence_interval;
use crate::stats::ClassStats;

/// One head evaluated on one set of classes.
///
/// Errors are mean squared differences in the training standardization, so a
/// head that always predicts the base-class average scores exactly 1 on the
/// base classes. Intervals are over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMse {
    pub split: String,
    pub head: String,
    pub n_classes: usize,
    pub baseline: f64,
    pub baseline_ci: f64,
    pub trained: f64,
    pub trained_ci: f64,
}

fn per_class(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64
}

/// Mean and variance rows for `classes`, labelled `split`.
///
/// The baseline predicts the training centre for every class, which is zero
/// after standardization.
pub fn head_mse(
    model: &TextStatsModel,
    split: &str,
    classes: &[(TextEmbedding, ClassStats)],
) -> Result<[HeadMse; 2]> {
    if classes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut base = [Vec::new(), Vec::new()];
    let mut trained = [Vec::new(), Vec::new()];
    for (text, stats) in classes {
        let (pm, pv) = model.predict_standardized(text)?;
        let tm = model.mean_std.apply_row(&stats.mean)?;
        let tv = model.var_std.apply_row(&stats.var_diag)?;
        base[0].push(per_class(&tm));
        base[1].push(per_class(&tv));
        let diff = |p: &[f64], t: &[f64]| -> Vec<f64> { p.iter().zip(t).map(|(a, b)| a - b).collect() };
        trained[0].push(per_class(&diff(&pm, &tm)));
        trained[1].push(per_class(&diff(&pv, &tv)));
    }
    let row = |i: usize, head: &str| -> Result<HeadMse> {
        let b = confidence_interval(&base[i])?;
        let t = confidence_interval(&trained[i])?;
        Ok(HeadMse {
            split: split.to_string(),
            head: head.to_string(),
            n_classes: classes.len(),
            baseline: b.mean,
            baseline_ci: b.half_width,
            trained: t.mean,
            trained_ci: t.half_width,
        })
    };
    Ok([row(0, "mean")?, row(1, "var")?])
}
