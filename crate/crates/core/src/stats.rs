//! Per-class empirical statistics with a diagonal covariance.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureMatrix;

/// Lower bound applied to every diagonal variance.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-6;

/// Mean vector and diagonal of the covariance of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
}

impl ClassStats {
    pub fn new(mean: Vec<f64>, var_diag: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), var_diag.len())?;
        if mean.is_empty() {
            return Err(Error::InvalidFeature("zero-dimensional statistics".into()));
        }
        if mean.iter().chain(&var_diag).any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature("non-finite class statistic".into()));
        }
        if let Some(j) = var_diag.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidFeature(format!(
                "variance at coordinate {j} is not positive"
            )));
        }
        Ok(Self { mean, var_diag })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Unit variances around `mean`.
    pub fn isotropic(mean: Vec<f64>) -> Self {
        let var_diag = vec![1.0; mean.len()];
        Self { mean, var_diag }
    }
}

/// Column means of `features`.
pub fn column_means(features: &FeatureMatrix) -> Vec<f64> {
    let n = features.rows() as f64;
    let mut mean = vec![0.0; features.dim()];
    for row in features.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    mean
}

/// Population (divisor `n`) column variances around `mean`.
pub fn column_variances(features: &FeatureMatrix, mean: &[f64]) -> Vec<f64> {
    let n = features.rows() as f64;
    let mut var = vec![0.0; features.dim()];
    for row in features.iter_rows() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    var
}

/// Empirical mean and population variance, floored at [`DEFAULT_VAR_FLOOR`].
pub fn empirical_class_stats(features: &FeatureMatrix) -> Result<ClassStats> {
    empirical_class_stats_with_floor(features, DEFAULT_VAR_FLOOR)
}

pub fn empirical_class_stats_with_floor(
    features: &FeatureMatrix,
    var_floor: f64,
) -> Result<ClassStats> {
    if var_floor.is_nan() || var_floor <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "var_floor must be positive, got {var_floor}"
        )));
    }
    // FeatureMatrix already guarantees rows >= 1 and finite entries.
    let mean = column_means(features);
    let var_diag = column_variances(features, &mean)
        .into_iter()
        .map(|v| v.max(var_floor))
        .collect();
    Ok(ClassStats { mean, var_diag })
}
