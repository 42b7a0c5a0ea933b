//! Per-dimension z-score standardization.
//!
//! Parameters are fitted once (on base-class targets) and then shared by
//! every split, so a constant predictor equal to the training column means
//! scores a squared error of exactly one per coordinate on the training set.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::FeatureMatrix;
use crate::stats::{column_means, column_variances};

pub const DEFAULT_SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizationParams {
    pub fn new(center: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_dim(center.len(), scale.len())?;
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature("non-finite center".into()));
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidFeature(
                "scale must be finite and positive".into(),
            ));
        }
        Ok(Self { center, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((x, c), s)| (x - c) / s)
            .collect())
    }

    pub fn invert_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((z, c), s)| z * s + c)
            .collect())
    }
}

/// Fits column means and population standard deviations.
pub fn zscore_fit(targets: &FeatureMatrix) -> Result<StandardizationParams> {
    zscore_fit_with_floor(targets, DEFAULT_SCALE_FLOOR)
}

pub fn zscore_fit_with_floor(
    targets: &FeatureMatrix,
    scale_floor: f64,
) -> Result<StandardizationParams> {
    if targets.rows() < 2 {
        return Err(Error::InsufficientRows(targets.rows()));
    }
    let center = column_means(targets);
    let scale = column_variances(targets, &center)
        .into_iter()
        .map(|v| v.sqrt().max(scale_floor))
        .collect();
    Ok(StandardizationParams { center, scale })
}

pub fn zscore_apply(params: &StandardizationParams, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    map_rows(params, m, StandardizationParams::apply_row)
}

pub fn zscore_invert(params: &StandardizationParams, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    map_rows(params, m, StandardizationParams::invert_row)
}

fn map_rows(
    params: &StandardizationParams,
    m: &FeatureMatrix,
    f: fn(&StandardizationParams, &[f64]) -> Result<Vec<f64>>,
) -> Result<FeatureMatrix> {
    check_dim(params.dim(), m.dim())?;
    let mut data = Vec::with_capacity(m.rows() * m.dim());
    for row in m.iter_rows() {
        data.extend(f(params, row)?);
    }
    FeatureMatrix::new(m.rows(), m.dim(), data)
}
