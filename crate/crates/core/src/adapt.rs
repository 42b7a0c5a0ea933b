//! Blending text-predicted statistics with few-shot estimates.
//!
//! The mean is a convex combination of the empirical shot mean and the text
//! mean (`alpha` weights the text). The diagonal covariance is shrunk from
//! the identity toward the text prediction (`beta` weights the text).

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl AdaptConfig {
    pub const BASELINE: AdaptConfig = AdaptConfig {
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        Ok(Self { alpha, beta })
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value })
    }
}

/// Candidate values for grid search over `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl HyperGrid {
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || betas.is_empty() {
            return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
        }
        for &a in &alphas {
            check_unit("alpha", a)?;
        }
        for &b in &betas {
            check_unit("beta", b)?;
        }
        Ok(Self { alphas, betas })
    }

    /// `{0.0, 0.1, ..., 1.0}` for both coefficients.
    pub fn default_grid() -> Self {
        let steps: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        Self {
            alphas: steps.clone(),
            betas: steps,
        }
    }

    /// Cells in ascending `(alpha, beta)` order, independent of input order.
    pub fn cells(&self) -> Vec<AdaptConfig> {
        let mut alphas = self.alphas.clone();
        let mut betas = self.betas.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        alphas
            .iter()
            .flat_map(|&alpha| betas.iter().map(move |&beta| AdaptConfig { alpha, beta }))
            .collect()
    }
}

/// `(1 - alpha) * empirical + alpha * text`; exact at both endpoints.
pub fn interpolate_mean(empirical_mean: &[f64], text_mean: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dim(empirical_mean.len(), text_mean.len())?;
    check_unit("alpha", alpha)?;
    if alpha == 0.0 {
        return Ok(empirical_mean.to_vec());
    }
    if alpha == 1.0 {
        return Ok(text_mean.to_vec());
    }
    Ok(empirical_mean
        .iter()
        .zip(text_mean)
        .map(|(e, t)| (1.0 - alpha) * e + alpha * t)
        .collect())
}

/// `(1 - beta) * 1 + beta * text_var` per coordinate; exact at both endpoints.
pub fn shrink_cov(text_var_diag: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_unit("beta", beta)?;
    if beta == 0.0 {
        return Ok(vec![1.0; text_var_diag.len()]);
    }
    if beta == 1.0 {
        return Ok(text_var_diag.to_vec());
    }
    Ok(text_var_diag
        .iter()
        .map(|v| (1.0 - beta) + beta * v)
        .collect())
}

/// Picks the grid cell with the highest mean validation score.
///
/// Cells are visited in ascending `(alpha, beta)` order and only a strictly
/// better score replaces the incumbent, so ties go to the smaller `alpha`,
/// then the smaller `beta`.
pub fn select_hyperparams<E, F>(grid: &HyperGrid, val_episodes: &[E], mut scorer: F) -> Result<AdaptConfig>
where
    F: FnMut(&E, AdaptConfig) -> Result<f64>,
{
    if val_episodes.is_empty() {
        return Err(Error::InvalidArgument("no validation episodes".into()));
    }
    let mut best: Option<(f64, AdaptConfig)> = None;
    for cell in grid.cells() {
        let mut total = 0.0;
        for episode in val_episodes {
            total += scorer(episode, cell)?;
        }
        let score = total / val_episodes.len() as f64;
        if score.is_nan() {
            return Err(Error::Numerical(format!(
                "validation score is NaN at alpha={}, beta={}",
                cell.alpha, cell.beta
            )));
        }
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, cell));
        }
    }
    Ok(best.expect("grid has at least one cell").1)
}
