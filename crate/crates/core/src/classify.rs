//! Diagonal-covariance Mahalanobis scoring.
//!
//! One-class scoring uses the Gaussian log-likelihood. Multi-class decisions
//! use a softmax over negated root Mahalanobis distances, which reduces to
//! the nearest class mean when every variance is one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stats::ClassStats;

/// Post-adaptation statistics of one candidate class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub label: usize,
    pub stats: ClassStats,
}

impl ClassModel {
    pub fn new(label: usize, stats: ClassStats) -> Result<Self> {
        if stats.var_diag.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::InvalidFeature(
                "class model variance must be strictly positive".into(),
            ));
        }
        Ok(Self { label, stats })
    }
}

/// Logit used for multi-class posteriors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorKind {
    /// `-sqrt(mahalanobis_sq)`.
    #[default]
    RootDistance,
    /// Gaussian log-density, `-(mahalanobis_sq + sum ln var) / 2`.
    GaussianLogDensity,
}

impl std::str::FromStr for PosteriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "root-distance" | "root" => Ok(Self::RootDistance),
            "gaussian-log-density" | "gaussian" => Ok(Self::GaussianLogDensity),
            other => Err(Error::Settings(format!("unknown posterior {other:?}"))),
        }
    }
}

/// `sum_j (x_j - mu_j)^2 / var_j`.
pub fn mahalanobis_sq(x: &[f64], stats: &ClassStats) -> Result<f64> {
    check_dim(stats.dim(), x.len())?;
    Ok(x.iter()
        .zip(&stats.mean)
        .zip(&stats.var_diag)
        .map(|((x, m), v)| {
            let d = x - m;
            d * d / v
        })
        .sum())
}

fn log_det(stats: &ClassStats) -> f64 {
    stats.var_diag.iter().map(|v| v.ln()).sum()
}

/// Log of the diagonal Gaussian density at `x`.
pub fn oneclass_log_likelihood(x: &[f64], stats: &ClassStats) -> Result<f64> {
    let m = mahalanobis_sq(x, stats)?;
    let d = stats.dim() as f64;
    Ok(-0.5 * (d * (2.0 * PI).ln() + log_det(stats) + m))
}

/// In-class score fed to AUROC; higher means more likely in-class.
pub fn oneclass_score(x: &[f64], stats: &ClassStats) -> Result<f64> {
    oneclass_log_likelihood(x, stats)
}

fn logits(x: &[f64], models: &[ClassModel], kind: PosteriorKind) -> Result<Vec<f64>> {
    if models.len() < 2 {
        return Err(Error::TooFewModels(models.len()));
    }
    models
        .iter()
        .map(|m| {
            let d = mahalanobis_sq(x, &m.stats)?;
            Ok(match kind {
                PosteriorKind::RootDistance => -d.sqrt(),
                PosteriorKind::GaussianLogDensity => -0.5 * (d + log_det(&m.stats)),
            })
        })
        .collect()
}

/// Softmax over negated root Mahalanobis distances.
pub fn multiclass_posterior(x: &[f64], models: &[ClassModel]) -> Result<Vec<f64>> {
    multiclass_posterior_with(x, models, PosteriorKind::RootDistance)
}

pub fn multiclass_posterior_with(
    x: &[f64],
    models: &[ClassModel],
    kind: PosteriorKind,
) -> Result<Vec<f64>> {
    let logits = logits(x, models, kind)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|l| (l - log_z).exp()).collect())
}

/// Index into `models` with the largest logit; the first one wins ties.
pub fn classify_index(x: &[f64], models: &[ClassModel], kind: PosteriorKind) -> Result<usize> {
    let logits = logits(x, models, kind)?;
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Label of the class at the smallest Mahalanobis distance.
pub fn classify(x: &[f64], models: &[ClassModel]) -> Result<usize> {
    Ok(models[classify_index(x, models, PosteriorKind::RootDistance)?].label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(mean: &[f64], var: &[f64]) -> ClassStats {
        ClassStats::new(mean.to_vec(), var.to_vec()).unwrap()
    }

    #[test]
    fn mahalanobis_examples() {
        let s = stats(&[1.0, 1.0], &[4.0, 1.0]);
        assert_eq!(mahalanobis_sq(&[1.0, 1.0], &s).unwrap(), 0.0);
        assert_eq!(mahalanobis_sq(&[3.0, 2.0], &s).unwrap(), 2.0);
        let unit = stats(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(mahalanobis_sq(&[3.0, 4.0], &unit).unwrap(), 25.0);
        assert!(mahalanobis_sq(&[1.0], &unit).is_err());
    }

    #[test]
    fn standard_normal_peak() {
        let s = stats(&[0.0], &[1.0]);
        let ll = oneclass_log_likelihood(&[0.0], &s).unwrap();
        assert!((ll - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn doubling_variance_lowers_peak() {
        let s = stats(&[1.0, 2.0, 3.0], &[0.5, 1.0, 2.0]);
        let wide = stats(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]);
        let x = [1.0, 2.0, 3.0];
        assert!(oneclass_log_likelihood(&x, &wide).unwrap() < oneclass_log_likelihood(&x, &s).unwrap());
    }

    #[test]
    fn log_likelihood_matches_direct_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let d = 6;
        let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..3.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s = stats(&mean, &var);
        // Direct evaluation of the density, then ln.
        let det: f64 = var.iter().product();
        let mut quad = 0.0;
        for j in 0..d {
            quad += (x[j] - mean[j]).powi(2) / var[j];
        }
        let p = (-0.5 * quad).exp() / ((2.0 * PI).powi(d as i32) * det).sqrt();
        assert!((oneclass_log_likelihood(&x, &s).unwrap() - p.ln()).abs() < 1e-10);
    }

    #[test]
    fn score_is_unimodal_along_axes() {
        let s = stats(&[1.0, -1.0], &[0.25, 4.0]);
        let peak = oneclass_score(&s.mean, &s).unwrap();
        for j in 0..2 {
            for sign in [-1.0, 1.0] {
                let mut x = s.mean.clone();
                x[j] += sign * 3.0 * s.var_diag[j].sqrt();
                assert!(peak > oneclass_score(&x, &s).unwrap());
            }
        }
    }

    #[test]
    fn anisotropic_ordering_matches_brute_force() {
        let s = stats(&[0.0, 0.0], &[100.0, 0.01]);
        let a = [5.0, 0.0];
        let b = [0.0, 0.5];
        let density = |x: &[f64]| {
            (-(x[0] * x[0] / 100.0 + x[1] * x[1] / 0.01) / 2.0).exp()
                / (2.0 * PI * (100.0f64 * 0.01).sqrt())
        };
        assert!(density(&a) > density(&b));
        assert!(oneclass_score(&a, &s).unwrap() > oneclass_score(&b, &s).unwrap());
    }

    #[test]
    fn posterior_examples() {
        let models = vec![
            ClassModel::new(0, stats(&[-1.0, 0.0], &[1.0, 1.0])).unwrap(),
            ClassModel::new(1, stats(&[1.0, 0.0], &[1.0, 1.0])).unwrap(),
        ];
        let p = multiclass_posterior(&[0.0, 3.0], &models).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let far = vec![
            ClassModel::new(7, stats(&[0.0, 0.0], &[1.0, 1.0])).unwrap(),
            ClassModel::new(9, stats(&[50.0, 0.0], &[1.0, 1.0])).unwrap(),
        ];
        let p = multiclass_posterior(&[0.0, 0.0], &far).unwrap();
        assert!(p[0] > 0.99);
        assert_eq!(classify(&[0.0, 0.0], &far).unwrap(), 7);
        assert!(matches!(
            multiclass_posterior(&[0.0, 0.0], &far[..1]),
            Err(Error::TooFewModels(1))
        ));
    }

    #[test]
    fn posterior_survives_huge_distances() {
        let models = vec![
            ClassModel::new(0, stats(&[1e6; 3], &[1e-6; 3])).unwrap(),
            ClassModel::new(1, stats(&[-1e6; 3], &[1e-6; 3])).unwrap(),
        ];
        for kind in [PosteriorKind::RootDistance, PosteriorKind::GaussianLogDensity] {
            let p = multiclass_posterior_with(&[0.5; 3], &models, kind).unwrap();
            assert!(p.iter().all(|v| v.is_finite()));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_go_to_first_model() {
        let models = vec![
            ClassModel::new(4, stats(&[-1.0], &[1.0])).unwrap(),
            ClassModel::new(2, stats(&[1.0], &[1.0])).unwrap(),
        ];
        assert_eq!(classify(&[0.0], &models).unwrap(), 4);
    }

    #[test]
    fn class_model_rejects_zero_variance() {
        let s = ClassStats {
            mean: vec![0.0],
            var_diag: vec![0.0],
        };
        assert!(ClassModel::new(0, s).is_err());
    }
}
