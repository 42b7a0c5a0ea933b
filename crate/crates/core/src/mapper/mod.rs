//! Text-to-statistics mapping networks.
//!
//! Two independent two-layer perceptrons map a standardized text embedding to
//! the standardized class mean and the standardized diagonal variance. The
//! constant predictor (training-set average) is provided as the reference
//! baseline.

mod eval;
mod file;
mod mlp;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use eval::{head_mse, HeadMse};
pub use file::{decode_mapper, encode_mapper, read_mapper, write_mapper, MAPPER_MAGIC, MAPPER_VERSION};
pub use mlp::{
    mapper_forward, mapper_gradient, mapper_gradient_with, mapper_loss, mapper_loss_with,
    MapperParams, Objective, Pair,
};
pub use train::{pairs_mse, train_mapper, TrainConfig, TrainReport};

use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureMatrix, TextEmbedding};
use crate::standardize::{zscore_fit, StandardizationParams};
use crate::stats::{column_means, ClassStats, DEFAULT_VAR_FLOOR};

/// Anything that can turn a class text embedding into class statistics.
pub trait StatsPredictor: Sync {
    fn predict(&self, text: &TextEmbedding) -> Result<ClassStats>;
}

/// Elementwise mean of the training targets.
pub fn baseline_predictor<R: AsRef<[f64]>>(train_targets: &[R]) -> Result<Vec<f64>> {
    if train_targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(column_means(&FeatureMatrix::from_rows(train_targets)?))
}

/// Runs both mappers on an already-standardized embedding and maps the
/// outputs back to feature space, flooring the variances.
pub fn predict_class_stats(
    mu_params: &MapperParams,
    sigma_params: &MapperParams,
    s: &TextEmbedding,
    mu_std: &StandardizationParams,
    sigma_std: &StandardizationParams,
) -> Result<ClassStats> {
    predict_class_stats_with_floor(mu_params, sigma_params, s, mu_std, sigma_std, DEFAULT_VAR_FLOOR)
}

pub fn predict_class_stats_with_floor(
    mu_params: &MapperParams,
    sigma_params: &MapperParams,
    s: &TextEmbedding,
    mu_std: &StandardizationParams,
    sigma_std: &StandardizationParams,
    var_floor: f64,
) -> Result<ClassStats> {
    let mean = mu_std.invert_row(&mapper_forward(mu_params, s)?)?;
    let var_diag: Vec<f64> = sigma_std
        .invert_row(&mapper_forward(sigma_params, s)?)?
        .into_iter()
        .map(|v| v.max(var_floor))
        .collect();
    check_dim(mean.len(), var_diag.len())?;
    ClassStats::new(mean, var_diag)
}

/// A trained pair of mappers together with every standardization they need.
#[derive(Debug, Clone, PartialEq)]
pub struct TextStatsModel {
    pub mean_mapper: MapperParams,
    pub var_mapper: MapperParams,
    pub text_std: StandardizationParams,
    pub mean_std: StandardizationParams,
    pub var_std: StandardizationParams,
    pub var_floor: f64,
    pub config: TrainConfig,
}

/// Loss curves for both heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperReports {
    pub mean: TrainReport,
    pub var: TrainReport,
}

/// JSON sidecar written next to each `.fsmp` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperMetadata {
    pub format: String,
    pub version: u32,
    pub role: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub var_floor: f64,
    pub input_standardization: StandardizationParams,
    pub target_standardization: StandardizationParams,
}

const MEAN_FILE: &str = "mean.fsmp";
const VAR_FILE: &str = "var.fsmp";

/// Regression pairs for both heads, standardized with the given parameters.
pub fn standardized_pairs(
    classes: &[(TextEmbedding, ClassStats)],
    text_std: &StandardizationParams,
    mean_std: &StandardizationParams,
    var_std: &StandardizationParams,
) -> Result<(Vec<Pair>, Vec<Pair>)> {
    let mut mean_pairs = Vec::with_capacity(classes.len());
    let mut var_pairs = Vec::with_capacity(classes.len());
    for (text, stats) in classes {
        let input = TextEmbedding::new(text_std.apply_row(text.as_slice())?)?;
        mean_pairs.push(Pair::new(input.clone(), mean_std.apply_row(&stats.mean)?));
        var_pairs.push(Pair::new(input, var_std.apply_row(&stats.var_diag)?));
    }
    Ok((mean_pairs, var_pairs))
}

/// Fits text, mean and variance standardizations on `train` and trains both
/// heads. The variance head uses `seed + 1`.
pub fn train_text_stats_model(
    train: &[(TextEmbedding, ClassStats)],
    val: &[(TextEmbedding, ClassStats)],
    config: &TrainConfig,
) -> Result<(TextStatsModel, MapperReports)> {
    config.validate()?;
    let texts: Vec<&[f64]> = train.iter().map(|(t, _)| t.as_slice()).collect();
    let means: Vec<&[f64]> = train.iter().map(|(_, s)| s.mean.as_slice()).collect();
    let vars: Vec<&[f64]> = train.iter().map(|(_, s)| s.var_diag.as_slice()).collect();
    if train.len() < 2 {
        return Err(Error::InsufficientRows(train.len()));
    }
    let text_std = zscore_fit(&FeatureMatrix::from_rows(&texts)?)?;
    let mean_std = zscore_fit(&FeatureMatrix::from_rows(&means)?)?;
    let var_std = zscore_fit(&FeatureMatrix::from_rows(&vars)?)?;

    let (mean_train, var_train) = standardized_pairs(train, &text_std, &mean_std, &var_std)?;
    let (mean_val, var_val) = standardized_pairs(val, &text_std, &mean_std, &var_std)?;

    let (mean_mapper, mean_report) = train_mapper(&mean_train, &mean_val, config)?;
    let var_config = TrainConfig {
        seed: config.seed.wrapping_add(1),
        ..config.clone()
    };
    let (var_mapper, var_report) = train_mapper(&var_train, &var_val, &var_config)?;

    Ok((
        TextStatsModel {
            mean_mapper,
            var_mapper,
            text_std,
            mean_std,
            var_std,
            var_floor: DEFAULT_VAR_FLOOR,
            config: config.clone(),
        },
        MapperReports {
            mean: mean_report,
            var: var_report,
        },
    ))
}

impl TextStatsModel {
    pub fn text_dim(&self) -> usize {
        self.text_std.dim()
    }

    pub fn feat_dim(&self) -> usize {
        self.mean_std.dim()
    }

    /// Standardized mapper outputs `(mean, var)` for a raw text embedding.
    pub fn predict_standardized(&self, text: &TextEmbedding) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.text_std.apply_row(text.as_slice())?;
        Ok((
            self.mean_mapper.forward_slice(&s)?,
            self.var_mapper.forward_slice(&s)?,
        ))
    }

    fn metadata(&self, role: &str) -> MapperMetadata {
        let (seed, target) = match role {
            "mean" => (self.config.seed, &self.mean_std),
            _ => (self.config.seed.wrapping_add(1), &self.var_std),
        };
        MapperMetadata {
            format: "FSMP".into(),
            version: MAPPER_VERSION,
            role: role.into(),
            seed,
            config: self.config.clone(),
            var_floor: self.var_floor,
            input_standardization: self.text_std.clone(),
            target_standardization: target.clone(),
        }
    }

    /// Writes `mean.fsmp`, `var.fsmp` and their `.json` sidecars into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (role, file, params) in [
            ("mean", MEAN_FILE, &self.mean_mapper),
            ("var", VAR_FILE, &self.var_mapper),
        ] {
            let path = dir.join(file);
            write_mapper(params, &path)?;
            let meta = serde_json::to_string_pretty(&self.metadata(role))
                .map_err(|e| Error::Format(e.to_string()))?;
            let meta_path = sidecar_path(&path);
            fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read_meta = |file: &str| -> Result<MapperMetadata> {
            let path = sidecar_path(&dir.join(file));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        };
        let mean_meta = read_meta(MEAN_FILE)?;
        let var_meta = read_meta(VAR_FILE)?;
        let mean_mapper = read_mapper(&dir.join(MEAN_FILE))?;
        let var_mapper = read_mapper(&dir.join(VAR_FILE))?;
        check_dim(mean_meta.input_standardization.dim(), mean_mapper.in_dim)?;
        check_dim(mean_meta.target_standardization.dim(), mean_mapper.out_dim)?;
        check_dim(var_meta.target_standardization.dim(), var_mapper.out_dim)?;
        check_dim(mean_mapper.in_dim, var_mapper.in_dim)?;
        check_dim(mean_mapper.out_dim, var_mapper.out_dim)?;
        Ok(Self {
            mean_mapper,
            var_mapper,
            text_std: mean_meta.input_standardization,
            mean_std: mean_meta.target_standardization,
            var_std: var_meta.target_standardization,
            var_floor: var_meta.var_floor,
            config: mean_meta.config,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

impl StatsPredictor for TextStatsModel {
    fn predict(&self, text: &TextEmbedding) -> Result<ClassStats> {
        let s = TextEmbedding::new(self.text_std.apply_row(text.as_slice())?)?;
        predict_class_stats_with_floor(
            &self.mean_mapper,
            &self.var_mapper,
            &s,
            &self.mean_std,
            &self.var_std,
            self.var_floor,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_column_mean() {
        assert_eq!(baseline_predictor(&[[0.0], [2.0]]).unwrap(), vec![1.0]);
        let empty: [[f64; 1]; 0] = [];
        assert!(baseline_predictor(&empty).is_err());
    }

    /// A mapper whose output is exactly `b2`, regardless of input.
    fn constant_mapper(in_dim: usize, out: Vec<f64>) -> MapperParams {
        let mut p = MapperParams::zeros(in_dim, 1, out.len());
        p.b2 = out;
        p
    }

    #[test]
    fn recovers_true_stats_from_exact_standardized_outputs() {
        let truth = ClassStats::new(vec![1.0, -2.0, 3.5], vec![0.5, 2.0, 9.0]).unwrap();
        let mu_std = StandardizationParams::new(vec![0.3, -1.0, 2.0], vec![2.0, 0.5, 1.5]).unwrap();
        let sigma_std = StandardizationParams::new(vec![1.0, 1.0, 4.0], vec![0.1, 3.0, 2.0]).unwrap();
        let mu = constant_mapper(2, mu_std.apply_row(&truth.mean).unwrap());
        let sigma = constant_mapper(2, sigma_std.apply_row(&truth.var_diag).unwrap());
        let s = TextEmbedding::new(vec![0.1, 0.2]).unwrap();
        let got = predict_class_stats(&mu, &sigma, &s, &mu_std, &sigma_std).unwrap();
        for (a, b) in got
            .mean
            .iter()
            .chain(&got.var_diag)
            .zip(truth.mean.iter().chain(&truth.var_diag))
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_variance_is_floored() {
        let std = StandardizationParams::identity(2);
        let mu = constant_mapper(1, vec![0.0, 0.0]);
        let sigma = constant_mapper(1, vec![-3.0, 2.0]);
        let s = TextEmbedding::new(vec![1.0]).unwrap();
        let got = predict_class_stats(&mu, &sigma, &s, &std, &std).unwrap();
        assert_eq!(got.var_diag, vec![DEFAULT_VAR_FLOOR, 2.0]);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let std = StandardizationParams::identity(3);
        let mu = constant_mapper(1, vec![0.0, 0.0]);
        let s = TextEmbedding::new(vec![1.0]).unwrap();
        assert!(predict_class_stats(&mu, &mu, &s, &std, &std).is_err());
    }

    #[test]
    fn save_load_is_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut classes = Vec::new();
        for _ in 0..12 {
            let text: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0) / 3.0).collect();
            let mean: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0) * 0.1).collect();
            let var: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..2.0) / 7.0).collect();
            classes.push((TextEmbedding::new(text).unwrap(), ClassStats::new(mean, var).unwrap()));
        }
        let config = TrainConfig {
            epochs: 3,
            hidden_dim: 5,
            ..Default::default()
        };
        let (model, _) = train_text_stats_model(&classes, &[], &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let loaded = TextStatsModel::load(dir.path()).unwrap();
        assert_eq!(loaded, model);
    }
}
