//! Mini-batch gradient descent with momentum and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{gradient_over, loss_over, MapperParams, Objective, Pair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub momentum: f64,
    pub squared_data_term: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            epochs: 500,
            batch_size: 64,
            seed: 0,
            hidden_dim: 256,
            patience: 50,
            momentum: 0.9,
            squared_data_term: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Settings(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective {
            weight_decay: self.weight_decay,
            squared_data_term: self.squared_data_term,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss_curve: Vec<f64>,
    pub val_loss_curve: Vec<f64>,
    pub best_epoch: usize,
    pub final_val_mse: f64,
}

/// Mean over examples and output coordinates of the squared error.
pub fn pairs_mse(params: &MapperParams, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for pair in pairs {
        let out = params.forward_slice(pair.input.as_slice())?;
        crate::error::check_dim(out.len(), pair.target.len())?;
        total += out
            .iter()
            .zip(&pair.target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>()
            / out.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Training stops with a numerical error once the loss grows past this
/// multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Trains a mapper and returns the parameters of the best validation epoch.
///
/// With no validation pairs the training loss drives model selection.
pub fn train_mapper(
    train_pairs: &[Pair],
    val_pairs: &[Pair],
    config: &TrainConfig,
) -> Result<(MapperParams, TrainReport)> {
    config.validate()?;
    let first = train_pairs.first().ok_or(Error::EmptyBatch)?;
    let (in_dim, out_dim) = (first.input.dim(), first.target.len());
    let objective = config.objective();
    let eval_objective = Objective {
        weight_decay: 0.0,
        ..objective
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MapperParams::init_uniform(in_dim, config.hidden_dim, out_dim, &mut rng);
    let mut velocity = MapperParams::zeros(in_dim, config.hidden_dim, out_dim);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();

    let mut train_curve = Vec::with_capacity(config.epochs);
    let mut val_curve = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let initial_loss = loss_over(&params, train_pairs.iter(), &objective)?;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = chunk.iter().map(|&i| &train_pairs[i]);
            let grad = gradient_over(&params, batch, &objective)?;
            for ((v, g), p) in velocity.iter_mut().zip(grad.iter()).zip(params.iter_mut()) {
                *v = config.momentum * *v + g;
                *p -= config.learning_rate * *v;
            }
        }

        let train_loss = loss_over(&params, train_pairs.iter(), &objective)?;
        let val_loss = if val_pairs.is_empty() {
            train_loss
        } else {
            loss_over(&params, val_pairs.iter(), &eval_objective)?
        };
        let exploded = train_loss > DIVERGENCE_FACTOR * initial_loss.max(1.0);
        if !train_loss.is_finite() || !val_loss.is_finite() || exploded {
            return Err(Error::Numerical(format!(
                "loss diverged at epoch {epoch}: train {train_loss}, val {val_loss}"
            )));
        }
        train_curve.push(train_loss);
        val_curve.push(val_loss);

        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }

    let (_, best_epoch, params) = best;
    let eval_set = if val_pairs.is_empty() { train_pairs } else { val_pairs };
    let final_val_mse = pairs_mse(&params, eval_set)?;
    Ok((
        params,
        TrainReport {
            train_loss_curve: train_curve,
            val_loss_curve: val_curve,
            best_epoch,
            final_val_mse,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TextEmbedding;
    use rand::Rng;

    fn pairs(n: usize, in_dim: usize, seed: u64, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Pair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let t = f(&s);
                Pair::new(TextEmbedding::new(s).unwrap(), t)
            })
            .collect()
    }

    #[test]
    fn learns_constant_zero() {
        let train = pairs(40, 4, 1, |_| vec![0.0; 3]);
        let val = pairs(10, 4, 2, |_| vec![0.0; 3]);
        let config = TrainConfig {
            hidden_dim: 16,
            epochs: 300,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let (_, report) = train_mapper(&train, &val, &config).unwrap();
        assert!(report.final_val_mse < 1e-3, "{}", report.final_val_mse);
        assert_eq!(report.train_loss_curve.len(), report.val_loss_curve.len());
    }

    #[test]
    fn rejects_bad_config() {
        let train = pairs(4, 2, 1, |_| vec![0.0]);
        for config in [
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..Default::default()
            },
        ] {
            assert!(train_mapper(&train, &[], &config).is_err());
        }
        assert!(matches!(
            train_mapper(&[], &[], &TrainConfig::default()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let train = pairs(16, 3, 3, |s| vec![1e3 * s[0]; 2]);
        let config = TrainConfig {
            learning_rate: 1e6,
            squared_data_term: true,
            hidden_dim: 8,
            epochs: 200,
            patience: 1000,
            ..Default::default()
        };
        let err = train_mapper(&train, &[], &config).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");

        // Finite but exploding within a handful of epochs.
        let short = TrainConfig {
            epochs: 3,
            squared_data_term: false,
            ..config
        };
        let err = train_mapper(&train, &[], &short).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn early_stopping_truncates_curves() {
        let train = pairs(20, 3, 4, |s| vec![s[0]]);
        let val = pairs(5, 3, 5, |s| vec![-s[0]]);
        let config = TrainConfig {
            hidden_dim: 8,
            epochs: 400,
            patience: 5,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let (_, report) = train_mapper(&train, &val, &config).unwrap();
        assert!(report.val_loss_curve.len() < 400);
        assert!(report.val_loss_curve.len() <= report.best_epoch + 6);
    }
}
