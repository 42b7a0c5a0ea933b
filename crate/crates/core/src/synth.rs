//! Synthetic worlds whose text embeddings encode class statistics.
//!
//! For class `i` with text embedding `s_i ~ N(0, I)`:
//!
//! ```text
//! mu_i  = A s_i + e_mu                       e_mu ~ N(0, mean_map_noise^2)
//! var_i = softplus(B s_i + c + e_v) + floor  e_v  ~ N(0, var_map_noise^2)
//! x     ~ N(mu_i, diag(var_i))
//! ```
//!
//! `A`, `B` and `c` are fixed random maps drawn from the seed. A non-zero
//! `domain_shift` adds `domain_shift * sign_j` to every coordinate of the
//! test-split means, with a fixed random sign per coordinate. Base and val
//! classes are bit-identical for any value of the shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassEntry, FewShotDataset, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, TextEmbedding};
use crate::stats::{ClassStats, DEFAULT_VAR_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_base: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub feat_dim: usize,
    pub text_dim: usize,
    pub samples_per_class: usize,
    pub mean_map_noise: f64,
    pub var_map_noise: f64,
    pub domain_shift: f64,
    pub seed: u64,
    /// Standard deviation of each class-mean coordinate across classes.
    pub mean_scale: f64,
    /// Standard deviation of the pre-softplus variance logits.
    pub var_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 120,
            n_base: 80,
            n_val: 20,
            n_test: 20,
            feat_dim: 64,
            text_dim: 32,
            samples_per_class: 500,
            mean_map_noise: 0.1,
            var_map_noise: 0.1,
            domain_shift: 0.0,
            seed: 0,
            mean_scale: 0.5,
            var_spread: 1.5,
        }
    }
}

impl SynthConfig {
    /// The default world with a cross-domain shift on the test classes.
    pub fn cross_domain() -> Self {
        Self {
            domain_shift: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Settings(m));
        if self.n_base + self.n_val + self.n_test != self.n_classes {
            return bad(format!(
                "n_base + n_val + n_test must equal n_classes ({} + {} + {} != {})",
                self.n_base, self.n_val, self.n_test, self.n_classes
            ));
        }
        if self.n_classes == 0 {
            return bad("n_classes must be >= 1".into());
        }
        if self.feat_dim == 0 || self.text_dim == 0 || self.samples_per_class == 0 {
            return bad("feat_dim, text_dim and samples_per_class must be >= 1".into());
        }
        for (name, v) in [
            ("mean_map_noise", self.mean_map_noise),
            ("var_map_noise", self.var_map_noise),
            ("mean_scale", self.mean_scale),
            ("var_spread", self.var_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !self.domain_shift.is_finite() {
            return bad("domain_shift must be finite".into());
        }
        Ok(())
    }
}

/// A generated dataset plus the generator's ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    pub dataset: FewShotDataset,
    /// True (post-shift) statistics of every class, in dataset order.
    pub truth: Vec<ClassStats>,
    /// `A`, `feat_dim x text_dim` row-major.
    pub mean_map: Vec<f64>,
    /// `B`, `feat_dim x text_dim` row-major.
    pub var_map: Vec<f64>,
    pub var_bias: Vec<f64>,
    /// Offset added to test-split means.
    pub shift: Vec<f64>,
}

impl SyntheticWorld {
    /// `A s`, the noiseless mean for a text embedding.
    pub fn oracle_mean(&self, s: &[f64]) -> Vec<f64> {
        matvec(&self.mean_map, s, self.config.feat_dim)
    }
}

fn matvec(m: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Stream identifier for the shift signs, so they never perturb the main stream.
const SHIFT_STREAM: u64 = 0x5348_4946_5400;

pub fn generate_world(config: &SynthConfig) -> Result<SyntheticWorld> {
    config.validate()?;
    let (d, ds) = (config.feat_dim, config.text_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let map_scale = 1.0 / (ds as f64).sqrt();
    let mean_map: Vec<f64> = (0..d * ds)
        .map(|_| normal(&mut rng) * map_scale * config.mean_scale)
        .collect();
    let var_map: Vec<f64> = (0..d * ds)
        .map(|_| normal(&mut rng) * map_scale * config.var_spread)
        .collect();
    let var_bias: Vec<f64> = (0..d).map(|_| 0.5 * normal(&mut rng)).collect();

    let mut shift_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shift_rng.set_stream(SHIFT_STREAM);
    let shift: Vec<f64> = (0..d)
        .map(|_| {
            let sign = if shift_rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * config.domain_shift
        })
        .collect();

    let mut classes = Vec::with_capacity(config.n_classes);
    let mut truth = Vec::with_capacity(config.n_classes);
    for i in 0..config.n_classes {
        let split = if i < config.n_base {
            Split::Base
        } else if i < config.n_base + config.n_val {
            Split::Val
        } else {
            Split::Test
        };
        let s: Vec<f64> = (0..ds).map(|_| normal(&mut rng)).collect();
        let mut mean = matvec(&mean_map, &s, d);
        for m in &mut mean {
            *m += config.mean_map_noise * normal(&mut rng);
        }
        let logits = matvec(&var_map, &s, d);
        let var: Vec<f64> = logits
            .iter()
            .zip(&var_bias)
            .map(|(z, c)| softplus(z + c + config.var_map_noise * normal(&mut rng)) + DEFAULT_VAR_FLOOR)
            .collect();
        if split == Split::Test {
            for (m, o) in mean.iter_mut().zip(&shift) {
                *m += o;
            }
        }

        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let mut data = Vec::with_capacity(config.samples_per_class * d);
        for _ in 0..config.samples_per_class {
            for j in 0..d {
                data.push(mean[j] + sd[j] * normal(&mut rng));
            }
        }
        classes.push(ClassEntry {
            label: format!("class_{i:04}"),
            features: FeatureMatrix::new(config.samples_per_class, d, data)?,
            text: TextEmbedding::new(s)?,
            split,
        });
        truth.push(ClassStats::new(mean, var)?);
    }

    Ok(SyntheticWorld {
        config: config.clone(),
        dataset: FewShotDataset::new(classes)?,
        truth,
        mean_map,
        var_map,
        var_bias,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_classes: 6,
            n_base: 3,
            n_val: 1,
            n_test: 2,
            feat_dim: 5,
            text_dim: 3,
            samples_per_class: 20,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn shift_only_touches_test_split() {
        let id = generate_world(&small()).unwrap();
        let cd = generate_world(&SynthConfig {
            domain_shift: 2.0,
            ..small()
        })
        .unwrap();
        for (i, (a, b)) in id.dataset.classes().iter().zip(cd.dataset.classes()).enumerate() {
            assert_eq!(a.text, b.text);
            if a.split == Split::Test {
                for j in 0..5 {
                    let delta = cd.truth[i].mean[j] - id.truth[i].mean[j];
                    assert!((delta.abs() - 2.0).abs() < 1e-12);
                }
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn rejects_bad_split_sum() {
        let err = generate_world(&SynthConfig {
            n_test: 3,
            ..small()
        })
        .unwrap_err();
        assert!(err.to_string().contains("n_base + n_val + n_test"));
        assert!(generate_world(&SynthConfig {
            mean_map_noise: -1.0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn splits_in_order() {
        let w = generate_world(&small()).unwrap();
        assert_eq!(w.dataset.split_indices(Split::Base), vec![0, 1, 2]);
        assert_eq!(w.dataset.split_indices(Split::Val), vec![3]);
        assert_eq!(w.dataset.split_indices(Split::Test), vec![4, 5]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
    }
}
