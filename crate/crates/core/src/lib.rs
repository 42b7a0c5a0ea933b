//! Text-predicted class statistics for few-shot classification.
//!
//! Small mapping networks predict, from a class text embedding, the mean and
//! diagonal covariance of that class's visual features. At task time these
//! predictions are blended with the few available shots and used by
//! Mahalanobis one-class and multi-class classifiers, which are evaluated
//! under episodic protocols.
//!
//! | module | contents |
//! |---|---|
//! | [`features`], [`stats`], [`standardize`] | dense containers, empirical statistics, z-scores |
//! | [`mapper`] | two-layer perceptrons, analytic gradients, training, `FSMP` files |
//! | [`adapt`] | mean interpolation, covariance shrinkage, grid selection |
//! | [`classify`] | Mahalanobis distance, log-likelihood, posteriors |
//! | [`tasks`] | episode sampling, method variants, protocol runner |
//! | [`metrics`] | AUROC, accuracy, MSE, confidence intervals |
//! | [`synth`] | synthetic worlds with known ground truth |
//! | [`io`] | `FSTS` feature files and manifests |
//! | [`cli`] | the `textmoments` command-line driver |

pub mod adapt;
mod binfmt;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod io;
pub mod mapper;
pub mod metrics;
pub mod standardize;
pub mod stats;
pub mod synth;
pub mod tasks;

pub use adapt::{AdaptConfig, HyperGrid};
pub use classify::{ClassModel, PosteriorKind};
pub use dataset::{ClassEntry, FewShotDataset, Split};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, TextEmbedding};
pub use mapper::{MapperParams, StatsPredictor, TextStatsModel, TrainConfig};
pub use standardize::StandardizationParams;
pub use stats::ClassStats;
pub use synth::{generate_world, SynthConfig, SyntheticWorld};
pub use tasks::{Episode, MethodVariant, ProtocolConfig, ProtocolReport};
