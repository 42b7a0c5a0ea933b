//! Episodic few-shot evaluation.
//!
//! Episodes are sampled from the test split with an RNG derived from
//! `(master seed, shots, episode index)`, so every method variant is scored
//! on identical episodes and per-episode differences are paired.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{interpolate_mean, select_hyperparams, shrink_cov, AdaptConfig, HyperGrid};
use crate::classify::{classify_index, oneclass_score, ClassModel, PosteriorKind};
use crate::dataset::{FewShotDataset, Split};
use crate::error::{Error, Result};
use crate::features::TextEmbedding;
use crate::mapper::StatsPredictor;
use crate::metrics::{accuracy, auroc, confidence_interval, roc_curve, RocPoint};
use crate::stats::ClassStats;

/// Bound on class redraws before sampling gives up.
pub const MAX_RETRIES: usize = 100;

/// Negatives drawn for one-class hyperparameter validation.
pub const VALIDATION_NEGATIVES: usize = 16;

/// Largest number of support shots held out for hyperparameter validation.
pub const MAX_VALIDATION_SHOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeKind {
    OneClass,
    MultiClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryTarget {
    /// One-class ground truth.
    InClass(bool),
    /// Position of the true class within [`Episode::classes`].
    Label(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    /// Dataset class the row is taken from.
    pub class: usize,
    pub row: usize,
    pub target: QueryTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub kind: EpisodeKind,
    /// Dataset indices of the episode classes; a single entry for one-class.
    pub classes: Vec<usize>,
    /// Support row indices, one list per episode class.
    pub support: Vec<Vec<usize>>,
    pub queries: Vec<Query>,
    pub class_text: Vec<TextEmbedding>,
}

impl Episode {
    pub fn shots(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }
}

/// Which statistics come from text. Baseline uses neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodVariant {
    pub use_text_mean: bool,
    pub use_text_cov: bool,
}

impl MethodVariant {
    pub const BASELINE: Self = Self::new(false, false);
    pub const MEAN: Self = Self::new(true, false);
    pub const COV: Self = Self::new(false, true);
    pub const MEAN_COV: Self = Self::new(true, true);
    pub const ALL: [Self; 4] = [Self::BASELINE, Self::MEAN, Self::COV, Self::MEAN_COV];

    pub const fn new(use_text_mean: bool, use_text_cov: bool) -> Self {
        Self {
            use_text_mean,
            use_text_cov,
        }
    }

    pub fn uses_text(&self) -> bool {
        self.use_text_mean || self.use_text_cov
    }

    pub fn name(&self) -> &'static str {
        match (self.use_text_mean, self.use_text_cov) {
            (false, false) => "baseline",
            (true, false) => "M",
            (false, true) => "C",
            (true, true) => "M&C",
        }
    }

    /// Zeroes the coefficients this variant does not use.
    pub fn mask(&self, adapt: AdaptConfig) -> AdaptConfig {
        AdaptConfig {
            alpha: if self.use_text_mean { adapt.alpha } else { 0.0 },
            beta: if self.use_text_cov { adapt.beta } else { 0.0 },
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" | "b" => Ok(Self::BASELINE),
            "m" | "mean" => Ok(Self::MEAN),
            "c" | "cov" => Ok(Self::COV),
            "mc" | "m&c" | "m+c" | "mean-cov" => Ok(Self::MEAN_COV),
            other => Err(Error::Settings(format!("unknown variant {other:?}"))),
        }
    }
}

/// Deterministic per-episode seed.
pub fn episode_seed(master: u64, shots: usize, index: usize) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix((shots as u64) << 32 ^ splitmix(index as u64)))
}

fn shuffled_rows<R: Rng>(rng: &mut R, rows: usize) -> Vec<usize> {
    sample_indices(rng, rows, rows).into_vec()
}

/// One-class episode over the test split.
pub fn sample_oneclass_episode(ds: &FewShotDataset, k: usize, n_queries: usize, rng_seed: u64) -> Result<Episode> {
    sample_oneclass_episode_in(ds, Split::Test, k, n_queries, rng_seed)
}

/// One target class with `k` shots; each query is in-class with probability
/// one half, otherwise a uniform row of a uniform other class.
pub fn sample_oneclass_episode_in(
    ds: &FewShotDataset,
    split: Split,
    k: usize,
    n_queries: usize,
    rng_seed: u64,
) -> Result<Episode> {
    let pool = ds.split_indices(split);
    if pool.len() < 2 {
        return Err(Error::Sampling(format!(
            "one-class episodes need at least 2 {split} classes, found {}",
            pool.len()
        )));
    }
    if n_queries < 2 {
        return Err(Error::Sampling("one-class episodes need at least 2 queries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let target = (0..MAX_RETRIES)
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .find(|&c| ds.class(c).features.rows() > k)
        .ok_or_else(|| {
            Error::Sampling(format!(
                "no {split} class with at least {} rows after {MAX_RETRIES} draws",
                k + 1
            ))
        })?;
    let perm = shuffled_rows(&mut rng, ds.class(target).features.rows());
    let (support, rest) = perm.split_at(k);
    let others: Vec<usize> = pool.iter().copied().filter(|&c| c != target).collect();

    let flags = (0..MAX_RETRIES)
        .map(|_| (0..n_queries).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>())
        .find(|f| f.iter().any(|&b| b) && f.iter().any(|&b| !b))
        .ok_or_else(|| Error::Sampling("could not draw both query kinds".into()))?;

    let mut cursor = 0;
    let queries = flags
        .into_iter()
        .map(|in_class| {
            if in_class {
                let row = rest[cursor % rest.len()];
                cursor += 1;
                Query {
                    class: target,
                    row,
                    target: QueryTarget::InClass(true),
                }
            } else {
                let class = others[rng.gen_range(0..others.len())];
                let row = rng.gen_range(0..ds.class(class).features.rows());
                Query {
                    class,
                    row,
                    target: QueryTarget::InClass(false),
                }
            }
        })
        .collect();

    Ok(Episode {
        kind: EpisodeKind::OneClass,
        classes: vec![target],
        support: vec![support.to_vec()],
        queries,
        class_text: vec![ds.class(target).text.clone()],
    })
}

/// `n_way` distinct test classes with disjoint support and query rows.
pub fn sample_multiclass_episode(
    ds: &FewShotDataset,
    n_way: usize,
    k_shot: usize,
    q_per_class: usize,
    rng_seed: u64,
) -> Result<Episode> {
    sample_multiclass_episode_in(ds, Split::Test, n_way, k_shot, q_per_class, rng_seed)
}

pub fn sample_multiclass_episode_in(
    ds: &FewShotDataset,
    split: Split,
    n_way: usize,
    k_shot: usize,
    q_per_class: usize,
    rng_seed: u64,
) -> Result<Episode> {
    if n_way < 2 {
        return Err(Error::Sampling("multi-class episodes need n_way >= 2".into()));
    }
    if q_per_class == 0 {
        return Err(Error::Sampling("multi-class episodes need q_per_class >= 1".into()));
    }
    let need = k_shot + q_per_class;
    let (eligible, deficient): (Vec<usize>, Vec<usize>) = ds
        .split_indices(split)
        .into_iter()
        .partition(|&c| ds.class(c).features.rows() >= need);
    if eligible.len() < n_way {
        let names: Vec<&str> = deficient.iter().map(|&c| ds.class(c).label.as_str()).collect();
        return Err(Error::Sampling(format!(
            "{n_way}-way {k_shot}-shot with {q_per_class} queries needs {n_way} {split} classes with >= {need} rows, \
             only {} qualify; deficient classes: {names:?}",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let classes: Vec<usize> = sample_indices(&mut rng, eligible.len(), n_way)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    let mut support = Vec::with_capacity(n_way);
    let mut queries = Vec::with_capacity(n_way * q_per_class);
    for (pos, &c) in classes.iter().enumerate() {
        let perm = shuffled_rows(&mut rng, ds.class(c).features.rows());
        support.push(perm[..k_shot].to_vec());
        queries.extend(perm[k_shot..need].iter().map(|&row| Query {
            class: c,
            row,
            target: QueryTarget::Label(pos),
        }));
    }
    Ok(Episode {
        kind: EpisodeKind::MultiClass,
        class_text: classes.iter().map(|&c| ds.class(c).text.clone()).collect(),
        classes,
        support,
        queries,
    })
}

fn shot_mean(ds: &FewShotDataset, class: usize, rows: &[usize]) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return None;
    }
    let features = &ds.class(class).features;
    let mut mean = vec![0.0; features.dim()];
    for &r in rows {
        for (m, x) in mean.iter_mut().zip(features.row(r)) {
            *m += x;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Some(mean)
}

/// Combines shot means and text statistics into class models.
fn assemble_models(
    labels: &[usize],
    shot_means: Vec<Option<Vec<f64>>>,
    text: Option<&[ClassStats]>,
    variant: MethodVariant,
    adapt: AdaptConfig,
) -> Result<Vec<ClassModel>> {
    let adapt = variant.mask(adapt);
    labels
        .iter()
        .zip(shot_means)
        .enumerate()
        .map(|(pos, (&label, empirical))| {
            let text_stats = match (variant.uses_text(), text) {
                (false, _) => None,
                (true, Some(t)) => Some(&t[pos]),
                (true, None) => return Err(Error::MissingPredictor(variant.to_string())),
            };
            let mean = match (empirical, variant.use_text_mean) {
                (Some(e), false) => e,
                (Some(e), true) => interpolate_mean(&e, &text_stats.unwrap().mean, adapt.alpha)?,
                (None, true) => text_stats.unwrap().mean.clone(),
                (None, false) => return Err(Error::ZeroShotRequiresTextMean),
            };
            let var_diag = if variant.use_text_cov {
                shrink_cov(&text_stats.unwrap().var_diag, adapt.beta)?
            } else {
                vec![1.0; mean.len()]
            };
            ClassModel::new(label, ClassStats { mean, var_diag })
        })
        .collect()
}

/// Per-class models for an episode: interpolated means and shrunk variances.
///
/// Baseline never consults `predictor`. Without shots the text mean is used
/// as is, which requires a variant with `use_text_mean`.
pub fn build_models(
    ds: &FewShotDataset,
    episode: &Episode,
    variant: MethodVariant,
    adapt: AdaptConfig,
    predictor: Option<&dyn StatsPredictor>,
) -> Result<Vec<ClassModel>> {
    let text = if variant.uses_text() {
        let p = predictor.ok_or_else(|| Error::MissingPredictor(variant.to_string()))?;
        Some(
            episode
                .class_text
                .iter()
                .map(|t| p.predict(t))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let shot_means = episode
        .classes
        .iter()
        .zip(&episode.support)
        .map(|(&c, rows)| shot_mean(ds, c, rows))
        .collect();
    assemble_models(&episode.classes, shot_means, text.as_deref(), variant, adapt)
}

/// Scores an episode's queries against its models: AUROC for one-class,
/// accuracy for multi-class.
pub fn score_episode(
    ds: &FewShotDataset,
    episode: &Episode,
    models: &[ClassModel],
    posterior: PosteriorKind,
) -> Result<f64> {
    match episode.kind {
        EpisodeKind::OneClass => {
            let model = models
                .first()
                .ok_or_else(|| Error::InvalidArgument("no class model".into()))?;
            let mut scores = Vec::with_capacity(episode.queries.len());
            let mut labels = Vec::with_capacity(episode.queries.len());
            for q in &episode.queries {
                scores.push(oneclass_score(ds.class(q.class).features.row(q.row), &model.stats)?);
                labels.push(matches!(q.target, QueryTarget::InClass(true)));
            }
            auroc(&scores, &labels)
        }
        EpisodeKind::MultiClass => {
            let mut predicted = Vec::with_capacity(episode.queries.len());
            let mut truth = Vec::with_capacity(episode.queries.len());
            for q in &episode.queries {
                predicted.push(classify_index(ds.class(q.class).features.row(q.row), models, posterior)?);
                truth.push(match q.target {
                    QueryTarget::Label(pos) => pos,
                    QueryTarget::InClass(_) => {
                        return Err(Error::InvalidArgument("one-class query in multi-class episode".into()))
                    }
                });
            }
            accuracy(&predicted, &truth)
        }
    }
}

/// How `(alpha, beta)` are chosen for each episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperMode {
    /// The same pair for every episode (masked per variant).
    Fixed(AdaptConfig),
    /// Per-episode grid search on held-out support shots.
    Validate(HyperGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    OneClass { n_queries: usize },
    MultiClass { n_way: usize, q_per_class: usize },
}

impl ProtocolKind {
    pub fn metric_name(&self) -> &'static str {
        match self {
            ProtocolKind::OneClass { .. } => "auroc",
            ProtocolKind::MultiClass { .. } => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub shots: Vec<usize>,
    pub n_episodes: usize,
    pub seed: u64,
    pub hyper: HyperMode,
    /// Shrinkage used without shots when `hyper` is a grid. Nothing can be
    /// validated then, so the default is the middle of the range.
    pub zero_shot_beta: f64,
    pub posterior: PosteriorKind,
}

impl ProtocolConfig {
    /// 100 queries per episode, 2000 episodes, fixed `(0.1, 1)`.
    pub fn one_class(shots: Vec<usize>) -> Self {
        Self {
            kind: ProtocolKind::OneClass { n_queries: 100 },
            shots,
            n_episodes: 2000,
            seed: 0,
            hyper: HyperMode::Fixed(AdaptConfig { alpha: 0.1, beta: 1.0 }),
            zero_shot_beta: 0.5,
            posterior: PosteriorKind::RootDistance,
        }
    }

    /// 20-way, 15 queries per class, 1000 episodes, per-episode validation.
    pub fn multi_class(shots: Vec<usize>) -> Self {
        Self {
            kind: ProtocolKind::MultiClass {
                n_way: 20,
                q_per_class: 15,
            },
            shots,
            n_episodes: 1000,
            seed: 0,
            hyper: HyperMode::Validate(HyperGrid::default_grid()),
            zero_shot_beta: 0.5,
            posterior: PosteriorKind::RootDistance,
        }
    }

    pub fn sample(&self, ds: &FewShotDataset, k: usize, index: usize) -> Result<Episode> {
        let seed = episode_seed(self.seed, k, index);
        match self.kind {
            ProtocolKind::OneClass { n_queries } => sample_oneclass_episode(ds, k, n_queries, seed),
            ProtocolKind::MultiClass { n_way, q_per_class } => {
                sample_multiclass_episode(ds, n_way, k, q_per_class, seed)
            }
        }
    }
}

/// Text statistics predicted once for every dataset class.
pub struct Priors {
    stats: Vec<ClassStats>,
}

impl Priors {
    pub fn new(ds: &FewShotDataset, predictor: &dyn StatsPredictor) -> Result<Self> {
        let stats = ds
            .classes()
            .par_iter()
            .map(|c| predictor.predict(&c.text))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stats })
    }

    fn gather(&self, classes: &[usize]) -> Vec<ClassStats> {
        classes.iter().map(|&c| self.stats[c].clone()).collect()
    }
}

/// Held-out shots used to score the grid inside one episode.
struct ValidationTask {
    /// Rows used to fit, per episode class.
    fit: Vec<Vec<usize>>,
    /// `(class, row, target)` triples scored for each cell.
    queries: Vec<Query>,
}

/// Number of support shots held out for validation, given `k >= 1` shots.
///
/// `min(k, 4)` capped so that at least one shot remains for fitting; with a
/// single shot it serves for both.
pub fn validation_holdout(k: usize) -> usize {
    if k <= 1 {
        k
    } else {
        k.min(MAX_VALIDATION_SHOTS).min(k - 1)
    }
}

fn validation_task(ds: &FewShotDataset, episode: &Episode, seed: u64) -> Result<ValidationTask> {
    let k = episode.shots();
    let h = validation_holdout(k);
    let mut fit = Vec::with_capacity(episode.classes.len());
    let mut queries = Vec::new();
    for (pos, (&c, rows)) in episode.classes.iter().zip(&episode.support).enumerate() {
        let (fit_rows, held) = if k == 1 {
            (rows.clone(), rows.clone())
        } else {
            (rows[..k - h].to_vec(), rows[k - h..].to_vec())
        };
        fit.push(fit_rows);
        let target = match episode.kind {
            EpisodeKind::OneClass => QueryTarget::InClass(true),
            EpisodeKind::MultiClass => QueryTarget::Label(pos),
        };
        queries.extend(held.into_iter().map(|row| Query { class: c, row, target }));
    }
    if episode.kind == EpisodeKind::OneClass {
        // Negatives come from classes disjoint from the test split.
        let mut pool = ds.split_indices(Split::Val);
        if pool.is_empty() {
            pool = ds.split_indices(Split::Base);
        }
        if pool.is_empty() {
            return Err(Error::Sampling(
                "one-class validation needs val or base classes for negatives".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..VALIDATION_NEGATIVES {
            let class = pool[rng.gen_range(0..pool.len())];
            let row = rng.gen_range(0..ds.class(class).features.rows());
            queries.push(Query {
                class,
                row,
                target: QueryTarget::InClass(false),
            });
        }
    }
    Ok(ValidationTask { fit, queries })
}

/// Chooses `(alpha, beta)` for this episode and builds its class models.
///
/// `text` holds the predicted statistics of the episode classes, in order.
pub fn episode_models(
    ds: &FewShotDataset,
    episode: &Episode,
    variant: MethodVariant,
    config: &ProtocolConfig,
    text: Option<&[ClassStats]>,
    validation_seed: u64,
) -> Result<(Vec<ClassModel>, AdaptConfig)> {
    let k = episode.shots();
    let adapt = if !variant.uses_text() {
        AdaptConfig::BASELINE
    } else if k == 0 {
        let beta = match &config.hyper {
            HyperMode::Fixed(a) => a.beta,
            HyperMode::Validate(_) => config.zero_shot_beta,
        };
        variant.mask(AdaptConfig { alpha: 1.0, beta })
    } else {
        match &config.hyper {
            HyperMode::Fixed(a) => variant.mask(*a),
            HyperMode::Validate(grid) => {
                let restricted = HyperGrid {
                    alphas: if variant.use_text_mean { grid.alphas.clone() } else { vec![0.0] },
                    betas: if variant.use_text_cov { grid.betas.clone() } else { vec![0.0] },
                };
                let task = validation_task(ds, episode, validation_seed)?;
                let fit_means: Vec<Option<Vec<f64>>> = episode
                    .classes
                    .iter()
                    .zip(&task.fit)
                    .map(|(&c, rows)| shot_mean(ds, c, rows))
                    .collect();
                let val_episode = Episode {
                    kind: episode.kind,
                    classes: episode.classes.clone(),
                    support: task.fit,
                    queries: task.queries,
                    class_text: Vec::new(),
                };
                select_hyperparams(&restricted, &[val_episode], |e, cell| {
                    let models = assemble_models(&e.classes, fit_means.clone(), text, variant, cell)?;
                    score_episode(ds, e, &models, config.posterior)
                })?
            }
        }
    };
    let shot_means = episode
        .classes
        .iter()
        .zip(&episode.support)
        .map(|(&c, rows)| shot_mean(ds, c, rows))
        .collect();
    let models = assemble_models(&episode.classes, shot_means, text, variant, adapt)?;
    Ok((models, adapt))
}

/// Result of one (variant, episode) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub metric: f64,
    pub adapt: AdaptConfig,
}

/// Builds models with [`episode_models`] and scores the episode queries.
pub fn evaluate_episode(
    ds: &FewShotDataset,
    episode: &Episode,
    variant: MethodVariant,
    config: &ProtocolConfig,
    text: Option<&[ClassStats]>,
    validation_seed: u64,
) -> Result<EpisodeOutcome> {
    let (models, adapt) = episode_models(ds, episode, variant, config, text, validation_seed)?;
    Ok(EpisodeOutcome {
        metric: score_episode(ds, episode, &models, config.posterior)?,
        adapt,
    })
}

fn validation_seed(config: &ProtocolConfig, k: usize, index: usize) -> u64 {
    episode_seed(config.seed ^ 0x7661_6c69_6461_7465, k, index)
}

/// ROC points of episode `index` of a one-class protocol.
pub fn oneclass_roc(
    ds: &FewShotDataset,
    config: &ProtocolConfig,
    variant: MethodVariant,
    k: usize,
    index: usize,
    predictor: Option<&dyn StatsPredictor>,
) -> Result<Vec<RocPoint>> {
    if !matches!(config.kind, ProtocolKind::OneClass { .. }) {
        return Err(Error::InvalidArgument("ROC curves need a one-class protocol".into()));
    }
    let episode = config.sample(ds, k, index)?;
    let text = match (variant.uses_text(), predictor) {
        (false, _) => None,
        (true, Some(p)) => Some(
            episode
                .class_text
                .iter()
                .map(|t| p.predict(t))
                .collect::<Result<Vec<_>>>()?,
        ),
        (true, None) => return Err(Error::MissingPredictor(variant.to_string())),
    };
    let (models, _) = episode_models(
        ds,
        &episode,
        variant,
        config,
        text.as_deref(),
        validation_seed(config, k, index),
    )?;
    let mut scores = Vec::with_capacity(episode.queries.len());
    let mut labels = Vec::with_capacity(episode.queries.len());
    for q in &episode.queries {
        scores.push(oneclass_score(ds.class(q.class).features.row(q.row), &models[0].stats)?);
        labels.push(matches!(q.target, QueryTarget::InClass(true)));
    }
    roc_curve(&scores, &labels)
}

/// Aggregated metric for one (variant, shots) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub k: usize,
    pub metric: f64,
    pub ci: f64,
    pub n_episodes: usize,
    pub seed: u64,
    /// False when the half-width comes from a single episode.
    pub ci_defined: bool,
    pub mean_alpha: f64,
    pub mean_beta: f64,
    pub error: Option<String>,
    pub per_episode: Vec<f64>,
}

impl ReportRow {
    fn failed(variant: MethodVariant, k: usize, seed: u64, error: &Error) -> Self {
        Self {
            variant: variant.to_string(),
            k,
            metric: f64::NAN,
            ci: f64::NAN,
            n_episodes: 0,
            seed,
            ci_defined: false,
            mean_alpha: f64::NAN,
            mean_beta: f64::NAN,
            error: Some(error.to_string()),
            per_episode: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Paired difference `variant - baseline` over identical episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub variant: String,
    pub k: usize,
    pub delta: f64,
    pub ci: f64,
    pub n_episodes: usize,
    pub seed: u64,
    pub ci_defined: bool,
}

impl DeltaRow {
    /// True when the 95% interval lies strictly above zero.
    pub fn significant_gain(&self) -> bool {
        self.ci_defined && self.delta - self.ci > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub metric: String,
    pub config: ProtocolConfig,
    pub rows: Vec<ReportRow>,
    pub deltas: Vec<DeltaRow>,
}

impl ProtocolReport {
    pub fn row(&self, variant: MethodVariant, k: usize) -> Option<&ReportRow> {
        let name = variant.name();
        self.rows.iter().find(|r| r.variant == name && r.k == k)
    }

    pub fn delta(&self, variant: MethodVariant, k: usize) -> Option<&DeltaRow> {
        let name = variant.name();
        self.deltas.iter().find(|r| r.variant == name && r.k == k)
    }
}

/// Runs every variant at every shot count on the same episodes.
///
/// Failures (infeasible shot counts, zero-shot without a text mean) become
/// error rows; the rest of the run continues. Episodes are evaluated in
/// parallel on the current rayon pool, and results do not depend on the
/// number of threads.
pub fn run_protocol(
    ds: &FewShotDataset,
    config: &ProtocolConfig,
    variants: &[MethodVariant],
    predictor: Option<&dyn StatsPredictor>,
) -> Result<ProtocolReport> {
    if config.n_episodes == 0 {
        return Err(Error::Settings("n_episodes must be >= 1".into()));
    }
    if variants.is_empty() {
        return Err(Error::Settings("no variants requested".into()));
    }
    if !(0.0..=1.0).contains(&config.zero_shot_beta) {
        return Err(Error::OutOfRange {
            name: "beta",
            value: config.zero_shot_beta,
        });
    }
    if let HyperMode::Fixed(a) = config.hyper {
        AdaptConfig::new(a.alpha, a.beta)?;
    }
    let priors = match predictor {
        Some(p) if variants.iter().any(MethodVariant::uses_text) => Some(Priors::new(ds, p)?),
        _ => None,
    };
    for v in variants {
        if v.uses_text() && priors.is_none() {
            return Err(Error::MissingPredictor(v.to_string()));
        }
    }

    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for &k in &config.shots {
        let episodes: Result<Vec<Episode>> = (0..config.n_episodes)
            .into_par_iter()
            .map(|i| config.sample(ds, k, i))
            .collect();
        let episodes = match episodes {
            Ok(e) => e,
            Err(err) => {
                rows.extend(variants.iter().map(|&v| ReportRow::failed(v, k, config.seed, &err)));
                continue;
            }
        };
        let texts: Option<Vec<Vec<ClassStats>>> = priors
            .as_ref()
            .map(|p| episodes.iter().map(|e| p.gather(&e.classes)).collect());

        let mut baseline_values: Option<Vec<f64>> = None;
        let mut cell_rows = Vec::new();
        for &variant in variants {
            let outcomes: Result<Vec<EpisodeOutcome>> = episodes
                .par_iter()
                .enumerate()
                .map(|(i, e)| {
                    let text = texts.as_ref().map(|t| t[i].as_slice());
                    evaluate_episode(ds, e, variant, config, text, validation_seed(config, k, i))
                })
                .collect();
            let row = match outcomes {
                Err(err) => ReportRow::failed(variant, k, config.seed, &err),
                Ok(outcomes) => {
                    let values: Vec<f64> = outcomes.iter().map(|o| o.metric).collect();
                    let ci = confidence_interval(&values)?;
                    let n = outcomes.len() as f64;
                    if variant == MethodVariant::BASELINE {
                        baseline_values = Some(values.clone());
                    }
                    ReportRow {
                        variant: variant.to_string(),
                        k,
                        metric: ci.mean,
                        ci: ci.half_width,
                        n_episodes: values.len(),
                        seed: config.seed,
                        ci_defined: ci.defined,
                        mean_alpha: outcomes.iter().map(|o| o.adapt.alpha).sum::<f64>() / n,
                        mean_beta: outcomes.iter().map(|o| o.adapt.beta).sum::<f64>() / n,
                        error: None,
                        per_episode: values,
                    }
                }
            };
            cell_rows.push((variant, row));
        }
        if let Some(base) = &baseline_values {
            for (variant, row) in &cell_rows {
                if *variant == MethodVariant::BASELINE || !row.is_ok() {
                    continue;
                }
                let diffs: Vec<f64> = row.per_episode.iter().zip(base).map(|(a, b)| a - b).collect();
                let ci = confidence_interval(&diffs)?;
                deltas.push(DeltaRow {
                    variant: variant.to_string(),
                    k,
                    delta: ci.mean,
                    ci: ci.half_width,
                    n_episodes: diffs.len(),
                    seed: config.seed,
                    ci_defined: ci.defined,
                });
            }
        }
        rows.extend(cell_rows.into_iter().map(|(_, r)| r));
    }

    Ok(ProtocolReport {
        metric: config.kind.metric_name().into(),
        config: config.clone(),
        rows,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassEntry;
    use crate::features::FeatureMatrix;

    fn toy(rows: &[usize]) -> FewShotDataset {
        let classes = rows
            .iter()
            .enumerate()
            .map(|(i, &r)| ClassEntry {
                label: format!("c{i}"),
                features: FeatureMatrix::new(r, 2, (0..2 * r).map(|v| (v + 10 * i) as f64).collect()).unwrap(),
                text: TextEmbedding::new(vec![i as f64]).unwrap(),
                split: if i == 0 { Split::Val } else { Split::Test },
            })
            .collect();
        FewShotDataset::new(classes).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in MethodVariant::ALL {
            assert_eq!(v.name().parse::<MethodVariant>().unwrap(), v);
        }
        assert!("X".parse::<MethodVariant>().is_err());
    }

    #[test]
    fn zero_shot_one_class_has_empty_support() {
        let ds = toy(&[5, 5, 5]);
        let e = sample_oneclass_episode(&ds, 0, 10, 1).unwrap();
        assert!(e.support[0].is_empty());
        assert_eq!(e.queries.len(), 10);
    }

    #[test]
    fn one_class_needs_two_test_classes() {
        let ds = toy(&[5, 5]);
        assert!(matches!(sample_oneclass_episode(&ds, 1, 10, 1), Err(Error::Sampling(_))));
    }

    #[test]
    fn one_class_gives_up_on_short_classes() {
        let ds = toy(&[5, 2, 2]);
        let err = sample_oneclass_episode(&ds, 2, 10, 1).unwrap_err();
        assert!(err.to_string().contains("after 100 draws"), "{err}");
    }

    #[test]
    fn multiclass_lists_deficient_classes() {
        let ds = toy(&[5, 5, 2, 6]);
        let err = sample_multiclass_episode(&ds, 3, 2, 2, 0).unwrap_err().to_string();
        assert!(err.contains("c2"), "{err}");
        let ok = sample_multiclass_episode(&ds, 2, 2, 2, 0).unwrap();
        assert!(!ok.classes.contains(&2));
    }

    #[test]
    fn baseline_at_zero_shots_is_refused() {
        let ds = toy(&[5, 5, 5]);
        let e = sample_oneclass_episode(&ds, 0, 10, 1).unwrap();
        let err = build_models(&ds, &e, MethodVariant::BASELINE, AdaptConfig::BASELINE, None).unwrap_err();
        assert_eq!(err.to_string(), "zero-shot requires text mean");
    }

    #[test]
    fn text_variant_without_predictor_is_refused() {
        let ds = toy(&[5, 5, 5]);
        let e = sample_oneclass_episode(&ds, 1, 10, 1).unwrap();
        assert!(matches!(
            build_models(&ds, &e, MethodVariant::COV, AdaptConfig::BASELINE, None),
            Err(Error::MissingPredictor(_))
        ));
    }

    #[test]
    fn holdout_sizes() {
        let got: Vec<usize> = (0..=8).map(validation_holdout).collect();
        assert_eq!(got, vec![0, 1, 1, 2, 3, 4, 4, 4, 4]);
    }

    #[test]
    fn episode_seeds_differ() {
        let a = episode_seed(0, 1, 0);
        assert_ne!(a, episode_seed(0, 1, 1));
        assert_ne!(a, episode_seed(0, 2, 0));
        assert_ne!(a, episode_seed(1, 1, 0));
        assert_eq!(a, episode_seed(0, 1, 0));
    }
}
