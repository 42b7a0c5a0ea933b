//! Blending a text prior with a handful of shots, and choosing the blend
//! weights on held-out shots.
//!
//! ```text
//! cargo run --release --example adaptation
//! ```

use textmoments::adapt::{interpolate_mean, select_hyperparams, shrink_cov};
use textmoments::classify::oneclass_score;
use textmoments::mapper::{train_text_stats_model, StatsPredictor};
use textmoments::metrics::auroc;
use textmoments::stats::column_means;
use textmoments::tasks::{sample_oneclass_episode, QueryTarget};
use textmoments::{generate_world, AdaptConfig, ClassStats, HyperGrid, Split, SynthConfig, TrainConfig};

fn main() -> textmoments::Result<()> {
    let world = generate_world(&SynthConfig::default())?;
    let ds = &world.dataset;
    let (model, _) = train_text_stats_model(
        &ds.class_targets(Split::Base)?,
        &ds.class_targets(Split::Val)?,
        &TrainConfig::default(),
    )?;

    let episode = sample_oneclass_episode(ds, 2, 200, 11)?;
    let class = episode.classes[0];
    let prior = model.predict(&episode.class_text[0])?;
    let shots = ds.class(class).features.select_rows(&episode.support[0])?;
    let shot_mean = column_means(&shots);
    let truth = &world.truth[class];

    let dist = |a: &[f64]| a.iter().zip(&truth.mean).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    println!("{}: distance of the mean estimate to the truth", ds.class(class).label);
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let m = interpolate_mean(&shot_mean, &prior.mean, alpha)?;
        println!("  alpha {alpha:.2}: {:.3}", dist(&m));
    }

    // Score the episode queries for each grid cell.
    let score = |_: &(), cfg: AdaptConfig| -> textmoments::Result<f64> {
        let stats = ClassStats::new(
            interpolate_mean(&shot_mean, &prior.mean, cfg.alpha)?,
            shrink_cov(&prior.var_diag, cfg.beta)?,
        )?;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for q in &episode.queries {
            scores.push(oneclass_score(ds.class(q.class).features.row(q.row), &stats)?);
            labels.push(q.target == QueryTarget::InClass(true));
        }
        auroc(&scores, &labels)
    };
    let grid = HyperGrid::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0])?;
    for cell in grid.cells() {
        println!("  alpha {:.1} beta {:.1}: AUROC {:.4}", cell.alpha, cell.beta, score(&(), cell)?);
    }
    let best = select_hyperparams(&grid, &[()], score)?;
    println!("best on these queries: alpha {} beta {}", best.alpha, best.beta);
    Ok(())
}
