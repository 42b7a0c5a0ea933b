//! Train both mapping networks on a synthetic world and compare their
//! standardized MSE with the constant-mean baseline.
//!
//! ```text
//! cargo run --release --example train_mappers
//! ```

use textmoments::mapper::{baseline_predictor, train_text_stats_model, TrainConfig};
use textmoments::metrics::mse;
use textmoments::{generate_world, FeatureMatrix, Split, SynthConfig};

fn standardized_mse(
    preds: &[Vec<f64>],
    targets: &[Vec<f64>],
    std: &textmoments::StandardizationParams,
) -> textmoments::Result<f64> {
    let z = |rows: &[Vec<f64>]| -> textmoments::Result<FeatureMatrix> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| std.apply_row(r)).collect::<Result<_, _>>()?;
        FeatureMatrix::from_rows(&rows)
    };
    mse(&z(preds)?, &z(targets)?)
}

fn main() -> textmoments::Result<()> {
    let world = generate_world(&SynthConfig::default())?;
    let train = world.dataset.class_targets(Split::Base)?;
    let val = world.dataset.class_targets(Split::Val)?;

    let config = TrainConfig::default();
    let start = std::time::Instant::now();
    let (model, reports) = train_text_stats_model(&train, &val, &config)?;
    println!(
        "trained in {:.1?}: mean head best epoch {}, variance head best epoch {}",
        start.elapsed(),
        reports.mean.best_epoch,
        reports.var.best_epoch
    );

    let train_means: Vec<Vec<f64>> = train.iter().map(|(_, s)| s.mean.clone()).collect();
    let train_vars: Vec<Vec<f64>> = train.iter().map(|(_, s)| s.var_diag.clone()).collect();
    let base_mean = baseline_predictor(&train_means)?;
    let base_var = baseline_predictor(&train_vars)?;

    println!("{:<6} {:>10} {:>10} {:>10} {:>10}", "split", "mu base", "mu model", "var base", "var model");
    for (name, classes) in [("base", &train), ("val", &val)] {
        let true_means: Vec<Vec<f64>> = classes.iter().map(|(_, s)| s.mean.clone()).collect();
        let true_vars: Vec<Vec<f64>> = classes.iter().map(|(_, s)| s.var_diag.clone()).collect();
        let mut pred_means = Vec::new();
        let mut pred_vars = Vec::new();
        for (text, _) in classes.iter() {
            let (m, v) = model.predict_standardized(text)?;
            pred_means.push(model.mean_std.invert_row(&m)?);
            pred_vars.push(model.var_std.invert_row(&v)?);
        }
        let n = classes.len();
        println!(
            "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            name,
            standardized_mse(&vec![base_mean.clone(); n], &true_means, &model.mean_std)?,
            standardized_mse(&pred_means, &true_means, &model.mean_std)?,
            standardized_mse(&vec![base_var.clone(); n], &true_vars, &model.var_std)?,
            standardized_mse(&pred_vars, &true_vars, &model.var_std)?,
        );
    }
    Ok(())
}
