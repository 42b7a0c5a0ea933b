//! 20-way episodes with per-episode selection of the blend weights.
//!
//! ```text
//! cargo run --release --example multiclass_accuracy
//! ```

use textmoments::mapper::{train_text_stats_model, TrainConfig};
use textmoments::tasks::run_protocol;
use textmoments::{generate_world, MethodVariant, ProtocolConfig, Split, SynthConfig};

fn main() -> textmoments::Result<()> {
    let world = generate_world(&SynthConfig::default())?;
    let (model, _) = train_text_stats_model(
        &world.dataset.class_targets(Split::Base)?,
        &world.dataset.class_targets(Split::Val)?,
        &TrainConfig::default(),
    )?;

    let config = ProtocolConfig {
        n_episodes: 200,
        ..ProtocolConfig::multi_class(vec![0, 1, 2, 5, 10])
    };
    let report = run_protocol(&world.dataset, &config, &MethodVariant::ALL, Some(&model))?;

    println!("{:<9} {:>3} {:>9} {:>7} {:>6} {:>6}", "variant", "k", "accuracy", "±", "alpha", "beta");
    for row in &report.rows {
        match &row.error {
            None => println!(
                "{:<9} {:>3} {:>9.4} {:>7.4} {:>6.2} {:>6.2}",
                row.variant, row.k, row.metric, row.ci, row.mean_alpha, row.mean_beta
            ),
            Some(e) => println!("{:<9} {:>3}   error: {e}", row.variant, row.k),
        }
    }
    Ok(())
}
