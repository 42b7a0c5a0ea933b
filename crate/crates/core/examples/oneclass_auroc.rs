//! One-class episodes on a synthetic world: AUROC of the baseline and of the
//! three text-informed variants, with paired deltas.
//!
//! ```text
//! cargo run --release --example oneclass_auroc
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

    let config = ProtocolConfig::one_class(vec![0, 1, 2, 4, 8, 16]);
    let report = run_protocol(&world.dataset, &config, &MethodVariant::ALL, Some(&model))?;

    println!("{:<9} {:>3} {:>8} {:>8}", "variant", "k", "AUROC", "±");
    for row in &report.rows {
        match &row.error {
            None => println!("{:<9} {:>3} {:>8.4} {:>8.4}", row.variant, row.k, row.metric, row.ci),
            Some(e) => println!("{:<9} {:>3}   error: {e}", row.variant, row.k),
        }
    }
    println!();
    println!("{:<9} {:>3} {:>8} {:>8}", "delta", "k", "Δ", "±");
    for d in &report.deltas {
        println!("{:<9} {:>3} {:>+8.4} {:>8.4}", d.variant, d.k, d.delta, d.ci);
    }
    Ok(())
}
