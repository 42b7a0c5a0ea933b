//! Write a dataset as an FSTS file with its manifest, read it back, and
//! store trained mappers next to it.
//!
//! ```text
//! cargo run --release --example feature_files -- /tmp/textmoments-demo
//! ```

use std::path::PathBuf;

use textmoments::io::{read_dataset_with_manifest, write_dataset_with_manifest, Manifest};
use textmoments::mapper::train_text_stats_model;
use textmoments::{generate_world, Split, StatsPredictor, SynthConfig, TextStatsModel, TrainConfig};

fn main() -> textmoments::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "textmoments-demo".into()).into();
    std::fs::create_dir_all(&dir).map_err(|e| textmoments::Error::Io { path: dir.clone(), source: e })?;

    let config = SynthConfig {
        samples_per_class: 50,
        ..Default::default()
    };
    let world = generate_world(&config)?;
    let mut manifest = Manifest::for_dataset(&world.dataset);
    manifest.provenance = serde_json::json!({ "generator": "feature_files example", "seed": config.seed });
    let path = dir.join("world.fsts");
    write_dataset_with_manifest(&world.dataset, &path, &manifest)?;

    let (ds, manifest) = read_dataset_with_manifest(&path)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("{}: {} classes, {bytes} bytes, provenance {}", path.display(), ds.len(), manifest.provenance);

    // Features are stored as f32.
    let worst = ds
        .classes()
        .iter()
        .zip(world.dataset.classes())
        .flat_map(|(a, b)| a.features.as_slice().iter().zip(b.features.as_slice()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("largest round-trip difference: {worst:.2e}");

    let (model, _) = train_text_stats_model(
        &ds.class_targets(Split::Base)?,
        &ds.class_targets(Split::Val)?,
        &TrainConfig {
            epochs: 100,
            ..Default::default()
        },
    )?;
    let maps = dir.join("mappers");
    model.save(&maps)?;
    let loaded = TextStatsModel::load(&maps)?;
    let text = &ds.class(0).text;
    assert_eq!(model.predict(text)?, loaded.predict(text)?);
    println!("mappers saved to {} and reloaded with identical predictions", maps.display());
    Ok(())
}
