//! Generate an in-domain and a shifted world and summarize what the
//! generator put into them.
//!
//! ```text
//! cargo run --release --example synthetic_world
//! ```

use textmoments::stats::empirical_class_stats;
use textmoments::{generate_world, Split, SynthConfig};

fn main() -> textmoments::Result<()> {
    for config in [SynthConfig::default(), SynthConfig::cross_domain()] {
        let world = generate_world(&config)?;
        let ds = &world.dataset;
        println!(
            "seed {} shift {}: {} classes ({} base / {} val / {} test), d = {}, d_s = {}",
            config.seed,
            config.domain_shift,
            ds.len(),
            ds.split_indices(Split::Base).len(),
            ds.split_indices(Split::Val).len(),
            ds.split_indices(Split::Test).len(),
            ds.feat_dim(),
            ds.text_dim(),
        );

        // How anisotropic are the true covariances?
        let ranges: Vec<f64> = world
            .truth
            .iter()
            .map(|t| {
                let lo = t.var_diag.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = t.var_diag.iter().cloned().fold(0.0, f64::max);
                hi / lo
            })
            .collect();
        let min_range = ranges.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("  smallest per-class variance range: {min_range:.1}x");

        // Estimation error of the shot-free statistics for the first test class.
        let first_test = ds.split_indices(Split::Test)[0];
        let est = empirical_class_stats(&ds.class(first_test).features)?;
        let truth = &world.truth[first_test];
        let err = est
            .mean
            .iter()
            .zip(&truth.mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("  {}: max |empirical - true| mean coordinate = {err:.4}", ds.class(first_test).label);

        let mean_of = |split| -> f64 {
            let idx = ds.split_indices(split);
            idx.iter().map(|&i| world.truth[i].mean.iter().sum::<f64>()).sum::<f64>()
                / (idx.len() * ds.feat_dim()) as f64
        };
        println!(
            "  average mean coordinate: base {:+.3}, test {:+.3}",
            mean_of(Split::Base),
            mean_of(Split::Test)
        );
    }
    Ok(())
}
