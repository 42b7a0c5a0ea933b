//! Diagonal Mahalanobis classification on two elongated classes, where the
//! nearest class mean gets the geometry wrong.
//!
//! ```text
//! cargo run --example mahalanobis_classifier
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use textmoments::classify::{classify, mahalanobis_sq, multiclass_posterior, oneclass_score};
use textmoments::{ClassModel, ClassStats};

fn main() -> textmoments::Result<()> {
    // Class 0 spreads along x, class 1 along y; their means are close.
    let classes = [
        ClassStats::new(vec![0.0, 0.0], vec![9.0, 0.04])?,
        ClassStats::new(vec![1.0, 1.0], vec![0.04, 9.0])?,
    ];
    let models: Vec<ClassModel> = classes
        .iter()
        .enumerate()
        .map(|(i, s)| ClassModel::new(i, s.clone()))
        .collect::<Result<_, _>>()?;
    let isotropic: Vec<ClassModel> = classes
        .iter()
        .enumerate()
        .map(|(i, s)| ClassModel::new(i, ClassStats::isotropic(s.mean.clone())))
        .collect::<Result<_, _>>()?;

    let x = [3.0, 0.1];
    println!("x = {x:?}");
    for m in &models {
        println!(
            "  class {}: mahalanobis^2 {:8.3}  log-likelihood {:9.3}",
            m.label,
            mahalanobis_sq(&x, &m.stats)?,
            oneclass_score(&x, &m.stats)?
        );
    }
    println!("  posterior {:?}", multiclass_posterior(&x, &models)?);

    // Accuracy on samples drawn from the true classes.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut maha, mut ncm, n) = (0, 0, 2000);
    for i in 0..n {
        let truth = &classes[i % 2];
        let x: Vec<f64> = truth
            .mean
            .iter()
            .zip(&truth.var_diag)
            .map(|(&m, &v)| Normal::new(m, v.sqrt()).unwrap().sample(&mut rng))
            .collect();
        maha += usize::from(classify(&x, &models)? == i % 2);
        ncm += usize::from(classify(&x, &isotropic)? == i % 2);
    }
    println!(
        "accuracy over {n} samples: mahalanobis {:.3}, nearest mean {:.3}",
        maha as f64 / n as f64,
        ncm as f64 / n as f64
    );
    Ok(())
}
