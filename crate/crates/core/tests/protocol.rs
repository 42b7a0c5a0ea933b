use std::sync::OnceLock;

use textmoments::mapper::train_text_stats_model;
use textmoments::tasks::{build_models, run_protocol, HyperMode};
use textmoments::{
    generate_world, AdaptConfig, MethodVariant, ProtocolConfig, Split, StatsPredictor, SynthConfig,
    SyntheticWorld, TextStatsModel, TrainConfig,
};

struct Fixture {
    world: SyntheticWorld,
    model: TextStatsModel,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let world = generate_world(&SynthConfig {
            n_classes: 60,
            n_base: 40,
            n_val: 10,
            n_test: 10,
            feat_dim: 16,
            text_dim: 8,
            samples_per_class: 120,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let ds = &world.dataset;
        let config = TrainConfig {
            hidden_dim: 64,
            epochs: 300,
            batch_size: 16,
            ..Default::default()
        };
        let (model, _) = train_text_stats_model(
            &ds.class_targets(Split::Base).unwrap(),
            &ds.class_targets(Split::Val).unwrap(),
            &config,
        )
        .unwrap();
        Fixture { world, model }
    })
}

fn one_class(shots: Vec<usize>, episodes: usize) -> ProtocolConfig {
    ProtocolConfig {
        n_episodes: episodes,
        ..ProtocolConfig::one_class(shots)
    }
}

#[test]
fn baseline_does_not_depend_on_mappers() {
    let f = fixture();
    let ds = &f.world.dataset;
    let config = one_class(vec![1, 3], 60);
    let with = run_protocol(ds, &config, &[MethodVariant::BASELINE], Some(&f.model)).unwrap();
    let without = run_protocol(ds, &config, &[MethodVariant::BASELINE], None).unwrap();
    assert_eq!(with, without);

    let retrained = {
        let (m, _) = train_text_stats_model(
            &ds.class_targets(Split::Base).unwrap(),
            &ds.class_targets(Split::Val).unwrap(),
            &TrainConfig {
                hidden_dim: 8,
                epochs: 5,
                seed: 99,
                ..Default::default()
            },
        )
        .unwrap();
        m
    };
    let other = run_protocol(ds, &config, &[MethodVariant::BASELINE], Some(&retrained)).unwrap();
    assert_eq!(with, other);
}

#[test]
fn full_shrinkage_uses_predicted_variance() {
    let f = fixture();
    let ds = &f.world.dataset;
    let e = one_class(vec![2], 1).sample(ds, 2, 0).unwrap();
    let predicted = f.model.predict(&e.class_text[0]).unwrap();
    let models = build_models(ds, &e, MethodVariant::COV, AdaptConfig::new(0.0, 1.0).unwrap(), Some(&f.model)).unwrap();
    assert_eq!(models[0].stats.var_diag, predicted.var_diag);
    let base = build_models(ds, &e, MethodVariant::BASELINE, AdaptConfig::BASELINE, None).unwrap();
    assert_eq!(models[0].stats.mean, base[0].stats.mean);
}

#[test]
fn rows_deltas_and_single_episode_flag() {
    let f = fixture();
    let ds = &f.world.dataset;
    let report = run_protocol(ds, &one_class(vec![0, 1], 1), &MethodVariant::ALL, Some(&f.model)).unwrap();
    assert_eq!(report.rows.len(), 8);
    let zero_base = report.row(MethodVariant::BASELINE, 0).unwrap();
    assert_eq!(zero_base.error.as_deref(), Some("zero-shot requires text mean"));
    assert!(report.row(MethodVariant::COV, 0).unwrap().error.is_some());
    assert!(report.row(MethodVariant::MEAN, 0).unwrap().is_ok());
    assert!(report.row(MethodVariant::MEAN_COV, 0).unwrap().is_ok());
    let single = report.row(MethodVariant::BASELINE, 1).unwrap();
    assert_eq!((single.n_episodes, single.ci, single.ci_defined), (1, 0.0, false));
    // Deltas only exist where a baseline row succeeded.
    assert!(report.deltas.iter().all(|d| d.k == 1));
    assert_eq!(report.deltas.len(), 3);

    let infeasible = run_protocol(ds, &one_class(vec![1, 1000], 5), &MethodVariant::ALL, Some(&f.model)).unwrap();
    assert!(infeasible.rows.iter().filter(|r| r.k == 1000).all(|r| r.error.is_some()));
    assert!(infeasible.rows.iter().filter(|r| r.k == 1).all(|r| r.is_ok()));
}

#[test]
fn text_helps_at_one_shot_and_baseline_grows_with_shots() {
    let f = fixture();
    let ds = &f.world.dataset;
    let report = run_protocol(
        ds,
        &one_class(vec![1, 4, 16], 400),
        &[MethodVariant::BASELINE, MethodVariant::MEAN_COV],
        Some(&f.model),
    )
    .unwrap();
    let d = report.delta(MethodVariant::MEAN_COV, 1).unwrap();
    assert!(d.significant_gain(), "{d:?}");
    let b: Vec<_> = [1, 4, 16].iter().map(|&k| report.row(MethodVariant::BASELINE, k).unwrap()).collect();
    for w in b.windows(2) {
        assert!(w[1].metric + w[1].ci + w[0].ci >= w[0].metric, "{} then {}", w[0].metric, w[1].metric);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let f = fixture();
    let ds = &f.world.dataset;
    let mut config = ProtocolConfig {
        n_episodes: 40,
        ..ProtocolConfig::multi_class(vec![2, 5])
    };
    config.kind = textmoments::tasks::ProtocolKind::MultiClass {
        n_way: 5,
        q_per_class: 5,
    };
    assert!(matches!(config.hyper, HyperMode::Validate(_)));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_protocol(ds, &config, &MethodVariant::ALL, Some(&f.model)).unwrap())
    };
    assert_eq!(run(1), run(4));
}
