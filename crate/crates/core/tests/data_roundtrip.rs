use proptest::prelude::*;
use textmoments::io::{decode_dataset, encode_dataset, read_dataset_with_manifest, write_dataset, Manifest};
use textmoments::standardize::{zscore_apply, zscore_fit, zscore_invert};
use textmoments::{ClassEntry, FeatureMatrix, FewShotDataset, Split, TextEmbedding};

fn matrix(rows: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = FeatureMatrix> {
    rows.prop_flat_map(move |r| {
        prop::collection::vec(-1e3f64..1e3, r * dim).prop_map(move |v| FeatureMatrix::new(r, dim, v).unwrap())
    })
}

fn dataset() -> impl Strategy<Value = FewShotDataset> {
    (1usize..4, 1usize..4).prop_flat_map(|(feat, text)| {
        prop::collection::vec(
            (
                matrix(1..5, feat),
                prop::collection::vec(-10.0f64..10.0, text),
                prop_oneof![Just(Split::Base), Just(Split::Val), Just(Split::Test)],
            ),
            1..6,
        )
        .prop_map(|classes| {
            let entries = classes
                .into_iter()
                .enumerate()
                .map(|(i, (features, text, split))| ClassEntry {
                    label: format!("class {i}"),
                    features,
                    text: TextEmbedding::new(text).unwrap(),
                    split,
                })
                .collect();
            FewShotDataset::new(entries).unwrap()
        })
    })
}

fn close_f32(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(1.0)
}

proptest! {
    #[test]
    fn zscore_round_trips(m in matrix(2..20, 4)) {
        let params = zscore_fit(&m).unwrap();
        let back = zscore_invert(&params, &zscore_apply(&params, &m).unwrap()).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn fsts_round_trips_within_f32(ds in dataset()) {
        let decoded = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        prop_assert_eq!(decoded.len(), ds.len());
        for (raw, class) in decoded.iter().zip(ds.classes()) {
            prop_assert_eq!(&raw.label, &class.label);
            prop_assert_eq!(raw.features.rows(), class.features.rows());
            for (a, b) in raw.features.as_slice().iter().zip(class.features.as_slice()) {
                prop_assert!(close_f32(*a, *b));
            }
            for (a, b) in raw.text.as_slice().iter().zip(class.text.as_slice()) {
                prop_assert!(close_f32(*a, *b));
            }
        }
    }
}

#[test]
fn files_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.fsts");
    let ds = FewShotDataset::new(vec![
        ClassEntry {
            label: "a".into(),
            features: FeatureMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.5]]).unwrap(),
            text: TextEmbedding::new(vec![0.5]).unwrap(),
            split: Split::Base,
        },
        ClassEntry {
            label: "b".into(),
            features: FeatureMatrix::from_rows(&[[0.0, -1.0]]).unwrap(),
            text: TextEmbedding::new(vec![-0.5]).unwrap(),
            split: Split::Test,
        },
    ])
    .unwrap();
    write_dataset(&ds, &path).unwrap();
    assert!(dir.path().join("toy.manifest.json").exists());
    let (back, manifest) = read_dataset_with_manifest(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(manifest, Manifest::for_dataset(&ds));

    std::fs::write(dir.path().join("toy.manifest.json"), "{}").unwrap();
    assert!(read_dataset_with_manifest(&path).is_err());
}
