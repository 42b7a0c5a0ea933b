//! `FSTS` feature files and their JSON manifests.
//!
//! Binary layout, all integers `u32` and all floats `f32`, little-endian:
//!
//! ```text
//! "FSTS" | version | n_classes | feat_dim | text_dim
//! per class: label_len | label (UTF-8) | rows | text[text_dim] | features[rows * feat_dim]
//! ```
//!
//! Split tags live in a sidecar manifest, `<stem>.manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binfmt::{put_f32s, put_u32, ByteReader};
use crate::dataset::{ClassEntry, FewShotDataset, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, TextEmbedding};

pub const DATASET_MAGIC: &[u8; 4] = b"FSTS";
pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub format: String,
    /// Class label to split tag.
    pub splits: BTreeMap<String, Split>,
    /// Free-form description of where the data came from.
    #[serde(default)]
    pub provenance: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<String>,
}

impl Manifest {
    pub fn for_dataset(ds: &FewShotDataset) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            format: "FSTS".into(),
            splits: ds.classes().iter().map(|c| (c.label.clone(), c.split)).collect(),
            provenance: serde_json::Value::Null,
            prompt_template: None,
            normalization: None,
        }
    }
}

/// `world.fsts` -> `world.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

/// Decoded class record before split tags are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClass {
    pub label: String,
    pub features: FeatureMatrix,
    pub text: TextEmbedding,
}

pub fn encode_dataset(ds: &FewShotDataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    put_u32(&mut out, ds.len())?;
    put_u32(&mut out, ds.feat_dim())?;
    put_u32(&mut out, ds.text_dim())?;
    for class in ds.classes() {
        if class.features.rows() == 0 {
            return Err(Error::EmptyClass);
        }
        put_u32(&mut out, class.label.len())?;
        out.extend_from_slice(class.label.as_bytes());
        put_u32(&mut out, class.features.rows())?;
        put_f32s(&mut out, class.text.as_slice());
        put_f32s(&mut out, class.features.as_slice());
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<RawClass>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::Format("bad magic, expected FSTS".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported FSTS version {version}")));
    }
    let n_classes = r.u32()? as usize;
    let feat_dim = r.u32()? as usize;
    let text_dim = r.u32()? as usize;
    if feat_dim == 0 || text_dim == 0 {
        return Err(Error::Format("zero feature or text dimension".into()));
    }
    let mut classes = Vec::with_capacity(n_classes.min(1 << 16));
    for _ in 0..n_classes {
        let len = r.u32()? as usize;
        let label = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("class label is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        if rows == 0 {
            return Err(Error::Format(format!("class {label:?} has no rows")));
        }
        let text = TextEmbedding::new(r.f32s(text_dim)?)?;
        let size = rows
            .checked_mul(feat_dim)
            .ok_or_else(|| Error::Format("declared size overflows".into()))?;
        let features = FeatureMatrix::new(rows, feat_dim, r.f32s(size)?)?;
        classes.push(RawClass {
            label,
            features,
            text,
        });
    }
    r.expect_end()?;
    Ok(classes)
}

/// Attaches split tags from `manifest`, failing on any unmatched label.
pub fn assemble_dataset(classes: Vec<RawClass>, manifest: &Manifest) -> Result<FewShotDataset> {
    let mut missing: Vec<&str> = classes
        .iter()
        .filter(|c| !manifest.splits.contains_key(&c.label))
        .map(|c| c.label.as_str())
        .collect();
    let extra: Vec<&str> = manifest
        .splits
        .keys()
        .filter(|l| !classes.iter().any(|c| &c.label == *l))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort_unstable();
        return Err(Error::Format(format!(
            "manifest does not match file: labels missing from manifest {missing:?}, labels absent from file {extra:?}"
        )));
    }
    let entries = classes
        .into_iter()
        .map(|c| ClassEntry {
            split: manifest.splits[&c.label],
            label: c.label,
            features: c.features,
            text: c.text,
        })
        .collect();
    FewShotDataset::new(entries)
}

pub fn write_dataset(ds: &FewShotDataset, path: &Path) -> Result<()> {
    write_dataset_with_manifest(ds, path, &Manifest::for_dataset(ds))
}

pub fn write_dataset_with_manifest(ds: &FewShotDataset, path: &Path, manifest: &Manifest) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    // Refuse manifests that would not read back.
    let expected = Manifest::for_dataset(ds);
    if manifest.splits != expected.splits {
        return Err(Error::InvalidArgument("manifest splits disagree with dataset".into()));
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format(e.to_string()))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

pub fn read_dataset(path: &Path) -> Result<FewShotDataset> {
    Ok(read_dataset_with_manifest(path)?.0)
}

pub fn read_dataset_with_manifest(path: &Path) -> Result<(FewShotDataset, Manifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let classes = decode_dataset(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let manifest = read_manifest(path)?;
    let ds = assemble_dataset(classes, &manifest)?;
    Ok((ds, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FewShotDataset {
        let entry = |label: &str, split, rows: usize| ClassEntry {
            label: label.into(),
            features: FeatureMatrix::new(rows, 2, (0..rows * 2).map(|v| v as f64 * 0.1).collect()).unwrap(),
            text: TextEmbedding::new(vec![0.25, -1.5, 3.0]).unwrap(),
            split,
        };
        FewShotDataset::new(vec![entry("cat", Split::Base, 3), entry("dög", Split::Test, 1)]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_dataset(&toy()).unwrap();
        assert_eq!(&bytes[0..4], b"FSTS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        // 20 header + (4+3+4+12+24) + (4+4+4+12+8)
        assert_eq!(bytes.len(), 20 + 47 + 32);
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_dataset(&toy()).unwrap();
        for cut in [3, 10, 30, bytes.len() - 1] {
            let err = decode_dataset(&bytes[..cut]).unwrap_err();
            assert!(err.to_string().contains("unexpected end of payload"), "{err}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_dataset(&toy()).unwrap();
        bytes[4] = 2;
        assert!(decode_dataset(&bytes).unwrap_err().to_string().contains("version"));
        bytes[0] = b'Z';
        assert!(decode_dataset(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn manifest_mismatch_lists_labels() {
        let classes = decode_dataset(&encode_dataset(&toy()).unwrap()).unwrap();
        let mut manifest = Manifest::for_dataset(&toy());
        manifest.splits.remove("cat");
        manifest.splits.insert("horse".into(), Split::Val);
        let err = assemble_dataset(classes, &manifest).unwrap_err().to_string();
        assert!(err.contains("cat") && err.contains("horse"), "{err}");
    }
}
