//! Labelled per-class feature sets with one text embedding each.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureMatrix, TextEmbedding};
use crate::stats::{empirical_class_stats, ClassStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Base => "base",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" | "train" => Ok(Split::Base),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Settings(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub label: String,
    pub features: FeatureMatrix,
    pub text: TextEmbedding,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotDataset {
    classes: Vec<ClassEntry>,
    feat_dim: usize,
    text_dim: usize,
}

impl FewShotDataset {
    /// Validates shapes and label uniqueness.
    pub fn new(classes: Vec<ClassEntry>) -> Result<Self> {
        let first = classes
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no classes".into()))?;
        let (feat_dim, text_dim) = (first.features.dim(), first.text.dim());
        let mut seen = HashSet::new();
        for c in &classes {
            check_dim(feat_dim, c.features.dim())?;
            check_dim(text_dim, c.text.dim())?;
            if !seen.insert(c.label.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate class label {:?}", c.label)));
            }
        }
        Ok(Self {
            classes,
            feat_dim,
            text_dim,
        })
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn class(&self, index: usize) -> &ClassEntry {
        &self.classes[index]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    /// Indices of the classes tagged with `split`, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// `(text, empirical stats)` for every class in `split`.
    pub fn class_targets(&self, split: Split) -> Result<Vec<(TextEmbedding, ClassStats)>> {
        self.classes
            .iter()
            .filter(|c| c.split == split)
            .map(|c| Ok((c.text.clone(), empirical_class_stats(&c.features)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(label: &str, split: Split, dim: usize) -> ClassEntry {
        ClassEntry {
            label: label.into(),
            features: FeatureMatrix::new(2, dim, vec![0.5; 2 * dim]).unwrap(),
            text: TextEmbedding::new(vec![1.0; 3]).unwrap(),
            split,
        }
    }

    #[test]
    fn split_partition() {
        let ds = FewShotDataset::new(vec![
            entry("a", Split::Base, 2),
            entry("b", Split::Test, 2),
            entry("c", Split::Base, 2),
        ])
        .unwrap();
        assert_eq!(ds.split_indices(Split::Base), vec![0, 2]);
        assert_eq!(ds.split_indices(Split::Test), vec![1]);
        assert!(ds.split_indices(Split::Val).is_empty());
        assert_eq!(ds.class_targets(Split::Base).unwrap().len(), 2);
    }

    #[test]
    fn rejects_inconsistent_classes() {
        assert!(FewShotDataset::new(vec![]).is_err());
        assert!(FewShotDataset::new(vec![entry("a", Split::Base, 2), entry("a", Split::Val, 2)]).is_err());
        assert!(FewShotDataset::new(vec![entry("a", Split::Base, 2), entry("b", Split::Val, 3)]).is_err());
    }

    #[test]
    fn split_names() {
        for s in [Split::Base, Split::Val, Split::Test] {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }
}
