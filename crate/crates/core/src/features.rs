//! Dense feature containers.
//!
//! Everything is stored as row-major `f64`. Constructors reject empty shapes
//! and non-finite values, so downstream code can assume both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of `dim`-dimensional feature vectors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyClass);
        }
        if dim == 0 {
            return Err(Error::InvalidFeature("feature dimension is zero".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: rows * dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyClass)?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Gathers the given row indices into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidArgument(format!(
                    "row index {i} out of bounds for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dim, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// A class-level text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding(Vec<f64>);

impl TextEmbedding {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidFeature("empty text embedding".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature(
                "non-finite value in text embedding".into(),
            ));
        }
        Ok(Self(data))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for TextEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(
            FeatureMatrix::new(0, 2, vec![]),
            Err(Error::EmptyClass)
        ));
        assert!(matches!(
            FeatureMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::InvalidFeature(_))
        ));
        assert!(FeatureMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(TextEmbedding::new(vec![f64::INFINITY]).is_err());
        assert!(TextEmbedding::new(vec![]).is_err());
    }

    #[test]
    fn rows_are_row_major() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.iter_rows().count(), 2);
        let s = m.select_rows(&[1, 1, 0]).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        assert!(m.select_rows(&[2]).is_err());
    }
}
