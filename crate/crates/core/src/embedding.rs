//! Token-embedding containers.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Longest sentence, in tokens, a set accepts without truncation.
pub const DEFAULT_MAX_SEQ_LEN: usize = 100;

/// Token vectors of one sentence, one row per token, stored as raw `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    id: String,
    dim: usize,
    values: Vec<f32>,
}

impl SentenceEmbedding {
    /// `values` is the row-major `token_count × dim` matrix.
    pub fn new(id: impl Into<String>, dim: usize, values: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if dim == 0 {
            return Err(Error::InvalidEmbedding(format!(
                "{id:?}: dim must be positive"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidEmbedding(format!("{id:?}: no tokens")));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidEmbedding(format!(
                "{id:?}: {} values is not a multiple of dim {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "sentence embedding",
            });
        }
        Ok(Self { id, dim, values })
    }

    pub fn from_rows<R: AsRef<[f32]>>(id: impl Into<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(id, dim, values)
    }

    #[inline]
    pub fn id(&self) -> &str {
        &self.id
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn token_count(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn token(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    /// Token matrix widened to `f64`.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.values.iter().map(|&v| v as f64).collect();
        Matrix::from_vec(self.token_count(), self.dim, data).expect("shape is an invariant")
    }

    /// Drops tokens past `max_tokens`; returns whether anything was removed.
    pub fn truncate(&mut self, max_tokens: usize) -> bool {
        let max_tokens = max_tokens.max(1);
        if self.token_count() <= max_tokens {
            return false;
        }
        self.values.truncate(max_tokens * self.dim);
        true
    }
}

/// Sentences of one language sharing an embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSet {
    dim: usize,
    language: String,
    provenance: String,
    entries: Vec<SentenceEmbedding>,
    index: BTreeMap<String, usize>,
}

impl TokenEmbeddingSet {
    pub fn new(
        dim: usize,
        language: impl Into<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dim must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            language: language.into(),
            provenance: provenance.into(),
            entries: Vec::new(),
            index: BTreeMap::new(),
        })
    }

    pub fn push(&mut self, entry: SentenceEmbedding) -> Result<()> {
        if entry.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: entry.dim(),
            });
        }
        if self.index.contains_key(entry.id()) {
            return Err(Error::DuplicateId(entry.id().into()));
        }
        self.index.insert(entry.id().into(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn with_entries(
        dim: usize,
        language: impl Into<String>,
        provenance: impl Into<String>,
        entries: impl IntoIterator<Item = SentenceEmbedding>,
    ) -> Result<Self> {
        let mut set = Self::new(dim, language, provenance)?;
        for e in entries {
            set.push(e)?;
        }
        Ok(set)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    #[inline]
    pub fn entries(&self) -> &[SentenceEmbedding] {
        &self.entries
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&SentenceEmbedding> {
        self.index_of(id).map(|i| &self.entries[i])
    }

    /// Checks the per-sentence token limit.
    pub fn validate(&self, max_seq_len: usize) -> Result<()> {
        for e in &self.entries {
            if e.token_count() > max_seq_len {
                return Err(Error::InvalidEmbedding(format!(
                    "{:?} has {} tokens, limit is {max_seq_len}",
                    e.id(),
                    e.token_count()
                )));
            }
        }
        Ok(())
    }

    /// Truncates every sentence longer than `max_seq_len`; returns the ids touched.
    pub fn truncate_to(&mut self, max_seq_len: usize) -> Vec<String> {
        self.entries
            .iter_mut()
            .filter_map(|e| e.truncate(max_seq_len).then(|| e.id().into()))
            .collect()
    }

    /// Total token count across all sentences.
    pub fn total_tokens(&self) -> usize {
        self.entries
            .iter()
            .map(SentenceEmbedding::token_count)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(SentenceEmbedding::new("a", 2, alloc::vec![1.0, 2.0, 3.0]).is_err());
        assert!(SentenceEmbedding::new("a", 2, alloc::vec![]).is_err());
        assert!(matches!(
            SentenceEmbedding::new("a", 1, alloc::vec![f32::NAN]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn duplicate_ids_and_dim_mismatch_rejected() {
        let mut set = TokenEmbeddingSet::new(2, "en", "test").unwrap();
        set.push(SentenceEmbedding::from_rows("x", &[[1.0, 0.0]]).unwrap())
            .unwrap();
        assert_eq!(
            set.push(SentenceEmbedding::from_rows("x", &[[0.0, 1.0]]).unwrap()),
            Err(Error::DuplicateId("x".into()))
        );
        assert!(matches!(
            set.push(SentenceEmbedding::from_rows("y", &[[0.0, 1.0, 2.0]]).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(set.index_of("x"), Some(0));
    }

    #[test]
    fn truncation_reports_ids() {
        let rows: Vec<[f32; 1]> = (0..5).map(|i| [i as f32]).collect();
        let mut set = TokenEmbeddingSet::new(1, "en", "test").unwrap();
        set.push(SentenceEmbedding::from_rows("long", &rows).unwrap())
            .unwrap();
        set.push(SentenceEmbedding::from_rows("short", &rows[..2]).unwrap())
            .unwrap();
        assert!(set.validate(3).is_err());
        assert_eq!(set.truncate_to(3), alloc::vec![String::from("long")]);
        assert_eq!(set.entries()[0].token_count(), 3);
        set.validate(3).unwrap();
    }
}
