//! Token-level BERT-score between sentences.
//!
//! For token sets `a` and `b` with inner products `g(k, l) = a_k · b_l`:
//!
//! ```text
//! P = mean over l of max over k of g(k, l)
//! R = mean over k of max over l of g(k, l)
//! F = 2PR / (P + R)          (0 when P + R == 0)
//! ```
//!
//! In [`ScoreMode::EvalCosine`] token vectors are unit-normalized first, in
//! [`ScoreMode::TrainDot`] they are used as is.

use alloc::vec::Vec;
use core::borrow::Borrow;

use crate::embedding::SentenceEmbedding;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scorer::ScorerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreMode {
    /// Raw dot products, used while training.
    TrainDot,
    /// Cosine similarities, used at evaluation time.
    EvalCosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BertScoreBreakdown {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// How two sentences are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Pooling {
    /// Cosine of the token-mean vectors.
    AvgPoolCosine,
    /// F of the token-level BERT-score.
    BertScore,
}

/// Harmonic combination of precision and recall.
#[inline]
pub fn harmonic(precision: f64, recall: f64) -> f64 {
    let denom = precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / denom
    }
}

/// Token matrix of `sentence` after the optional projection and, in cosine
/// mode, row normalization.
pub fn prepare_tokens(
    sentence: &SentenceEmbedding,
    mode: ScoreMode,
    params: Option<&ScorerParams>,
) -> Result<Matrix> {
    let mut m = match params {
        Some(p) => p.project(sentence)?,
        None => sentence.to_matrix(),
    };
    if mode == ScoreMode::EvalCosine {
        for i in 0..m.rows() {
            linalg::normalize_in_place(m.row_mut(i));
        }
    }
    Ok(m)
}

/// Number of tokens whose vector has zero length; these score as zero
/// vectors in cosine mode.
pub fn zero_norm_tokens(sentence: &SentenceEmbedding) -> usize {
    sentence
        .tokens()
        .filter(|t| t.iter().all(|&v| v == 0.0))
        .count()
}

/// BERT-score of a single pair, computed with explicit loops over token pairs.
pub fn bert_score(
    a: &SentenceEmbedding,
    b: &SentenceEmbedding,
    mode: ScoreMode,
) -> Result<BertScoreBreakdown> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let a = prepare_tokens(a, mode, None)?;
    let b = prepare_tokens(b, mode, None)?;
    Ok(bert_score_prepared(&a, &b))
}

/// BERT-score over already prepared token matrices (rows are tokens).
pub fn bert_score_prepared(a: &Matrix, b: &Matrix) -> BertScoreBreakdown {
    let mut col_max = alloc::vec![f64::NEG_INFINITY; b.rows()];
    let mut recall = 0.0;
    for k in 0..a.rows() {
        let mut row_max = f64::NEG_INFINITY;
        for (l, cm) in col_max.iter_mut().enumerate() {
            let g = linalg::dot(a.row(k), b.row(l));
            row_max = row_max.max(g);
            *cm = cm.max(g);
        }
        recall += row_max;
    }
    let recall = recall / a.rows() as f64;
    let precision = col_max.iter().sum::<f64>() / b.rows() as f64;
    BertScoreBreakdown {
        precision,
        recall,
        f: harmonic(precision, recall),
    }
}

/// Token matrices of many sentences stacked into one matrix.
#[derive(Debug, Clone)]
pub struct StackedTokens {
    pub tokens: Matrix,
    /// `offsets[i]..offsets[i + 1]` are the rows of sentence `i`.
    pub offsets: Vec<usize>,
}

impl StackedTokens {
    pub fn build<S: Borrow<SentenceEmbedding>>(
        sentences: &[S],
        mode: ScoreMode,
        params: Option<&ScorerParams>,
    ) -> Result<Self> {
        let dim = match (params, sentences.first()) {
            (Some(p), _) => p.out_dim(),
            (None, Some(s)) => s.borrow().dim(),
            (None, None) => 0,
        };
        let mut data = Vec::new();
        let mut offsets = Vec::with_capacity(sentences.len() + 1);
        offsets.push(0);
        let mut rows = 0;
        for s in sentences {
            let s = s.borrow();
            if params.is_none() && s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
            let m = prepare_tokens(s, mode, params)?;
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
            offsets.push(rows);
        }
        Ok(Self {
            tokens: Matrix::from_vec(rows, dim, data)?,
            offsets,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn span(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    fn rows_of(&self, sentences: core::ops::Range<usize>) -> Matrix {
        let start = self.offsets[sentences.start];
        let end = self.offsets[sentences.end];
        let d = self.dim();
        Matrix::from_vec(
            end - start,
            d,
            self.tokens.as_slice()[start * d..end * d].to_vec(),
        )
        .expect("contiguous rows")
    }
}

/// Upper bound on token-product entries materialized per source band.
const BAND_BUDGET: usize = 1 << 22;

/// `M × N` matrix of BERT-score F values, computed with one token-level
/// matrix product per band of source sentences followed by max/mean
/// reductions over each sentence-pair block.
pub fn score_tile<S, T>(
    src: &[S],
    tgt: &[T],
    mode: ScoreMode,
    params: Option<&ScorerParams>,
) -> Result<Matrix>
where
    S: Borrow<SentenceEmbedding> + Sync,
    T: Borrow<SentenceEmbedding> + Sync,
{
    let a = StackedTokens::build(src, mode, params)?;
    let b = StackedTokens::build(tgt, mode, params)?;
    score_stacked(&a, &b)
}

/// [`score_tile`] over pre-stacked token matrices.
pub fn score_stacked(a: &StackedTokens, b: &StackedTokens) -> Result<Matrix> {
    if !a.is_empty() && !b.is_empty() && a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (m, n) = (a.len(), b.len());
    let bands = plan_bands(a, b.tokens.rows().max(1));
    let rows = map_bands(&bands, |band| score_band(a, b, band.clone()));
    let mut out = Matrix::zeros(m, n);
    for (band, values) in bands.iter().zip(rows) {
        let values = values?;
        out.as_mut_slice()[band.start * n..band.end * n].copy_from_slice(&values);
    }
    Ok(out)
}

fn plan_bands(a: &StackedTokens, tgt_rows: usize) -> Vec<core::ops::Range<usize>> {
    let mut bands = Vec::new();
    let mut start = 0;
    while start < a.len() {
        let mut end = start + 1;
        while end < a.len() && (a.offsets[end + 1] - a.offsets[start]) * tgt_rows <= BAND_BUDGET {
            end += 1;
        }
        bands.push(start..end);
        start = end;
    }
    bands
}

#[cfg(feature = "parallel")]
fn map_bands<R: Send>(
    bands: &[core::ops::Range<usize>],
    f: impl Fn(&core::ops::Range<usize>) -> R + Sync + Send,
) -> Vec<R> {
    use rayon::prelude::*;
    bands.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_bands<R>(
    bands: &[core::ops::Range<usize>],
    f: impl Fn(&core::ops::Range<usize>) -> R,
) -> Vec<R> {
    bands.iter().map(f).collect()
}

fn score_band(
    a: &StackedTokens,
    b: &StackedTokens,
    band: core::ops::Range<usize>,
) -> Result<Vec<f64>> {
    let n = b.len();
    let band_tokens = a.rows_of(band.clone());
    let g = band_tokens.mul_transposed(&b.tokens)?;
    let base = a.offsets[band.start];
    let mut out = Vec::with_capacity(band.len() * n);
    let mut col_max = Vec::new();
    for i in band {
        let rows = a.span(i);
        for j in 0..n {
            let cols = b.span(j);
            col_max.clear();
            col_max.resize(cols.len(), f64::NEG_INFINITY);
            let mut recall = 0.0;
            for r in rows.clone() {
                let row = &g.row(r - base)[cols.clone()];
                let mut row_max = f64::NEG_INFINITY;
                for (cm, &v) in col_max.iter_mut().zip(row) {
                    row_max = row_max.max(v);
                    *cm = cm.max(v);
                }
                recall += row_max;
            }
            let recall = recall / rows.len() as f64;
            let precision = col_max.iter().sum::<f64>() / cols.len() as f64;
            out.push(harmonic(precision, recall));
        }
    }
    Ok(out)
}

/// Mean of the token vectors.
pub fn mean_pool(sentence: &SentenceEmbedding, params: Option<&ScorerParams>) -> Result<Vec<f64>> {
    let m = prepare_tokens(sentence, ScoreMode::TrainDot, params)?;
    let mut pooled = alloc::vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (p, v) in pooled.iter_mut().zip(m.row(i)) {
            *p += v;
        }
    }
    for p in pooled.iter_mut() {
        *p /= m.rows() as f64;
    }
    Ok(pooled)
}

/// Cosine of the mean-pooled token vectors; a zero pooled vector scores 0.
pub fn avg_pool_similarity(a: &SentenceEmbedding, b: &SentenceEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let mut pa = mean_pool(a, None)?;
    let mut pb = mean_pool(b, None)?;
    linalg::normalize_in_place(&mut pa);
    linalg::normalize_in_place(&mut pb);
    Ok(linalg::dot(&pa, &pb))
}

/// Pairwise similarity matrix under the chosen pooling.
pub fn pooled_tile<S, T>(
    pooling: Pooling,
    src: &[S],
    tgt: &[T],
    mode: ScoreMode,
    params: Option<&ScorerParams>,
) -> Result<Matrix>
where
    S: Borrow<SentenceEmbedding> + Sync,
    T: Borrow<SentenceEmbedding> + Sync,
{
    match pooling {
        Pooling::BertScore => score_tile(src, tgt, mode, params),
        Pooling::AvgPoolCosine => {
            let pool = |xs: &mut dyn Iterator<Item = &SentenceEmbedding>| -> Result<Matrix> {
                let mut rows = Vec::new();
                for s in xs {
                    let mut v = mean_pool(s, params)?;
                    linalg::normalize_in_place(&mut v);
                    rows.push(v);
                }
                Matrix::from_rows(&rows)
            };
            let a = pool(&mut src.iter().map(Borrow::borrow))?;
            let b = pool(&mut tgt.iter().map(Borrow::borrow))?;
            if a.rows() == 0 || b.rows() == 0 {
                return Ok(Matrix::zeros(a.rows(), b.rows()));
            }
            a.mul_transposed(&b)
        }
    }
}
