//! Ranking evaluation: every source sentence picks the argmax target from the
//! candidate pool and accuracy is the fraction that pick their gold target.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::{SentenceEmbedding, TokenEmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::normalize::{
    normalize_matrix, NormScope, NormalizationConfig, Normalizer, PoolStatistics,
};
use crate::scorer::ScorerParams;
use crate::similarity::{pooled_tile, Pooling, ScoreMode};

/// A source pool, a target pool of equal size and a bijective gold map.
#[derive(Debug, Clone)]
pub struct RetrievalTask {
    src: TokenEmbeddingSet,
    tgt: TokenEmbeddingSet,
    /// `gold_target[i]` is the target index aligned with source `i`.
    gold_target: Vec<usize>,
    pair_label: String,
}

impl RetrievalTask {
    pub fn new(
        src: TokenEmbeddingSet,
        tgt: TokenEmbeddingSet,
        gold: &[(String, String)],
        pair_label: impl Into<String>,
    ) -> Result<Self> {
        if src.len() != tgt.len() {
            return Err(Error::PoolSizeMismatch {
                src: src.len(),
                tgt: tgt.len(),
            });
        }
        if src.is_empty() {
            return Err(Error::EmptyInput("retrieval pool"));
        }
        if src.dim() != tgt.dim() {
            return Err(Error::DimensionMismatch {
                expected: src.dim(),
                found: tgt.dim(),
            });
        }
        if gold.len() != src.len() {
            return Err(Error::NonBijectiveGold(format!(
                "{} gold pairs for a pool of {}",
                gold.len(),
                src.len()
            )));
        }
        let mut gold_target = alloc::vec![usize::MAX; src.len()];
        let mut seen_tgt = BTreeSet::new();
        for (s, t) in gold {
            let si = src
                .index_of(s)
                .ok_or_else(|| Error::NonBijectiveGold(format!("unknown source id {s:?}")))?;
            let ti = tgt
                .index_of(t)
                .ok_or_else(|| Error::NonBijectiveGold(format!("unknown target id {t:?}")))?;
            if gold_target[si] != usize::MAX {
                return Err(Error::NonBijectiveGold(format!(
                    "source {s:?} aligned twice"
                )));
            }
            if !seen_tgt.insert(ti) {
                return Err(Error::NonBijectiveGold(format!(
                    "target {t:?} aligned twice"
                )));
            }
            gold_target[si] = ti;
        }
        Ok(Self {
            src,
            tgt,
            gold_target,
            pair_label: pair_label.into(),
        })
    }

    pub fn src(&self) -> &TokenEmbeddingSet {
        &self.src
    }

    pub fn tgt(&self) -> &TokenEmbeddingSet {
        &self.tgt
    }

    pub fn gold_target(&self) -> &[usize] {
        &self.gold_target
    }

    pub fn pair_label(&self) -> &str {
        &self.pair_label
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RetrievalSettings {
    pub pooling: Pooling,
    pub mode: ScoreMode,
    pub norm: NormalizationConfig,
    /// Average source→target and target→source accuracy.
    pub bidirectional: bool,
    /// Score this many source rows at a time (pool scope only); `None`
    /// materializes the whole matrix.
    pub band_rows: Option<usize>,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            pooling: Pooling::BertScore,
            mode: ScoreMode::EvalCosine,
            norm: NormalizationConfig::default(),
            bidirectional: false,
            band_rows: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RetrievalOutcome {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Rows whose best score was shared by more than one candidate.
    pub ties: usize,
}

/// Argmax accuracy of `scores` rows against `gold`, ties to the lowest index.
pub fn argmax_accuracy(scores: &Matrix, gold: &[usize]) -> RetrievalOutcome {
    let mut correct = 0;
    let mut ties = 0;
    for (i, &g) in gold.iter().enumerate() {
        let (best, tied) = row_argmax(scores.row(i));
        correct += usize::from(best == g);
        ties += usize::from(tied);
    }
    RetrievalOutcome {
        accuracy: correct as f64 / gold.len() as f64,
        correct,
        total: gold.len(),
        ties,
    }
}

fn row_argmax(row: &[f64]) -> (usize, bool) {
    let best = linalg::argmax(row).expect("non-empty pool");
    let tied = row.iter().filter(|&&v| v == row[best]).count() > 1;
    (best, tied)
}

/// Source→target accuracy of BERT-score retrieval.
pub fn evaluate_retrieval(
    task: &RetrievalTask,
    mode: ScoreMode,
    norm: &NormalizationConfig,
    params: Option<&ScorerParams>,
) -> Result<RetrievalOutcome> {
    evaluate_retrieval_with(
        task,
        &RetrievalSettings {
            mode,
            norm: *norm,
            ..Default::default()
        },
        params,
    )
}

pub fn evaluate_retrieval_with(
    task: &RetrievalTask,
    settings: &RetrievalSettings,
    params: Option<&ScorerParams>,
) -> Result<RetrievalOutcome> {
    settings.norm.validate()?;
    let banded = settings
        .band_rows
        .filter(|_| settings.norm.scope == NormScope::Pool);
    if let (Some(band), false) = (banded, settings.bidirectional) {
        return evaluate_banded(task, settings, params, band.max(1));
    }
    let src = task.src.entries();
    let tgt = task.tgt.entries();
    let raw = pooled_tile(settings.pooling, src, tgt, settings.mode, params)?;
    let scores = normalize_matrix(&raw, &settings.norm)?;
    let forward = argmax_accuracy(&scores, &task.gold_target);
    if !settings.bidirectional {
        return Ok(forward);
    }
    let mut inverse = alloc::vec![0usize; task.gold_target.len()];
    for (s, &t) in task.gold_target.iter().enumerate() {
        inverse[t] = s;
    }
    let backward = argmax_accuracy(&scores.transpose(), &inverse);
    Ok(RetrievalOutcome {
        accuracy: (forward.accuracy + backward.accuracy) / 2.0,
        correct: forward.correct + backward.correct,
        total: forward.total + backward.total,
        ties: forward.ties + backward.ties,
    })
}

/// Two passes over source bands: accumulate pool statistics, then rescore and
/// rank. Memory stays at `band × |targets|` scores.
fn evaluate_banded(
    task: &RetrievalTask,
    settings: &RetrievalSettings,
    params: Option<&ScorerParams>,
    band: usize,
) -> Result<RetrievalOutcome> {
    let src = task.src.entries();
    let tgt = task.tgt.entries();
    let score_band = |rows: &[SentenceEmbedding]| {
        pooled_tile(settings.pooling, rows, tgt, settings.mode, params)
    };
    let mut stats = PoolStatistics::new(src.len(), tgt.len());
    for (b, rows) in src.chunks(band).enumerate() {
        stats.accumulate(b * band, &score_band(rows)?)?;
    }
    let normalizer = Normalizer::from_statistics(&stats, &settings.norm);
    let (mut correct, mut ties) = (0, 0);
    for (b, rows) in src.chunks(band).enumerate() {
        let scores = normalizer.apply_band(b * band, &score_band(rows)?);
        for i in 0..scores.rows() {
            let (best, tied) = row_argmax(scores.row(i));
            correct += usize::from(best == task.gold_target[b * band + i]);
            ties += usize::from(tied);
        }
    }
    Ok(RetrievalOutcome {
        accuracy: correct as f64 / src.len() as f64,
        correct,
        total: src.len(),
        ties,
    })
}

/// How a report's numbers were produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSettings {
    pub pooling: Pooling,
    pub mode: ScoreMode,
    pub norm: NormalizationConfig,
    pub bidirectional: bool,
    pub scorer: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub per_pair: BTreeMap<String, f64>,
    /// Mean accuracy over every pair whose label involves the language.
    pub per_language: BTreeMap<String, f64>,
    pub overall: f64,
    pub settings: Option<EvalSettings>,
}

/// Splits an `xx-yy` label into its two language codes.
pub fn split_pair_label(label: &str) -> Result<(&str, &str)> {
    match label.split_once('-') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains('-') => Ok((a, b)),
        _ => Err(Error::InvalidConfig(format!(
            "pair label {label:?} is not of the form xx-yy"
        ))),
    }
}

/// Per-language and overall means over per-pair accuracies.
pub fn aggregate(per_pair: &[(String, f64)], settings: Option<EvalSettings>) -> Result<EvalReport> {
    if per_pair.is_empty() {
        return Err(Error::EmptyInput("per-pair accuracies"));
    }
    let mut pairs = BTreeMap::new();
    for (label, acc) in per_pair {
        split_pair_label(label)?;
        if pairs.insert(label.clone(), *acc).is_some() {
            return Err(Error::InvalidConfig(format!(
                "pair {label:?} reported twice"
            )));
        }
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (label, &acc) in &pairs {
        let (x, y) = split_pair_label(label)?;
        let mut add = |lang: &str| {
            let e = sums.entry(lang.into()).or_insert((0.0, 0));
            e.0 += acc;
            e.1 += 1;
        };
        add(x);
        if y != x {
            add(y);
        }
    }
    let per_language = sums
        .into_iter()
        .map(|(lang, (sum, n))| (lang, sum / n as f64))
        .collect();
    let overall = pairs.values().sum::<f64>() / pairs.len() as f64;
    Ok(EvalReport {
        per_pair: pairs,
        per_language,
        overall,
        settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_accuracy_on_fixture() {
        let s = Matrix::from_rows(&[[0.9, 0.1, 0.2], [0.3, 0.8, 0.1], [0.2, 0.2, 0.7]]).unwrap();
        assert_eq!(argmax_accuracy(&s, &[0, 1, 2]).accuracy, 1.0);
        let swapped = argmax_accuracy(&s, &[0, 2, 1]);
        assert_eq!(swapped.correct, 1);
        assert!((swapped.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_are_counted_and_break_low() {
        let s = Matrix::from_rows(&[[0.5, 0.5], [0.1, 0.9]]).unwrap();
        let out = argmax_accuracy(&s, &[1, 1]);
        assert_eq!(out.correct, 1);
        assert_eq!(out.ties, 1);
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[("de-en".into(), 0.9)], None).unwrap();
        assert_eq!(r.per_language["de"], 0.9);
        assert_eq!(r.per_language["en"], 0.9);
        assert_eq!(r.overall, 0.9);

        let r = aggregate(&[("de-en".into(), 0.8), ("de-fr".into(), 0.6)], None).unwrap();
        assert!((r.per_language["de"] - 0.7).abs() < 1e-12);
        assert_eq!(r.per_language["en"], 0.8);
        assert_eq!(r.per_language["fr"], 0.6);
        assert!((r.overall - 0.7).abs() < 1e-12);
    }

    #[test]
    fn aggregate_errors() {
        assert!(aggregate(&[], None).is_err());
        assert!(aggregate(&[("deen".into(), 0.5)], None).is_err());
        assert!(aggregate(&[("de-en".into(), 0.5), ("de-en".into(), 0.6)], None).is_err());
    }

    fn one_token_set(lang: &str, prefix: &str, n: usize) -> TokenEmbeddingSet {
        let entries = (0..n).map(|i| {
            let mut v = alloc::vec![0.0f32; n];
            v[i] = 1.0;
            SentenceEmbedding::new(format!("{prefix}{i}"), n, v).unwrap()
        });
        TokenEmbeddingSet::with_entries(n, lang, "test", entries).unwrap()
    }

    #[test]
    fn task_rejects_non_bijective_gold() {
        let src = one_token_set("de", "s", 2);
        let tgt = one_token_set("en", "t", 2);
        let dup = [("s0".into(), "t0".into()), ("s1".into(), "t0".into())];
        assert!(matches!(
            RetrievalTask::new(src.clone(), tgt.clone(), &dup, "de-en"),
            Err(Error::NonBijectiveGold(_))
        ));
        let short = [("s0".into(), "t0".into())];
        assert!(RetrievalTask::new(src.clone(), tgt.clone(), &short, "de-en").is_err());
        let tgt3 = one_token_set("en", "t", 3);
        assert!(matches!(
            RetrievalTask::new(src, tgt3, &short, "de-en"),
            Err(Error::PoolSizeMismatch { .. })
        ));
    }
}
