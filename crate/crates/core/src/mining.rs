//! Threshold-based bitext mining over normalized scores.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::TokenEmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::normalize::{
    normalize_matrix, NormScope, NormalizationConfig, Normalizer, PoolStatistics,
};
use crate::scorer::ScorerParams;
use crate::similarity::{score_tile, ScoreMode};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Threshold {
    Fixed(f64),
    /// Pick the F1-maximizing threshold on gold-labelled data.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CandidateRule {
    /// Each source proposes its argmax target.
    BestPerSource,
    /// Kept only when source and target are each other's argmax.
    MutualBest,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MiningConfig {
    pub threshold: Threshold,
    pub candidate_rule: CandidateRule,
    pub norm: NormalizationConfig,
    pub mode: ScoreMode,
    /// Source rows scored per band under pool scope; `None` scores everything
    /// at once.
    pub band_rows: Option<usize>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::Sweep,
            candidate_rule: CandidateRule::BestPerSource,
            norm: NormalizationConfig {
                scope: NormScope::Tile,
                ..NormalizationConfig::default()
            },
            mode: ScoreMode::EvalCosine,
            band_rows: None,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if let Threshold::Fixed(t) = self.threshold {
            if !t.is_finite() {
                return Err(Error::InvalidConfig(
                    "fixed threshold must be finite".into(),
                ));
            }
        }
        if self.band_rows == Some(0) {
            return Err(Error::InvalidConfig("band_rows must be positive".into()));
        }
        self.norm.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Candidate {
    pub src_index: usize,
    pub tgt_index: usize,
    pub src_id: String,
    pub tgt_id: String,
    pub score: f64,
}

/// Best candidate per row and per column, ties to the lowest index.
struct Bests {
    row: Vec<(usize, f64)>,
    col: Vec<(usize, f64)>,
}

impl Bests {
    fn new(m: usize, n: usize) -> Self {
        Self {
            row: vec![(0, f64::NEG_INFINITY); m],
            col: vec![(0, f64::NEG_INFINITY); n],
        }
    }

    fn absorb(&mut self, first_row: usize, scores: &Matrix) {
        for i in 0..scores.rows() {
            let r = first_row + i;
            for (j, &v) in scores.row(i).iter().enumerate() {
                if v > self.row[r].1 {
                    self.row[r] = (j, v);
                }
                if v > self.col[j].1 {
                    self.col[j] = (r, v);
                }
            }
        }
    }
}

/// Proposed pairs under the candidate rule, before any threshold, ordered by
/// source index.
pub fn candidates(
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    config: &MiningConfig,
    params: Option<&ScorerParams>,
) -> Result<Vec<Candidate>> {
    config.validate()?;
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::EmptyInput("mining pool"));
    }
    let (s, t) = (src.entries(), tgt.entries());
    let mut bests = Bests::new(s.len(), t.len());
    match config.band_rows {
        Some(band) if config.norm.scope == NormScope::Pool => {
            let mut stats = PoolStatistics::new(s.len(), t.len());
            for (b, rows) in s.chunks(band).enumerate() {
                stats.accumulate(b * band, &score_tile(rows, t, config.mode, params)?)?;
            }
            let normalizer = Normalizer::from_statistics(&stats, &config.norm);
            for (b, rows) in s.chunks(band).enumerate() {
                let raw = score_tile(rows, t, config.mode, params)?;
                bests.absorb(b * band, &normalizer.apply_band(b * band, &raw));
            }
        }
        _ => {
            let raw = score_tile(s, t, config.mode, params)?;
            bests.absorb(0, &normalize_matrix(&raw, &config.norm)?);
        }
    }
    let out = bests
        .row
        .iter()
        .enumerate()
        .filter(|&(i, &(j, _))| match config.candidate_rule {
            CandidateRule::BestPerSource => true,
            CandidateRule::MutualBest => bests.col[j].0 == i,
        })
        .map(|(i, &(j, score))| Candidate {
            src_index: i,
            tgt_index: j,
            src_id: s[i].id().into(),
            tgt_id: t[j].id().into(),
            score,
        })
        .collect();
    Ok(out)
}

/// Candidates at or above `threshold`.
pub fn apply_threshold(candidates: &[Candidate], threshold: f64) -> Vec<Candidate> {
    candidates
        .iter()
        .filter(|c| c.score >= threshold)
        .cloned()
        .collect()
}

/// Mines with a fixed threshold.
pub fn mine(
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    config: &MiningConfig,
    params: Option<&ScorerParams>,
) -> Result<Vec<Candidate>> {
    let Threshold::Fixed(threshold) = config.threshold else {
        return Err(Error::InvalidConfig(
            "threshold sweep needs gold pairs; use mine_with_sweep".into(),
        ));
    };
    Ok(apply_threshold(
        &candidates(src, tgt, config, params)?,
        threshold,
    ))
}

/// Mines with the threshold chosen by [`sweep_threshold`] on `gold`.
pub fn mine_with_sweep(
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    config: &MiningConfig,
    params: Option<&ScorerParams>,
    gold: &[(String, String)],
) -> Result<(Vec<Candidate>, SweepResult)> {
    let cands = candidates(src, tgt, config, params)?;
    let gold_set: BTreeSet<(&str, &str)> =
        gold.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
    let labelled: Vec<(f64, bool)> = cands
        .iter()
        .map(|c| {
            (
                c.score,
                gold_set.contains(&(c.src_id.as_str(), c.tgt_id.as_str())),
            )
        })
        .collect();
    let sweep = sweep_threshold(&labelled, gold_set.len())?;
    Ok((apply_threshold(&cands, sweep.threshold), sweep))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepResult {
    /// `+inf` accepts nothing.
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// F1-maximizing threshold over `(score, is_gold)` candidates, given the total
/// number of gold pairs (gold pairs never proposed count as misses). Every
/// distinct score is tried, plus `+inf` (accept nothing); ties go to the
/// lower threshold.
pub fn sweep_threshold(candidates: &[(f64, bool)], gold_total: usize) -> Result<SweepResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("sweep candidates"));
    }
    if candidates.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFinite {
            context: "candidate scores",
        });
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].0.total_cmp(&candidates[a].0));

    let evaluate = |threshold: f64, tp: usize, predicted: usize| {
        let s = scores_from_counts(tp, predicted, gold_total);
        SweepResult {
            threshold,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        }
    };
    let mut best = evaluate(f64::INFINITY, 0, 0);
    let (mut tp, mut predicted) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let score = candidates[order[k]].0;
        while k < order.len() && candidates[order[k]].0 == score {
            tp += usize::from(candidates[order[k]].1);
            predicted += 1;
            k += 1;
        }
        let here = evaluate(score, tp, predicted);
        if here.f1 >= best.f1 {
            best = here;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MiningScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

fn scores_from_counts(tp: usize, predicted: usize, gold: usize) -> MiningScores {
    let precision = match (predicted, gold) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => tp as f64 / predicted as f64,
    };
    let recall = if gold == 0 {
        1.0
    } else {
        tp as f64 / gold as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MiningScores {
        precision,
        recall,
        f1,
        true_positives: tp,
        predicted,
        gold,
    }
}

/// Precision, recall and F1 of predicted `(src_id, tgt_id)` pairs.
pub fn f1_against_gold(predicted: &[(String, String)], gold: &[(String, String)]) -> MiningScores {
    let pred: BTreeSet<&(String, String)> = predicted.iter().collect();
    let gold: BTreeSet<&(String, String)> = gold.iter().collect();
    let tp = pred.intersection(&gold).count();
    scores_from_counts(tp, pred.len(), gold.len())
}

/// Everything a mining run produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MiningReport {
    pub pairs: Vec<Candidate>,
    pub chosen_threshold: f64,
    pub candidate_rule: CandidateRule,
    pub norm: NormalizationConfig,
    pub scores: Option<MiningScores>,
}
