//! Training-data preparation: a fixed pair budget split across language
//! pairs, short-pair filtering and decontamination against test sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::retrieval::split_pair_label;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BitextPair {
    pub id: String,
    pub src_text: String,
    pub tgt_text: String,
    pub pair_label: String,
    /// Subword counts supplied by the embedding producer, when known.
    pub src_tokens: Option<usize>,
    pub tgt_tokens: Option<usize>,
}

impl BitextPair {
    pub fn new(
        id: impl Into<String>,
        src_text: impl Into<String>,
        tgt_text: impl Into<String>,
        pair_label: impl Into<String>,
    ) -> Result<Self> {
        let pair = Self {
            id: id.into(),
            src_text: src_text.into(),
            tgt_text: tgt_text.into(),
            pair_label: pair_label.into(),
            src_tokens: None,
            tgt_tokens: None,
        };
        split_pair_label(&pair.pair_label)?;
        if pair.src_text.trim().is_empty() || pair.tgt_text.trim().is_empty() {
            return Err(Error::InvalidConfig(format!(
                "pair {:?} has an empty side",
                pair.id
            )));
        }
        Ok(pair)
    }

    pub fn with_token_counts(mut self, src: usize, tgt: usize) -> Self {
        self.src_tokens = Some(src);
        self.tgt_tokens = Some(tgt);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BitextCorpus {
    pub pairs: Vec<BitextPair>,
}

impl BitextCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs grouped by label, preserving order within each label.
    pub fn by_label(&self) -> BTreeMap<String, Vec<BitextPair>> {
        let mut out: BTreeMap<String, Vec<BitextPair>> = BTreeMap::new();
        for p in &self.pairs {
            out.entry(p.pair_label.clone()).or_default().push(p.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BudgetSpec {
    pub total_budget: usize,
    /// Highest-resource pair first.
    pub pair_labels: Vec<String>,
    pub min_tokens: usize,
    pub seed: u64,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self {
            total_budget: 1_000_000,
            pair_labels: Vec::new(),
            min_tokens: 5,
            seed: 0,
        }
    }
}

impl BudgetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.total_budget == 0 {
            return Err(Error::InvalidConfig(
                "total_budget must be at least 1".into(),
            ));
        }
        if self.pair_labels.is_empty() {
            return Err(Error::EmptyInput("pair labels"));
        }
        let unique: BTreeSet<&String> = self.pair_labels.iter().collect();
        if unique.len() != self.pair_labels.len() {
            return Err(Error::InvalidConfig("pair labels repeat".into()));
        }
        Ok(())
    }
}

/// Per-pair allocation: an equal share of the budget, then any leftover
/// (division remainder or a short pair's shortfall) handed out one example at
/// a time, round-robin in label order, to pairs that still have data.
pub fn allocate_budget(sizes: &[usize], budget: usize) -> Vec<usize> {
    let k = sizes.len();
    if k == 0 {
        return Vec::new();
    }
    let share = budget / k;
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| s.min(share)).collect();
    let mut left = budget - alloc.iter().sum::<usize>();
    while left > 0 {
        let mut progressed = false;
        for (a, &s) in alloc.iter_mut().zip(sizes) {
            if left == 0 {
                break;
            }
            if *a < s {
                *a += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}

/// Samples the budget uniformly without replacement from each pair's corpus.
/// Labels missing from `corpora` count as empty.
pub fn sample_budget(
    corpora: &BTreeMap<String, Vec<BitextPair>>,
    spec: &BudgetSpec,
) -> Result<BitextCorpus> {
    spec.validate()?;
    let empty = Vec::new();
    let pools: Vec<&Vec<BitextPair>> = spec
        .pair_labels
        .iter()
        .map(|l| corpora.get(l).unwrap_or(&empty))
        .collect();
    let sizes: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let allocation = allocate_budget(&sizes, spec.total_budget);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(allocation.iter().sum());
    for (pool, &take) in pools.iter().zip(&allocation) {
        let mut picked = index::sample(&mut rng, pool.len(), take).into_vec();
        picked.sort_unstable();
        pairs.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    Ok(BitextCorpus { pairs })
}

/// Token counting used when the producer supplied no counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenCounter {
    /// Whitespace-separated words; only sensible for synthetic or
    /// space-delimited text.
    Whitespace,
}

impl TokenCounter {
    pub fn count(&self, text: &str) -> usize {
        match self {
            TokenCounter::Whitespace => text.split_whitespace().count(),
        }
    }
}

/// Keeps pairs whose both sides have at least `min_tokens` tokens.
pub fn filter_min_tokens(
    corpus: &BitextCorpus,
    min_tokens: usize,
    fallback: Option<TokenCounter>,
) -> Result<BitextCorpus> {
    let mut pairs = Vec::with_capacity(corpus.len());
    for p in &corpus.pairs {
        let count = |known: Option<usize>, text: &str| {
            known
                .or_else(|| fallback.map(|c| c.count(text)))
                .ok_or_else(|| Error::MissingTokenCounts {
                    pair_id: p.id.clone(),
                })
        };
        if count(p.src_tokens, &p.src_text)? >= min_tokens
            && count(p.tgt_tokens, &p.tgt_text)? >= min_tokens
        {
            pairs.push(p.clone());
        }
    }
    Ok(BitextCorpus { pairs })
}

/// Trims and collapses internal whitespace runs to single spaces.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, w) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Drops pairs whose source or target text matches any test sentence after
/// whitespace normalization; returns the survivors and the removal count.
pub fn decontaminate<S: AsRef<str>>(
    corpus: &BitextCorpus,
    test_sets: &[Vec<S>],
) -> (BitextCorpus, usize) {
    let banned: BTreeSet<String> = test_sets
        .iter()
        .flatten()
        .map(|s| normalize_whitespace(s.as_ref()))
        .collect();
    let pairs: Vec<BitextPair> = corpus
        .pairs
        .iter()
        .filter(|p| {
            !banned.contains(&normalize_whitespace(&p.src_text))
                && !banned.contains(&normalize_whitespace(&p.tgt_text))
        })
        .cloned()
        .collect();
    let removed = corpus.len() - pairs.len();
    (BitextCorpus { pairs }, removed)
}

/// Budget over the `k` largest pairs, larger first, ties by label.
pub fn plan_topk(
    sizes: &BTreeMap<String, usize>,
    k: usize,
    total_budget: usize,
    min_tokens: usize,
    seed: u64,
) -> Result<BudgetSpec> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if k > sizes.len() {
        return Err(Error::InsufficientData {
            needed: k,
            available: sizes.len(),
        });
    }
    let mut ranked: Vec<(&String, usize)> = sizes.iter().map(|(l, &s)| (l, s)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let spec = BudgetSpec {
        total_budget,
        pair_labels: ranked.into_iter().take(k).map(|(l, _)| l.clone()).collect(),
        min_tokens,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Counts of what each pipeline stage kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineStats {
    pub sampled: usize,
    pub after_filter: usize,
    pub decontaminated: usize,
    pub final_pairs: usize,
}

/// Sample, then filter short pairs, then decontaminate.
pub fn run_pipeline<S: AsRef<str>>(
    corpora: &BTreeMap<String, Vec<BitextPair>>,
    spec: &BudgetSpec,
    fallback: Option<TokenCounter>,
    test_sets: &[Vec<S>],
) -> Result<(BitextCorpus, PipelineStats)> {
    let sampled = sample_budget(corpora, spec)?;
    let filtered = filter_min_tokens(&sampled, spec.min_tokens, fallback)?;
    let (clean, removed) = decontaminate(&filtered, test_sets);
    let stats = PipelineStats {
        sampled: sampled.len(),
        after_filter: filtered.len(),
        decontaminated: removed,
        final_pairs: clean.len(),
    };
    Ok((clean, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn corpus(label: &str, n: usize) -> Vec<BitextPair> {
        (0..n)
            .map(|i| {
                BitextPair::new(
                    format!("{label}:{i}"),
                    format!("src {i}"),
                    format!("tgt {i}"),
                    label,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn equal_split_and_redistribution() {
        assert_eq!(allocate_budget(&[5, 5, 5, 5], 8), [2, 2, 2, 2]);
        assert_eq!(allocate_budget(&[1, 100, 100], 9), [1, 4, 4]);
        assert_eq!(allocate_budget(&[3], 10), [3]);
        assert_eq!(allocate_budget(&[10, 10, 10], 10), [4, 3, 3]);
    }

    #[test]
    fn sampling_is_seeded_and_capped() {
        let mut corpora = BTreeMap::new();
        corpora.insert(String::from("de-en"), corpus("de-en", 50));
        corpora.insert(String::from("fr-en"), corpus("fr-en", 3));
        let spec = BudgetSpec {
            total_budget: 20,
            pair_labels: vec!["de-en".into(), "fr-en".into()],
            ..Default::default()
        };
        let a = sample_budget(&corpora, &spec).unwrap();
        assert_eq!(a, sample_budget(&corpora, &spec).unwrap());
        assert_eq!(a.len(), 20);
        let by = a.by_label();
        assert_eq!(by["fr-en"].len(), 3);
        assert_eq!(by["de-en"].len(), 17);
    }

    #[test]
    fn min_token_boundary() {
        let p = |id: &str, s, t| {
            BitextPair::new(id, "a", "b", "de-en")
                .unwrap()
                .with_token_counts(s, t)
        };
        let c = BitextCorpus {
            pairs: vec![p("short", 4, 12), p("edge", 5, 5)],
        };
        let kept = filter_min_tokens(&c, 5, None).unwrap();
        assert_eq!(kept.pairs.len(), 1);
        assert_eq!(kept.pairs[0].id, "edge");
    }

    #[test]
    fn missing_counts_need_fallback() {
        let c = BitextCorpus {
            pairs: corpus("de-en", 1),
        };
        assert!(matches!(
            filter_min_tokens(&c, 1, None),
            Err(Error::MissingTokenCounts { .. })
        ));
        assert_eq!(
            filter_min_tokens(&c, 2, Some(TokenCounter::Whitespace))
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            filter_min_tokens(&c, 3, Some(TokenCounter::Whitespace))
                .unwrap()
                .len(),
            0
        );
    }

    #[test]
    fn decontamination_normalizes_whitespace() {
        let c = BitextCorpus {
            pairs: corpus("de-en", 3),
        };
        let tests = vec![vec!["  src   1 "]];
        let (clean, removed) = decontaminate(&c, &tests);
        assert_eq!(removed, 1);
        assert!(clean.pairs.iter().all(|p| p.id != "de-en:1"));
        let (again, removed_again) = decontaminate(&clean, &tests);
        assert_eq!((again, removed_again), (clean, 0));
    }

    #[test]
    fn topk_selection() {
        let sizes: BTreeMap<String, usize> = [("a-x", 10), ("b-x", 20), ("c-x", 30)]
            .iter()
            .map(|&(l, s)| (l.into(), s))
            .collect();
        let spec = plan_topk(&sizes, 2, 100, 5, 0).unwrap();
        assert_eq!(spec.pair_labels, ["c-x", "b-x"]);
        assert_eq!(
            plan_topk(&sizes, 3, 100, 5, 0).unwrap().pair_labels,
            ["c-x", "b-x", "a-x"]
        );
        assert!(plan_topk(&sizes, 0, 100, 5, 0).is_err());
        assert!(plan_topk(&sizes, 4, 100, 5, 0).is_err());
    }

    #[test]
    fn labels_and_empty_sides_validated() {
        assert!(BitextPair::new("x", "a", "b", "deen").is_err());
        assert!(BitextPair::new("x", " ", "b", "de-en").is_err());
    }
}
