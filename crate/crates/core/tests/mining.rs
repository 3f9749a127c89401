mod common;

use proptest::prelude::*;
use rand::Rng;
use xlalign_core::mining::{
    apply_threshold, candidates, f1_against_gold, mine, mine_with_sweep, sweep_threshold,
    CandidateRule, MiningConfig, Threshold,
};
use xlalign_core::synthetic::{generate_synthetic_pair, SyntheticCorpusSpec};
use xlalign_core::{NormScope, NormalizationConfig, SentenceEmbedding, TokenEmbeddingSet};

/// F1 at threshold `t` by direct counting.
fn f1_at(c: &[(f64, bool)], gold: usize, t: f64) -> f64 {
    let pred = c.iter().filter(|x| x.0 >= t).count();
    let tp = c.iter().filter(|x| x.0 >= t && x.1).count();
    let p = if pred == 0 {
        if gold == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / pred as f64
    };
    let r = if gold == 0 {
        1.0
    } else {
        tp as f64 / gold as f64
    };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn exhaustive_best(c: &[(f64, bool)], gold: usize) -> f64 {
    c.iter()
        .map(|x| x.0)
        .chain([f64::INFINITY])
        .map(|t| f1_at(c, gold, t))
        .fold(0.0, f64::max)
}

fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
    v.iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[test]
fn f1_examples() {
    let gold = pairs(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "4")]);
    let s = f1_against_gold(&gold, &gold);
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    let s = f1_against_gold(&gold[..2], &gold);
    assert_eq!((s.precision, s.recall), (1.0, 0.5));
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);

    let gold: Vec<(String, String)> = (0..12)
        .map(|i| (format!("s{i}"), format!("t{i}")))
        .collect();
    let mut pred: Vec<(String, String)> = gold[..6].to_vec();
    pred.extend((0..4).map(|i| (format!("x{i}"), format!("t{i}"))));
    let s = f1_against_gold(&pred, &gold);
    assert_eq!((s.precision, s.recall, s.true_positives), (0.6, 0.5, 6));
    assert!((s.f1 - 6.0 / 11.0).abs() < 1e-12);

    let s = f1_against_gold(&[], &[]);
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    let s = f1_against_gold(&[], &gold);
    assert_eq!((s.precision, s.f1), (0.0, 0.0));
}

#[test]
fn sweep_matches_exhaustive_scan() {
    let mut rng = common::rng(4);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let c: Vec<(f64, bool)> = (0..n)
            .map(|_| ((rng.random_range(0..12) as f64) / 4.0, rng.random_bool(0.4)))
            .collect();
        let gold = c.iter().filter(|x| x.1).count() + rng.random_range(0..4);
        let r = sweep_threshold(&c, gold).unwrap();
        let best = exhaustive_best(&c, gold);
        assert!((r.f1 - best).abs() < 1e-12, "{r:?} vs {best}");
        assert!((f1_at(&c, gold, r.threshold) - r.f1).abs() < 1e-12);
    }
}

fn planted(
    n_noise: usize,
    n_planted: usize,
    seed: u64,
) -> (TokenEmbeddingSet, TokenEmbeddingSet, Vec<(String, String)>) {
    // Several tokens per sentence keep the mean-of-max terms positive; P and
    // R of opposite sign would make F unbounded.
    let mut rng = common::rng(seed);
    let mut make = |prefix: &str| -> Vec<SentenceEmbedding> {
        (0..n_noise)
            .map(|i| {
                let t = rng.random_range(4..=8);
                common::sentence(&mut rng, &format!("{prefix}{i}"), t, 16)
            })
            .collect()
    };
    let mut src = make("s");
    let mut tgt = make("t");
    let mut gold = Vec::new();
    for (k, s) in src.iter_mut().enumerate().take(n_planted) {
        // Target k becomes a lightly perturbed copy of source k.
        let values: Vec<f32> = s
            .values()
            .iter()
            .map(|v| v + rng.random_range(-0.02f32..0.02))
            .collect();
        tgt[k] = SentenceEmbedding::new(format!("t{k}"), 16, values).unwrap();
        gold.push((format!("s{k}"), format!("t{k}")));
    }
    (common::set(src, "xx"), common::set(tgt, "yy"), gold)
}

#[test]
fn planted_pairs_are_recovered() {
    let (src, tgt, gold) = planted(120, 12, 2);
    for rule in [CandidateRule::BestPerSource, CandidateRule::MutualBest] {
        let config = MiningConfig {
            candidate_rule: rule,
            ..Default::default()
        };
        let (mined, sweep) = mine_with_sweep(&src, &tgt, &config, None, &gold).unwrap();
        assert_eq!(sweep.f1, 1.0);
        let ids: Vec<(String, String)> = mined
            .iter()
            .map(|c| (c.src_id.clone(), c.tgt_id.clone()))
            .collect();
        assert_eq!(f1_against_gold(&ids, &gold).f1, 1.0);
        let fixed = mine(
            &src,
            &tgt,
            &MiningConfig {
                threshold: Threshold::Fixed(sweep.threshold),
                ..config.clone()
            },
            None,
        )
        .unwrap();
        assert_eq!(fixed, mined);
    }
}

#[test]
fn mutual_rule_rejects_popular_false_positives() {
    let spec = SyntheticCorpusSpec {
        num_pairs: 150,
        noise_sigma: 0.3,
        anisotropy: 1.0,
        popularity_fraction: 0.2,
        popularity_offset: 2.0,
        ..Default::default()
    };
    let p = generate_synthetic_pair(&spec).unwrap();
    let false_positives = |alpha: f64| {
        let config = MiningConfig {
            candidate_rule: CandidateRule::MutualBest,
            norm: NormalizationConfig::pool(alpha),
            ..Default::default()
        };
        let c = candidates(&p.src, &p.tgt, &config, None).unwrap();
        let ids: Vec<(String, String)> = c
            .iter()
            .map(|c| (c.src_id.clone(), c.tgt_id.clone()))
            .collect();
        let s = f1_against_gold(&ids, &p.gold);
        s.predicted - s.true_positives
    };
    assert!(false_positives(0.75) < false_positives(0.0));
}

#[test]
fn banded_pool_candidates_equal_full() {
    let (src, tgt, _) = planted(40, 5, 6);
    let full = MiningConfig {
        norm: NormalizationConfig::pool(0.75),
        ..Default::default()
    };
    let banded = MiningConfig {
        band_rows: Some(7),
        ..full.clone()
    };
    assert_eq!(full.norm.scope, NormScope::Pool);
    let a = candidates(&src, &tgt, &full, None).unwrap();
    let b = candidates(&src, &tgt, &banded, None).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.src_index, x.tgt_index), (y.src_index, y.tgt_index));
        assert!((x.score - y.score).abs() < 1e-12);
    }
}

#[test]
fn sweep_without_gold_is_refused() {
    let (src, tgt, _) = planted(4, 1, 1);
    assert!(mine(&src, &tgt, &MiningConfig::default(), None).is_err());
}

proptest! {
    #[test]
    fn raising_the_threshold_is_monotone(seed in any::<u64>(), t1 in -1.0f64..1.0, dt in 0.0f64..1.0) {
        let (src, tgt, gold) = planted(20, 5, seed);
        let c = candidates(&src, &tgt, &MiningConfig::default(), None).unwrap();
        let to_ids = |v: Vec<xlalign_core::mining::Candidate>| -> Vec<(String, String)> {
            v.into_iter().map(|c| (c.src_id, c.tgt_id)).collect()
        };
        let lo = f1_against_gold(&to_ids(apply_threshold(&c, t1)), &gold);
        let hi = f1_against_gold(&to_ids(apply_threshold(&c, t1 + dt)), &gold);
        prop_assert!(hi.predicted <= lo.predicted);
        prop_assert!(hi.recall <= lo.recall);
    }

    #[test]
    fn sweep_is_optimal(scores in prop::collection::vec((-2.0f64..2.0, any::<bool>()), 1..60), extra in 0usize..5) {
        let gold = scores.iter().filter(|x| x.1).count() + extra;
        let r = sweep_threshold(&scores, gold).unwrap();
        prop_assert!((r.f1 - exhaustive_best(&scores, gold)).abs() < 1e-12);
    }
}
