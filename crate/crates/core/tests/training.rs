mod common;

use rand::Rng;
use xlalign_core::linalg::{self, Matrix};
use xlalign_core::synthetic::{generate_synthetic_pair, SyntheticCorpusSpec};
use xlalign_core::trainer::{
    batch_loss, batch_loss_and_grad, train, train_from, Objective, TrainerConfig,
};
use xlalign_core::{NormalizationConfig, ScoreMode, ScorerParams, SentenceEmbedding};

fn projected(s: &SentenceEmbedding, p: &ScorerParams, mode: ScoreMode) -> Matrix {
    let mut m = p.project(s).unwrap();
    if mode == ScoreMode::EvalCosine {
        for k in 0..m.rows() {
            linalg::normalize_in_place(m.row_mut(k));
        }
    }
    m
}

fn top_gap(v: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = v.collect();
    if v.len() < 2 {
        return f64::INFINITY;
    }
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v[0] - v[1]
}

/// Smallest gap between the best and second-best token match anywhere in
/// the batch.
fn argmax_margin(
    src: &[SentenceEmbedding],
    tgt: &[SentenceEmbedding],
    p: &ScorerParams,
    mode: ScoreMode,
) -> f64 {
    let mut margin = f64::INFINITY;
    for a in src {
        for b in tgt {
            let g = projected(a, p, mode)
                .mul_transposed(&projected(b, p, mode))
                .unwrap();
            for k in 0..g.rows() {
                margin = margin.min(top_gap(g.row(k).iter().copied()));
            }
            for l in 0..g.cols() {
                margin = margin.min(top_gap((0..g.rows()).map(|k| g[(k, l)])));
            }
        }
    }
    margin
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = common::rng(17);
    let mut checked = 0;
    while checked < 8 {
        let n = rng.random_range(2..=5);
        let dim = rng.random_range(2..=5);
        let out = rng.random_range(2..=5);
        let src = common::sentences(&mut rng, "s", n, 3, dim);
        let tgt = common::sentences(&mut rng, "t", n, 3, dim);
        let params = ScorerParams::random(dim, out, rng.random());
        let config = TrainerConfig {
            temperature: rng.random_range(0.5..3.0),
            norm: NormalizationConfig::pool(rng.random_range(0.0..=1.0)),
            mode: if rng.random() {
                ScoreMode::EvalCosine
            } else {
                ScoreMode::TrainDot
            },
            objective: if rng.random() {
                Objective::Global
            } else {
                Objective::OneDim
            },
            ..Default::default()
        };
        if argmax_margin(&src, &tgt, &params, config.mode) < 2e-3 {
            continue;
        }
        let s: Vec<&SentenceEmbedding> = src.iter().collect();
        let t: Vec<&SentenceEmbedding> = tgt.iter().collect();
        let (report, grad) = batch_loss_and_grad(&params, &s, &t, &config).unwrap();
        let forward = batch_loss(&params, &s, &t, &config).unwrap();
        assert!((report.loss - forward.loss).abs() < 1e-9);
        let h = 1e-4;
        for k in 0..dim * out {
            let mut plus = params.clone();
            plus.weight_mut().as_mut_slice()[k] += h;
            let mut minus = params.clone();
            minus.weight_mut().as_mut_slice()[k] -= h;
            let fd = (batch_loss(&plus, &s, &t, &config).unwrap().loss
                - batch_loss(&minus, &s, &t, &config).unwrap().loss)
                / (2.0 * h);
            let a = grad.as_slice()[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "entry {k}: analytic {a} vs numeric {fd}");
        }
        checked += 1;
    }
}

fn small_task() -> (SyntheticCorpusSpec, xlalign_core::synthetic::SyntheticPair) {
    let spec = SyntheticCorpusSpec {
        num_pairs: 96,
        dim: 8,
        language_dims: 3,
        language_scale: 3.0,
        ..Default::default()
    };
    let pair = generate_synthetic_pair(&spec).unwrap();
    (spec, pair)
}

#[test]
fn training_lowers_the_loss_and_is_deterministic() {
    let (_, pair) = small_task();
    let config = TrainerConfig {
        epochs: 4,
        batch_size: 32,
        learning_rate: 0.5,
        max_grad_norm: Some(1.0),
        seed: 9,
        ..Default::default()
    };
    let a = train(&pair.src, &pair.tgt, &pair.gold, &config).unwrap();
    assert_eq!(a.eval_losses.len(), 5);
    assert_eq!(a.epoch_losses.len(), 4);
    assert!(a.eval_losses[4] < a.eval_losses[0]);
    let b = train(&pair.src, &pair.tgt, &pair.gold, &config).unwrap();
    assert_eq!(a, b);
    let other = train(
        &pair.src,
        &pair.tgt,
        &pair.gold,
        &TrainerConfig {
            seed: 10,
            ..config.clone()
        },
    )
    .unwrap();
    assert_ne!(a.params, other.params);
}

#[test]
fn resumes_from_given_weights() {
    let (_, pair) = small_task();
    let config = TrainerConfig {
        epochs: 1,
        batch_size: 32,
        out_dim: Some(4),
        learning_rate: 0.1,
        ..Default::default()
    };
    let out = train(&pair.src, &pair.tgt, &pair.gold, &config).unwrap();
    assert_eq!((out.params.in_dim(), out.params.out_dim()), (8, 4));
    let again = train_from(
        out.params.clone(),
        &pair.src,
        &pair.tgt,
        &pair.gold,
        &config,
    )
    .unwrap();
    assert!((again.eval_losses[0] - out.eval_losses[1]).abs() < 1e-12);
    assert!(train_from(
        ScorerParams::identity(5, 4),
        &pair.src,
        &pair.tgt,
        &pair.gold,
        &config
    )
    .is_err());
}

#[test]
fn rejects_unusable_input() {
    let (_, pair) = small_task();
    let mut gold = pair.gold.clone();
    gold[0].1 = "nope".into();
    assert!(train(&pair.src, &pair.tgt, &gold, &TrainerConfig::default()).is_err());
    let too_big = TrainerConfig {
        batch_size: 500,
        ..Default::default()
    };
    assert!(train(&pair.src, &pair.tgt, &pair.gold, &too_big).is_err());
    let bad = TrainerConfig {
        learning_rate: -1.0,
        ..Default::default()
    };
    assert!(train(&pair.src, &pair.tgt, &pair.gold, &bad).is_err());
}
