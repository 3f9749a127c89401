#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlalign_core::{Matrix, SentenceEmbedding, TokenEmbeddingSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sentence(rng: &mut ChaCha8Rng, id: &str, tokens: usize, dim: usize) -> SentenceEmbedding {
    let values = (0..tokens * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    SentenceEmbedding::new(id, dim, values).unwrap()
}

pub fn sentences(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    n: usize,
    max_tokens: usize,
    dim: usize,
) -> Vec<SentenceEmbedding> {
    (0..n)
        .map(|i| {
            let t = rng.random_range(1..=max_tokens);
            sentence(rng, &format!("{prefix}{i}"), t, dim)
        })
        .collect()
}

pub fn set(entries: Vec<SentenceEmbedding>, lang: &str) -> TokenEmbeddingSet {
    let dim = entries[0].dim();
    TokenEmbeddingSet::with_entries(dim, lang, "test", entries).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn tokens(s: &SentenceEmbedding, cosine: bool) -> Vec<Vec<f64>> {
    s.tokens()
        .map(|t| {
            let v: Vec<f64> = t.iter().map(|&x| x as f64).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if cosine && n > 0.0 {
                v.iter().map(|x| x / n).collect()
            } else if cosine {
                vec![0.0; v.len()]
            } else {
                v
            }
        })
        .collect()
}

/// Token-matching score by direct enumeration: (precision, recall, f).
pub fn oracle_bert(a: &SentenceEmbedding, b: &SentenceEmbedding, cosine: bool) -> (f64, f64, f64) {
    let (ta, tb) = (tokens(a, cosine), tokens(b, cosine));
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let mut r = 0.0;
    for x in &ta {
        r += tb
            .iter()
            .map(|y| dot(x, y))
            .fold(f64::NEG_INFINITY, f64::max);
    }
    r /= ta.len() as f64;
    let mut p = 0.0;
    for y in &tb {
        p += ta
            .iter()
            .map(|x| dot(x, y))
            .fold(f64::NEG_INFINITY, f64::max);
    }
    p /= tb.len() as f64;
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

/// Entry-by-entry normalization straight from the row, column and grand means.
pub fn oracle_normalize(f: &Matrix, alpha: f64) -> Matrix {
    let (m, n) = (f.rows(), f.cols());
    let row: Vec<f64> = (0..m)
        .map(|i| (0..n).map(|j| f[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let col: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| f[(i, j)]).sum::<f64>() / m as f64)
        .collect();
    let grand = row.iter().sum::<f64>() / m as f64;
    let mut out = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            out[(i, j)] = f[(i, j)] - alpha * (row[i] + col[j]) + (2.0 * alpha - 1.0) * grand;
        }
    }
    out
}

/// Mean over positives of `-ln(e^{d_i} / (e^{d_i} + Σ_{k≠l} e^{s_kl}))`, logits `s/τ`.
pub fn oracle_global_loss(s: &Matrix, tau: f64) -> f64 {
    let n = s.rows();
    let mut neg = 0.0;
    for k in 0..n {
        for l in 0..n {
            if k != l {
                neg += (s[(k, l)] / tau).exp();
            }
        }
    }
    (0..n)
        .map(|i| {
            let pos = (s[(i, i)] / tau).exp();
            -(pos / (pos + neg)).ln()
        })
        .sum::<f64>()
        / n as f64
}

pub fn oracle_onedim_loss(s: &Matrix, tau: f64) -> f64 {
    let n = s.rows();
    (0..n)
        .map(|i| {
            let total: f64 = (0..n).map(|l| (s[(i, l)] / tau).exp()).sum();
            -((s[(i, i)] / tau).exp() / total).ln()
        })
        .sum::<f64>()
        / n as f64
}
