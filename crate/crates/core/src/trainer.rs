//! Gradient-descent training of the projection head.
//!
//! One step scores a batch of gold-aligned pairs through the projection, applies
//! in-batch normalization with the batch as the tile, takes the in-batch
//! negative cross-entropy and moves the weights against the analytic gradient.
//! The max selections inside BERT-score route their gradient to the argmax
//! token (lowest index on ties).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{SentenceEmbedding, TokenEmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::loss::{global_inbatch_loss, onedim_inbatch_loss, LossReport, LossWithGrad};
use crate::normalize::{normalize, normalize_backward, NormalizationConfig};
use crate::scorer::ScorerParams;
use crate::similarity::{harmonic, score_tile, ScoreMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Objective {
    /// All `N² − N` off-diagonal logits are negatives for every positive.
    Global,
    /// Only the positive's own row supplies negatives.
    OneDim,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub norm: NormalizationConfig,
    pub mode: ScoreMode,
    pub objective: Objective,
    /// Output width of the projection; `None` keeps the input width.
    pub out_dim: Option<usize>,
    /// Rescales any batch gradient whose Frobenius norm exceeds this.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 64,
            temperature: 5.0,
            learning_rate: 3e-6,
            seed: 0,
            norm: NormalizationConfig::default(),
            mode: ScoreMode::TrainDot,
            objective: Objective::Global,
            out_dim: None,
            max_grad_norm: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if matches!(self.max_grad_norm, Some(c) if !(c > 0.0 && c.is_finite())) {
            return bad("max_grad_norm must be positive");
        }
        if self.out_dim == Some(0) {
            return bad("out_dim must be positive");
        }
        self.norm.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    /// Mean batch loss seen while training each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss over all full batches in corpus order: before training, then
    /// after every epoch.
    pub eval_losses: Vec<f64>,
}

/// Resolves `(src_id, tgt_id)` pairs to entry indices.
pub fn resolve_pairs(
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    gold: &[(String, String)],
) -> Result<Vec<(usize, usize)>> {
    gold.iter()
        .map(|(s, t)| {
            let si = src.index_of(s).ok_or_else(|| {
                Error::NonBijectiveGold(alloc::format!("unknown source id {s:?}"))
            })?;
            let ti = tgt.index_of(t).ok_or_else(|| {
                Error::NonBijectiveGold(alloc::format!("unknown target id {t:?}"))
            })?;
            Ok((si, ti))
        })
        .collect()
}

fn objective_loss(objective: Objective, scores: &Matrix, temperature: f64) -> Result<LossWithGrad> {
    match objective {
        Objective::Global => global_inbatch_loss(scores, temperature),
        Objective::OneDim => onedim_inbatch_loss(scores, temperature),
    }
}

/// Forward loss of one aligned batch (`src[i]` pairs with `tgt[i]`), computed
/// through the batched scoring path.
pub fn batch_loss(
    params: &ScorerParams,
    src: &[&SentenceEmbedding],
    tgt: &[&SentenceEmbedding],
    config: &TrainerConfig,
) -> Result<LossReport> {
    let raw = score_tile(src, tgt, config.mode, Some(params))?;
    let tile = normalize(&raw, &config.norm)?;
    Ok(objective_loss(config.objective, &tile.normalized, config.temperature)?.report)
}

struct Projected {
    inputs: Matrix,
    /// Tokens fed to the token products: projected, and unit-length in cosine mode.
    tokens: Matrix,
    norms: Vec<f64>,
}

fn project(s: &SentenceEmbedding, params: &ScorerParams, mode: ScoreMode) -> Result<Projected> {
    let inputs = s.to_matrix();
    if inputs.cols() != params.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.in_dim(),
            found: inputs.cols(),
        });
    }
    let mut tokens = inputs.matmul(params.weight())?;
    let mut norms = vec![1.0; tokens.rows()];
    if mode == ScoreMode::EvalCosine {
        for (k, n) in norms.iter_mut().enumerate() {
            *n = linalg::normalize_in_place(tokens.row_mut(k));
        }
    }
    Ok(Projected {
        inputs,
        tokens,
        norms,
    })
}

/// Per-pair P, R and the argmax routing of both max operations.
struct PairScore {
    precision: f64,
    recall: f64,
    /// For each target token, the best source token.
    best_src: Vec<usize>,
    /// For each source token, the best target token.
    best_tgt: Vec<usize>,
}

fn pair_score(a: &Matrix, b: &Matrix) -> PairScore {
    let g = a.mul_transposed(b).expect("equal widths");
    let best_tgt: Vec<usize> = (0..a.rows())
        .map(|k| linalg::argmax(g.row(k)).expect("non-empty"))
        .collect();
    let mut best_src = vec![0usize; b.rows()];
    for (l, best) in best_src.iter_mut().enumerate() {
        for k in 1..a.rows() {
            if g[(k, l)] > g[(*best, l)] {
                *best = k;
            }
        }
    }
    let recall = best_tgt
        .iter()
        .enumerate()
        .map(|(k, &l)| g[(k, l)])
        .sum::<f64>()
        / a.rows() as f64;
    let precision = best_src
        .iter()
        .enumerate()
        .map(|(l, &k)| g[(k, l)])
        .sum::<f64>()
        / b.rows() as f64;
    PairScore {
        precision,
        recall,
        best_src,
        best_tgt,
    }
}

/// Loss of one aligned batch and its gradient with respect to the projection
/// weight.
pub fn batch_loss_and_grad(
    params: &ScorerParams,
    src: &[&SentenceEmbedding],
    tgt: &[&SentenceEmbedding],
    config: &TrainerConfig,
) -> Result<(LossReport, Matrix)> {
    if src.len() != tgt.len() {
        return Err(Error::PoolSizeMismatch {
            src: src.len(),
            tgt: tgt.len(),
        });
    }
    let n = src.len();
    let a: Vec<Projected> = src
        .iter()
        .map(|s| project(s, params, config.mode))
        .collect::<Result<_>>()?;
    let b: Vec<Projected> = tgt
        .iter()
        .map(|s| project(s, params, config.mode))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::with_capacity(n * n);
    let mut raw = Matrix::zeros(n, n);
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            let ps = pair_score(&ai.tokens, &bj.tokens);
            raw[(i, j)] = harmonic(ps.precision, ps.recall);
            pairs.push(ps);
        }
    }
    let tile = normalize(&raw, &config.norm)?;
    let loss = objective_loss(config.objective, &tile.normalized, config.temperature)?;
    let grad_raw = normalize_backward(&loss.grad, &config.norm);

    let out_dim = params.out_dim();
    let mut grad_a: Vec<Matrix> = a
        .iter()
        .map(|p| Matrix::zeros(p.tokens.rows(), out_dim))
        .collect();
    let mut grad_b: Vec<Matrix> = b
        .iter()
        .map(|p| Matrix::zeros(p.tokens.rows(), out_dim))
        .collect();
    for i in 0..n {
        for j in 0..n {
            let ps = &pairs[i * n + j];
            let gf = grad_raw[(i, j)];
            let denom = ps.precision + ps.recall;
            if denom == 0.0 || gf == 0.0 {
                continue;
            }
            let d2 = denom * denom;
            let gp = gf * 2.0 * ps.recall * ps.recall / d2;
            let gr = gf * 2.0 * ps.precision * ps.precision / d2;
            let (ta, tb) = (&a[i].tokens, &b[j].tokens);
            let wp = gp / tb.rows() as f64;
            for (l, &k) in ps.best_src.iter().enumerate() {
                axpy(grad_a[i].row_mut(k), wp, tb.row(l));
                axpy(grad_b[j].row_mut(l), wp, ta.row(k));
            }
            let wr = gr / ta.rows() as f64;
            for (k, &l) in ps.best_tgt.iter().enumerate() {
                axpy(grad_a[i].row_mut(k), wr, tb.row(l));
                axpy(grad_b[j].row_mut(l), wr, ta.row(k));
            }
        }
    }

    let mut grad_w = Matrix::zeros(params.in_dim(), out_dim);
    for (p, g) in a
        .iter()
        .zip(grad_a.iter_mut())
        .chain(b.iter().zip(grad_b.iter_mut()))
    {
        if config.mode == ScoreMode::EvalCosine {
            unnormalize_grad(&p.tokens, &p.norms, g);
        }
        // dW += Xᵀ · dA
        for k in 0..p.inputs.rows() {
            let x = p.inputs.row(k);
            let gk = g.row(k);
            for (r, &xr) in x.iter().enumerate() {
                if xr != 0.0 {
                    axpy(grad_w.row_mut(r), xr, gk);
                }
            }
        }
    }
    Ok((loss.report, grad_w))
}

/// Chain rule through `a ↦ a / |a|`, in place; zero rows get zero gradient.
fn unnormalize_grad(unit: &Matrix, norms: &[f64], grad: &mut Matrix) {
    for (k, &nrm) in norms.iter().enumerate() {
        let row = grad.row_mut(k);
        if nrm == 0.0 {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let u = unit.row(k);
        let proj = linalg::dot(u, row);
        for (g, &uv) in row.iter_mut().zip(u) {
            *g = (*g - proj * uv) / nrm;
        }
    }
}

#[inline]
fn axpy(dst: &mut [f64], alpha: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += alpha * v;
    }
}

fn mean_loss(
    params: &ScorerParams,
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    pairs: &[(usize, usize)],
    config: &TrainerConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in pairs.chunks_exact(config.batch_size) {
        let (s, t) = split_batch(src, tgt, chunk);
        total += batch_loss(params, &s, &t, config)?.loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

fn split_batch<'a>(
    src: &'a TokenEmbeddingSet,
    tgt: &'a TokenEmbeddingSet,
    chunk: &[(usize, usize)],
) -> (Vec<&'a SentenceEmbedding>, Vec<&'a SentenceEmbedding>) {
    chunk
        .iter()
        .map(|&(s, t)| (&src.entries()[s], &tgt.entries()[t]))
        .unzip()
}

/// Trains from the identity (or truncated identity) projection.
pub fn train(
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    gold: &[(String, String)],
    config: &TrainerConfig,
) -> Result<TrainOutcome> {
    let init = ScorerParams::identity(src.dim(), config.out_dim.unwrap_or(src.dim()));
    train_from(init, src, tgt, gold, config)
}

pub fn train_from(
    init: ScorerParams,
    src: &TokenEmbeddingSet,
    tgt: &TokenEmbeddingSet,
    gold: &[(String, String)],
    config: &TrainerConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: tgt.dim(),
        });
    }
    if init.in_dim() != src.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: init.in_dim(),
        });
    }
    let mut pairs = resolve_pairs(src, tgt, gold)?;
    if pairs.len() < config.batch_size {
        return Err(Error::InsufficientData {
            needed: config.batch_size,
            available: pairs.len(),
        });
    }
    let ordered = pairs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut eval_losses = Vec::with_capacity(config.epochs + 1);
    eval_losses.push(mean_loss(&params, src, tgt, &ordered, config)?);

    for _ in 0..config.epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in pairs.chunks_exact(config.batch_size) {
            let (s, t) = split_batch(src, tgt, chunk);
            let (report, grad) = batch_loss_and_grad(&params, &s, &t, config)?;
            let mut step = config.learning_rate;
            if let Some(clip) = config.max_grad_norm {
                let norm = linalg::norm(grad.as_slice());
                if norm > clip {
                    step *= clip / norm;
                }
            }
            for (w, g) in params
                .weight_mut()
                .as_mut_slice()
                .iter_mut()
                .zip(grad.as_slice())
            {
                *w -= step * g;
            }
            total += report.loss;
            batches += 1;
        }
        if !params.weight().is_finite() {
            return Err(Error::NonFinite {
                context: "projection weight after update",
            });
        }
        epoch_losses.push(total / batches as f64);
        eval_losses.push(mean_loss(&params, src, tgt, &ordered, config)?);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
        eval_losses,
    })
}
