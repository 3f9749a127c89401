//! Seeded synthetic bilingual token embeddings.
//!
//! Every source token is `semantic + anisotropy · u`, where `u` is a fixed
//! unit direction shared by all sentences. The coordinates after the first
//! `dim − language_dims` form a language-specific block: the source gets an
//! independent Gaussian draw there with scale `language_scale`.
//!
//! The gold target of a sentence is its source matrix mapped through a seeded
//! orthogonal map that is the identity on the shared block and a random
//! rotation on the language block, plus Gaussian noise of scale
//! `noise_sigma`. A `popularity_fraction` of targets additionally get
//! `popularity_offset · u` on every token, which makes them score high
//! against every source.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::embedding::{SentenceEmbedding, TokenEmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SyntheticCorpusSpec {
    pub num_pairs: usize,
    pub dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Seed of the orthogonal map that defines the target language.
    pub rotation_seed: u64,
    /// Seed for sentence content, noise and popularity assignment.
    pub seed: u64,
    pub noise_sigma: f64,
    pub popularity_fraction: f64,
    pub popularity_offset: f64,
    /// Magnitude of the direction shared by every token.
    pub anisotropy: f64,
    /// Width of the language-specific block (0 disables it).
    pub language_dims: usize,
    pub language_scale: f64,
    pub src_lang: String,
    pub tgt_lang: String,
    /// Prefix for generated sentence ids.
    pub id_prefix: String,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            num_pairs: 100,
            dim: 16,
            min_tokens: 4,
            max_tokens: 10,
            rotation_seed: 1,
            seed: 0,
            noise_sigma: 0.05,
            popularity_fraction: 0.0,
            popularity_offset: 0.0,
            anisotropy: 0.0,
            language_dims: 0,
            language_scale: 0.0,
            src_lang: "xx".into(),
            tgt_lang: "yy".into(),
            id_prefix: String::new(),
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad(format!(
                "token range {}..={} is empty or starts at 0",
                self.min_tokens, self.max_tokens
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be a finite non-negative number".into());
        }
        if !(0.0..=1.0).contains(&self.popularity_fraction) {
            return bad("popularity_fraction must lie in [0, 1]".into());
        }
        if self.language_dims >= self.dim && self.language_dims > 0 {
            return bad("language_dims must leave at least one shared coordinate".into());
        }
        for (name, v) in [
            ("popularity_offset", self.popularity_offset),
            ("anisotropy", self.anisotropy),
            ("language_scale", self.language_scale),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    fn shared_dims(&self) -> usize {
        self.dim - self.language_dims
    }
}

/// Source set, target set and the gold `(src_id, tgt_id)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub src: TokenEmbeddingSet,
    pub tgt: TokenEmbeddingSet,
    pub gold: Vec<(String, String)>,
    /// Target ids that received the popularity offset.
    pub popular: Vec<String>,
}

/// Random `n × n` orthogonal matrix from Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for q in &rows {
                    let p = linalg::dot(&v, q);
                    for (x, qx) in v.iter_mut().zip(q) {
                        *x -= p * qx;
                    }
                }
            }
            if linalg::normalize_in_place(&mut v) < 1e-8 {
                ok = false;
                break;
            }
            rows.push(v);
        }
        if ok {
            return Matrix::from_rows(&rows).expect("square");
        }
    }
}

/// Direction shared by all synthetic tokens: the first shared coordinate.
fn shared_direction(spec: &SyntheticCorpusSpec) -> Vec<f64> {
    let mut u = vec![0.0; spec.dim];
    u[0] = 1.0;
    u
}

pub fn generate_synthetic_pair(spec: &SyntheticCorpusSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    let d = spec.dim;
    let shared = spec.shared_dims();
    let rotation = if spec.language_dims > 0 {
        Some(random_orthogonal(spec.language_dims, spec.rotation_seed))
    } else {
        None
    };
    let u = shared_direction(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let semantic = Normal::new(0.0, 1.0 / libm::sqrt(shared as f64)).expect("finite");
    let noise = Normal::new(0.0, spec.noise_sigma).expect("finite");
    let language = Normal::new(
        0.0,
        spec.language_scale / libm::sqrt(spec.language_dims.max(1) as f64),
    )
    .expect("finite");

    let mut order: Vec<usize> = (0..spec.num_pairs).collect();
    order.shuffle(&mut rng);
    let n_popular = libm::round(spec.popularity_fraction * spec.num_pairs as f64) as usize;
    let mut is_popular = vec![false; spec.num_pairs];
    for &k in &order[..n_popular.min(spec.num_pairs)] {
        is_popular[k] = true;
    }

    let provenance = format!(
        "synthetic(seed={}, rotation_seed={})",
        spec.seed, spec.rotation_seed
    );
    let mut src = TokenEmbeddingSet::new(d, spec.src_lang.clone(), provenance.clone())?;
    let mut tgt = TokenEmbeddingSet::new(d, spec.tgt_lang.clone(), provenance)?;
    let mut gold = Vec::with_capacity(spec.num_pairs);
    let mut popular = Vec::new();

    for (k, &pop) in is_popular.iter().enumerate() {
        let tokens = rng.random_range(spec.min_tokens..=spec.max_tokens);
        let mut s = Vec::with_capacity(tokens * d);
        let mut t = Vec::with_capacity(tokens * d);
        for _ in 0..tokens {
            let mut x = vec![0.0; d];
            for v in x[..shared].iter_mut() {
                *v = semantic.sample(&mut rng);
            }
            for v in x[shared..].iter_mut() {
                *v = language.sample(&mut rng);
            }
            for (v, uv) in x.iter_mut().zip(&u) {
                *v += spec.anisotropy * uv;
            }
            let mut y = x.clone();
            if let Some(r) = &rotation {
                let block = &x[shared..];
                for (i, out) in y[shared..].iter_mut().enumerate() {
                    *out = linalg::dot(r.row(i), block);
                }
            }
            for v in y.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            if pop {
                for (v, uv) in y.iter_mut().zip(&u) {
                    *v += spec.popularity_offset * uv;
                }
            }
            s.extend(x.iter().map(|&v| v as f32));
            t.extend(y.iter().map(|&v| v as f32));
        }
        let sid = format!("{}s{k}", spec.id_prefix);
        let tid = format!("{}t{k}", spec.id_prefix);
        src.push(SentenceEmbedding::new(sid.clone(), d, s)?)?;
        tgt.push(SentenceEmbedding::new(tid.clone(), d, t)?)?;
        if pop {
            popular.push(tid.clone());
        }
        gold.push((sid, tid));
    }
    Ok(SyntheticPair {
        src,
        tgt,
        gold,
        popular,
    })
}
