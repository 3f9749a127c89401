//! Cross-lingual sentence alignment over token-level embeddings.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the numerical side of
//! the aligner:
//!
//! - [`similarity`]: token-level BERT-score in training (raw dot product) and
//!   evaluation (cosine) modes, per pair and batched over tiles.
//! - [`normalize`]: in-batch normalization against the popular-sentence effect.
//! - [`loss`] and [`trainer`]: global in-batch-negative cross-entropy and a
//!   gradient-descent trainer for a bias-free projection head.
//! - [`retrieval`] and [`mining`]: argmax-accuracy ranking evaluation and
//!   threshold-based bitext mining with F1 scoring.
//! - [`corpus`]: budgeted sampling, short-pair filtering, decontamination.
//! - [`ablation`]: pooling × normalization grids.
//!
//! File formats, the command line and anything touching the filesystem live in
//! the `xlalign` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod ablation;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod mining;
pub mod normalize;
pub mod retrieval;
pub mod scorer;
pub mod similarity;
pub mod synthetic;
pub mod trainer;

pub use embedding::{SentenceEmbedding, TokenEmbeddingSet, DEFAULT_MAX_SEQ_LEN};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use normalize::{NormScope, NormalizationConfig, SimilarityTile};
pub use scorer::ScorerParams;
pub use similarity::{BertScoreBreakdown, ScoreMode};
