//! The trainable, bias-free projection applied to token vectors before scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::SentenceEmbedding;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `in_dim × out_dim` weight; a token row vector `x` maps to `x · W`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScorerParams {
    weight: Matrix,
}

impl ScorerParams {
    pub fn new(weight: Matrix) -> Result<Self> {
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::InvalidConfig(
                "projection must be at least 1x1".into(),
            ));
        }
        if !weight.is_finite() {
            return Err(Error::NonFinite {
                context: "projection weight",
            });
        }
        Ok(Self { weight })
    }

    /// Identity for square shapes, truncated identity otherwise.
    pub fn identity(in_dim: usize, out_dim: usize) -> Self {
        let mut w = Matrix::zeros(in_dim, out_dim);
        for i in 0..in_dim.min(out_dim) {
            w[(i, i)] = 1.0;
        }
        Self { weight: w }
    }

    /// Gaussian weights with variance `1 / in_dim`.
    pub fn random(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / libm::sqrt(in_dim as f64)).expect("finite sigma");
        let mut w = Matrix::zeros(in_dim, out_dim);
        for v in w.as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
        Self { weight: w }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    /// Projected token matrix, `token_count × out_dim`.
    pub fn project(&self, sentence: &SentenceEmbedding) -> Result<Matrix> {
        if sentence.dim() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                found: sentence.dim(),
            });
        }
        sentence.to_matrix().matmul(&self.weight)
    }
}
