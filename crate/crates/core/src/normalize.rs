//! In-batch normalization of similarity scores.
//!
//! For a raw `M × N` score matrix `f` with row means `r`, column means `c` and
//! grand mean `g`:
//!
//! ```text
//! S[i][j] = f[i][j] - alpha * (r[i] + c[j]) + (2 * alpha - 1) * g
//! ```
//!
//! The last term keeps `mean(S) == 0` for every `alpha`. Under
//! [`NormScope::Tile`] the pool is cut into contiguous `tile_size` blocks that
//! are normalized with their own statistics, which makes scores from
//! different tiles only approximately comparable.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormScope {
    /// Statistics over the whole candidate pool.
    Pool,
    /// Statistics per `tile_size × tile_size` block.
    Tile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct NormalizationConfig {
    pub alpha: f64,
    pub scope: NormScope,
    pub tile_size: usize,
    /// When false the normalized matrix is the raw matrix.
    pub enabled: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            scope: NormScope::Pool,
            tile_size: 256,
            enabled: true,
        }
    }
}

impl NormalizationConfig {
    pub fn pool(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn tile(alpha: f64, tile_size: usize) -> Self {
        Self {
            alpha,
            scope: NormScope::Tile,
            tile_size,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(alloc::format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.scope == NormScope::Tile && self.tile_size < 2 {
            return Err(Error::TileTooSmall {
                rows: self.tile_size,
                cols: self.tile_size,
            });
        }
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig("tile_size must be positive".into()));
        }
        Ok(())
    }
}

/// Raw scores, normalized scores and the statistics that connect them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimilarityTile {
    pub raw: Matrix,
    pub normalized: Matrix,
    pub row_means: Vec<f64>,
    pub col_means: Vec<f64>,
    pub grand_mean: f64,
    pub config: NormalizationConfig,
    /// Position of the tile's first row inside the pool.
    pub row_offset: usize,
    /// Position of the tile's first column inside the pool.
    pub col_offset: usize,
}

/// Running row, column and grand sums, filled band by band.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolStatistics {
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    rows_seen: usize,
}

impl PoolStatistics {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            row_sums: vec![0.0; rows],
            col_sums: vec![0.0; cols],
            rows_seen: 0,
        }
    }

    pub fn from_matrix(raw: &Matrix) -> Result<Self> {
        let mut stats = Self::new(raw.rows(), raw.cols());
        stats.accumulate(0, raw)?;
        Ok(stats)
    }

    /// Adds a band of complete rows starting at pool row `first_row`.
    pub fn accumulate(&mut self, first_row: usize, band: &Matrix) -> Result<()> {
        if band.cols() != self.col_sums.len() {
            return Err(Error::DimensionMismatch {
                expected: self.col_sums.len(),
                found: band.cols(),
            });
        }
        if !band.is_finite() {
            return Err(Error::NonFinite {
                context: "raw similarity scores",
            });
        }
        for i in 0..band.rows() {
            let row = band.row(i);
            self.row_sums[first_row + i] = row.iter().sum();
            for (c, v) in self.col_sums.iter_mut().zip(row) {
                *c += v;
            }
        }
        self.rows_seen += band.rows();
        Ok(())
    }

    pub fn row_means(&self) -> Vec<f64> {
        let n = self.col_sums.len() as f64;
        self.row_sums.iter().map(|s| s / n).collect()
    }

    pub fn col_means(&self) -> Vec<f64> {
        let m = self.row_sums.len() as f64;
        self.col_sums.iter().map(|s| s / m).collect()
    }

    pub fn grand_mean(&self) -> f64 {
        let total: f64 = self.row_sums.iter().sum();
        total / (self.row_sums.len() * self.col_sums.len()) as f64
    }

    pub fn is_complete(&self) -> bool {
        self.rows_seen == self.row_sums.len()
    }
}

/// The affine map from raw to normalized scores, frozen from pool statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    alpha: f64,
    enabled: bool,
    row_means: Vec<f64>,
    col_means: Vec<f64>,
    grand_mean: f64,
}

impl Normalizer {
    pub fn from_statistics(stats: &PoolStatistics, config: &NormalizationConfig) -> Self {
        Self {
            alpha: config.alpha,
            enabled: config.enabled,
            row_means: stats.row_means(),
            col_means: stats.col_means(),
            grand_mean: stats.grand_mean(),
        }
    }

    #[inline]
    pub fn apply(&self, raw: f64, row: usize, col: usize) -> f64 {
        if !self.enabled {
            return raw;
        }
        let a = self.alpha;
        raw - a * (self.row_means[row] + self.col_means[col]) + (2.0 * a - 1.0) * self.grand_mean
    }

    /// Normalizes a band of rows starting at pool row `first_row`.
    pub fn apply_band(&self, first_row: usize, band: &Matrix) -> Matrix {
        let mut out = band.clone();
        for i in 0..band.rows() {
            for j in 0..band.cols() {
                out[(i, j)] = self.apply(band[(i, j)], first_row + i, j);
            }
        }
        out
    }
}

/// Normalizes the whole matrix with its own statistics (pool scope).
pub fn normalize(raw: &Matrix, config: &NormalizationConfig) -> Result<SimilarityTile> {
    config.validate()?;
    if raw.rows() == 0 || raw.cols() == 0 {
        return Err(Error::EmptyInput("similarity matrix"));
    }
    let stats = PoolStatistics::from_matrix(raw)?;
    let normalizer = Normalizer::from_statistics(&stats, config);
    Ok(SimilarityTile {
        normalized: normalizer.apply_band(0, raw),
        raw: raw.clone(),
        row_means: normalizer.row_means,
        col_means: normalizer.col_means,
        grand_mean: normalizer.grand_mean,
        config: *config,
        row_offset: 0,
        col_offset: 0,
    })
}

/// Splits `0..len` into contiguous blocks of `tile_size`. A trailing block
/// shorter than 2 is merged into its predecessor.
pub fn tile_ranges(len: usize, tile_size: usize) -> Result<Vec<Range<usize>>> {
    if tile_size < 2 || len < 2 {
        return Err(Error::TileTooSmall {
            rows: tile_size.min(len),
            cols: tile_size,
        });
    }
    let mut out: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + tile_size).min(len);
        if end - start < 2 {
            out.last_mut().expect("len >= 2").end = end;
        } else {
            out.push(start..end);
        }
        start = end;
    }
    Ok(out)
}

/// Tile-scope normalization: every block gets its own statistics. Tiles come
/// back in row-major block order.
pub fn normalize_streamed(
    raw: &Matrix,
    config: &NormalizationConfig,
) -> Result<Vec<SimilarityTile>> {
    config.validate()?;
    if config.scope != NormScope::Tile {
        return Err(Error::InvalidConfig(
            "streamed normalization requires tile scope".into(),
        ));
    }
    let row_tiles = tile_ranges(raw.rows(), config.tile_size)?;
    let col_tiles = tile_ranges(raw.cols(), config.tile_size)?;
    let mut out = Vec::with_capacity(row_tiles.len() * col_tiles.len());
    for rows in &row_tiles {
        for cols in &col_tiles {
            let block = sub_matrix(raw, rows.clone(), cols.clone());
            let mut tile = normalize(&block, config)?;
            tile.row_offset = rows.start;
            tile.col_offset = cols.start;
            out.push(tile);
        }
    }
    Ok(out)
}

/// Full normalized matrix under the configured scope.
pub fn normalize_matrix(raw: &Matrix, config: &NormalizationConfig) -> Result<Matrix> {
    match config.scope {
        NormScope::Pool => Ok(normalize(raw, config)?.normalized),
        NormScope::Tile => {
            let mut out = Matrix::zeros(raw.rows(), raw.cols());
            for tile in normalize_streamed(raw, config)? {
                let n = &tile.normalized;
                for i in 0..n.rows() {
                    for j in 0..n.cols() {
                        out[(tile.row_offset + i, tile.col_offset + j)] = n[(i, j)];
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Gradient of a scalar through pool-scope normalization: maps `dL/dS` to
/// `dL/df`.
pub fn normalize_backward(grad_normalized: &Matrix, config: &NormalizationConfig) -> Matrix {
    if !config.enabled {
        return grad_normalized.clone();
    }
    let (m, n) = (grad_normalized.rows(), grad_normalized.cols());
    let a = config.alpha;
    let row_sums: Vec<f64> = (0..m)
        .map(|i| grad_normalized.row(i).iter().sum())
        .collect();
    let mut col_sums = vec![0.0; n];
    for i in 0..m {
        for (c, v) in col_sums.iter_mut().zip(grad_normalized.row(i)) {
            *c += v;
        }
    }
    let total: f64 = row_sums.iter().sum();
    let shared = (2.0 * a - 1.0) * total / (m * n) as f64;
    let mut out = grad_normalized.clone();
    for i in 0..m {
        for j in 0..n {
            out[(i, j)] += -a * (row_sums[i] / n as f64 + col_sums[j] / m as f64) + shared;
        }
    }
    out
}

fn sub_matrix(m: &Matrix, rows: Range<usize>, cols: Range<usize>) -> Matrix {
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for i in rows.clone() {
        data.extend_from_slice(&m.row(i)[cols.clone()]);
    }
    Matrix::from_vec(rows.len(), cols.len(), data).expect("block shape")
}
