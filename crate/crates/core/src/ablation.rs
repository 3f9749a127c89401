//! Pooling × normalization ablation grids.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::normalize::NormalizationConfig;
use crate::retrieval::{evaluate_retrieval_with, RetrievalSettings, RetrievalTask};
use crate::similarity::ScoreMode;

pub use crate::similarity::{avg_pool_similarity, Pooling};

/// One retrieval task tagged with the seed that produced it.
#[derive(Debug, Clone)]
pub struct AblationTask {
    pub seed: u64,
    pub task: RetrievalTask,
}

#[derive(Debug, Clone)]
pub struct AblationGrid {
    pub pooling: Vec<Pooling>,
    /// `true` = normalization on.
    pub normalization: Vec<bool>,
    /// Strengths tried for the normalized cells.
    pub alphas: Vec<f64>,
    pub tasks: Vec<AblationTask>,
    /// Scope and tile size for the normalized cells.
    pub norm_template: NormalizationConfig,
    pub mode: ScoreMode,
}

impl AblationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.pooling.is_empty() || self.normalization.is_empty() || self.tasks.is_empty() {
            return Err(Error::EmptyInput("ablation axis"));
        }
        if self.normalization.contains(&true) && self.alphas.is_empty() {
            return Err(Error::EmptyInput("alpha axis"));
        }
        for &a in &self.alphas {
            NormalizationConfig {
                alpha: a,
                ..self.norm_template
            }
            .validate()?;
        }
        Ok(())
    }

    /// Cells in evaluation order: task, pooling, normalization off, then each
    /// alpha with normalization on.
    pub fn cells(&self) -> Vec<AblationCell> {
        let mut out = Vec::new();
        for (t, task) in self.tasks.iter().enumerate() {
            for &pooling in &self.pooling {
                for &on in &self.normalization {
                    let alphas: Vec<Option<f64>> = if on {
                        self.alphas.iter().copied().map(Some).collect()
                    } else {
                        alloc::vec![None]
                    };
                    for alpha in alphas {
                        out.push(AblationCell {
                            task_index: t,
                            seed: task.seed,
                            pair_label: task.task.pair_label().into(),
                            pooling,
                            alpha,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationCell {
    pub task_index: usize,
    pub seed: u64,
    pub pair_label: String,
    pub pooling: Pooling,
    /// `None` = normalization off.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationRow {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub cell: AblationCell,
    pub accuracy: f64,
    pub ties: usize,
}

/// Retrieval settings for one cell.
pub fn cell_settings(grid: &AblationGrid, cell: &AblationCell) -> RetrievalSettings {
    let norm = match cell.alpha {
        Some(alpha) => NormalizationConfig {
            alpha,
            enabled: true,
            ..grid.norm_template
        },
        None => NormalizationConfig {
            enabled: false,
            ..grid.norm_template
        },
    };
    RetrievalSettings {
        pooling: cell.pooling,
        mode: grid.mode,
        norm,
        ..Default::default()
    }
}

pub fn evaluate_cell(grid: &AblationGrid, cell: &AblationCell) -> Result<AblationRow> {
    let task = &grid.tasks[cell.task_index].task;
    let outcome = evaluate_retrieval_with(task, &cell_settings(grid, cell), None)?;
    Ok(AblationRow {
        cell: cell.clone(),
        accuracy: outcome.accuracy,
        ties: outcome.ties,
    })
}

/// Evaluates every cell; rows come back in [`AblationGrid::cells`] order.
pub fn run_grid(grid: &AblationGrid) -> Result<Vec<AblationRow>> {
    grid.validate()?;
    let cells = grid.cells();
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<AblationRow>> = {
        use rayon::prelude::*;
        cells.par_iter().map(|c| evaluate_cell(grid, c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<AblationRow>> = cells.iter().map(|c| evaluate_cell(grid, c)).collect();
    rows.into_iter().collect()
}

/// Plain-text grid: one line per task and pooling, one column per
/// normalization setting.
pub fn render_grid(rows: &[AblationRow]) -> String {
    use core::fmt::Write;
    let mut columns: Vec<Option<f64>> = Vec::new();
    for r in rows {
        if !columns.iter().any(|c| same_alpha(*c, r.cell.alpha)) {
            columns.push(r.cell.alpha);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<24}{:<16}", "task", "pooling");
    for c in &columns {
        match c {
            None => {
                let _ = write!(out, "{:>12}", "w/o norm");
            }
            Some(a) => {
                let _ = write!(out, "{:>12}", alloc::format!("norm a={a}"));
            }
        }
    }
    out.push('\n');
    let mut keys: Vec<(usize, Pooling)> = Vec::new();
    for r in rows {
        let key = (r.cell.task_index, r.cell.pooling);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (task_index, pooling) in keys {
        let first = rows
            .iter()
            .find(|r| r.cell.task_index == task_index && r.cell.pooling == pooling)
            .expect("key came from rows");
        let label = alloc::format!("{} (seed {})", first.cell.pair_label, first.cell.seed);
        let _ = write!(out, "{:<24}{:<16}", label, alloc::format!("{pooling:?}"));
        for c in &columns {
            match rows.iter().find(|r| {
                r.cell.task_index == task_index
                    && r.cell.pooling == pooling
                    && same_alpha(r.cell.alpha, *c)
            }) {
                Some(r) => {
                    let _ = write!(out, "{:>12.4}", r.accuracy * 100.0);
                }
                None => {
                    let _ = write!(out, "{:>12}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn same_alpha(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        _ => false,
    }
}
