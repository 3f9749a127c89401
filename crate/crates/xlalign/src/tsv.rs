//! Line-oriented text formats: gold/prediction TSV, bitext TSV and JSONL
//! sidecar manifests.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xlalign_core::corpus::BitextPair;

use crate::error::{FormatError, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// `src_id<TAB>tgt_id` per line; blank lines are skipped.
pub fn read_pairs<R: BufRead>(source: R, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(t), None) if !s.is_empty() && !t.is_empty() => {
                out.push((s.to_string(), t.to_string()))
            }
            _ => return Err(parse_err(path, n + 1, "expected src_id<TAB>tgt_id")),
        }
    }
    Ok(out)
}

pub fn write_pairs<'a, W: Write>(
    mut sink: W,
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<()> {
    for (s, t) in pairs {
        writeln!(sink, "{s}\t{t}")?;
    }
    sink.flush()?;
    Ok(())
}

/// `id<TAB>src_text<TAB>tgt_text` per line, tagged with `pair_label`.
pub fn read_bitext<R: BufRead>(
    source: R,
    path: &Path,
    pair_label: &str,
) -> Result<Vec<BitextPair>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                n + 1,
                "expected id<TAB>src_text<TAB>tgt_text",
            ));
        }
        let pair = BitextPair::new(cols[0], cols[1], cols[2], pair_label)
            .map_err(|e| parse_err(path, n + 1, e.to_string()))?;
        out.push(pair);
    }
    Ok(out)
}

pub fn write_bitext<W: Write>(mut sink: W, pairs: &[BitextPair]) -> Result<()> {
    for p in pairs {
        writeln!(sink, "{}\t{}\t{}", p.id, p.src_text, p.tgt_text)?;
    }
    sink.flush()?;
    Ok(())
}

/// One line of a sidecar manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_tokens: Option<usize>,
}

pub fn read_manifest<R: BufRead>(source: R, path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, n + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(mut sink: W, records: &[ManifestRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Sidecar path for an embedding or bitext file: same stem, `.jsonl`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("jsonl")
}
