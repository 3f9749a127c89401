//! Embedding files together with their sidecar manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use xlalign_core::TokenEmbeddingSet;

use crate::error::Result;
use crate::temb::{self, ReadOptions};
use crate::tsv::{self, ManifestRecord};

/// Reads a `.temb` file. When a sidecar manifest exists and all its records
/// agree on `lang`, that becomes the set's language.
pub fn load_embeddings(path: &Path) -> Result<TokenEmbeddingSet> {
    let sidecar = tsv::sidecar_path(path);
    let mut language = String::new();
    if sidecar.is_file() {
        let records = tsv::read_manifest(BufReader::new(File::open(&sidecar)?), &sidecar)?;
        let mut langs = records.iter().filter_map(|r| r.lang.as_deref());
        if let Some(first) = langs.next() {
            if langs.all(|l| l == first) {
                language = first.to_string();
            } else {
                log::warn!("{}: mixed languages in manifest", sidecar.display());
            }
        }
    }
    let opts = ReadOptions {
        language,
        provenance: path.display().to_string(),
        ..Default::default()
    };
    temb::read_embedding_set_with(BufReader::new(File::open(path)?), &opts)
}

/// Writes the container and a sidecar manifest with `id`, `lang` and the
/// token count of every sentence. Returns the container size in bytes.
pub fn save_embeddings(set: &TokenEmbeddingSet, path: &Path) -> Result<usize> {
    let n = temb::write_embedding_set(set, BufWriter::new(File::create(path)?))?;
    let lang = (!set.language().is_empty()).then(|| set.language().to_string());
    let records: Vec<ManifestRecord> = set
        .entries()
        .iter()
        .map(|e| ManifestRecord {
            id: e.id().to_string(),
            lang: lang.clone(),
            tokens: Some(e.token_count()),
            ..Default::default()
        })
        .collect();
    let sidecar = tsv::sidecar_path(path);
    tsv::write_manifest(BufWriter::new(File::create(sidecar)?), &records)?;
    Ok(n)
}

pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    tsv::read_pairs(BufReader::new(File::open(path)?), path)
}
