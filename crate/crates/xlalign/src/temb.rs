//! The `TEMB` token-embedding container.
//!
//! ```text
//! header:  "TEMB" | version u16 = 1 | dtype u8 = 1 (f32) | dim u32 | records u64
//! record:  id_len u16 | id (UTF-8) | token_count u32 | token_count·dim f32, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use log::warn;
use xlalign_core::{SentenceEmbedding, TokenEmbeddingSet, DEFAULT_MAX_SEQ_LEN};

use crate::error::{FormatError, Result};

pub const MAGIC: [u8; 4] = *b"TEMB";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8;

/// Encoded size of one record.
pub fn record_len(id_len: usize, token_count: usize, dim: usize) -> usize {
    2 + id_len + 4 + 4 * token_count * dim
}

/// Serializes `set`; nothing is written when the set breaks an invariant.
pub fn write_embedding_set<W: Write>(set: &TokenEmbeddingSet, mut sink: W) -> Result<usize> {
    set.validate(DEFAULT_MAX_SEQ_LEN)?;
    for e in set.entries() {
        if e.id().len() > u16::MAX as usize {
            return Err(xlalign_core::Error::InvalidEmbedding(format!(
                "id of {} bytes does not fit the u16 length field",
                e.id().len()
            ))
            .into());
        }
    }
    let dim = u32::try_from(set.dim())
        .map_err(|_| xlalign_core::Error::InvalidEmbedding("dim does not fit in u32".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(DTYPE_F32);
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&(set.len() as u64).to_le_bytes());
    sink.write_all(&buf)?;
    let mut written = buf.len();
    for e in set.entries() {
        buf.clear();
        buf.extend_from_slice(&(e.id().len() as u16).to_le_bytes());
        buf.extend_from_slice(e.id().as_bytes());
        buf.extend_from_slice(&(e.token_count() as u32).to_le_bytes());
        for v in e.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len();
    }
    sink.flush()?;
    Ok(written)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Options for [`read_embedding_set_with`].
#[derive(Debug, Clone)]
pub struct ReadOptions {
    pub language: String,
    pub provenance: String,
    /// Longer sentences are truncated with a warning.
    pub max_seq_len: usize,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            language: String::new(),
            provenance: String::new(),
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
        }
    }
}

pub fn read_embedding_set<R: Read>(source: R) -> Result<TokenEmbeddingSet> {
    read_embedding_set_with(source, &ReadOptions::default())
}

pub fn read_embedding_set_with<R: Read>(
    mut source: R,
    opts: &ReadOptions,
) -> Result<TokenEmbeddingSet> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode(&bytes, opts)
}

fn decode(bytes: &[u8], opts: &ReadOptions) -> Result<TokenEmbeddingSet> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4).ok_or(FormatError::TruncatedHeader)?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic {
            expected: MAGIC,
            found: magic.to_vec(),
        });
    }
    let version = cur.u16().ok_or(FormatError::TruncatedHeader)?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let dtype = cur.take(1).ok_or(FormatError::TruncatedHeader)?[0];
    if dtype != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(dtype));
    }
    let dim = cur.u32().ok_or(FormatError::TruncatedHeader)? as usize;
    let count = cur.u64().ok_or(FormatError::TruncatedHeader)?;

    let mut set = TokenEmbeddingSet::new(dim, opts.language.clone(), opts.provenance.clone())?;
    for index in 0..count {
        let truncated = FormatError::TruncatedRecord { index };
        let id_len = cur.u16().ok_or(truncated)? as usize;
        let id = cur
            .take(id_len)
            .ok_or(FormatError::TruncatedRecord { index })?;
        let id = std::str::from_utf8(id).map_err(|_| FormatError::InvalidId { index })?;
        let tokens = cur.u32().ok_or(FormatError::TruncatedRecord { index })? as usize;
        let n = tokens
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(FormatError::TruncatedRecord { index })?;
        let raw = cur.take(n).ok_or(FormatError::TruncatedRecord { index })?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite { index });
        }
        let mut entry = SentenceEmbedding::new(id, dim, values)?;
        if entry.truncate(opts.max_seq_len) {
            warn!(
                "sentence {:?} has {} tokens; truncated to {}",
                id, tokens, opts.max_seq_len
            );
        }
        set.push(entry)?;
    }
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes {
            count: bytes.len() - cur.pos,
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> TokenEmbeddingSet {
        let e = SentenceEmbedding::from_rows("s0", &[[1.0f32, 0.0], [0.0, 1.0]]).unwrap();
        TokenEmbeddingSet::with_entries(2, "", "", [e]).unwrap()
    }

    #[test]
    fn empty_set_is_header_only() {
        let set = TokenEmbeddingSet::new(4, "", "").unwrap();
        let mut buf = Vec::new();
        assert_eq!(write_embedding_set(&set, &mut buf).unwrap(), HEADER_LEN);
        assert_eq!(read_embedding_set(&buf[..]).unwrap(), set);
    }

    #[test]
    fn single_record_round_trip() {
        let set = two_by_two();
        let mut buf = Vec::new();
        let n = write_embedding_set(&set, &mut buf).unwrap();
        assert_eq!(n, HEADER_LEN + record_len(2, 2, 2));
        assert_eq!(read_embedding_set(&buf[..]).unwrap(), set);
    }

    #[test]
    fn corrupted_magic() {
        let mut buf = Vec::new();
        write_embedding_set(&two_by_two(), &mut buf).unwrap();
        buf[0] = b'X';
        let err = read_embedding_set(&buf[..]).unwrap_err();
        assert!(err.to_string().starts_with("bad magic"), "{err}");
    }

    #[test]
    fn version_and_dtype_checked() {
        let mut buf = Vec::new();
        write_embedding_set(&two_by_two(), &mut buf).unwrap();
        let mut v2 = buf.clone();
        v2[4] = 2;
        assert!(matches!(
            read_embedding_set(&v2[..]),
            Err(FormatError::UnsupportedVersion(2))
        ));
        let mut f16 = buf.clone();
        f16[6] = 2;
        assert!(matches!(
            read_embedding_set(&f16[..]),
            Err(FormatError::UnsupportedDtype(2))
        ));
        assert!(matches!(
            read_embedding_set(&buf[..10]),
            Err(FormatError::TruncatedHeader)
        ));
    }

    #[test]
    fn non_finite_values_rejected() {
        let mut buf = Vec::new();
        write_embedding_set(&two_by_two(), &mut buf).unwrap();
        let first_value = HEADER_LEN + 2 + 2 + 4;
        buf[first_value..first_value + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            read_embedding_set(&buf[..]),
            Err(FormatError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn long_sentences_truncate_on_read() {
        let rows: Vec<[f32; 1]> = (0..5).map(|i| [i as f32]).collect();
        let e = SentenceEmbedding::from_rows("s", &rows).unwrap();
        let set = TokenEmbeddingSet::with_entries(1, "", "", [e]).unwrap();
        let mut buf = Vec::new();
        write_embedding_set(&set, &mut buf).unwrap();
        let opts = ReadOptions {
            max_seq_len: 3,
            ..Default::default()
        };
        let back = read_embedding_set_with(&buf[..], &opts).unwrap();
        assert_eq!(back.entries()[0].token_count(), 3);
    }

    #[test]
    fn over_long_sentences_are_not_written() {
        let rows: Vec<[f32; 1]> = (0..=DEFAULT_MAX_SEQ_LEN).map(|i| [i as f32]).collect();
        let e = SentenceEmbedding::from_rows("s", &rows).unwrap();
        let set = TokenEmbeddingSet::with_entries(1, "", "", [e]).unwrap();
        let mut buf = Vec::new();
        assert!(write_embedding_set(&set, &mut buf).is_err());
        assert!(buf.is_empty());
    }
}
