//! `TSCR` projection checkpoints.
//!
//! ```text
//! "TSCR" | version u16 = 1 | in_dim u32 | out_dim u32 | in_dim·out_dim f32, row-major
//! ```

use std::io::{Read, Write};

use xlalign_core::{Matrix, ScorerParams};

use crate::error::{FormatError, Result};

pub const MAGIC: [u8; 4] = *b"TSCR";
pub const VERSION: u16 = 1;

/// Weights are narrowed to `f32` on write.
pub fn write_checkpoint<W: Write>(params: &ScorerParams, mut sink: W) -> Result<usize> {
    let mut buf = Vec::with_capacity(14 + 4 * params.in_dim() * params.out_dim());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.in_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(params.out_dim() as u32).to_le_bytes());
    for &w in params.weight().as_slice() {
        buf.extend_from_slice(&(w as f32).to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

pub fn read_checkpoint<R: Read>(mut source: R) -> Result<ScorerParams> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 14 {
        return Err(FormatError::TruncatedHeader);
    }
    if bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic {
            expected: MAGIC,
            found: bytes[..4].to_vec(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let in_dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let out_dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = &bytes[14..];
    let expected = in_dim * out_dim * 4;
    if body.len() < expected {
        return Err(FormatError::TruncatedRecord { index: 0 });
    }
    if body.len() > expected {
        return Err(FormatError::TrailingBytes {
            count: body.len() - expected,
        });
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite { index: 0 });
    }
    Ok(ScorerParams::new(Matrix::from_vec(in_dim, out_dim, data)?)?)
}
