//! `EMB1` matrix interchange: magic `EMB1`, `u32` rows, `u32` cols, the
//! `f32` little-endian row-major payload, then a `u64` checksum equal to the
//! sum of the payload byte values modulo 2^64.

use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER: usize = 12;

/// Sum of byte values modulo 2^64.
pub(crate) fn byte_checksum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, &b| acc.wrapping_add(b as u64))
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn emb_bytes(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows).map_err(|_| format_err("too many rows"))?;
    let cols = u32::try_from(m.cols).map_err(|_| format_err("too many columns"))?;
    if m.data.len() != m.rows * m.cols {
        return Err(format_err("matrix shape does not match its data"));
    }
    let mut out = Vec::with_capacity(HEADER + m.data.len() * 4 + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let sum = byte_checksum(&out[HEADER..]);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn parse_emb(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER + 8 {
        return Err(format_err("truncated EMB1 file"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err("bad EMB1 magic"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER..bytes.len() - 8];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err("EMB1 shape overflows"))?;
    if payload.len() != expected {
        return Err(format_err(format!(
            "EMB1 payload is {} bytes but {rows}x{cols} needs {expected}",
            payload.len()
        )));
    }
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if stored != byte_checksum(payload) {
        return Err(format_err("EMB1 checksum mismatch"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn read_emb(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_emb(&bytes)
}

pub fn write_emb(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, emb_bytes(m)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ones_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let m = Matrix::new(3, 4, vec![1.0; 12]).unwrap();
        write_emb(&path, &m).unwrap();
        assert_eq!(read_emb(&path).unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let m = Matrix::new(3, 4, vec![1.0; 12]).unwrap();
        let mut bytes = emb_bytes(&m).unwrap();
        bytes[HEADER + 5] ^= 0x01;
        assert!(matches!(parse_emb(&bytes), Err(Error::Format(_))));

        let mut bytes = emb_bytes(&m).unwrap();
        bytes[4] = 4; // claim 4 rows
        assert!(matches!(parse_emb(&bytes), Err(Error::Format(_))));

        let mut bytes = emb_bytes(&m).unwrap();
        bytes[0] = b'X';
        assert!(matches!(parse_emb(&bytes), Err(Error::Format(_))));
        assert!(parse_emb(&bytes[..10]).is_err());
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(rows in 0usize..64, cols in 0usize..64, seed in any::<u32>()) {
            let data: Vec<f32> = (0..rows * cols)
                .map(|i| f32::from_bits((i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed) & 0x3fff_ffff))
                .collect();
            let m = Matrix::new(rows, cols, data).unwrap();
            let back = parse_emb(&emb_bytes(&m).unwrap()).unwrap();
            prop_assert_eq!(back.rows, rows);
            prop_assert!(back.data.iter().zip(&m.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
