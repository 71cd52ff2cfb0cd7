//! NOLD binary container: a fixed 64-byte header followed by little-endian
//! `f32` samples, row-major, complex values interleaved as `(re, im)`.
//!
//! Header layout (all integers little-endian `u32`):
//!
//! | offset | field    |
//! |--------|----------|
//! | 0      | magic `NOLD` |
//! | 4      | version  |
//! | 8      | flags (bit 0: complex) |
//! | 12     | channels |
//! | 16     | rows     |
//! | 20     | cols     |
//! | 24..64 | zero     |

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"NOLD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;
const FLAG_COMPLEX: u32 = 1;

#[derive(Debug, Error)]
pub enum NoldError {
    #[error("not a NOLD container (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported NOLD version {0}")]
    UnsupportedVersion(u32),
    #[error("payload holds {got} bytes, header implies {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("data length {got} does not match header element count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoldHeader {
    pub complex: bool,
    pub channels: u32,
    pub rows: u32,
    pub cols: u32,
}

impl NoldHeader {
    /// Number of `f32` samples in the payload.
    pub fn samples(&self) -> usize {
        let per = if self.complex { 2 } else { 1 };
        self.channels as usize * self.rows as usize * self.cols as usize * per
    }
}

pub fn encode(header: &NoldHeader, data: &[f32]) -> Result<Vec<u8>, NoldError> {
    if data.len() != header.samples() {
        return Err(NoldError::LengthMismatch { expected: header.samples(), got: data.len() });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    out.extend_from_slice(&MAGIC);
    let flags = if header.complex { FLAG_COMPLEX } else { 0 };
    for word in [VERSION, flags, header.channels, header.rows, header.cols] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    out.resize(HEADER_LEN, 0);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(NoldHeader, Vec<f32>), NoldError> {
    if bytes.len() < HEADER_LEN {
        return Err(NoldError::Truncated { expected: HEADER_LEN, got: bytes.len() });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(NoldError::BadMagic(magic));
    }
    let word = |k: usize| u32::from_le_bytes([bytes[4 * k], bytes[4 * k + 1], bytes[4 * k + 2], bytes[4 * k + 3]]);
    let version = word(1);
    if version != VERSION {
        return Err(NoldError::UnsupportedVersion(version));
    }
    let header = NoldHeader { complex: word(2) & FLAG_COMPLEX != 0, channels: word(3), rows: word(4), cols: word(5) };
    let expected = HEADER_LEN + 4 * header.samples();
    if bytes.len() != expected {
        return Err(NoldError::Truncated { expected, got: bytes.len() });
    }
    let data = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header, data))
}

pub fn write(path: &Path, header: &NoldHeader, data: &[f32]) -> Result<(), NoldError> {
    fs::write(path, encode(header, data)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(NoldHeader, Vec<f32>), NoldError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_layout() {
        let h = NoldHeader { complex: true, channels: 2, rows: 3, cols: 2 };
        let data: Vec<f32> = (0..24).map(|k| k as f32 * 0.5 - 3.0).collect();
        let bytes = encode(&h, &data).unwrap();
        assert_eq!(bytes.len(), 64 + 96);
        assert_eq!(&bytes[..4], b"NOLD");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[64..68], &(-3.0f32).to_le_bytes());
        assert_eq!(decode(&bytes).unwrap(), (h, data));
    }

    #[test]
    fn rejects_corruption() {
        let h = NoldHeader { complex: false, channels: 1, rows: 2, cols: 2 };
        let mut bytes = encode(&h, &[1.0; 4]).unwrap();
        assert!(matches!(decode(&bytes[..70]), Err(NoldError::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(NoldError::BadMagic(_))));
        assert!(matches!(encode(&h, &[1.0; 3]), Err(NoldError::LengthMismatch { .. })));
    }
}
