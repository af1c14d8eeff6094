//! The XSIM image container: 16-bit grayscale, dependency-free layout.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset 0   magic  0x58 0x53 0x49 0x4D  ("XSIM")
//! offset 4   version byte (0x01)
//! offset 5   u32 width
//! offset 9   u32 height
//! offset 13  width * height u16 values, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatErrorKind, Result};

pub const XSIM_MAGIC: [u8; 4] = *b"XSIM";
pub const XSIM_VERSION: u8 = 0x01;

/// A quantized detector image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticImage {
    pub width: u32,
    pub height: u32,
    /// Row-major intensities, `width * height` values.
    pub values: Vec<u16>,
}

impl SyntheticImage {
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.values[row * self.width as usize + col]
    }

    pub fn min_max_mean(&self) -> (u16, u16, f64) {
        let mut lo = u16::MAX;
        let mut hi = 0u16;
        let mut sum = 0.0f64;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v as f64;
        }
        (lo, hi, sum / self.values.len().max(1) as f64)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.values.len() * 2);
        out.extend_from_slice(&XSIM_MAGIC);
        out.push(XSIM_VERSION);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a byte buffer; `origin` names the source in errors.
    pub fn decode(bytes: &[u8], origin: &str) -> Result<SyntheticImage> {
        let fail = |offset: u64, kind: FormatErrorKind| Error::Format {
            path: origin.to_string(),
            offset,
            kind,
        };
        if bytes.len() < 4 || bytes[..4] != XSIM_MAGIC {
            return Err(fail(0, FormatErrorKind::BadMagic));
        }
        if bytes.len() < 5 {
            return Err(fail(4, FormatErrorKind::Truncated));
        }
        if bytes[4] != XSIM_VERSION {
            return Err(fail(4, FormatErrorKind::BadVersion));
        }
        if bytes.len() < 13 {
            return Err(fail(bytes.len() as u64, FormatErrorKind::Truncated));
        }
        let width = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
        let count = (width as u64)
            .checked_mul(height as u64)
            .filter(|&n| n <= (usize::MAX as u64) / 2)
            .ok_or_else(|| fail(5, FormatErrorKind::DimensionOverflow))?;
        let expected = 13 + count as usize * 2;
        if bytes.len() != expected {
            return Err(fail(
                bytes.len().min(expected) as u64,
                FormatErrorKind::Truncated,
            ));
        }
        let values = bytes[13..]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Ok(SyntheticImage {
            width,
            height,
            values,
        })
    }
}

/// Writes an image to disk in XSIM format.
pub fn write_image(path: &Path, image: &SyntheticImage) -> Result<()> {
    fs::write(path, image.encode()).map_err(|e| Error::io(path, e))
}

/// Reads an XSIM file.
pub fn read_image(path: &Path) -> Result<SyntheticImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    SyntheticImage::decode(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_layout_is_exactly_21_bytes() {
        let img = SyntheticImage {
            width: 2,
            height: 2,
            values: vec![0, 1, 65535, 42],
        };
        let bytes = img.encode();
        assert_eq!(bytes.len(), 21);
        assert_eq!(&bytes[..4], b"XSIM");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &2u32.to_le_bytes());
        assert_eq!(&bytes[13..], &[0, 0, 1, 0, 0xFF, 0xFF, 42, 0]);
        let back = SyntheticImage::decode(&bytes, "mem").unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn empty_file_reports_bad_magic_at_offset_zero() {
        match SyntheticImage::decode(&[], "mem") {
            Err(Error::Format { offset, kind, .. }) => {
                assert_eq!(offset, 0);
                assert_eq!(kind, FormatErrorKind::BadMagic);
            }
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn payload_length_mismatch_reports_truncated() {
        let img = SyntheticImage {
            width: 4,
            height: 4,
            values: vec![7; 16],
        };
        let mut bytes = img.encode();
        bytes.truncate(bytes.len() - 3);
        match SyntheticImage::decode(&bytes, "mem") {
            Err(Error::Format { kind, .. }) => assert_eq!(kind, FormatErrorKind::Truncated),
            other => panic!("expected truncated, got {other:?}"),
        }
        // over-long payload is also a mismatch
        let mut bytes = img.encode();
        bytes.push(0);
        assert!(matches!(
            SyntheticImage::decode(&bytes, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::Truncated,
                ..
            })
        ));
    }

    #[test]
    fn wrong_version_and_magic_are_distinguished() {
        let img = SyntheticImage {
            width: 1,
            height: 1,
            values: vec![9],
        };
        let mut bytes = img.encode();
        bytes[4] = 2;
        assert!(matches!(
            SyntheticImage::decode(&bytes, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::BadVersion,
                offset: 4,
                ..
            })
        ));
        let mut bytes = img.encode();
        bytes[0] = b'Y';
        assert!(matches!(
            SyntheticImage::decode(&bytes, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::BadMagic,
                offset: 0,
                ..
            })
        ));
    }

    #[test]
    fn dimension_overflow_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"XSIM");
        bytes.push(1);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            SyntheticImage::decode(&bytes, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::DimensionOverflow,
                offset: 5,
                ..
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.xsim");
        let img = SyntheticImage {
            width: 3,
            height: 2,
            values: vec![1, 2, 3, 4, 5, 6],
        };
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }
}
