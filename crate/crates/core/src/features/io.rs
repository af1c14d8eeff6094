//! Binary containers for codebooks (XCBK) and feature matrices (XFTR).
//!
//! XCBK layout: magic "XCBK", version byte, u32 K, u32 d, then `K * d`
//! little-endian f64 centroid values, row-major.
//!
//! XFTR layout: magic "XFTR", version byte, u32 rows, u32 cols, `rows * cols`
//! little-endian f64 row-major, then the id table keying each row to its
//! manifest id: per row a u32 byte length and the UTF-8 id.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::kmeans::Codebook;
use crate::error::{Error, FormatErrorKind, Result};

pub const XCBK_MAGIC: [u8; 4] = *b"XCBK";
pub const XFTR_MAGIC: [u8; 4] = *b"XFTR";
pub const FORMAT_VERSION: u8 = 0x01;

/// A feature matrix keyed by manifest ids (row `i` belongs to `ids[i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub ids: Vec<String>,
    pub matrix: Array2<f64>,
}

impl FeatureFile {
    pub fn row_for(&self, id: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.ids
            .iter()
            .position(|x| x == id)
            .map(|i| self.matrix.row(i))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, kind: FormatErrorKind) -> Error {
        Error::Format {
            path: self.origin.to_string(),
            offset: offset as u64,
            kind,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(self.fail(self.bytes.len(), FormatErrorKind::Truncated));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.bytes.len() < 4 || &self.bytes[..4] != magic {
            return Err(self.fail(0, FormatErrorKind::BadMagic));
        }
        self.offset = 4;
        let version = self.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(self.fail(4, FormatErrorKind::BadVersion));
        }
        Ok(())
    }

    fn done(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(self.fail(self.offset, FormatErrorKind::Truncated));
        }
        Ok(())
    }
}

pub fn encode_codebook(codebook: &Codebook) -> Vec<u8> {
    let (k, d) = (codebook.k(), codebook.dim());
    let mut out = Vec::with_capacity(13 + k * d * 8);
    out.extend_from_slice(&XCBK_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in codebook.centroids.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_codebook(bytes: &[u8], origin: &str) -> Result<Codebook> {
    let mut r = Reader {
        bytes,
        offset: 0,
        origin,
    };
    r.header(&XCBK_MAGIC)?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let values = r.f64s(k * d)?;
    r.done()?;
    Ok(Codebook {
        centroids: Array2::from_shape_vec((k, d), values).expect("k*d values"),
        usage: vec![0; k],
        objectives: Vec::new(),
    })
}

pub fn write_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    fs::write(path, encode_codebook(codebook)).map_err(|e| Error::io(path, e))
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_codebook(&bytes, &path.display().to_string())
}

pub fn encode_features(features: &FeatureFile) -> Vec<u8> {
    let (rows, cols) = features.matrix.dim();
    assert_eq!(rows, features.ids.len(), "one id per row");
    let mut out = Vec::with_capacity(13 + rows * cols * 8);
    out.extend_from_slice(&XFTR_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in features.matrix.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in &features.ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], origin: &str) -> Result<FeatureFile> {
    let mut r = Reader {
        bytes,
        offset: 0,
        origin,
    };
    r.header(&XFTR_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if (rows as u64)
        .checked_mul(cols as u64)
        .map(|n| n > usize::MAX as u64 / 8)
        .unwrap_or(true)
    {
        return Err(Error::Format {
            path: origin.to_string(),
            offset: 5,
            kind: FormatErrorKind::DimensionOverflow,
        });
    }
    let values = r.f64s(rows * cols)?;
    let mut ids = Vec::with_capacity(rows);
    for _ in 0..rows {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let id = String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            path: origin.to_string(),
            offset: (r.offset - len) as u64,
            kind: FormatErrorKind::Truncated,
        })?;
        ids.push(id);
    }
    r.done()?;
    Ok(FeatureFile {
        ids,
        matrix: Array2::from_shape_vec((rows, cols), values).expect("rows*cols values"),
    })
}

pub fn write_features(path: &Path, features: &FeatureFile) -> Result<()> {
    fs::write(path, encode_features(features)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_codebook() -> Codebook {
        Codebook {
            centroids: Array2::from_shape_fn((3, 5), |(i, j)| i as f64 * 10.0 + j as f64 * 0.25),
            usage: vec![1, 2, 3],
            objectives: vec![1.0, 0.5],
        }
    }

    #[test]
    fn codebook_round_trips_bit_exactly() {
        let cb = sample_codebook();
        let bytes = encode_codebook(&cb);
        let back = decode_codebook(&bytes, "mem").unwrap();
        assert_eq!(back.centroids, cb.centroids);
        assert_eq!(encode_codebook(&back), bytes);
    }

    #[test]
    fn features_round_trip_with_ids() {
        let f = FeatureFile {
            ids: vec!["img_000000".into(), "img_000001".into()],
            matrix: Array2::from_shape_fn((2, 4), |(i, j)| (i * 4 + j) as f64 * 0.5 - 1.0),
        };
        let bytes = encode_features(&f);
        let back = decode_features(&bytes, "mem").unwrap();
        assert_eq!(back, f);
        assert_eq!(back.row_for("img_000001").unwrap()[0], 1.0);
        assert!(back.row_for("missing").is_none());
    }

    #[test]
    fn corrupted_magic_and_truncation_are_reported() {
        let cb = sample_codebook();
        let mut bytes = encode_codebook(&cb);
        bytes[1] = b'Z';
        assert!(matches!(
            decode_codebook(&bytes, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::BadMagic,
                offset: 0,
                ..
            })
        ));
        let bytes = encode_codebook(&cb);
        assert!(matches!(
            decode_codebook(&bytes[..bytes.len() - 5], "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::Truncated,
                ..
            })
        ));
        // trailing garbage is a mismatch too
        let mut bytes = encode_codebook(&cb);
        bytes.push(7);
        assert!(matches!(
            decode_codebook(&bytes, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::Truncated,
                ..
            })
        ));
    }

    #[test]
    fn feature_file_errors() {
        let f = FeatureFile {
            ids: vec!["a".into()],
            matrix: Array2::zeros((1, 2)),
        };
        let bytes = encode_features(&f);
        assert!(matches!(
            decode_features(&bytes[..6], "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::Truncated,
                ..
            })
        ));
        let mut wrong = bytes.clone();
        wrong[0] = b'Q';
        assert!(decode_features(&wrong, "mem").is_err());
    }
}
