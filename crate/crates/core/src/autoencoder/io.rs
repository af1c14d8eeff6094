//! XAEM model container.
//!
//! Layout: magic "XAEM", version byte, architecture header (u32 c1, u32 c2,
//! u32 bottleneck, u32 patch_size, all little-endian), then every parameter
//! tensor as little-endian f64 in declaration order.

use std::fs;
use std::path::Path;

use super::model::{AeArchitecture, AeModel};
use crate::error::{Error, FormatErrorKind, Result};

pub const XAEM_MAGIC: [u8; 4] = *b"XAEM";
pub const XAEM_VERSION: u8 = 0x01;

pub fn encode_model(model: &AeModel) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::with_capacity(21 + model.params.len() * 8);
    out.extend_from_slice(&XAEM_MAGIC);
    out.push(XAEM_VERSION);
    for v in [a.c1, a.c2, a.bottleneck, a.patch_size] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &model.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8], origin: &str) -> Result<AeModel> {
    let fail = |offset: u64, kind: FormatErrorKind| Error::Format {
        path: origin.to_string(),
        offset,
        kind,
    };
    if bytes.len() < 4 || bytes[..4] != XAEM_MAGIC {
        return Err(fail(0, FormatErrorKind::BadMagic));
    }
    if bytes.len() < 5 || bytes[4] != XAEM_VERSION {
        return Err(fail(4, FormatErrorKind::BadVersion));
    }
    if bytes.len() < 21 {
        return Err(fail(bytes.len() as u64, FormatErrorKind::Truncated));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let arch = AeArchitecture {
        c1: word(0) as usize,
        c2: word(1) as usize,
        bottleneck: word(2) as usize,
        patch_size: word(3) as usize,
    };
    arch.validate().map_err(|_| fail(5, FormatErrorKind::DimensionOverflow))?;
    let expected = 21 + arch.param_count() * 8;
    if bytes.len() != expected {
        return Err(fail(
            bytes.len().min(expected) as u64,
            FormatErrorKind::Truncated,
        ));
    }
    let params: Vec<f64> = bytes[21..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(AeModel {
        arch,
        params,
        train_log: Vec::new(),
    })
}

pub fn write_model(path: &Path, model: &AeModel) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<AeModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trips_bit_exactly() {
        let model = AeModel::init(AeArchitecture::tiny(), 17).unwrap();
        let bytes = encode_model(&model);
        let back = decode_model(&bytes, "mem").unwrap();
        assert_eq!(back.arch, model.arch);
        assert_eq!(back.params, model.params);
        assert_eq!(encode_model(&back), bytes);
    }

    #[test]
    fn corrupt_fixtures_report_kinds() {
        let model = AeModel::init(AeArchitecture::tiny(), 1).unwrap();
        let bytes = encode_model(&model);
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(
            decode_model(&bad, "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::BadMagic,
                ..
            })
        ));
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 1], "mem"),
            Err(Error::Format {
                kind: FormatErrorKind::Truncated,
                ..
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.xaem");
        let model = AeModel::init(AeArchitecture::tiny(), 4).unwrap();
        write_model(&path, &model).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.params, model.params);
    }
}
