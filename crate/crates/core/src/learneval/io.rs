//! XSVM model container and report serialization.
//!
//! XSVM layout: magic "XSVM", version byte, u32 scorer count, u32 feature
//! dimension, then per scorer: u32 name length, UTF-8 name, f64 C, f64 bias,
//! `dim` little-endian f64 weights.

use std::fs;
use std::path::Path;

use super::folds::EvalReport;
use super::svm::{AttributeScorer, SvmModel};
use crate::error::{Error, FormatErrorKind, Result};

pub const XSVM_MAGIC: [u8; 4] = *b"XSVM";
pub const XSVM_VERSION: u8 = 0x01;

pub fn encode_svm(model: &SvmModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&XSVM_MAGIC);
    out.push(XSVM_VERSION);
    out.extend_from_slice(&(model.scorers.len() as u32).to_le_bytes());
    out.extend_from_slice(&(model.feature_dim as u32).to_le_bytes());
    for scorer in &model.scorers {
        out.extend_from_slice(&(scorer.name.len() as u32).to_le_bytes());
        out.extend_from_slice(scorer.name.as_bytes());
        out.extend_from_slice(&scorer.c.to_le_bytes());
        out.extend_from_slice(&scorer.bias.to_le_bytes());
        for w in &scorer.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

pub fn decode_svm(bytes: &[u8], origin: &str) -> Result<SvmModel> {
    let fail = |offset: usize, kind: FormatErrorKind| Error::Format {
        path: origin.to_string(),
        offset: offset as u64,
        kind,
    };
    if bytes.len() < 4 || bytes[..4] != XSVM_MAGIC {
        return Err(fail(0, FormatErrorKind::BadMagic));
    }
    if bytes.len() < 5 || bytes[4] != XSVM_VERSION {
        return Err(fail(4, FormatErrorKind::BadVersion));
    }
    let mut offset = 5usize;
    let take = |offset: &mut usize, n: usize| -> Result<&[u8]> {
        if *offset + n > bytes.len() {
            return Err(fail(bytes.len(), FormatErrorKind::Truncated));
        }
        let s = &bytes[*offset..*offset + n];
        *offset += n;
        Ok(s)
    };
    let n_scorers = u32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap()) as usize;
    let mut scorers = Vec::with_capacity(n_scorers);
    for _ in 0..n_scorers {
        let name_len = u32::from_le_bytes(take(&mut offset, 4)?.try_into().unwrap()) as usize;
        let name_bytes = take(&mut offset, name_len)?;
        let name = String::from_utf8(name_bytes.to_vec())
            .map_err(|_| fail(offset - name_len, FormatErrorKind::Truncated))?;
        let c = f64::from_le_bytes(take(&mut offset, 8)?.try_into().unwrap());
        let bias = f64::from_le_bytes(take(&mut offset, 8)?.try_into().unwrap());
        let weights = take(&mut offset, dim * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        scorers.push(AttributeScorer {
            name,
            weights,
            bias,
            c,
            objective_log: Vec::new(),
        });
    }
    if offset != bytes.len() {
        return Err(fail(offset, FormatErrorKind::Truncated));
    }
    Ok(SvmModel {
        feature_dim: dim,
        scorers,
        skipped: Vec::new(),
    })
}

pub fn write_svm(path: &Path, model: &SvmModel) -> Result<()> {
    fs::write(path, encode_svm(model)).map_err(|e| Error::io(path, e))
}

pub fn read_svm(path: &Path) -> Result<SvmModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_svm(&bytes, &path.display().to_string())
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::ManifestLine {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })
}
