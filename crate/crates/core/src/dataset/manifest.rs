//! JSON-Lines manifest: one entry per generated image.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One manifest line. Unknown fields are preserved across a read/write round
/// trip via the `extra` map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Path of the image file, relative to the dataset root.
    pub path: String,
    pub run_id: u32,
    pub seed: u64,
    /// Canonical attribute names, sorted.
    pub attributes: Vec<String>,
    /// Extended free-form tags, sorted.
    pub extended: Vec<String>,
    /// Stable hash of the serialized recipe.
    pub recipe_digest: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = Vec::new();
    for entry in entries {
        serde_json::to_writer(&mut out, entry).expect("manifest entry serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::ManifestLine {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, run: u32) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            path: format!("images/{id}.xsim"),
            run_id: run,
            seed: 42,
            attributes: vec!["Ring".into(), "Strong scattering".into()],
            extended: vec!["Ring: Isotropic".into()],
            recipe_digest: "00ff".into(),
            extra: Default::default(),
        }
    }

    #[test]
    fn round_trips_and_preserves_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut e = entry("img_000000", 0);
        e.extra.insert("future_field".into(), serde_json::json!({"x": 1}));
        write_manifest(&path, &[e.clone(), entry("img_000001", 1)]).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], e);
        assert_eq!(back[0].extra["future_field"]["x"], 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let good = serde_json::to_string(&entry("a", 0)).unwrap();
        fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
        match read_manifest(&path) {
            Err(Error::ManifestLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn blank_lines_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let good = serde_json::to_string(&entry("a", 0)).unwrap();
        fs::write(&path, format!("{good}\n\n")).unwrap();
        assert_eq!(read_manifest(&path).unwrap().len(), 1);
    }
}
