//! Pair manifests: a CSV of image/pose path quadruples defining a dataset.
//!
//! Header `image_a,pose_a,image_b,pose_b`, one pair per row. Paths are
//! stored as written and resolved against the manifest's directory on load.
//! Paths must not contain commas.

use crate::error::{Error, Result};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_HEADER: &str = "image_a,pose_a,image_b,pose_b";

#[derive(Debug, Clone, PartialEq)]
pub struct PairPaths {
    pub image_a: PathBuf,
    pub pose_a: PathBuf,
    pub image_b: PathBuf,
    pub pose_b: PathBuf,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PairPaths>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == MANIFEST_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "{}: expected header {MANIFEST_HEADER:?}, got {other:?}",
                path.display()
            )))
        }
    }
    let mut pairs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "{}: line {}: expected 4 fields, got {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        pairs.push(PairPaths {
            image_a: base.join(fields[0].trim()),
            pose_a: base.join(fields[1].trim()),
            image_b: base.join(fields[2].trim()),
            pose_b: base.join(fields[3].trim()),
        });
    }
    Ok(pairs)
}

/// Writes a manifest with the given relative path rows.
pub fn write_manifest(path: impl AsRef<Path>, rows: &[[String; 4]]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for row in rows {
        for field in row {
            if field.contains(',') {
                return Err(Error::invalid_argument(format!(
                    "manifest path contains a comma: {field}"
                )));
            }
        }
        text.push_str(&format!("{},{},{},{}\n", row[0], row[1], row[2], row[3]));
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_resolves_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        let rows = vec![
            [
                "images/a0.png".to_string(),
                "poses/a0.json".to_string(),
                "images/b0.png".to_string(),
                "poses/b0.json".to_string(),
            ],
        ];
        write_manifest(&path, &rows).unwrap();
        let pairs = read_manifest(&path).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].image_a, dir.path().join("images/a0.png"));
        assert_eq!(pairs[0].pose_b, dir.path().join("poses/b0.json"));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        fs::write(&path, "image_a,pose_a,image_b,pose_b\nonly,three,fields\n").unwrap();
        assert!(read_manifest(&path).is_err());
        fs::write(&path, "wrong header\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }
}
