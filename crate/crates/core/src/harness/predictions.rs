//! Prediction files: the interchange format between `infer` and `evaluate`.
//!
//! Tab-separated text with a format tag on the first line, `# key = value`
//! metadata lines, a column header, then one row per (sample, attribute)
//! prediction. Rows are written attribute-major in sorted order so files
//! diff cleanly.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

const PRED_FORMAT: &str = "#pedattr-predictions-v1";

/// Parsed prediction file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionFile {
    /// Free-form metadata from the `# key = value` lines.
    pub metadata: BTreeMap<String, String>,
    /// attribute name -> sample id -> predicted label (0 or 1).
    pub by_attribute: BTreeMap<String, BTreeMap<String, u8>>,
}

/// Writes predictions with the given metadata lines.
pub fn write_predictions(
    path: &Path,
    metadata: &BTreeMap<String, String>,
    by_attribute: &BTreeMap<String, BTreeMap<String, u8>>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(PRED_FORMAT);
    out.push('\n');
    for (k, v) in metadata {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str("id\tattribute\tlabel\n");
    for (attr, preds) in by_attribute {
        for (id, label) in preds {
            out.push_str(&format!("{id}\t{attr}\t{label}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a prediction file, rejecting malformed rows and duplicates.
pub fn read_predictions(path: &Path) -> Result<PredictionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == PRED_FORMAT => {}
        _ => return Err(Error::format(path, format!("missing {PRED_FORMAT} tag"))),
    }

    let mut metadata = BTreeMap::new();
    let mut by_attribute: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
    let mut saw_header = false;
    for (lineno, raw) in lines {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                metadata.insert(k.trim().to_owned(), v.trim().to_owned());
            }
            continue;
        }
        if !saw_header {
            if line != "id\tattribute\tlabel" {
                return Err(Error::format(
                    path,
                    format!("line {}: expected column header, got {line:?}", lineno + 1),
                ));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split('\t');
        let (id, attr, label) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(id), Some(attr), Some(label), None) => (id, attr, label),
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: expected 3 tab-separated fields", lineno + 1),
                ))
            }
        };
        let label: u8 = match label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::format(
                    path,
                    format!("line {}: label must be 0 or 1, got {other:?}", lineno + 1),
                ))
            }
        };
        let prev = by_attribute
            .entry(attr.to_owned())
            .or_default()
            .insert(id.to_owned(), label);
        if prev.is_some() {
            return Err(Error::format(
                path,
                format!("line {}: duplicate prediction for ({id}, {attr})", lineno + 1),
            ));
        }
    }
    if by_attribute.is_empty() {
        return Err(Error::format(path, "no prediction rows"));
    }
    Ok(PredictionFile {
        metadata,
        by_attribute,
    })
}
