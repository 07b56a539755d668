//! Accuracy computation and report assembly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Accuracy pair, both in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    /// Plain accuracy: 100 * correct / total.
    pub plain: f64,
    /// Mean of per-class recalls over the classes present in the truth.
    pub balanced: f64,
}

/// Scores binary predictions against ground truth.
///
/// The two maps must cover exactly the same ids and all labels must be 0
/// or 1. Balanced accuracy averages recall over the classes that actually
/// occur, so a single-class truth degenerates to that class's recall.
pub fn evaluate(predictions: &BTreeMap<String, u8>, truth: &BTreeMap<String, u8>) -> Result<Accuracy> {
    if predictions.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    if predictions.len() != truth.len()
        || !predictions.keys().eq(truth.keys())
    {
        let missing: Vec<&String> = truth
            .keys()
            .filter(|k| !predictions.contains_key(*k))
            .take(3)
            .collect();
        let extra: Vec<&String> = predictions
            .keys()
            .filter(|k| !truth.contains_key(*k))
            .take(3)
            .collect();
        return Err(Error::KeyMismatch {
            msg: format!(
                "{} predictions vs {} truths; unmatched truth ids {missing:?}, unmatched prediction ids {extra:?}",
                predictions.len(),
                truth.len()
            ),
        });
    }

    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (id, &t) in truth {
        let p = predictions[id];
        if t > 1 || p > 1 {
            return Err(Error::invalid(format!(
                "labels must be 0 or 1; sample {id} has truth {t}, prediction {p}"
            )));
        }
        total[t as usize] += 1;
        if p == t {
            correct[t as usize] += 1;
        }
    }
    let n = total[0] + total[1];
    let plain = 100.0 * (correct[0] + correct[1]) as f64 / n as f64;
    let mut recall_sum = 0.0;
    let mut classes = 0usize;
    for c in 0..2 {
        if total[c] > 0 {
            recall_sum += 100.0 * correct[c] as f64 / total[c] as f64;
            classes += 1;
        }
    }
    Ok(Accuracy {
        plain,
        balanced: recall_sum / classes as f64,
    })
}

/// One report column: a (regime, feature scheme) combination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportColumn {
    pub regime: String,
    pub scheme: String,
}

impl ReportColumn {
    pub fn key(&self) -> String {
        format!("{}/{}", self.regime, self.scheme)
    }
}

/// Accuracy grid: one row per attribute, one column per (regime, scheme).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub columns: Vec<ReportColumn>,
    pub attributes: Vec<String>,
    /// plain[row][col], percent.
    pub plain: Vec<Vec<f64>>,
    /// balanced[row][col], percent.
    pub balanced: Vec<Vec<f64>>,
}

impl EvalReport {
    /// Column mean over attributes.
    pub fn average(&self, grid: &[Vec<f64>], col: usize) -> f64 {
        grid.iter().map(|row| row[col]).sum::<f64>() / grid.len() as f64
    }

    fn header(&self) -> String {
        format!(
            "dataset: {}\nseed: {}\nconfig: {}\n",
            self.dataset_id, self.seed, self.config_hash
        )
    }

    fn render_text(&self, grid: &[Vec<f64>]) -> String {
        let name_w = self
            .attributes
            .iter()
            .map(|a| a.len())
            .chain(std::iter::once("AVERAGE".len()))
            .max()
            .unwrap_or(0);
        let col_ws: Vec<usize> = self.columns.iter().map(|c| c.key().len().max(7)).collect();
        let mut out = self.header();
        out.push('\n');
        let _ = write!(out, "{:name_w$}", "attribute");
        for (c, w) in self.columns.iter().zip(&col_ws) {
            let _ = write!(out, "  {:>w$}", c.key());
        }
        out.push('\n');
        for (row, attr) in self.attributes.iter().enumerate() {
            let _ = write!(out, "{attr:name_w$}");
            for (col, w) in col_ws.iter().enumerate() {
                let _ = write!(out, "  {:>w$.2}", grid[row][col]);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:name_w$}", "AVERAGE");
        for (col, w) in col_ws.iter().enumerate() {
            let _ = write!(out, "  {:>w$.2}", self.average(grid, col));
        }
        out.push('\n');
        out
    }

    fn render_csv(&self, grid: &[Vec<f64>]) -> String {
        let mut out = String::from("attribute");
        for c in &self.columns {
            let _ = write!(out, ",{}", c.key());
        }
        out.push('\n');
        for (row, attr) in self.attributes.iter().enumerate() {
            let _ = write!(out, "{attr}");
            for col in 0..self.columns.len() {
                let _ = write!(out, ",{:.6}", grid[row][col]);
            }
            out.push('\n');
        }
        out.push_str("AVERAGE");
        for col in 0..self.columns.len() {
            let _ = write!(out, ",{:.6}", self.average(grid, col));
        }
        out.push('\n');
        out
    }

    /// Human-readable plain-accuracy table.
    pub fn to_text(&self) -> String {
        self.render_text(&self.plain)
    }

    /// Machine-readable plain-accuracy table.
    pub fn to_csv(&self) -> String {
        self.render_csv(&self.plain)
    }

    /// Machine-readable balanced-accuracy table.
    pub fn balanced_csv(&self) -> String {
        self.render_csv(&self.balanced)
    }

    /// Writes `<stem>.txt`, `<stem>.csv`, and `<stem>.balanced.csv` under
    /// `dir`; returns the paths. Output depends only on the report contents,
    /// never on wall-clock state.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (format!("{stem}.txt"), self.to_text()),
            (format!("{stem}.csv"), self.to_csv()),
            (format!("{stem}.balanced.csv"), self.balanced_csv()),
        ];
        let mut paths = Vec::new();
        for (name, content) in files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}
