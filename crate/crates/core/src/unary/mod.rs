//! Per-attribute unary term: intersection-kernel SVM with sigmoid
//! calibration.

mod augment;
mod platt;
mod smo;

pub use augment::{augment_positives, JitterConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intersection kernel: sum of coordinate-wise minima. Positive definite on
/// nonnegative histogram vectors.
pub fn intersection_kernel(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    Ok(intersection_kernel_unchecked(u, v))
}

#[inline]
pub(crate) fn intersection_kernel_unchecked(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a.min(b)).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    /// Box constraint on dual variables.
    pub c: f64,
    /// Maximal KKT violation allowed at convergence.
    pub kkt_tol: f64,
    /// Pair-update budget before the solver gives up.
    pub max_iter: usize,
    /// Probability clamp: outputs stay in [eps, 1 - eps].
    pub calib_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            kkt_tol: 1e-3,
            max_iter: 1_000_000,
            calib_eps: 1e-6,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C = {}; must be positive", self.c)));
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return Err(Error::invalid(format!(
                "kkt_tol = {}; must be positive",
                self.kkt_tol
            )));
        }
        if !(self.calib_eps > 0.0 && self.calib_eps < 0.5) {
            return Err(Error::invalid(format!(
                "calib_eps = {}; must lie in (0, 0.5)",
                self.calib_eps
            )));
        }
        Ok(())
    }
}

/// Trained intersection-kernel SVM with sigmoid calibration for one
/// attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryModel {
    attribute: String,
    dim: usize,
    support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i per support vector.
    coefficients: Vec<f64>,
    bias: f64,
    calib_a: f64,
    calib_b: f64,
    calib_eps: f64,
}

impl UnaryModel {
    /// Assembles a model from raw parts; used by in-crate tests that need
    /// exact control over decision values.
    #[cfg(test)]
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        attribute: &str,
        dim: usize,
        support_vectors: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        bias: f64,
        calib_a: f64,
        calib_b: f64,
        calib_eps: f64,
    ) -> Self {
        UnaryModel {
            attribute: attribute.to_owned(),
            dim,
            support_vectors,
            coefficients,
            bias,
            calib_a,
            calib_b,
            calib_eps,
        }
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_vector_count(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn calibration(&self) -> (f64, f64) {
        (self.calib_a, self.calib_b)
    }

    /// Uncalibrated decision value.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.coefficients) {
            f += coef * intersection_kernel_unchecked(sv, x);
        }
        Ok(f)
    }

    /// Calibrated probability of the positive label, clamped away from 0
    /// and 1 so downstream negative logs stay finite.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let f = self.decision(x)?;
        Ok(platt::apply_sigmoid(
            self.calib_a,
            self.calib_b,
            f,
            self.calib_eps,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = UnaryModelFile {
            format: FORMAT_TAG.to_owned(),
            version: FORMAT_VERSION,
            attribute: self.attribute.clone(),
            dim: self.dim,
            support_vectors: self.support_vectors.clone(),
            coefficients: self.coefficients.clone(),
            bias: self.bias,
            calib_a: self.calib_a,
            calib_b: self.calib_b,
            calib_eps: self.calib_eps,
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: UnaryModelFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(Error::format(
                path,
                format!("format tag {:?}, expected {FORMAT_TAG:?}", file.format),
            ));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("version {}, expected {FORMAT_VERSION}", file.version),
            ));
        }
        if file.support_vectors.len() != file.coefficients.len() {
            return Err(Error::format(
                path,
                "support vector and coefficient counts differ",
            ));
        }
        if file.support_vectors.iter().any(|sv| sv.len() != file.dim) {
            return Err(Error::format(path, "support vector dimension mismatch"));
        }
        Ok(UnaryModel {
            attribute: file.attribute,
            dim: file.dim,
            support_vectors: file.support_vectors,
            coefficients: file.coefficients,
            bias: file.bias,
            calib_a: file.calib_a,
            calib_b: file.calib_b,
            calib_eps: file.calib_eps,
        })
    }
}

const FORMAT_TAG: &str = "iksvm-unary";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct UnaryModelFile {
    format: String,
    version: u32,
    attribute: String,
    dim: usize,
    support_vectors: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    bias: f64,
    calib_a: f64,
    calib_b: f64,
    calib_eps: f64,
}

/// Trains the SVM on the train rows and fits calibration on the verify
/// rows (falling back to train scores when `verify` is empty).
pub fn train_iksvm(
    attribute: &str,
    train: &[&[f64]],
    train_labels: &[bool],
    verify: &[&[f64]],
    verify_labels: &[bool],
    cfg: &TrainConfig,
) -> Result<UnaryModel> {
    cfg.validate()?;
    if train.len() != train_labels.len() {
        return Err(Error::DimMismatch {
            expected: train.len(),
            got: train_labels.len(),
        });
    }
    if verify.len() != verify_labels.len() {
        return Err(Error::DimMismatch {
            expected: verify.len(),
            got: verify_labels.len(),
        });
    }
    if train.len() < 2 {
        return Err(Error::invalid("training needs at least two samples"));
    }
    let dim = train[0].len();
    if dim == 0 {
        return Err(Error::invalid("training features have zero dimension"));
    }
    for row in train.iter().chain(verify.iter()) {
        if row.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    let pos = train_labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == train.len() {
        return Err(Error::SingleClass {
            attribute: attribute.to_owned(),
        });
    }

    let y: Vec<f64> = train_labels
        .iter()
        .map(|&l| if l { 1.0 } else { -1.0 })
        .collect();
    let budget = train.len().min(4096);
    let mut cache = smo::KernelCache::new(train, budget);
    let sol = smo::solve(&mut cache, &y, cfg.c, cfg.kkt_tol, cfg.max_iter)?;
    debug_assert!(sol.violation <= cfg.kkt_tol);

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (idx, &a) in sol.alpha.iter().enumerate() {
        if a > 1e-12 {
            support_vectors.push(train[idx].to_vec());
            coefficients.push(a * y[idx]);
        }
    }

    let interim = UnaryModel {
        attribute: attribute.to_owned(),
        dim,
        support_vectors,
        coefficients,
        bias: sol.bias,
        calib_a: 0.0,
        calib_b: 0.0,
        calib_eps: cfg.calib_eps,
    };

    let (calib_rows, calib_labels): (&[&[f64]], &[bool]) = if verify.is_empty() {
        (train, train_labels)
    } else {
        (verify, verify_labels)
    };
    let scores: Vec<f64> = calib_rows
        .iter()
        .map(|row| interim.decision(row))
        .collect::<Result<_>>()?;
    let (calib_a, calib_b) = platt::fit_sigmoid(&scores, calib_labels)?;

    Ok(UnaryModel {
        calib_a,
        calib_b,
        ..interim
    })
}
