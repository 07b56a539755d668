//! Pairwise affinities between samples: Gaussian on feature distance, or
//! leaf co-location in an unsupervised random forest.

pub mod forest;

pub use forest::{forest_similarity, train_unsupervised_forest, ForestConfig, ForestModel};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianConfig {
    pub sigma: f64,
}

impl GaussianConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma = {}; must be positive and finite",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// exp(-|u - v|^2 / sigma^2) on the raw feature values.
pub fn gaussian_similarity(
    u: &FeatureVector,
    v: &FeatureVector,
    cfg: &GaussianConfig,
) -> Result<f64> {
    cfg.validate()?;
    u.compatible(v)?;
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(gaussian_similarity_values(&u.values, &v.values, cfg.sigma))
}

/// Same kernel on plain slices; lengths must already agree.
pub fn gaussian_similarity_values(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    (-squared_distance(u, v) / (sigma * sigma)).exp()
}

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d
        })
        .sum()
}
