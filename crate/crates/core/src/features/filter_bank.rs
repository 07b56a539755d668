//! Texture filter bank: 8 Gabor and 13 Schmid kernels.
//!
//! Kernels are rasterized once per bank, adjusted to zero mean, and
//! L1-normalized. A zero-mean kernel with |w|_1 = 1 splits into positive
//! mass 0.5 and negative mass 0.5, so responses to inputs in [0, 1] lie in
//! [-0.5, 0.5]; the per-filter affine rescale derived from the actual
//! rasterized weights maps that range back onto [0, 1].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const GABOR_COUNT: usize = 8;
pub const SCHMID_COUNT: usize = 13;

/// Largest kernel radius the bank will rasterize.
const MAX_RADIUS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    /// Carrier orientation in radians.
    pub orientation: f64,
    /// Carrier wavelength in pixels.
    pub wavelength: f64,
    /// Envelope aspect ratio (y spread = sigma / aspect).
    pub aspect: f64,
    /// Half-response spatial-frequency bandwidth in octaves; sets sigma.
    pub bandwidth: f64,
}

impl GaborParams {
    /// Envelope sigma for the configured wavelength and bandwidth.
    pub fn sigma(&self) -> f64 {
        let k = (2.0f64.ln() / 2.0).sqrt();
        let pow = 2.0f64.powf(self.bandwidth);
        self.wavelength / std::f64::consts::PI * k * (pow + 1.0) / (pow - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchmidParams {
    /// Gaussian envelope scale in pixels.
    pub sigma: f64,
    /// Number of radial cycles under the envelope.
    pub tau: f64,
}

/// Full bank configuration; always 8 Gabor plus 13 Schmid entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBankConfig {
    pub gabor: Vec<GaborParams>,
    pub schmid: Vec<SchmidParams>,
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        let mut gabor = Vec::with_capacity(GABOR_COUNT);
        for &orientation in &[0.0, std::f64::consts::FRAC_PI_2] {
            for &wavelength in &[4.0, 8.0] {
                for &bandwidth in &[1.0, 2.0] {
                    gabor.push(GaborParams {
                        orientation,
                        wavelength,
                        aspect: 0.5,
                        bandwidth,
                    });
                }
            }
        }
        let schmid = [
            (2.0, 1.0),
            (4.0, 1.0),
            (4.0, 2.0),
            (6.0, 1.0),
            (6.0, 2.0),
            (6.0, 3.0),
            (8.0, 1.0),
            (8.0, 2.0),
            (8.0, 3.0),
            (10.0, 1.0),
            (10.0, 2.0),
            (10.0, 3.0),
            (10.0, 4.0),
        ]
        .iter()
        .map(|&(sigma, tau)| SchmidParams { sigma, tau })
        .collect();
        FilterBankConfig { gabor, schmid }
    }
}

impl FilterBankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gabor.len() != GABOR_COUNT {
            return Err(Error::FilterBank {
                msg: format!("expected {GABOR_COUNT} Gabor filters, got {}", self.gabor.len()),
            });
        }
        if self.schmid.len() != SCHMID_COUNT {
            return Err(Error::FilterBank {
                msg: format!(
                    "expected {SCHMID_COUNT} Schmid filters, got {}",
                    self.schmid.len()
                ),
            });
        }
        for (i, g) in self.gabor.iter().enumerate() {
            let ok = g.orientation.is_finite()
                && g.wavelength.is_finite()
                && g.wavelength > 0.0
                && g.aspect > 0.0
                && g.aspect.is_finite()
                && g.bandwidth.is_finite()
                && g.bandwidth > 0.0;
            if !ok {
                return Err(Error::FilterBank {
                    msg: format!("Gabor filter {i} has invalid parameters: {g:?}"),
                });
            }
        }
        for (i, s) in self.schmid.iter().enumerate() {
            let ok = s.sigma.is_finite() && s.sigma > 0.0 && s.tau.is_finite() && s.tau >= 0.0;
            if !ok {
                return Err(Error::FilterBank {
                    msg: format!("Schmid filter {i} has invalid parameters: {s:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: FilterBankConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Rasterizes every filter, Gabor entries first.
    pub(crate) fn rasterize(&self) -> Result<Vec<KernelRaster>> {
        self.validate()?;
        let mut kernels = Vec::with_capacity(GABOR_COUNT + SCHMID_COUNT);
        for (i, g) in self.gabor.iter().enumerate() {
            kernels.push(gabor_kernel(g).map_err(|e| annotate(e, "Gabor", i))?);
        }
        for (i, s) in self.schmid.iter().enumerate() {
            kernels.push(schmid_kernel(s).map_err(|e| annotate(e, "Schmid", i))?);
        }
        Ok(kernels)
    }
}

fn annotate(err: Error, family: &str, index: usize) -> Error {
    match err {
        Error::FilterBank { msg } => Error::FilterBank {
            msg: format!("{family} filter {index}: {msg}"),
        },
        other => other,
    }
}

/// Square kernel raster of side 2 * radius + 1, zero mean, unit L1 norm.
#[derive(Debug, Clone)]
pub(crate) struct KernelRaster {
    pub radius: usize,
    pub weights: Raster,
    /// Sum of negative weights: lowest possible response to inputs in [0,1].
    pub response_lo: f64,
    /// Sum of positive weights: highest possible response.
    pub response_hi: f64,
}

fn finalize(radius: usize, mut weights: Vec<f64>) -> Result<KernelRaster> {
    let side = 2 * radius + 1;
    debug_assert_eq!(weights.len(), side * side);
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    for w in &mut weights {
        *w -= mean;
    }
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    if l1 < 1e-12 {
        return Err(Error::FilterBank {
            msg: "kernel is numerically zero after mean removal".into(),
        });
    }
    for w in &mut weights {
        *w /= l1;
    }
    let response_lo: f64 = weights.iter().filter(|&&w| w < 0.0).sum();
    let response_hi: f64 = weights.iter().filter(|&&w| w > 0.0).sum();
    Ok(KernelRaster {
        radius,
        weights: Raster::from_vec(side, side, weights),
        response_lo,
        response_hi,
    })
}

/// Even (cosine-phase) Gabor kernel.
pub(crate) fn gabor_kernel(p: &GaborParams) -> Result<KernelRaster> {
    let sigma = p.sigma();
    let radius = ((3.0 * sigma / p.aspect.min(1.0)).ceil() as usize).clamp(1, MAX_RADIUS);
    let side = 2 * radius + 1;
    let (sin_t, cos_t) = p.orientation.sin_cos();
    let mut weights = Vec::with_capacity(side * side);
    for y in -(radius as i64)..=(radius as i64) {
        for x in -(radius as i64)..=(radius as i64) {
            let xf = x as f64;
            let yf = y as f64;
            let xr = xf * cos_t + yf * sin_t;
            let yr = -xf * sin_t + yf * cos_t;
            let envelope =
                (-(xr * xr + p.aspect * p.aspect * yr * yr) / (2.0 * sigma * sigma)).exp();
            let carrier = (2.0 * std::f64::consts::PI * xr / p.wavelength).cos();
            weights.push(envelope * carrier);
        }
    }
    finalize(radius, weights)
}

/// Isotropic Schmid kernel: radial cosine under a Gaussian envelope.
pub(crate) fn schmid_kernel(p: &SchmidParams) -> Result<KernelRaster> {
    let radius = ((3.0 * p.sigma).ceil() as usize).clamp(1, MAX_RADIUS);
    let side = 2 * radius + 1;
    let mut weights = Vec::with_capacity(side * side);
    for y in -(radius as i64)..=(radius as i64) {
        for x in -(radius as i64)..=(radius as i64) {
            let r = ((x * x + y * y) as f64).sqrt();
            let envelope = (-r * r / (2.0 * p.sigma * p.sigma)).exp();
            let carrier = (2.0 * std::f64::consts::PI * p.tau * r / p.sigma).cos();
            weights.push(envelope * carrier);
        }
    }
    finalize(radius, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_has_canonical_counts() {
        let bank = FilterBankConfig::default();
        bank.validate().unwrap();
        assert_eq!(bank.gabor.len(), GABOR_COUNT);
        assert_eq!(bank.schmid.len(), SCHMID_COUNT);
        assert_eq!(bank.rasterize().unwrap().len(), GABOR_COUNT + SCHMID_COUNT);
    }

    #[test]
    fn wrong_counts_are_rejected() {
        let mut bank = FilterBankConfig::default();
        bank.gabor.pop();
        assert!(matches!(bank.validate(), Err(Error::FilterBank { .. })));

        let mut bank = FilterBankConfig::default();
        bank.schmid.push(SchmidParams { sigma: 3.0, tau: 1.0 });
        assert!(matches!(bank.validate(), Err(Error::FilterBank { .. })));
    }

    #[test]
    fn kernels_are_zero_mean_unit_l1() {
        for kernel in FilterBankConfig::default().rasterize().unwrap() {
            let sum: f64 = kernel.weights.data().iter().sum();
            let l1: f64 = kernel.weights.data().iter().map(|w| w.abs()).sum();
            assert!(sum.abs() < 1e-9, "kernel mean {sum}");
            assert!((l1 - 1.0).abs() < 1e-9, "kernel L1 {l1}");
            assert!((kernel.response_lo + 0.5).abs() < 1e-9);
            assert!((kernel.response_hi - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn gabor_kernel_is_even_symmetric() {
        let kernel = gabor_kernel(&GaborParams {
            orientation: 0.7,
            wavelength: 5.0,
            aspect: 0.5,
            bandwidth: 1.5,
        })
        .unwrap();
        let side = 2 * kernel.radius + 1;
        for y in 0..side {
            for x in 0..side {
                let mirrored = kernel.weights.get(side - 1 - x, side - 1 - y);
                assert!((kernel.weights.get(x, y) - mirrored).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schmid_kernel_is_radially_symmetric() {
        let kernel = schmid_kernel(&SchmidParams { sigma: 4.0, tau: 2.0 }).unwrap();
        let r = kernel.radius;
        let at = |dx: i64, dy: i64| {
            kernel
                .weights
                .get((r as i64 + dx) as usize, (r as i64 + dy) as usize)
        };
        assert!((at(3, 0) - at(0, 3)).abs() < 1e-12);
        assert!((at(3, 0) - at(-3, 0)).abs() < 1e-12);
        assert!((at(2, 1) - at(1, 2)).abs() < 1e-12);
    }

    #[test]
    fn config_file_round_trips() {
        let bank = FilterBankConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        bank.save(&path).unwrap();
        let loaded = FilterBankConfig::load(&path).unwrap();
        assert_eq!(bank, loaded);
    }

    #[test]
    fn corrupt_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(
            FilterBankConfig::load(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn bandwidth_controls_sigma() {
        let narrow = GaborParams {
            orientation: 0.0,
            wavelength: 8.0,
            aspect: 0.5,
            bandwidth: 1.0,
        };
        let wide = GaborParams {
            bandwidth: 2.0,
            ..narrow
        };
        // Wider bandwidth means fewer cycles under the envelope: smaller sigma.
        assert!(wide.sigma() < narrow.sigma());
        assert!((narrow.sigma() - 8.0 / std::f64::consts::PI * (2.0f64.ln() / 2.0).sqrt() * 3.0)
            .abs()
            < 1e-12);
    }
}
