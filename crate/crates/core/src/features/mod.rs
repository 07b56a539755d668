//! Feature extraction: resize, channel stack, strip histograms, scheme
//! composition.

mod channels;
mod conv;
mod filter_bank;
mod histogram;

pub use channels::{ChannelStack, COLOR_CHANNELS, NUM_CHANNELS, TEXTURE_CHANNELS};
pub use filter_bank::{FilterBankConfig, GaborParams, SchmidParams};
pub use histogram::{
    compose_scheme, strip_histograms, FeatureVector, Scheme, DEFAULT_BINS, DEFAULT_STRIPS,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::ingest::Sample;
use crate::raster::Mask;

use conv::ConvPlan;

/// Extraction parameters shared by a whole run.
#[derive(Debug, Clone)]
pub struct ExtractConfig {
    /// Target (width, height); None keeps native dimensions.
    pub resize: Option<(u32, u32)>,
    pub strips: usize,
    pub bins: usize,
    pub bank: FilterBankConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            resize: Some((48, 128)),
            strips: DEFAULT_STRIPS,
            bins: DEFAULT_BINS,
            bank: FilterBankConfig::default(),
        }
    }
}

/// Reusable extractor; caches one convolution plan per image size.
pub struct Extractor {
    cfg: ExtractConfig,
    plans: Mutex<HashMap<(usize, usize), Arc<ConvPlan>>>,
}

impl Extractor {
    pub fn new(cfg: ExtractConfig) -> Result<Self> {
        cfg.bank.validate()?;
        if cfg.strips == 0 || cfg.bins == 0 {
            return Err(Error::invalid(format!(
                "strips = {}, bins = {}; both must be at least 1",
                cfg.strips, cfg.bins
            )));
        }
        if let Some((w, h)) = cfg.resize {
            if w == 0 || h == 0 {
                return Err(Error::invalid(format!("resize target {w}x{h} has zero area")));
            }
            if cfg.strips > h as usize {
                return Err(Error::invalid(format!(
                    "strips = {} exceeds resize height {h}",
                    cfg.strips
                )));
            }
        }
        Ok(Extractor {
            cfg,
            plans: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ExtractConfig {
        &self.cfg
    }

    /// Feature dimension produced for `scheme`.
    pub fn dim(&self, scheme: Scheme) -> usize {
        NUM_CHANNELS * self.cfg.strips * self.cfg.bins * scheme.region_count()
    }

    fn plan_for(&self, w: usize, h: usize) -> Result<Arc<ConvPlan>> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(plan) = plans.get(&(w, h)) {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(ConvPlan::new(&self.cfg.bank, w, h)?);
        plans.insert((w, h), Arc::clone(&plan));
        Ok(plan)
    }

    /// Resized channel stack for an image.
    pub fn channels(&self, image: &image::RgbImage) -> Result<ChannelStack> {
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::ZeroArea { id: String::new() });
        }
        let resized;
        let image = match self.cfg.resize {
            Some((w, h)) if (w, h) != image.dimensions() => {
                resized =
                    image::imageops::resize(image, w, h, image::imageops::FilterType::Triangle);
                &resized
            }
            _ => image,
        };
        let plan = self.plan_for(image.width() as usize, image.height() as usize)?;
        channels::compute_channels(image, &plan)
    }

    /// Extracts the scheme's feature vector from an image and optional mask.
    pub fn features(
        &self,
        image: &image::RgbImage,
        mask: Option<&Mask>,
        scheme: Scheme,
    ) -> Result<FeatureVector> {
        if scheme.needs_mask() && mask.is_none() {
            return Err(Error::invalid(format!(
                "scheme {} requires a foreground mask",
                scheme.as_str()
            )));
        }
        if let Some(m) = mask {
            if (m.width(), m.height()) != (image.width() as usize, image.height() as usize) {
                return Err(Error::MaskDims {
                    id: String::new(),
                    mask_w: m.width() as u32,
                    mask_h: m.height() as u32,
                    img_w: image.width(),
                    img_h: image.height(),
                });
            }
        }

        let stack = self.channels(image)?;
        let mask = match (scheme.needs_mask(), mask) {
            (true, Some(m)) => Some(resize_mask(m, stack.width(), stack.height())),
            _ => None,
        };

        let strips = self.cfg.strips;
        let bins = self.cfg.bins;
        let fore = match &mask {
            Some(m) => Some(strip_histograms(&stack, Some(m), strips, bins)?),
            None => None,
        };
        let back = match (scheme, &mask) {
            (Scheme::ForeBack, Some(m)) => {
                Some(strip_histograms(&stack, Some(&m.inverted()), strips, bins)?)
            }
            _ => None,
        };
        let whole = match scheme {
            Scheme::Whole | Scheme::ForeWhole => {
                Some(strip_histograms(&stack, None, strips, bins)?)
            }
            _ => None,
        };
        compose_scheme(fore.as_ref(), back.as_ref(), whole.as_ref(), scheme)
    }

    /// Extracts features for a loaded sample, naming it in errors.
    pub fn sample_features(&self, sample: &Sample, scheme: Scheme) -> Result<FeatureVector> {
        if scheme.needs_mask() && sample.mask.is_none() {
            return Err(Error::invalid(format!(
                "scheme {} requires a foreground mask, sample {} has none",
                scheme.as_str(),
                sample.id
            )));
        }
        self.features(&sample.image, sample.mask.as_ref(), scheme)
    }
}

/// Nearest-neighbor mask resize; keeps the mask strictly binary.
fn resize_mask(mask: &Mask, w: usize, h: usize) -> Mask {
    if mask.width() == w && mask.height() == h {
        return mask.clone();
    }
    let mut out = Mask::filled(w, h, false);
    for y in 0..h {
        // Map the destination pixel center back onto the source grid.
        let sy = ((y as f64 + 0.5) * mask.height() as f64 / h as f64 - 0.5)
            .round()
            .clamp(0.0, mask.height() as f64 - 1.0) as usize;
        for x in 0..w {
            let sx = ((x as f64 + 0.5) * mask.width() as f64 / w as f64 - 0.5)
                .round()
                .clamp(0.0, mask.width() as f64 - 1.0) as usize;
            out.set(x, y, mask.get(sx, sy));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn native_extractor() -> Extractor {
        Extractor::new(ExtractConfig {
            resize: None,
            strips: 6,
            bins: 16,
            bank: FilterBankConfig::default(),
        })
        .unwrap()
    }

    fn two_tone_image() -> (image::RgbImage, Mask) {
        // Red inside the mask region, blue outside.
        let img = image::RgbImage::from_fn(16, 24, |x, y| {
            if (4..12).contains(&x) && (6..18).contains(&y) {
                image::Rgb([230, 10, 10])
            } else {
                image::Rgb([10, 10, 230])
            }
        });
        let mut mask = Mask::filled(16, 24, false);
        for y in 6..18 {
            for x in 4..12 {
                mask.set(x, y, true);
            }
        }
        (img, mask)
    }

    #[test]
    fn whole_scheme_dimension_is_2784() {
        let ex = native_extractor();
        let (img, _) = two_tone_image();
        let fv = ex.features(&img, None, Scheme::Whole).unwrap();
        assert_eq!(fv.dim(), 2784);
        assert_eq!(ex.dim(Scheme::Whole), 2784);
    }

    #[test]
    fn concatenated_schemes_double_the_dimension() {
        let ex = native_extractor();
        let (img, mask) = two_tone_image();
        let fw = ex.features(&img, Some(&mask), Scheme::ForeWhole).unwrap();
        assert_eq!(fw.dim(), 5568);
        let fb = ex.features(&img, Some(&mask), Scheme::ForeBack).unwrap();
        assert_eq!(fb.dim(), 5568);
        assert_eq!(ex.dim(Scheme::ForeBack), 5568);
    }

    #[test]
    fn masked_region_excludes_outside_pixels() {
        let ex = native_extractor();
        let (img, mask) = two_tone_image();
        let fore = ex.features(&img, Some(&mask), Scheme::Fore).unwrap();
        // Red channel (index 0), strips fully inside the mask rows: mass
        // should sit in the top bin, with zero in the bottom bin.
        // Strip 2 covers rows 8..12, inside the mask's row range.
        let strips = 6;
        let bins = 16;
        let block = &fore.values[(0 * strips + 2) * bins..(0 * strips + 3) * bins];
        assert!((block[14] - 1.0).abs() < 1e-12, "block {block:?}");
        // Blue channel (index 2) in the same strip: masked pixels are red,
        // so blue values are low.
        let blue = &fore.values[(2 * strips + 2) * bins..(2 * strips + 3) * bins];
        assert!((blue[0] - 1.0).abs() < 1e-12, "blue {blue:?}");
    }

    #[test]
    fn scheme_needing_mask_without_mask_fails() {
        let ex = native_extractor();
        let (img, _) = two_tone_image();
        for scheme in [Scheme::Fore, Scheme::ForeBack, Scheme::ForeWhole] {
            assert!(ex.features(&img, None, scheme).is_err(), "{scheme:?}");
        }
        assert!(ex.features(&img, None, Scheme::Whole).is_ok());
    }

    #[test]
    fn extraction_is_deterministic() {
        let ex = native_extractor();
        let (img, mask) = two_tone_image();
        let a = ex.features(&img, Some(&mask), Scheme::ForeWhole).unwrap();
        let b = ex.features(&img, Some(&mask), Scheme::ForeWhole).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resize_changes_grid_not_layout() {
        let ex = Extractor::new(ExtractConfig {
            resize: Some((24, 48)),
            ..ExtractConfig::default()
        })
        .unwrap();
        let (img, mask) = two_tone_image();
        let fv = ex.features(&img, Some(&mask), Scheme::ForeWhole).unwrap();
        assert_eq!(fv.dim(), 5568);
    }

    #[test]
    fn resize_mask_preserves_halves() {
        let mut mask = Mask::filled(8, 8, false);
        for y in 0..8 {
            for x in 0..4 {
                mask.set(x, y, true);
            }
        }
        let small = resize_mask(&mask, 4, 4);
        for y in 0..4 {
            assert!(small.get(0, y) && small.get(1, y));
            assert!(!small.get(2, y) && !small.get(3, y));
        }
    }

    #[test]
    fn empty_fore_region_yields_zero_vector() {
        let ex = native_extractor();
        let (img, _) = two_tone_image();
        let empty = Mask::filled(16, 24, false);
        let fv = ex.features(&img, Some(&empty), Scheme::Fore).unwrap();
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }
}
