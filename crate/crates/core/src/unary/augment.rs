//! Jittered copies of positive samples for class balancing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Sample;
use crate::raster::Mask;

/// Uniform jitter ranges applied to each copy.
#[derive(Debug, Clone, Copy)]
pub struct JitterConfig {
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub rot_lo_deg: f64,
    pub rot_hi_deg: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        JitterConfig {
            scale_lo: 0.9,
            scale_hi: 1.1,
            rot_lo_deg: -10.0,
            rot_hi_deg: 10.0,
        }
    }
}

impl JitterConfig {
    fn validate(&self) -> Result<()> {
        if !(self.scale_lo > 0.0 && self.scale_hi >= self.scale_lo) {
            return Err(Error::invalid(format!(
                "jitter scale range [{}, {}] must be positive and ordered",
                self.scale_lo, self.scale_hi
            )));
        }
        if !(self.rot_hi_deg >= self.rot_lo_deg) {
            return Err(Error::invalid(format!(
                "jitter rotation range [{}, {}] must be ordered",
                self.rot_lo_deg, self.rot_hi_deg
            )));
        }
        Ok(())
    }
}

/// Pads `positives` with jittered copies until `target` samples exist.
///
/// Copies cycle through the originals in order; each draws a scale and a
/// rotation from `jitter` and is re-rasterized (bilinear for the image,
/// nearest for the mask) about the crop center with replicated borders.
/// Labels, split, and paths carry over; ids gain a `#augN` suffix.
pub fn augment_positives(
    positives: &[Sample],
    target: usize,
    jitter: &JitterConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    if positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    if target < positives.len() {
        return Err(Error::invalid(format!(
            "augmentation target {target} is below the {} existing positives",
            positives.len()
        )));
    }
    jitter.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = positives.to_vec();
    out.reserve(target - positives.len());
    for copy_idx in 0..(target - positives.len()) {
        let src = &positives[copy_idx % positives.len()];
        let round = copy_idx / positives.len() + 1;
        let scale = draw(&mut rng, jitter.scale_lo, jitter.scale_hi);
        let rot_deg = draw(&mut rng, jitter.rot_lo_deg, jitter.rot_hi_deg);
        let theta = rot_deg.to_radians();

        let mut copy = src.clone();
        copy.id = format!("{}#aug{round}", src.id);
        copy.image = warp_image(&src.image, scale, theta);
        copy.mask = src.mask.as_ref().map(|m| warp_mask(m, scale, theta));
        out.push(copy);
    }
    Ok(out)
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Maps a destination pixel back to source coordinates for a rotation by
/// `theta` and uniform scale about the image center.
#[inline]
fn back_project(x: f64, y: f64, cx: f64, cy: f64, scale: f64, theta: f64) -> (f64, f64) {
    let dx = x - cx;
    let dy = y - cy;
    let (sin, cos) = theta.sin_cos();
    let sx = cx + (cos * dx + sin * dy) / scale;
    let sy = cy + (-sin * dx + cos * dy) / scale;
    (sx, sy)
}

fn warp_image(img: &image::RgbImage, scale: f64, theta: f64) -> image::RgbImage {
    let (w, h) = img.dimensions();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    image::RgbImage::from_fn(w, h, |x, y| {
        let (sx, sy) = back_project(x as f64, y as f64, cx, cy, scale, theta);
        bilinear(img, sx, sy)
    })
}

fn warp_mask(mask: &Mask, scale: f64, theta: f64) -> Mask {
    let w = mask.width();
    let h = mask.height();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = Mask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = back_project(x as f64, y as f64, cx, cy, scale, theta);
            let nx = (sx.round().max(0.0) as usize).min(w - 1);
            let ny = (sy.round().max(0.0) as usize).min(h - 1);
            out.set(x, y, mask.get(nx, ny));
        }
    }
    out
}

/// Bilinear sample with replicated borders.
fn bilinear(img: &image::RgbImage, x: f64, y: f64) -> image::Rgb<u8> {
    let (w, h) = img.dimensions();
    let clamp_x = |v: i64| v.clamp(0, w as i64 - 1) as u32;
    let clamp_y = |v: i64| v.clamp(0, h as i64 - 1) as u32;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0i = clamp_x(x0 as i64);
    let x1i = clamp_x(x0 as i64 + 1);
    let y0i = clamp_y(y0 as i64);
    let y1i = clamp_y(y0 as i64 + 1);
    let p00 = img.get_pixel(x0i, y0i).0;
    let p10 = img.get_pixel(x1i, y0i).0;
    let p01 = img.get_pixel(x0i, y1i).0;
    let p11 = img.get_pixel(x1i, y1i).0;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    image::Rgb(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;
    use std::path::PathBuf;

    fn gradient_sample(id: &str) -> Sample {
        let image = image::RgbImage::from_fn(8, 12, |x, y| {
            image::Rgb([(x * 30) as u8, (y * 20) as u8, 128])
        });
        let mut mask = Mask::filled(8, 12, false);
        for y in 3..9 {
            for x in 2..6 {
                mask.set(x, y, true);
            }
        }
        Sample {
            id: id.to_owned(),
            image,
            mask: Some(mask),
            labels: vec![Label::Positive],
            split: None,
            image_path: PathBuf::from("mem.png"),
            mask_path: None,
        }
    }

    #[test]
    fn counts_match_target() {
        let positives = vec![gradient_sample("a"), gradient_sample("b")];
        let out = augment_positives(&positives, 7, &JitterConfig::default(), 1).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(out[0].id, "a");
        assert_eq!(out[1].id, "b");
        assert_eq!(out[2].id, "a#aug1");
        assert_eq!(out[3].id, "b#aug1");
        assert_eq!(out[4].id, "a#aug2");
        assert_eq!(out[6].id, "a#aug3");
    }

    #[test]
    fn hundred_positives_to_five_hundred_appends_four_hundred() {
        let positives: Vec<Sample> = (0..100)
            .map(|i| gradient_sample(&format!("p{i}")))
            .collect();
        let out = augment_positives(&positives, 500, &JitterConfig::default(), 9).unwrap();
        assert_eq!(out.len(), 500);
        let copies = out.iter().filter(|s| s.id.contains("#aug")).count();
        assert_eq!(copies, 400);
    }

    #[test]
    fn identity_jitter_reproduces_pixels() {
        let cfg = JitterConfig {
            scale_lo: 1.0,
            scale_hi: 1.0,
            rot_lo_deg: 0.0,
            rot_hi_deg: 0.0,
        };
        let positives = vec![gradient_sample("a")];
        let out = augment_positives(&positives, 2, &cfg, 5).unwrap();
        assert_eq!(out[1].image, out[0].image);
        assert_eq!(out[1].mask, out[0].mask);
    }

    #[test]
    fn same_seed_same_copies_different_seed_differs() {
        let positives = vec![gradient_sample("a")];
        let a = augment_positives(&positives, 4, &JitterConfig::default(), 11).unwrap();
        let b = augment_positives(&positives, 4, &JitterConfig::default(), 11).unwrap();
        let c = augment_positives(&positives, 4, &JitterConfig::default(), 12).unwrap();
        for i in 0..4 {
            assert_eq!(a[i].image, b[i].image);
        }
        assert!((1..4).any(|i| a[i].image != c[i].image));
    }

    #[test]
    fn copies_keep_labels_and_split() {
        let mut s = gradient_sample("a");
        s.split = Some(crate::ingest::Split::Train);
        let out = augment_positives(&[s], 3, &JitterConfig::default(), 2).unwrap();
        for copy in &out {
            assert_eq!(copy.labels, vec![Label::Positive]);
            assert_eq!(copy.split, Some(crate::ingest::Split::Train));
        }
    }

    #[test]
    fn empty_positives_is_an_error() {
        let got = augment_positives(&[], 5, &JitterConfig::default(), 1);
        assert!(matches!(got, Err(Error::EmptyPositives)));
    }

    #[test]
    fn target_below_count_is_an_error() {
        let positives = vec![gradient_sample("a"), gradient_sample("b")];
        let got = augment_positives(&positives, 1, &JitterConfig::default(), 1);
        assert!(matches!(got, Err(Error::InvalidParameter { .. })));
    }
}
