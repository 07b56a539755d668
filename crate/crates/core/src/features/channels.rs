//! Per-pixel channel stack: 8 color planes plus 21 texture responses.

use crate::error::{Error, Result};
use crate::raster::Raster;

use super::conv::ConvPlan;

pub const COLOR_CHANNELS: usize = 8;
pub const TEXTURE_CHANNELS: usize = 21;
pub const NUM_CHANNELS: usize = COLOR_CHANNELS + TEXTURE_CHANNELS;

/// All 29 channels of one image, each valued in [0, 1].
///
/// Order: R, G, B, Y, Cb, Cr, H, S, then the 8 Gabor and 13 Schmid
/// responses in bank order.
#[derive(Debug, Clone)]
pub struct ChannelStack {
    width: usize,
    height: usize,
    channels: Vec<Raster>,
}

impl ChannelStack {
    pub(crate) fn new(channels: Vec<Raster>) -> Self {
        assert_eq!(channels.len(), NUM_CHANNELS);
        let width = channels[0].width();
        let height = channels[0].height();
        for c in &channels {
            assert_eq!(c.width(), width);
            assert_eq!(c.height(), height);
        }
        ChannelStack {
            width,
            height,
            channels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, idx: usize) -> &Raster {
        &self.channels[idx]
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }
}

/// Computes the color planes and runs the texture bank over luminance.
pub(crate) fn compute_channels(image: &image::RgbImage, plan: &ConvPlan) -> Result<ChannelStack> {
    let w = image.width() as usize;
    let h = image.height() as usize;
    if w == 0 || h == 0 {
        return Err(Error::ZeroArea { id: String::new() });
    }
    debug_assert_eq!(plan.filter_count(), TEXTURE_CHANNELS);

    let mut color: Vec<Raster> = (0..COLOR_CHANNELS).map(|_| Raster::zeros(w, h)).collect();
    for (x, y, px) in image.enumerate_pixels() {
        let r = px.0[0] as f64 / 255.0;
        let g = px.0[1] as f64 / 255.0;
        let b = px.0[2] as f64 / 255.0;
        let (luma, cb, cr) = ycbcr(r, g, b);
        let (hue, sat) = hue_saturation(r, g, b);
        let x = x as usize;
        let y = y as usize;
        color[0].set(x, y, r);
        color[1].set(x, y, g);
        color[2].set(x, y, b);
        color[3].set(x, y, luma);
        color[4].set(x, y, cb);
        color[5].set(x, y, cr);
        color[6].set(x, y, hue);
        color[7].set(x, y, sat);
    }

    let texture = plan.apply(&color[3]);
    let mut channels = color;
    channels.extend(texture);
    Ok(ChannelStack::new(channels))
}

/// BT.601 luma and offset chroma, all in [0, 1].
fn ycbcr(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    (y, cb, cr)
}

/// Hue scaled to [0, 1) (0 for achromatic pixels) and HSV saturation.
fn hue_saturation(r: f64, g: f64, b: f64) -> (f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let sat = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, sat);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0, sat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::filter_bank::FilterBankConfig;

    fn stack_of(image: &image::RgbImage) -> ChannelStack {
        let plan = ConvPlan::new(
            &FilterBankConfig::default(),
            image.width() as usize,
            image.height() as usize,
        )
        .unwrap();
        compute_channels(image, &plan).unwrap()
    }

    #[test]
    fn stack_has_29_unit_interval_channels() {
        let img = image::RgbImage::from_fn(12, 18, |x, y| {
            image::Rgb([(x * 20) as u8, (y * 12) as u8, ((x + y) * 7) as u8])
        });
        let stack = stack_of(&img);
        assert_eq!(stack.channel_count(), NUM_CHANNELS);
        assert_eq!(stack.width(), 12);
        assert_eq!(stack.height(), 18);
        for c in 0..NUM_CHANNELS {
            for &v in stack.channel(c).data() {
                assert!((0.0..=1.0).contains(&v), "channel {c} value {v}");
            }
        }
    }

    #[test]
    fn primary_colors_map_to_expected_planes() {
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([255, 0, 0]));
        let stack = stack_of(&img);
        assert_eq!(stack.channel(0).get(1, 1), 1.0);
        assert_eq!(stack.channel(1).get(1, 1), 0.0);
        assert_eq!(stack.channel(2).get(1, 1), 0.0);
        assert!((stack.channel(3).get(1, 1) - 0.299).abs() < 1e-12);
        // Pure red: hue 0, saturation 1, Cr above center.
        assert_eq!(stack.channel(6).get(1, 1), 0.0);
        assert_eq!(stack.channel(7).get(1, 1), 1.0);
        assert!(stack.channel(5).get(1, 1) > 0.9);
    }

    #[test]
    fn gray_pixels_have_zero_hue_and_saturation() {
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([77, 77, 77]));
        let stack = stack_of(&img);
        assert_eq!(stack.channel(6).get(2, 2), 0.0);
        assert_eq!(stack.channel(7).get(2, 2), 0.0);
        let v = 77.0 / 255.0;
        assert!((stack.channel(3).get(2, 2) - v).abs() < 1e-12);
        assert!((stack.channel(4).get(2, 2) - 0.5).abs() < 1e-6);
        assert!((stack.channel(5).get(2, 2) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn hue_wheel_thirds() {
        let cases = [
            ([0u8, 255, 0], 2.0 / 6.0),
            ([0, 0, 255], 4.0 / 6.0),
            ([255, 255, 0], 1.0 / 6.0),
        ];
        for (rgb, expected) in cases {
            let img = image::RgbImage::from_pixel(2, 2, image::Rgb(rgb));
            let stack = stack_of(&img);
            assert!(
                (stack.channel(6).get(0, 0) - expected).abs() < 1e-9,
                "rgb {rgb:?}"
            );
        }
    }
}
