//! FFT convolution of the luminance plane with the texture bank.
//!
//! The image is replicate-padded by the largest kernel radius and embedded
//! in a slightly larger buffer with FFT-friendly dimensions. Circular
//! convolution on that buffer equals linear convolution with replicated
//! borders everywhere inside the original image region, because wraparound
//! artifacts stay within one kernel radius of the buffer edge and the
//! padding keeps the image region at least one radius away from it. All
//! bank kernels are even-symmetric, so convolution and correlation agree
//! and no spectrum conjugation is needed.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::raster::Raster;

use super::filter_bank::{FilterBankConfig, KernelRaster};

/// Smallest integer >= n whose prime factors are all 2, 3, or 5.
fn next_smooth(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Fft2d {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            w,
            h,
            row_fwd: planner.plan_fft_forward(w),
            col_fwd: planner.plan_fft_forward(h),
            row_inv: planner.plan_fft_inverse(w),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn transform(&self, data: &mut [Complex<f64>], forward: bool) {
        debug_assert_eq!(data.len(), self.w * self.h);
        let (row_fft, col_fft) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        for row in data.chunks_exact_mut(self.w) {
            row_fft.process(row);
        }
        let mut column = vec![Complex::default(); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                column[y] = data[y * self.w + x];
            }
            col_fft.process(&mut column);
            for y in 0..self.h {
                data[y * self.w + x] = column[y];
            }
        }
    }

    fn forward(&self, data: &mut [Complex<f64>]) {
        self.transform(data, true);
    }

    /// Inverse transform including the 1/(w h) normalization.
    fn inverse(&self, data: &mut [Complex<f64>]) {
        self.transform(data, false);
        let scale = 1.0 / (self.w * self.h) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

struct PreparedFilter {
    spectrum: Vec<Complex<f64>>,
    response_lo: f64,
    response_hi: f64,
}

/// Precomputed spectra for one bank at one image size.
pub(crate) struct ConvPlan {
    img_w: usize,
    img_h: usize,
    pad: usize,
    fft: Fft2d,
    filters: Vec<PreparedFilter>,
}

impl ConvPlan {
    pub fn new(bank: &FilterBankConfig, img_w: usize, img_h: usize) -> Result<ConvPlan> {
        debug_assert!(img_w > 0 && img_h > 0);
        let kernels = bank.rasterize()?;
        let pad = kernels.iter().map(|k| k.radius).max().unwrap_or(0);
        let fw = next_smooth(img_w + 2 * pad);
        let fh = next_smooth(img_h + 2 * pad);
        let fft = Fft2d::new(fw, fh);

        let filters = kernels
            .iter()
            .map(|kernel| prepare(kernel, &fft))
            .collect();

        Ok(ConvPlan {
            img_w,
            img_h,
            pad,
            fft,
            filters,
        })
    }

    pub fn filter_count(&self) -> usize {
        self.filters.len()
    }

    /// Convolves `lum` with every filter; responses are affinely mapped from
    /// each filter's theoretical range onto [0, 1].
    pub fn apply(&self, lum: &Raster) -> Vec<Raster> {
        debug_assert_eq!(lum.width(), self.img_w);
        debug_assert_eq!(lum.height(), self.img_h);
        let fw = self.fft.w;
        let fh = self.fft.h;
        let pad = self.pad as i64;

        let mut base = vec![Complex::default(); fw * fh];
        for by in 0..fh {
            let sy = (by as i64 - pad).clamp(0, self.img_h as i64 - 1) as usize;
            for bx in 0..fw {
                let sx = (bx as i64 - pad).clamp(0, self.img_w as i64 - 1) as usize;
                base[by * fw + bx] = Complex::new(lum.get(sx, sy), 0.0);
            }
        }
        self.fft.forward(&mut base);

        let mut out = Vec::with_capacity(self.filters.len());
        let mut scratch = vec![Complex::default(); fw * fh];
        for filter in &self.filters {
            for (dst, (&img, &flt)) in scratch
                .iter_mut()
                .zip(base.iter().zip(filter.spectrum.iter()))
            {
                *dst = img * flt;
            }
            self.fft.inverse(&mut scratch);
            let span = filter.response_hi - filter.response_lo;
            let mut channel = Raster::zeros(self.img_w, self.img_h);
            for y in 0..self.img_h {
                for x in 0..self.img_w {
                    let v = scratch[(y + self.pad) * fw + (x + self.pad)].re;
                    let scaled = (v - filter.response_lo) / span;
                    channel.set(x, y, scaled.clamp(0.0, 1.0));
                }
            }
            out.push(channel);
        }
        out
    }
}

/// Embeds the kernel centered on the origin with wraparound and transforms
/// it.
fn prepare(kernel: &KernelRaster, fft: &Fft2d) -> PreparedFilter {
    let fw = fft.w;
    let fh = fft.h;
    let r = kernel.radius as i64;
    let mut spectrum = vec![Complex::default(); fw * fh];
    for dy in -r..=r {
        for dx in -r..=r {
            let w = kernel
                .weights
                .get((dx + r) as usize, (dy + r) as usize);
            let bx = dx.rem_euclid(fw as i64) as usize;
            let by = dy.rem_euclid(fh as i64) as usize;
            spectrum[by * fw + bx] = Complex::new(w, 0.0);
        }
    }
    fft.forward(&mut spectrum);
    PreparedFilter {
        spectrum,
        response_lo: kernel.response_lo,
        response_hi: kernel.response_hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::filter_bank::{gabor_kernel, schmid_kernel, GaborParams, SchmidParams};
    use rand::{Rng, SeedableRng};

    fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
    }

    /// Direct correlation with replicate borders.
    fn direct(lum: &Raster, kernel: &KernelRaster) -> Raster {
        let r = kernel.radius as i64;
        let w = lum.width() as i64;
        let h = lum.height() as i64;
        Raster::from_fn(lum.width(), lum.height(), |x, y| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x as i64 + dx).clamp(0, w - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h - 1) as usize;
                    acc += kernel.weights.get((dx + r) as usize, (dy + r) as usize)
                        * lum.get(sx, sy);
                }
            }
            acc
        })
    }

    #[test]
    fn next_smooth_finds_235_numbers() {
        assert_eq!(next_smooth(1), 2);
        assert_eq!(next_smooth(2), 2);
        assert_eq!(next_smooth(7), 8);
        assert_eq!(next_smooth(97), 100);
        assert_eq!(next_smooth(100), 100);
        assert_eq!(next_smooth(101), 108);
    }

    #[test]
    fn fft_matches_direct_convolution() {
        let bank = FilterBankConfig::default();
        let lum = random_raster(30, 44, 5);
        let plan = ConvPlan::new(&bank, 30, 44).unwrap();
        let responses = plan.apply(&lum);
        let kernels = bank.rasterize().unwrap();
        assert_eq!(responses.len(), kernels.len());

        // Check one Gabor and one Schmid channel pixel-for-pixel, border
        // included.
        for &idx in &[2usize, 10, 20] {
            let want = direct(&lum, &kernels[idx]);
            let span = kernels[idx].response_hi - kernels[idx].response_lo;
            for y in 0..44 {
                for x in 0..30 {
                    let expected =
                        ((want.get(x, y) - kernels[idx].response_lo) / span).clamp(0.0, 1.0);
                    let got = responses[idx].get(x, y);
                    assert!(
                        (got - expected).abs() < 1e-9,
                        "filter {idx} at ({x}, {y}): {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn responses_stay_in_unit_interval() {
        let bank = FilterBankConfig::default();
        let plan = ConvPlan::new(&bank, 24, 36).unwrap();
        for seed in 0..3 {
            let lum = random_raster(24, 36, seed);
            for channel in plan.apply(&lum) {
                for &v in channel.data() {
                    assert!((0.0..=1.0).contains(&v), "response {v} out of range");
                }
            }
        }
    }

    #[test]
    fn constant_input_maps_to_midpoint() {
        // Zero-mean kernels respond 0 to constant inputs; the affine map
        // sends 0 to 0.5.
        let bank = FilterBankConfig::default();
        let plan = ConvPlan::new(&bank, 16, 16).unwrap();
        let lum = Raster::from_fn(16, 16, |_, _| 0.7);
        for channel in plan.apply(&lum) {
            for &v in channel.data() {
                assert!((v - 0.5).abs() < 1e-9, "constant response {v}");
            }
        }
    }

    #[test]
    fn single_kernel_conv_is_deterministic() {
        let g = gabor_kernel(&GaborParams {
            orientation: 0.0,
            wavelength: 4.0,
            aspect: 0.5,
            bandwidth: 1.0,
        })
        .unwrap();
        let s = schmid_kernel(&SchmidParams { sigma: 2.0, tau: 1.0 }).unwrap();
        let lum = random_raster(20, 20, 9);
        let a = direct(&lum, &g);
        let b = direct(&lum, &g);
        assert_eq!(a, b);
        let c = direct(&lum, &s);
        assert_eq!(c.width(), 20);
    }
}
