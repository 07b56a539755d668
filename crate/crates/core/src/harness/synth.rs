//! Procedural dataset generator for desk-scale testing.
//!
//! Crops are rendered as a blocky person silhouette (head, torso, two legs)
//! on a textured gray background. Samples come in clusters: every member of
//! a cluster shares the cluster's rendering parameters up to small jitter,
//! so nearest neighbors in feature space are overwhelmingly same-cluster.
//!
//! Each attribute owns one horizontal band of the silhouette. The cluster's
//! attribute bit picks the band color (warm vs cool), and the sample's
//! stored label is that bit flipped with probability `noise`. With noise 0
//! the labels are an exact function of the rendering parameters.

use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{save_manifest, AttributeRegistry, Label, Sample, Split};
use crate::raster::Mask;

pub const SYNTH_WIDTH: u32 = 20;
pub const SYNTH_HEIGHT: u32 = 48;

/// Row range of the silhouette that attribute bands divide.
const BAND_ROWS: (u32, u32) = (8, 46);
/// Most attributes a 38-row band region can render at >= 3 rows each.
const MAX_ATTRS: usize = 12;

const WARM: [f64; 3] = [0.85, 0.20, 0.12];
const COOL: [f64; 3] = [0.12, 0.25, 0.85];
const SKIN: [f64; 3] = [0.78, 0.62, 0.50];

/// Split cycle applied within each cluster: 5 train, 1 verify, 4 test.
const SPLIT_CYCLE: [Split; 10] = [
    Split::Train,
    Split::Train,
    Split::Train,
    Split::Train,
    Split::Train,
    Split::Verify,
    Split::Test,
    Split::Test,
    Split::Test,
    Split::Test,
];

struct ClusterParams {
    /// One attribute bit per band; the noise-free label source.
    bits: Vec<bool>,
    /// Per-band additive color jitter.
    band_jitter: Vec<[f64; 3]>,
    bg_base: f64,
    bg_salt: u64,
}

/// Body-part membership of one pixel.
#[derive(Clone, Copy, PartialEq)]
enum Part {
    Background,
    Head,
    Body,
}

fn part_of(x: u32, y: u32) -> Part {
    let head = (2..8).contains(&y) && (7..13).contains(&x);
    let torso = (8..28).contains(&y) && (4..16).contains(&x);
    let legs = (28..46).contains(&y) && ((5..9).contains(&x) || (11..15).contains(&x));
    if head {
        Part::Head
    } else if torso || legs {
        Part::Body
    } else {
        Part::Background
    }
}

/// Band owning row `y`, given `attrs` equal slices of BAND_ROWS.
fn band_of(y: u32, attrs: usize) -> usize {
    let span = (BAND_ROWS.1 - BAND_ROWS.0) as usize;
    let off = y.clamp(BAND_ROWS.0, BAND_ROWS.1 - 1) - BAND_ROWS.0;
    (off as usize * attrs / span).min(attrs - 1)
}

/// Deterministic per-pixel noise in [-1, 1], independent of the RNG stream.
fn pixel_noise(salt: u64, x: u32, y: u32) -> f64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ salt;
    for byte in x.to_le_bytes().iter().chain(y.to_le_bytes().iter()) {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Generates `n` labeled samples over `attrs` attributes.
///
/// Returned samples carry in-memory images and exact masks; `image_path` and
/// `mask_path` are relative placeholders until [`write_dataset`] materializes
/// them. Splits are assigned in a fixed per-cluster cycle so every cluster
/// spans train, verify, and test.
pub fn generate_synthetic(
    n: usize,
    attrs: usize,
    noise: f64,
    seed: u64,
) -> Result<(AttributeRegistry, Vec<Sample>)> {
    if n < 4 {
        return Err(Error::invalid(format!("n = {n}; need at least 4 samples")));
    }
    if attrs < 1 || attrs > MAX_ATTRS {
        return Err(Error::invalid(format!(
            "attrs = {attrs}; supported range is 1..={MAX_ATTRS}"
        )));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::invalid(format!(
            "noise = {noise}; must lie in [0, 1)"
        )));
    }

    let registry =
        AttributeRegistry::new((0..attrs).map(|j| format!("band{j}-warm")).collect())?;

    let n_clusters = (n / 20).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Clusters 0 and 1 anchor the two classes of every attribute so that no
    // seed can produce a single-class dataset; later clusters draw freely.
    let clusters: Vec<ClusterParams> = (0..n_clusters)
        .map(|c| ClusterParams {
            bits: (0..attrs)
                .map(|_| {
                    let bit = rng.gen_bool(0.5);
                    match c {
                        0 => false,
                        1 => true,
                        _ => bit,
                    }
                })
                .collect(),
            band_jitter: (0..attrs)
                .map(|_| {
                    [
                        rng.gen_range(-0.06..0.06),
                        rng.gen_range(-0.06..0.06),
                        rng.gen_range(-0.06..0.06),
                    ]
                })
                .collect(),
            bg_base: if rng.gen_bool(0.5) { 0.35 } else { 0.65 } + rng.gen_range(-0.05..0.05),
            bg_salt: rng.gen(),
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = &clusters[i % n_clusters];
        // Fixed draw count per sample keeps the stream aligned regardless of
        // parameter values.
        let flips: Vec<bool> = (0..attrs).map(|_| rng.gen_bool(noise)).collect();
        let tint = [
            rng.gen_range(-0.02..0.02),
            rng.gen_range(-0.02..0.02),
            rng.gen_range(-0.02..0.02),
        ];
        let salt = cluster.bg_salt ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);

        let mut img = RgbImage::new(SYNTH_WIDTH, SYNTH_HEIGHT);
        let mut mask_bits = vec![false; (SYNTH_WIDTH * SYNTH_HEIGHT) as usize];
        for y in 0..SYNTH_HEIGHT {
            for x in 0..SYNTH_WIDTH {
                let part = part_of(x, y);
                let rgb = match part {
                    Part::Background => {
                        let g = cluster.bg_base + 0.08 * pixel_noise(cluster.bg_salt, x, y);
                        [g, g, g]
                    }
                    Part::Head => SKIN,
                    Part::Body => {
                        let b = band_of(y, attrs);
                        let base = if cluster.bits[b] { WARM } else { COOL };
                        let jit = cluster.band_jitter[b];
                        [base[0] + jit[0], base[1] + jit[1], base[2] + jit[2]]
                    }
                };
                let texture = 0.02 * pixel_noise(salt, x, y);
                let px = [
                    to_byte(rgb[0] + tint[0] + texture),
                    to_byte(rgb[1] + tint[1] + texture),
                    to_byte(rgb[2] + tint[2] + texture),
                ];
                img.put_pixel(x, y, image::Rgb(px));
                if part != Part::Background {
                    mask_bits[(y * SYNTH_WIDTH + x) as usize] = true;
                }
            }
        }

        let labels: Vec<Label> = cluster
            .bits
            .iter()
            .zip(&flips)
            .map(|(&bit, &flip)| {
                if bit != flip {
                    Label::Positive
                } else {
                    Label::Negative
                }
            })
            .collect();
        let id = format!("synth-{i:05}");
        samples.push(Sample {
            image_path: PathBuf::from(format!("images/{id}.png")),
            mask_path: Some(PathBuf::from(format!("masks/{id}.png"))),
            image: img,
            mask: Some(Mask::new(
                SYNTH_WIDTH as usize,
                SYNTH_HEIGHT as usize,
                mask_bits,
            )),
            labels,
            split: Some(SPLIT_CYCLE[(i / n_clusters) % SPLIT_CYCLE.len()]),
            id,
        });
    }
    Ok((registry, samples))
}

/// Writes images, masks, and a manifest under `dir`; returns the manifest
/// path. Sample paths are rewritten to the materialized locations.
pub fn write_dataset(
    dir: &Path,
    registry: &AttributeRegistry,
    samples: &mut [Sample],
) -> Result<PathBuf> {
    let images = dir.join("images");
    let masks = dir.join("masks");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    std::fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    for sample in samples.iter_mut() {
        let img_path = images.join(format!("{}.png", sample.id));
        sample
            .image
            .save(&img_path)
            .map_err(|e| Error::image(&img_path, e))?;
        sample.image_path = img_path;
        if let Some(mask) = &sample.mask {
            let mask_path = masks.join(format!("{}.png", sample.id));
            mask.to_luma()
                .save(&mask_path)
                .map_err(|e| Error::image(&mask_path, e))?;
            sample.mask_path = Some(mask_path);
        }
    }
    let manifest = dir.join("manifest.tsv");
    save_manifest(&manifest, registry, samples)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_synthetic(3, 1, 0.0, 0).is_err());
        assert!(generate_synthetic(10, 0, 0.0, 0).is_err());
        assert!(generate_synthetic(10, MAX_ATTRS + 1, 0.0, 0).is_err());
        assert!(generate_synthetic(10, 1, 1.0, 0).is_err());
        assert!(generate_synthetic(10, 1, -0.1, 0).is_err());
    }

    #[test]
    fn same_seed_same_dataset() {
        let (_, a) = generate_synthetic(40, 3, 0.2, 9).unwrap();
        let (_, b) = generate_synthetic(40, 3, 0.2, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.labels, y.labels);
            assert_eq!(x.split, y.split);
            assert_eq!(x.image.as_raw(), y.image.as_raw());
        }
        let (_, c) = generate_synthetic(40, 3, 0.2, 10).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.image.as_raw() != y.image.as_raw()));
    }

    #[test]
    fn noise_free_labels_are_cluster_consistent() {
        let (_, samples) = generate_synthetic(60, 4, 0.0, 3).unwrap();
        let n_clusters = 3; // 60 / 20
        for (i, s) in samples.iter().enumerate() {
            let peer = &samples[i % n_clusters];
            assert_eq!(s.labels, peer.labels, "cluster labels must agree at noise 0");
        }
    }

    #[test]
    fn mask_matches_silhouette_exactly() {
        let (_, samples) = generate_synthetic(4, 1, 0.0, 1).unwrap();
        let mask = samples[0].mask.as_ref().unwrap();
        for y in 0..SYNTH_HEIGHT {
            for x in 0..SYNTH_WIDTH {
                let expect = part_of(x, y) != Part::Background;
                assert_eq!(mask.get(x as usize, y as usize), expect);
            }
        }
    }

    #[test]
    fn every_cluster_spans_all_splits() {
        let (_, samples) = generate_synthetic(200, 2, 0.1, 5).unwrap();
        let n_clusters = 10;
        for c in 0..n_clusters {
            let mut seen = [false; 3];
            for (i, s) in samples.iter().enumerate() {
                if i % n_clusters == c {
                    seen[s.split.unwrap() as usize] = true;
                }
            }
            assert_eq!(seen, [true, true, true], "cluster {c}");
        }
    }

    #[test]
    fn bands_partition_rows() {
        for attrs in 1..=MAX_ATTRS {
            assert_eq!(band_of(BAND_ROWS.0, attrs), 0);
            assert_eq!(band_of(BAND_ROWS.1 - 1, attrs), attrs - 1);
            for y in BAND_ROWS.0..BAND_ROWS.1 - 1 {
                let (a, b) = (band_of(y, attrs), band_of(y + 1, attrs));
                assert!(b == a || b == a + 1);
            }
        }
    }

    #[test]
    fn write_dataset_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let (registry, mut samples) = generate_synthetic(8, 2, 0.0, 2).unwrap();
        let manifest = write_dataset(dir.path(), &registry, &mut samples).unwrap();
        let (reg2, loaded) = crate::ingest::load_manifest(&manifest).unwrap();
        assert_eq!(reg2.names(), registry.names());
        assert_eq!(loaded.len(), samples.len());
        for (a, b) in samples.iter().zip(&loaded) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.split, b.split);
            assert_eq!(a.image.as_raw(), b.image.as_raw());
            assert_eq!(
                a.mask.as_ref().unwrap().count(),
                b.mask.as_ref().unwrap().count()
            );
        }
    }
}
