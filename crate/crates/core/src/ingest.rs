//! Dataset loading: manifests, attribute registry, split assignment.
//!
//! A manifest is a tab-separated text file. The first line is
//! `#pedattr-manifest-v1` followed by one attribute name per field; each data
//! row is `id, image path, mask path or "-", split or "-", then one label
//! token per attribute` with tokens `1`, `0`, `?`. Relative paths resolve
//! against the manifest's directory. Lines starting with `#` are skipped.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Mask;

pub const MANIFEST_MAGIC: &str = "#pedattr-manifest-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Verify,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Verify, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Verify => "verify",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "verify" => Ok(Split::Verify),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split {other:?}; expected train, verify, or test"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
    Unknown,
}

impl Label {
    pub fn as_token(self) -> &'static str {
        match self {
            Label::Positive => "1",
            Label::Negative => "0",
            Label::Unknown => "?",
        }
    }

    pub fn from_token(tok: &str) -> std::result::Result<Self, String> {
        match tok {
            "1" => Ok(Label::Positive),
            "0" => Ok(Label::Negative),
            "?" => Ok(Label::Unknown),
            other => Err(format!("unknown label token {other:?}; expected 1, 0, ?")),
        }
    }

    pub fn known(self) -> Option<bool> {
        match self {
            Label::Positive => Some(true),
            Label::Negative => Some(false),
            Label::Unknown => None,
        }
    }
}

/// One pedestrian crop with its mask, labels, and split assignment.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: image::RgbImage,
    pub mask: Option<Mask>,
    /// One label per registry attribute, in registry order.
    pub labels: Vec<Label>,
    pub split: Option<Split>,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

impl Sample {
    pub fn label(&self, attr: usize) -> Label {
        self.labels[attr]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitTally {
    pub positives: usize,
    pub negatives: usize,
}

/// Per-attribute label counts, by split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttributeCounts {
    pub train: SplitTally,
    pub verify: SplitTally,
    pub test: SplitTally,
    pub unassigned: SplitTally,
}

impl AttributeCounts {
    fn tally_mut(&mut self, split: Option<Split>) -> &mut SplitTally {
        match split {
            Some(Split::Train) => &mut self.train,
            Some(Split::Verify) => &mut self.verify,
            Some(Split::Test) => &mut self.test,
            None => &mut self.unassigned,
        }
    }

    pub fn for_split(&self, split: Split) -> SplitTally {
        match split {
            Split::Train => self.train,
            Split::Verify => self.verify,
            Split::Test => self.test,
        }
    }
}

/// Attribute names plus per-split label counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeRegistry {
    names: Vec<String>,
    counts: Vec<AttributeCounts>,
}

impl AttributeRegistry {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("attribute registry needs at least one name"));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || name.contains('\t') || name.contains('\n') {
                return Err(Error::invalid(format!(
                    "attribute name {name:?} is empty or contains separators"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate attribute name {name:?}")));
            }
        }
        let counts = vec![AttributeCounts::default(); names.len()];
        Ok(AttributeRegistry { names, counts })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn counts(&self) -> &[AttributeCounts] {
        &self.counts
    }

    /// Recomputes label counts from `samples`.
    pub fn tally(&mut self, samples: &[Sample]) {
        for c in &mut self.counts {
            *c = AttributeCounts::default();
        }
        for sample in samples {
            debug_assert_eq!(sample.labels.len(), self.names.len());
            for (attr, label) in sample.labels.iter().enumerate() {
                let tally = self.counts[attr].tally_mut(sample.split);
                match label {
                    Label::Positive => tally.positives += 1,
                    Label::Negative => tally.negatives += 1,
                    Label::Unknown => {}
                }
            }
        }
    }
}

struct RowSpec {
    line: usize,
    id: String,
    image_path: PathBuf,
    mask_path: Option<PathBuf>,
    split: Option<Split>,
    labels: Vec<Label>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a manifest and every image and mask it references.
pub fn load_manifest(path: &Path) -> Result<(AttributeRegistry, Vec<Sample>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, line)) if line.trim().is_empty() => {
                let _ = idx;
                continue;
            }
            Some((idx, line)) => break (idx + 1, line),
            None => return Err(Error::EmptyManifest { path: path.into() }),
        }
    };
    let mut header_fields = header.1.split('\t');
    if header_fields.next() != Some(MANIFEST_MAGIC) {
        return Err(Error::manifest(
            path,
            header.0,
            format!("expected header starting with {MANIFEST_MAGIC:?}"),
        ));
    }
    let names: Vec<String> = header_fields.map(str::to_owned).collect();
    let mut registry = AttributeRegistry::new(names)
        .map_err(|e| Error::manifest(path, header.0, e.to_string()))?;

    let mut rows = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = 4 + registry.len();
        if fields.len() != expected {
            return Err(Error::manifest(
                path,
                line_no,
                format!("expected {expected} tab-separated fields, got {}", fields.len()),
            ));
        }
        let id = fields[0].to_owned();
        if id.is_empty() {
            return Err(Error::manifest(path, line_no, "empty sample id"));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::manifest(
                path,
                line_no,
                format!("duplicate sample id {id:?}"),
            ));
        }
        let image_path = resolve(&base, Path::new(fields[1]));
        let mask_path = match fields[2] {
            "-" => None,
            p => Some(resolve(&base, Path::new(p))),
        };
        let split = match fields[3] {
            "-" => None,
            s => Some(
                Split::from_str(s).map_err(|msg| Error::manifest(path, line_no, msg))?,
            ),
        };
        let mut labels = Vec::with_capacity(registry.len());
        for tok in &fields[4..] {
            labels.push(
                Label::from_token(tok).map_err(|msg| Error::manifest(path, line_no, msg))?,
            );
        }
        rows.push(RowSpec {
            line: line_no,
            id,
            image_path,
            mask_path,
            split,
            labels,
        });
    }

    if rows.is_empty() {
        return Err(Error::EmptyManifest { path: path.into() });
    }

    let samples: Vec<Sample> = rows
        .into_par_iter()
        .map(|row| load_row(path, row))
        .collect::<Result<_>>()?;

    registry.tally(&samples);
    Ok((registry, samples))
}

fn load_row(manifest: &Path, row: RowSpec) -> Result<Sample> {
    let image = image::open(&row.image_path)
        .map_err(|e| Error::image(&row.image_path, e))?
        .to_rgb8();
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::ZeroArea { id: row.id });
    }
    let mask = match &row.mask_path {
        None => None,
        Some(p) => {
            let gray = image::open(p).map_err(|e| Error::image(p, e))?.to_luma8();
            if gray.dimensions() != image.dimensions() {
                return Err(Error::MaskDims {
                    id: row.id,
                    mask_w: gray.width(),
                    mask_h: gray.height(),
                    img_w: image.width(),
                    img_h: image.height(),
                });
            }
            Some(Mask::from_luma(&gray))
        }
    };
    let _ = (manifest, row.line);
    Ok(Sample {
        id: row.id,
        image,
        mask,
        labels: row.labels,
        split: row.split,
        image_path: row.image_path,
        mask_path: row.mask_path,
    })
}

/// Writes a manifest row for every sample. Paths under the manifest's
/// directory are written relative so the dataset stays relocatable.
pub fn save_manifest(
    path: &Path,
    registry: &AttributeRegistry,
    samples: &[Sample],
) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let mut out = String::new();
    out.push_str(MANIFEST_MAGIC);
    for name in registry.names() {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for sample in samples {
        debug_assert_eq!(sample.labels.len(), registry.len());
        out.push_str(&sample.id);
        out.push('\t');
        out.push_str(&rel(&sample.image_path));
        out.push('\t');
        match &sample.mask_path {
            Some(p) => out.push_str(&rel(p)),
            None => out.push('-'),
        }
        out.push('\t');
        match sample.split {
            Some(s) => out.push_str(s.as_str()),
            None => out.push('-'),
        }
        for label in &sample.labels {
            out.push('\t');
            out.push_str(label.as_token());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Assigns every sample to train/verify/test by seeded shuffle.
///
/// Split sizes follow the ratios by largest-remainder rounding, so exact
/// products give exact sizes. Any split already present on a sample is
/// overwritten.
pub fn split_partition(
    mut samples: Vec<Sample>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Vec<Sample>> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|&r| !(r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadSplitRatios { ratios });
    }
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("cannot partition zero samples"));
    }

    let sizes = apportion(n, ratios);

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < sizes[0] {
            Split::Train
        } else if rank < sizes[0] + sizes[1] {
            Split::Verify
        } else {
            Split::Test
        };
        samples[idx].split = Some(split);
    }
    Ok(samples)
}

/// Largest-remainder apportionment of `n` items into three parts.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        sizes[order[i % 3]] += 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sample(id: &str, labels: Vec<Label>) -> Sample {
        let image = image::RgbImage::from_pixel(2, 3, image::Rgb([10, 20, 30]));
        Sample {
            id: id.to_owned(),
            image,
            mask: None,
            labels,
            split: None,
            image_path: PathBuf::from(format!("{id}.png")),
            mask_path: None,
        }
    }

    #[test]
    fn apportionment_is_exact_for_exact_products() {
        assert_eq!(apportion(19000, [0.5, 0.1, 0.4]), [9500, 1900, 7600]);
        assert_eq!(apportion(10, [0.5, 0.2, 0.3]), [5, 2, 3]);
    }

    #[test]
    fn apportionment_conserves_total() {
        for n in [1usize, 2, 3, 7, 100, 999] {
            let sizes = apportion(n, [0.5, 0.1, 0.4]);
            assert_eq!(sizes.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn partition_sizes_and_membership() {
        let samples: Vec<Sample> = (0..19000 % 200 + 200)
            .map(|i| tiny_sample(&format!("s{i}"), vec![Label::Positive]))
            .collect();
        let n = samples.len();
        let parted = split_partition(samples, [0.5, 0.1, 0.4], 7).unwrap();
        let count = |s: Split| parted.iter().filter(|x| x.split == Some(s)).count();
        assert_eq!(count(Split::Train) + count(Split::Verify) + count(Split::Test), n);
        assert_eq!(count(Split::Train), n / 2);
    }

    #[test]
    fn partition_is_seed_deterministic() {
        let mk = || {
            (0..50)
                .map(|i| tiny_sample(&format!("s{i}"), vec![Label::Negative]))
                .collect::<Vec<_>>()
        };
        let a = split_partition(mk(), [0.5, 0.1, 0.4], 3).unwrap();
        let b = split_partition(mk(), [0.5, 0.1, 0.4], 3).unwrap();
        let c = split_partition(mk(), [0.5, 0.1, 0.4], 4).unwrap();
        let splits = |v: &[Sample]| v.iter().map(|s| s.split).collect::<Vec<_>>();
        assert_eq!(splits(&a), splits(&b));
        assert_ne!(splits(&a), splits(&c));
    }

    #[test]
    fn zero_ratio_is_rejected() {
        let samples = vec![tiny_sample("a", vec![Label::Positive])];
        let got = split_partition(samples, [0.5, 0.5, 0.0], 1);
        assert!(matches!(got, Err(Error::BadSplitRatios { .. })));
    }

    #[test]
    fn ratios_not_summing_to_one_are_rejected() {
        let samples = vec![tiny_sample("a", vec![Label::Positive])];
        let got = split_partition(samples, [0.5, 0.2, 0.4], 1);
        assert!(matches!(got, Err(Error::BadSplitRatios { .. })));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let got = AttributeRegistry::new(vec!["a".into(), "a".into()]);
        assert!(got.is_err());
    }

    #[test]
    fn tally_counts_by_split() {
        let mut registry = AttributeRegistry::new(vec!["x".into()]).unwrap();
        let mut s1 = tiny_sample("a", vec![Label::Positive]);
        s1.split = Some(Split::Train);
        let mut s2 = tiny_sample("b", vec![Label::Negative]);
        s2.split = Some(Split::Train);
        let s3 = tiny_sample("c", vec![Label::Unknown]);
        registry.tally(&[s1, s2, s3]);
        let c = registry.counts()[0];
        assert_eq!(c.train, SplitTally { positives: 1, negatives: 1 });
        assert_eq!(c.unassigned, SplitTally { positives: 0, negatives: 0 });
    }
}
