//! Pipeline configuration: a flat key=value file, CLI overrides, and a
//! stable hash for report metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::Scheme;
use crate::inference::Regime;

/// 64-bit FNV-1a; stable across platforms, used for config and content ids.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Everything a pipeline run depends on, beyond the dataset itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Dataset manifest; `None` renders a synthetic dataset instead.
    pub manifest: Option<PathBuf>,
    /// Report output directory.
    pub out_dir: PathBuf,
    /// Feature cache directory; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Feature schemes, one report column group per scheme.
    pub schemes: Vec<Scheme>,
    /// Inference regimes, crossed with schemes to form report columns.
    pub regimes: Vec<Regime>,
    /// Neighbors per node in the similarity graph.
    pub k: usize,
    /// Pairwise strength.
    pub lambda: f64,
    /// Gaussian bandwidth; `None` tunes on the verify split.
    pub sigma: Option<f64>,
    /// Trees in the unsupervised forest.
    pub trees: usize,
    /// SVM box constraint.
    pub svm_c: f64,
    /// Master seed; stage seeds are derived from it.
    pub seed: u64,
    /// Positive-set multiplier for train-time augmentation; 1 disables.
    pub augment: f64,
    /// Synthetic dataset shape, used when `manifest` is `None`.
    pub synth_n: usize,
    pub synth_attrs: usize,
    pub synth_noise: f64,
    /// Crop size (width, height) features are computed at; `None` = native.
    pub resize: Option<(u32, u32)>,
    pub strips: usize,
    pub bins: usize,
    /// Train/verify/test ratios applied to manifests without splits.
    pub split_ratios: [f64; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            out_dir: PathBuf::from("pedattr-out"),
            cache_dir: None,
            schemes: vec![Scheme::ForeWhole],
            regimes: vec![Regime::Iksvm, Regime::MrfR2],
            k: 5,
            lambda: 1.0,
            sigma: None,
            trees: 100,
            svm_c: 1.0,
            seed: 7,
            augment: 1.0,
            synth_n: 200,
            synth_attrs: 3,
            synth_noise: 0.1,
            resize: None,
            strips: 6,
            bins: 16,
            split_ratios: [0.5, 0.1, 0.4],
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {value:?}")))
}

/// Parses a resize spec: `WIDTHxHEIGHT` or `none`.
pub fn parse_resize(v: &str) -> Result<Option<(u32, u32)>> {
    if v == "none" {
        return Ok(None);
    }
    let (w, h) = v.split_once('x').ok_or_else(|| {
        Error::invalid(format!("resize: expected WIDTHxHEIGHT or none, got {v:?}"))
    })?;
    Ok(Some((parse_num("resize", w)?, parse_num("resize", h)?)))
}

/// Seed for a named stage, derived from a master seed so stages are
/// decoupled but reproducible.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(stage.as_bytes());
    fnv1a64(&bytes)
}

impl RunConfig {
    /// Applies `map` on top of the defaults. Unknown keys are rejected so
    /// typos fail loudly.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (key, value) in map {
            let v = value.trim();
            match key.as_str() {
                "manifest" => {
                    cfg.manifest = if v.is_empty() || v == "none" {
                        None
                    } else {
                        Some(PathBuf::from(v))
                    }
                }
                "out-dir" => cfg.out_dir = PathBuf::from(v),
                "cache-dir" => {
                    cfg.cache_dir = if v.is_empty() || v == "none" {
                        None
                    } else {
                        Some(PathBuf::from(v))
                    }
                }
                "scheme" => {
                    cfg.schemes = v
                        .split(',')
                        .map(|s| s.trim().parse::<Scheme>().map_err(Error::invalid))
                        .collect::<Result<Vec<_>>>()?;
                    if cfg.schemes.is_empty() {
                        return Err(Error::invalid("scheme list is empty"));
                    }
                }
                "regime" => {
                    cfg.regimes = v
                        .split(',')
                        .map(|s| s.trim().parse::<Regime>())
                        .collect::<Result<Vec<_>>>()?;
                    if cfg.regimes.is_empty() {
                        return Err(Error::invalid("regime list is empty"));
                    }
                }
                "k" => cfg.k = parse_num(key, v)?,
                "lambda" => cfg.lambda = parse_num(key, v)?,
                "sigma" => {
                    cfg.sigma = if v == "auto" {
                        None
                    } else {
                        Some(parse_num(key, v)?)
                    }
                }
                "trees" => cfg.trees = parse_num(key, v)?,
                "c" => cfg.svm_c = parse_num(key, v)?,
                "seed" => cfg.seed = parse_num(key, v)?,
                "augment" => cfg.augment = parse_num(key, v)?,
                "synth-n" => cfg.synth_n = parse_num(key, v)?,
                "synth-attrs" => cfg.synth_attrs = parse_num(key, v)?,
                "synth-noise" => cfg.synth_noise = parse_num(key, v)?,
                "resize" => cfg.resize = parse_resize(v)?,
                "strips" => cfg.strips = parse_num(key, v)?,
                "bins" => cfg.bins = parse_num(key, v)?,
                "split-ratios" => {
                    let parts: Vec<f64> = v
                        .split(',')
                        .map(|s| parse_num("split-ratios", s.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    if parts.len() != 3 {
                        return Err(Error::invalid(format!(
                            "split-ratios needs exactly 3 values, got {}",
                            parts.len()
                        )));
                    }
                    cfg.split_ratios = [parts[0], parts[1], parts[2]];
                }
                other => {
                    return Err(Error::invalid(format!("unknown config key {other:?}")));
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical key=value form; inverse of [`RunConfig::from_map`] and the
    /// input to the config hash.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let path_str = |p: &Path| p.to_string_lossy().into_owned();
        m.insert(
            "manifest".into(),
            self.manifest.as_deref().map_or("none".into(), path_str),
        );
        m.insert("out-dir".into(), path_str(&self.out_dir));
        m.insert(
            "cache-dir".into(),
            self.cache_dir.as_deref().map_or("none".into(), path_str),
        );
        m.insert(
            "scheme".into(),
            self.schemes
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert(
            "regime".into(),
            self.regimes
                .iter()
                .map(|r| r.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("k".into(), self.k.to_string());
        m.insert("lambda".into(), self.lambda.to_string());
        m.insert(
            "sigma".into(),
            self.sigma.map_or("auto".into(), |s| s.to_string()),
        );
        m.insert("trees".into(), self.trees.to_string());
        m.insert("c".into(), self.svm_c.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("augment".into(), self.augment.to_string());
        m.insert("synth-n".into(), self.synth_n.to_string());
        m.insert("synth-attrs".into(), self.synth_attrs.to_string());
        m.insert("synth-noise".into(), self.synth_noise.to_string());
        m.insert(
            "resize".into(),
            self.resize.map_or("none".into(), |(w, h)| format!("{w}x{h}")),
        );
        m.insert("strips".into(), self.strips.to_string());
        m.insert("bins".into(), self.bins.to_string());
        m.insert(
            "split-ratios".into(),
            self.split_ratios.map(|r| r.to_string()).join(","),
        );
        m
    }

    /// Hash of the canonical form, hex-printed. Identifies a run's
    /// configuration in report metadata.
    pub fn config_hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.to_map() {
            text.push_str(&k);
            text.push('=');
            text.push_str(&v);
            text.push('\n');
        }
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    /// Seed for a named stage, see [`derive_seed`].
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

/// Parses a flat config file: `key = value` lines, `#` comments, blanks.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!(
                "config line {}: expected key = value, got {line:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim().to_owned();
        if map.insert(key.clone(), value.trim().to_owned()).is_some() {
            return Err(Error::invalid(format!(
                "config line {}: duplicate key {key:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Loads and parses a config file.
pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_values() {
        // Reference vectors for 64-bit FNV-1a.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn map_round_trip_preserves_config() {
        let mut cfg = RunConfig::default();
        cfg.manifest = Some(PathBuf::from("/data/m.tsv"));
        cfg.schemes = vec![Scheme::Whole, Scheme::ForeWhole];
        cfg.regimes = vec![Regime::MrfG2];
        cfg.sigma = Some(0.25);
        cfg.resize = Some((48, 128));
        let back = RunConfig::from_map(&cfg.to_map()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_tracks_content_not_identity() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.config_hash(), b.config_hash());
        b.k = 9;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn parses_file_syntax() {
        let map = parse_config_text("# comment\n\nk = 9\nscheme = whole, fore-whole\n").unwrap();
        assert_eq!(map["k"], "9");
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.k, 9);
        assert_eq!(cfg.schemes, vec![Scheme::Whole, Scheme::ForeWhole]);

        assert!(parse_config_text("k 9").is_err());
        assert!(parse_config_text("k=1\nk=2").is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut map = BTreeMap::new();
        map.insert("nope".to_string(), "1".to_string());
        assert!(RunConfig::from_map(&map).is_err());

        let mut map = BTreeMap::new();
        map.insert("k".to_string(), "many".to_string());
        assert!(RunConfig::from_map(&map).is_err());

        let mut map = BTreeMap::new();
        map.insert("resize".to_string(), "48".to_string());
        assert!(RunConfig::from_map(&map).is_err());
    }

    #[test]
    fn sigma_auto_and_resize_none_round_trip() {
        let mut map = BTreeMap::new();
        map.insert("sigma".to_string(), "auto".to_string());
        map.insert("resize".to_string(), "none".to_string());
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.sigma, None);
        assert_eq!(cfg.resize, None);
        assert_eq!(cfg.to_map()["sigma"], "auto");
    }

    #[test]
    fn stage_seeds_differ_by_stage() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.stage_seed("forest"), cfg.stage_seed("augment"));
        assert_eq!(cfg.stage_seed("forest"), cfg.stage_seed("forest"));
    }
}
