//! Feature cache: one JSONL file per (dataset, scheme, feature config).
//!
//! The first line is a header binding the file to a dataset id, a scheme,
//! and a feature-config hash; the remaining lines carry one sample each in
//! dataset order. A cache hit requires the header and the full id sequence
//! to match, so stale or partial files fall back to recomputation. Cached
//! and fresh values are bit-identical because f64 values survive JSON
//! round-trips exactly.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Scheme, NUM_CHANNELS};
use crate::harness::config::fnv1a64;

const CACHE_FORMAT: &str = "pedattr-feature-cache";
const CACHE_VERSION: u32 = 1;

/// Identifies one cache file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub dataset_id: String,
    pub scheme: Scheme,
    /// Hash of every feature-affecting config field.
    pub feat_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    dataset: String,
    scheme: String,
    feat_hash: String,
    strips: usize,
    bins: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    id: String,
    values: Vec<f64>,
}

/// Hash of the feature-affecting parts of a configuration.
pub fn feature_config_hash(
    resize: Option<(u32, u32)>,
    strips: usize,
    bins: usize,
    bank_json: &str,
) -> String {
    let text = format!(
        "resize={:?};strips={strips};bins={bins};bank={bank_json}",
        resize
    );
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

/// Content-derived dataset id for a manifest: file stem plus content hash,
/// so edits invalidate caches but renames of parent directories do not.
pub fn manifest_dataset_id(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".to_owned());
    Ok(format!("{stem}-{:016x}", fnv1a64(&bytes)))
}

pub fn cache_path(dir: &Path, key: &CacheKey) -> PathBuf {
    dir.join(format!(
        "{}.{}.{}.jsonl",
        key.dataset_id,
        key.scheme.as_str(),
        key.feat_hash
    ))
}

/// Loads cached features if the file matches `key` and covers exactly
/// `ids` in order; any mismatch or parse problem is a miss, never an error.
pub fn load_cached(
    dir: &Path,
    key: &CacheKey,
    ids: &[String],
    strips: usize,
    bins: usize,
) -> Option<Vec<FeatureVector>> {
    let path = cache_path(dir, key);
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let header: CacheHeader = serde_json::from_str(lines.next()?).ok()?;
    if header.format != CACHE_FORMAT
        || header.version != CACHE_VERSION
        || header.dataset != key.dataset_id
        || header.scheme != key.scheme.as_str()
        || header.feat_hash != key.feat_hash
        || header.strips != strips
        || header.bins != bins
    {
        return None;
    }
    let expected_dim = NUM_CHANNELS * strips * bins * key.scheme.region_count();
    let mut features = Vec::with_capacity(ids.len());
    for id in ids {
        let row: CacheRow = serde_json::from_str(lines.next()?).ok()?;
        if row.id != *id || row.values.len() != expected_dim {
            return None;
        }
        features.push(FeatureVector {
            values: row.values,
            scheme: key.scheme,
            channels: NUM_CHANNELS,
            strips,
            bins,
        });
    }
    if lines.next().is_some() {
        return None;
    }
    Some(features)
}

/// Writes a cache file for `ids`/`features` (parallel, dataset order).
pub fn store_cache(
    dir: &Path,
    key: &CacheKey,
    ids: &[String],
    features: &[FeatureVector],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_feature_file(&cache_path(dir, key), key, ids, features)
}

/// Writes a feature file at an explicit path (same format as the cache).
pub fn write_feature_file(
    path: &Path,
    key: &CacheKey,
    ids: &[String],
    features: &[FeatureVector],
) -> Result<()> {
    debug_assert_eq!(ids.len(), features.len());
    let mut out = Vec::new();
    let header = CacheHeader {
        format: CACHE_FORMAT.to_owned(),
        version: CACHE_VERSION,
        dataset: key.dataset_id.clone(),
        scheme: key.scheme.as_str().to_owned(),
        feat_hash: key.feat_hash.clone(),
        strips: features.first().map_or(0, |f| f.strips),
        bins: features.first().map_or(0, |f| f.bins),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::format(path, e.to_string()))?;
    out.push(b'\n');
    for (id, f) in ids.iter().zip(features) {
        let row = CacheRow {
            id: id.clone(),
            values: f.values.clone(),
        };
        serde_json::to_writer(&mut out, &row).map_err(|e| Error::format(path, e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a feature file strictly: unlike [`load_cached`], every problem is
/// an error naming the file, for CLI stages that consume explicit paths.
pub fn read_feature_file(path: &Path) -> Result<(CacheKey, Vec<String>, Vec<FeatureVector>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let header: CacheHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
        return Err(Error::format(
            path,
            format!("not a {CACHE_FORMAT} v{CACHE_VERSION} file"),
        ));
    }
    let scheme: Scheme = header
        .scheme
        .parse()
        .map_err(|e: String| Error::format(path, e))?;
    let key = CacheKey {
        dataset_id: header.dataset,
        scheme,
        feat_hash: header.feat_hash,
    };
    let expected_dim = NUM_CHANNELS * header.strips * header.bins * scheme.region_count();
    let mut ids = Vec::new();
    let mut features = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: CacheRow = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        if row.values.len() != expected_dim {
            return Err(Error::format(
                path,
                format!(
                    "row {} ({}): dim {} but header implies {expected_dim}",
                    i + 1,
                    row.id,
                    row.values.len()
                ),
            ));
        }
        ids.push(row.id);
        features.push(FeatureVector {
            values: row.values,
            scheme,
            channels: NUM_CHANNELS,
            strips: header.strips,
            bins: header.bins,
        });
    }
    if ids.is_empty() {
        return Err(Error::format(path, "no feature rows"));
    }
    Ok((key, ids, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_features(n: usize, strips: usize, bins: usize) -> (Vec<String>, Vec<FeatureVector>) {
        let dim = NUM_CHANNELS * strips * bins;
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let feats = (0..n)
            .map(|i| FeatureVector {
                values: (0..dim).map(|j| ((i * dim + j) as f64).sin().abs()).collect(),
                scheme: Scheme::Whole,
                channels: NUM_CHANNELS,
                strips,
                bins,
            })
            .collect();
        (ids, feats)
    }

    fn key() -> CacheKey {
        CacheKey {
            dataset_id: "demo".into(),
            scheme: Scheme::Whole,
            feat_hash: feature_config_hash(None, 2, 3, "{}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (ids, feats) = demo_features(4, 2, 3);
        store_cache(dir.path(), &key(), &ids, &feats).unwrap();
        let loaded = load_cached(dir.path(), &key(), &ids, 2, 3).unwrap();
        for (a, b) in feats.iter().zip(&loaded) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.scheme, b.scheme);
        }
    }

    #[test]
    fn misses_on_key_or_id_changes() {
        let dir = tempfile::tempdir().unwrap();
        let (ids, feats) = demo_features(4, 2, 3);
        store_cache(dir.path(), &key(), &ids, &feats).unwrap();

        // Different feature hash -> different path -> miss.
        let mut other = key();
        other.feat_hash = feature_config_hash(Some((8, 16)), 2, 3, "{}");
        assert!(load_cached(dir.path(), &other, &ids, 2, 3).is_none());

        // Different id set -> miss.
        let mut wrong_ids = ids.clone();
        wrong_ids[0] = "zz".into();
        assert!(load_cached(dir.path(), &key(), &wrong_ids, 2, 3).is_none());

        // Fewer ids than rows -> miss (extra rows indicate a stale file).
        assert!(load_cached(dir.path(), &key(), &ids[..3], 2, 3).is_none());
    }

    #[test]
    fn strict_reader_round_trips_and_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let (ids, feats) = demo_features(3, 2, 3);
        let path = dir.path().join("feat.jsonl");
        write_feature_file(&path, &key(), &ids, &feats).unwrap();
        let (k, rids, rfeats) = read_feature_file(&path).unwrap();
        assert_eq!(k, key());
        assert_eq!(rids, ids);
        assert_eq!(rfeats[1].values, feats[1].values);
        assert_eq!(rfeats[0].strips, 2);

        std::fs::write(&path, "{\"format\":\"other\"}\n").unwrap();
        assert!(read_feature_file(&path).is_err());
        std::fs::write(&path, "").unwrap();
        assert!(read_feature_file(&path).is_err());
    }

    #[test]
    fn corrupt_file_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let (ids, feats) = demo_features(2, 2, 3);
        store_cache(dir.path(), &key(), &ids, &feats).unwrap();
        let path = cache_path(dir.path(), &key());
        std::fs::write(&path, "not json\n").unwrap();
        assert!(load_cached(dir.path(), &key(), &ids, 2, 3).is_none());
    }

    #[test]
    fn feature_hash_covers_every_knob() {
        let base = feature_config_hash(None, 6, 16, "{}");
        assert_ne!(base, feature_config_hash(Some((48, 128)), 6, 16, "{}"));
        assert_ne!(base, feature_config_hash(None, 5, 16, "{}"));
        assert_ne!(base, feature_config_hash(None, 6, 8, "{}"));
        assert_ne!(base, feature_config_hash(None, 6, 16, "{\"x\":1}"));
    }
}
