//! End-to-end pipeline: load -> features -> train -> infer -> evaluate.
//!
//! The pipeline is a pure function of (dataset, config): every random stage
//! derives its seed from the master seed, so repeated runs produce
//! byte-identical reports. Stage failures propagate with the stage name
//! attached.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{ExtractConfig, Extractor, FeatureVector, Scheme};
use crate::harness::cache::{self, CacheKey};
use crate::harness::config::RunConfig;
use crate::harness::eval::{evaluate, EvalReport, ReportColumn};
use crate::harness::synth::generate_synthetic;
use crate::inference::{run_regime, RegimeConfig, RegimeInput};
use crate::ingest::{load_manifest, split_partition, AttributeRegistry, Label, Sample, Split};
use crate::similarity::forest::ForestConfig;
use crate::unary::{augment_positives, train_iksvm, JitterConfig, TrainConfig, UnaryModel};

/// Runs the full pipeline and writes `report.{txt,csv,balanced.csv}` into
/// `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvalReport> {
    let (dataset_id, registry, samples) =
        load_stage(cfg).map_err(|e| Error::stage("load", e))?;
    let features = feature_stage(cfg, &dataset_id, &samples)
        .map_err(|e| Error::stage("features", e))?;
    let models = train_stage(cfg, &registry, &samples, &features)
        .map_err(|e| Error::stage("train-unary", e))?;
    let report = infer_and_evaluate(cfg, &dataset_id, &registry, &samples, &features, &models)?;
    report
        .write(&cfg.out_dir, "report")
        .map_err(|e| Error::stage("report", e))?;
    Ok(report)
}

/// Loads the manifest or renders the synthetic dataset; guarantees every
/// sample carries a split.
fn load_stage(cfg: &RunConfig) -> Result<(String, AttributeRegistry, Vec<Sample>)> {
    let (dataset_id, registry, mut samples) = match &cfg.manifest {
        Some(path) => {
            let id = cache::manifest_dataset_id(path)?;
            let (registry, samples) = load_manifest(path)?;
            (id, registry, samples)
        }
        None => {
            let id = format!(
                "synth-n{}-a{}-noise{}-seed{}",
                cfg.synth_n, cfg.synth_attrs, cfg.synth_noise, cfg.seed
            );
            let (registry, samples) =
                generate_synthetic(cfg.synth_n, cfg.synth_attrs, cfg.synth_noise, cfg.seed)?;
            (id, registry, samples)
        }
    };

    let unsplit = samples.iter().filter(|s| s.split.is_none()).count();
    if unsplit == samples.len() {
        samples = split_partition(samples, cfg.split_ratios, cfg.stage_seed("split"))?;
    } else if unsplit > 0 {
        return Err(Error::invalid(format!(
            "{unsplit} of {} samples lack a split; assign all or none",
            samples.len()
        )));
    }
    Ok((dataset_id, registry, samples))
}

/// Features for every sample, per scheme, in sample order; cache-backed.
fn feature_stage(
    cfg: &RunConfig,
    dataset_id: &str,
    samples: &[Sample],
) -> Result<BTreeMap<Scheme, Vec<FeatureVector>>> {
    let extractor = extractor_for(cfg)?;
    let bank_json = serde_json::to_string(&ExtractConfig::default().bank)
        .map_err(|e| Error::invalid(format!("filter bank not serializable: {e}")))?;
    let feat_hash = cache::feature_config_hash(cfg.resize, cfg.strips, cfg.bins, &bank_json);
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();

    let mut out = BTreeMap::new();
    for &scheme in &cfg.schemes {
        let key = CacheKey {
            dataset_id: dataset_id.to_owned(),
            scheme,
            feat_hash: feat_hash.clone(),
        };
        if let Some(dir) = &cfg.cache_dir {
            if let Some(cached) = cache::load_cached(dir, &key, &ids, cfg.strips, cfg.bins) {
                out.insert(scheme, cached);
                continue;
            }
        }
        let features: Vec<FeatureVector> = samples
            .par_iter()
            .map(|s| extractor.sample_features(s, scheme))
            .collect::<Result<Vec<_>>>()?;
        if let Some(dir) = &cfg.cache_dir {
            cache::store_cache(dir, &key, &ids, &features)?;
        }
        out.insert(scheme, features);
    }
    Ok(out)
}

fn extractor_for(cfg: &RunConfig) -> Result<Extractor> {
    Extractor::new(ExtractConfig {
        resize: cfg.resize,
        strips: cfg.strips,
        bins: cfg.bins,
        ..ExtractConfig::default()
    })
}

/// Per-scheme, per-attribute unary models.
fn train_stage(
    cfg: &RunConfig,
    registry: &AttributeRegistry,
    samples: &[Sample],
    features: &BTreeMap<Scheme, Vec<FeatureVector>>,
) -> Result<BTreeMap<Scheme, BTreeMap<String, UnaryModel>>> {
    let train_cfg = TrainConfig {
        c: cfg.svm_c,
        ..TrainConfig::default()
    };
    let extractor = extractor_for(cfg)?;

    let mut by_scheme = BTreeMap::new();
    for &scheme in &cfg.schemes {
        let feats = &features[&scheme];
        let models: BTreeMap<String, UnaryModel> = registry
            .names()
            .par_iter()
            .enumerate()
            .map(|(ai, attr)| {
                let seed = cfg.stage_seed(&format!("augment/{}/{attr}", scheme.as_str()));
                let model = train_attribute_model(
                    samples,
                    feats,
                    &extractor,
                    scheme,
                    ai,
                    attr,
                    &train_cfg,
                    cfg.augment,
                    seed,
                )
                .map_err(|e| {
                    Error::invalid(format!("attribute {attr:?}, scheme {}: {e}", scheme.as_str()))
                })?;
                Ok((attr.clone(), model))
            })
            .collect::<Result<_>>()?;
        by_scheme.insert(scheme, models);
    }
    Ok(by_scheme)
}

/// Trains the unary model for one attribute: gathers labeled train/verify
/// rows, optionally augments positives (multiplier > 1) with jittered
/// re-renders, and fits the calibrated SVM.
#[allow(clippy::too_many_arguments)]
pub fn train_attribute_model(
    samples: &[Sample],
    feats: &[FeatureVector],
    extractor: &Extractor,
    scheme: Scheme,
    ai: usize,
    attr: &str,
    train_cfg: &TrainConfig,
    augment: f64,
    augment_seed: u64,
) -> Result<UnaryModel> {
    let mut train_x: Vec<&[f64]> = Vec::new();
    let mut train_y: Vec<bool> = Vec::new();
    let mut verify_x: Vec<&[f64]> = Vec::new();
    let mut verify_y: Vec<bool> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let y = match s.labels[ai] {
            Label::Positive => true,
            Label::Negative => false,
            Label::Unknown => continue,
        };
        match s.split {
            Some(Split::Train) => {
                train_x.push(&feats[i].values);
                train_y.push(y);
            }
            Some(Split::Verify) => {
                verify_x.push(&feats[i].values);
                verify_y.push(y);
            }
            _ => {}
        }
    }

    // Augmentation renders jittered copies of the positives and extracts
    // their features fresh; cached features are never affected.
    let extra_features: Vec<FeatureVector>;
    if augment > 1.0 {
        let positives: Vec<Sample> = samples
            .iter()
            .filter(|s| s.split == Some(Split::Train) && s.labels[ai] == Label::Positive)
            .cloned()
            .collect();
        if !positives.is_empty() {
            let target = (positives.len() as f64 * augment).ceil() as usize;
            let augmented =
                augment_positives(&positives, target, &JitterConfig::default(), augment_seed)?;
            extra_features = augmented[positives.len()..]
                .iter()
                .map(|s| extractor.sample_features(s, scheme))
                .collect::<Result<Vec<_>>>()?;
            for f in &extra_features {
                train_x.push(&f.values);
                train_y.push(true);
            }
        }
    }

    train_iksvm(attr, &train_x, &train_y, &verify_x, &verify_y, train_cfg)
}

fn infer_and_evaluate(
    cfg: &RunConfig,
    dataset_id: &str,
    registry: &AttributeRegistry,
    samples: &[Sample],
    features: &BTreeMap<Scheme, Vec<FeatureVector>>,
    models: &BTreeMap<Scheme, BTreeMap<String, UnaryModel>>,
) -> Result<EvalReport> {
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let splits: Vec<Split> = samples
        .iter()
        .map(|s| s.split.expect("load stage assigns splits"))
        .collect();
    let label_rows: Vec<&[Label]> = samples.iter().map(|s| s.labels.as_slice()).collect();

    // Ground truth per attribute: labeled test samples only.
    let truths: Vec<BTreeMap<String, u8>> = registry
        .names()
        .iter()
        .enumerate()
        .map(|(ai, _)| {
            samples
                .iter()
                .filter(|s| s.split == Some(Split::Test))
                .filter_map(|s| match s.labels[ai] {
                    Label::Positive => Some((s.id.clone(), 1)),
                    Label::Negative => Some((s.id.clone(), 0)),
                    Label::Unknown => None,
                })
                .collect()
        })
        .collect();

    let mut columns = Vec::new();
    let mut plain = vec![Vec::new(); registry.len()];
    let mut balanced = vec![Vec::new(); registry.len()];
    for &regime in &cfg.regimes {
        for &scheme in &cfg.schemes {
            let input = RegimeInput {
                ids: &ids,
                features: &features[&scheme],
                splits: &splits,
                labels: &label_rows,
                attributes: registry.names(),
                models: &models[&scheme],
                forest: None,
            };
            let regime_cfg = RegimeConfig {
                k: cfg.k,
                lambda: cfg.lambda,
                sigma: cfg.sigma,
                forest: ForestConfig {
                    trees: cfg.trees,
                    ..ForestConfig::default()
                },
                seed: cfg.stage_seed(&format!("forest/{}/{}", regime.as_str(), scheme.as_str())),
            };
            let output =
                run_regime(&input, regime, &regime_cfg).map_err(|e| Error::stage("infer", e))?;
            for (ai, attr) in registry.names().iter().enumerate() {
                // Evaluation sees only test samples whose truth is known.
                let truth = &truths[ai];
                let restricted: BTreeMap<String, u8> = output.predictions[attr]
                    .iter()
                    .filter(|(id, _)| truth.contains_key(*id))
                    .map(|(id, &l)| (id.clone(), l))
                    .collect();
                let acc = evaluate(&restricted, truth)
                    .map_err(|e| Error::stage("evaluate", e))?;
                plain[ai].push(acc.plain);
                balanced[ai].push(acc.balanced);
            }
            columns.push(ReportColumn {
                regime: regime.as_str().to_owned(),
                scheme: scheme.as_str().to_owned(),
            });
        }
    }

    Ok(EvalReport {
        dataset_id: dataset_id.to_owned(),
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        columns,
        attributes: registry.names().to_vec(),
        plain,
        balanced,
    })
}
