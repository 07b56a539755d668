//! Command-line driver. Stage subcommands exchange data through files
//! (manifests, feature files, model files, prediction files) so each step
//! can be run, cached, and inspected independently; `pipeline` runs the
//! whole chain in one process and writes report tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use pedattr::harness::cache::{self, CacheKey};
use pedattr::harness::config::{derive_seed, load_config, parse_resize, RunConfig};
use pedattr::harness::{
    evaluate, generate_synthetic, read_predictions, run_pipeline, train_attribute_model,
    write_dataset, write_predictions,
};
use pedattr::{
    load_manifest, run_regime, train_unsupervised_forest, AttributeRegistry, Error, ExtractConfig,
    Extractor, FeatureVector, FilterBankConfig, ForestConfig, ForestModel, Label, Regime,
    RegimeConfig, RegimeInput, Result, Sample, Scheme, Split, TrainConfig, UnaryModel,
};

#[derive(Parser)]
#[command(
    name = "pedattr",
    version,
    about = "Pedestrian attribute recognition: strip-histogram features, \
             intersection-kernel SVM unaries, and graph-based MRF refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic labeled dataset (images, masks, manifest)
    Synth(SynthArgs),
    /// Compute strip-histogram features for every sample in a manifest
    Extract(ExtractArgs),
    /// Train one calibrated intersection-kernel SVM per attribute
    TrainUnary(TrainUnaryArgs),
    /// Train an unsupervised random forest for similarity queries
    TrainForest(TrainForestArgs),
    /// Predict test-sample attributes under one inference regime
    Infer(InferArgs),
    /// Score a prediction file against manifest labels
    Evaluate(EvaluateArgs),
    /// Run extract -> train -> infer -> evaluate and write report tables
    Pipeline(Box<PipelineArgs>),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write images/, masks/, and manifest.tsv into
    #[arg(long)]
    out: PathBuf,
    /// Number of samples
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Number of attributes
    #[arg(long, default_value_t = 3)]
    attrs: usize,
    /// Label flip probability in [0, 1)
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset manifest
    #[arg(long)]
    manifest: PathBuf,
    /// Feature scheme: whole, fore, fore-back, or fore-whole
    #[arg(long, default_value = "fore-whole")]
    scheme: String,
    /// Output feature file (JSON lines)
    #[arg(long)]
    out: PathBuf,
    /// Working resolution WIDTHxHEIGHT, or "none" for native
    #[arg(long, default_value = "none")]
    resize: String,
    #[arg(long, default_value_t = 6)]
    strips: usize,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    /// Filter bank JSON overriding the built-in Gabor/Schmid parameters
    #[arg(long)]
    filter_bank: Option<PathBuf>,
}

#[derive(Args)]
struct TrainUnaryArgs {
    /// Dataset manifest with explicit train/verify/test splits
    #[arg(long)]
    manifest: PathBuf,
    /// Feature file produced by `extract` for the same manifest
    #[arg(long)]
    features: PathBuf,
    /// Directory to write one <attribute>.unary.json model per attribute
    #[arg(long)]
    out: PathBuf,
    /// Attribute to train (repeatable); default is every attribute
    #[arg(long = "attr")]
    attrs: Vec<String>,
    /// SVM box constraint
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    /// Positive-set multiplier for jitter augmentation; 1 disables
    #[arg(long, default_value_t = 1.0)]
    augment: f64,
    /// Resize used at extract time; needed only when augmenting
    #[arg(long, default_value = "none")]
    resize: String,
    /// Filter bank used at extract time; needed only when augmenting
    #[arg(long)]
    filter_bank: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainForestArgs {
    /// Feature file whose rows form the forest's training population
    #[arg(long)]
    features: PathBuf,
    /// Output forest model file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct InferArgs {
    /// Dataset manifest with explicit train/verify/test splits
    #[arg(long)]
    manifest: PathBuf,
    /// Feature file produced by `extract` for the same manifest
    #[arg(long)]
    features: PathBuf,
    /// Directory of <attribute>.unary.json models from `train-unary`
    #[arg(long)]
    models: PathBuf,
    /// Regime: iksvm, mrf-g1, mrf-g2, mrf-r1, or mrf-r2
    #[arg(long)]
    regime: String,
    /// Output prediction file
    #[arg(long)]
    out: PathBuf,
    /// Neighbors per node in the similarity graph
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Pairwise strength
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Gaussian bandwidth, or "auto" to tune on the verify split
    #[arg(long, default_value = "auto")]
    sigma: String,
    /// Trees when a forest is trained in place
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Pretrained forest from `train-forest`; default trains in place
    #[arg(long)]
    forest: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset manifest carrying ground-truth labels and splits
    #[arg(long)]
    manifest: PathBuf,
    /// Prediction file from `infer`
    #[arg(long)]
    predictions: PathBuf,
    /// Also write the accuracy table to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flags mirror config keys one-to-one; a flag overrides its key.
#[derive(Args)]
struct PipelineArgs {
    /// Flat key = value config file; flags below override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest, or "none" for the synthetic dataset
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Feature cache directory (default: $PEDATTR_CACHE_DIR if set)
    #[arg(long)]
    cache_dir: Option<String>,
    /// Comma-separated feature schemes
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated inference regimes
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Gaussian bandwidth, or "auto" to tune on the verify split
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    trees: Option<String>,
    /// SVM box constraint
    #[arg(long = "c")]
    c: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Positive-set multiplier for jitter augmentation; 1 disables
    #[arg(long)]
    augment: Option<String>,
    #[arg(long)]
    synth_n: Option<String>,
    #[arg(long)]
    synth_attrs: Option<String>,
    #[arg(long)]
    synth_noise: Option<String>,
    /// Working resolution WIDTHxHEIGHT, or "none" for native
    #[arg(long)]
    resize: Option<String>,
    #[arg(long)]
    strips: Option<String>,
    #[arg(long)]
    bins: Option<String>,
    /// Train,verify,test fractions for manifests without splits
    #[arg(long)]
    split_ratios: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a).map_err(|e| Error::stage("synth", e)),
        Command::Extract(a) => cmd_extract(a).map_err(|e| Error::stage("extract", e)),
        Command::TrainUnary(a) => cmd_train_unary(a).map_err(|e| Error::stage("train-unary", e)),
        Command::TrainForest(a) => {
            cmd_train_forest(a).map_err(|e| Error::stage("train-forest", e))
        }
        Command::Infer(a) => cmd_infer(a).map_err(|e| Error::stage("infer", e)),
        Command::Evaluate(a) => cmd_evaluate(a).map_err(|e| Error::stage("evaluate", e)),
        // Pipeline errors arrive pre-tagged with the failing internal stage.
        Command::Pipeline(a) => cmd_pipeline(*a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let (registry, mut samples) = generate_synthetic(a.n, a.attrs, a.noise, a.seed)?;
    let manifest = write_dataset(&a.out, &registry, &mut samples)?;
    println!(
        "wrote {} samples, {} attributes -> {}",
        samples.len(),
        registry.len(),
        manifest.display()
    );
    Ok(())
}

fn load_bank(path: &Option<PathBuf>) -> Result<FilterBankConfig> {
    match path {
        Some(p) => FilterBankConfig::load(p),
        None => Ok(FilterBankConfig::default()),
    }
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let scheme: Scheme = a.scheme.parse().map_err(Error::invalid)?;
    let resize = parse_resize(&a.resize)?;
    let bank = load_bank(&a.filter_bank)?;
    let bank_json = serde_json::to_string(&bank)
        .map_err(|e| Error::invalid(format!("filter bank not serializable: {e}")))?;
    let dataset_id = cache::manifest_dataset_id(&a.manifest)?;
    let (_, samples) = load_manifest(&a.manifest)?;
    let extractor = Extractor::new(ExtractConfig {
        resize,
        strips: a.strips,
        bins: a.bins,
        bank,
    })?;
    let features: Vec<FeatureVector> = samples
        .par_iter()
        .map(|s| extractor.sample_features(s, scheme))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let key = CacheKey {
        dataset_id,
        scheme,
        feat_hash: cache::feature_config_hash(resize, a.strips, a.bins, &bank_json),
    };
    cache::write_feature_file(&a.out, &key, &ids, &features)?;
    println!(
        "wrote {} feature rows (scheme {}, dim {}) -> {}",
        ids.len(),
        scheme.as_str(),
        features[0].values.len(),
        a.out.display()
    );
    Ok(())
}

/// Loads a manifest and requires explicit splits: stage commands never
/// partition implicitly, so repeated invocations agree on the test set.
fn load_split_manifest(path: &Path) -> Result<(AttributeRegistry, Vec<Sample>)> {
    let (registry, samples) = load_manifest(path)?;
    if let Some(s) = samples.iter().find(|s| s.split.is_none()) {
        return Err(Error::invalid(format!(
            "sample {:?} has no split tag; stage commands need explicit splits \
             (`pipeline` partitions automatically, `synth` writes them)",
            s.id
        )));
    }
    Ok((registry, samples))
}

/// Feature rows must cover the manifest exactly, in order.
fn check_feature_alignment(ids: &[String], samples: &[Sample], path: &Path) -> Result<()> {
    if ids.len() != samples.len() {
        return Err(Error::invalid(format!(
            "{} has {} rows but the manifest has {} samples; re-run extract",
            path.display(),
            ids.len(),
            samples.len()
        )));
    }
    for (id, s) in ids.iter().zip(samples) {
        if *id != s.id {
            return Err(Error::invalid(format!(
                "{}: row id {id:?} does not match manifest sample {:?}; re-run extract",
                path.display(),
                s.id
            )));
        }
    }
    Ok(())
}

fn select_attributes(registry: &AttributeRegistry, requested: &[String]) -> Result<Vec<usize>> {
    if requested.is_empty() {
        return Ok((0..registry.len()).collect());
    }
    requested
        .iter()
        .map(|name| {
            registry
                .index_of(name)
                .ok_or_else(|| Error::invalid(format!("unknown attribute {name:?}")))
        })
        .collect()
}

fn model_path(dir: &Path, attr: &str) -> Result<PathBuf> {
    if attr.contains(['/', '\\']) {
        return Err(Error::invalid(format!(
            "attribute name {attr:?} cannot be used as a file name"
        )));
    }
    Ok(dir.join(format!("{attr}.unary.json")))
}

fn cmd_train_unary(a: TrainUnaryArgs) -> Result<()> {
    let (registry, samples) = load_split_manifest(&a.manifest)?;
    let (key, ids, features) = cache::read_feature_file(&a.features)?;
    check_feature_alignment(&ids, &samples, &a.features)?;
    let indices = select_attributes(&registry, &a.attrs)?;
    let extractor = Extractor::new(ExtractConfig {
        resize: parse_resize(&a.resize)?,
        strips: features[0].strips,
        bins: features[0].bins,
        bank: load_bank(&a.filter_bank)?,
    })?;
    let train_cfg = TrainConfig {
        c: a.c,
        ..TrainConfig::default()
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let trained: Vec<PathBuf> = indices
        .par_iter()
        .map(|&ai| {
            let attr = &registry.names()[ai];
            let seed = derive_seed(a.seed, &format!("augment/{}/{attr}", key.scheme.as_str()));
            let model = train_attribute_model(
                &samples, &features, &extractor, key.scheme, ai, attr, &train_cfg, a.augment,
                seed,
            )
            .map_err(|e| Error::invalid(format!("attribute {attr:?}: {e}")))?;
            let path = model_path(&a.out, attr)?;
            model.save(&path)?;
            Ok(path)
        })
        .collect::<Result<_>>()?;
    for path in &trained {
        println!("trained {}", path.display());
    }
    Ok(())
}

fn cmd_train_forest(a: TrainForestArgs) -> Result<()> {
    let (_, ids, features) = cache::read_feature_file(&a.features)?;
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let cfg = ForestConfig {
        trees: a.trees,
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
        features_per_node: None,
    };
    let model = train_unsupervised_forest(&rows, &cfg, a.seed)?;
    model.save(&a.out)?;
    println!(
        "trained {} trees on {} samples -> {}",
        a.trees,
        ids.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_sigma(v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        return Ok(None);
    }
    v.parse().map(Some).map_err(|_| {
        Error::invalid(format!("sigma: expected a number or \"auto\", got {v:?}"))
    })
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let regime: Regime = a.regime.parse()?;
    let (registry, samples) = load_split_manifest(&a.manifest)?;
    let (key, ids, features) = cache::read_feature_file(&a.features)?;
    check_feature_alignment(&ids, &samples, &a.features)?;
    let sigma = parse_sigma(&a.sigma)?;

    let mut models = BTreeMap::new();
    let mut missing = Vec::new();
    for attr in registry.names() {
        let path = model_path(&a.models, attr)?;
        if path.exists() {
            models.insert(attr.clone(), UnaryModel::load(&path)?);
        } else {
            missing.push(attr.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingModels { missing });
    }
    let forest = match &a.forest {
        Some(p) => Some(ForestModel::load(p)?),
        None => None,
    };

    let splits: Vec<Split> = samples
        .iter()
        .map(|s| s.split.expect("splits checked above"))
        .collect();
    let label_rows: Vec<&[Label]> = samples.iter().map(|s| s.labels.as_slice()).collect();
    let input = RegimeInput {
        ids: &ids,
        features: &features,
        splits: &splits,
        labels: &label_rows,
        attributes: registry.names(),
        models: &models,
        forest: forest.as_ref(),
    };
    let cfg = RegimeConfig {
        k: a.k,
        lambda: a.lambda,
        sigma,
        forest: ForestConfig {
            trees: a.trees,
            ..ForestConfig::default()
        },
        seed: derive_seed(
            a.seed,
            &format!("forest/{}/{}", regime.as_str(), key.scheme.as_str()),
        ),
    };
    let output = run_regime(&input, regime, &cfg)?;

    let mut meta = BTreeMap::new();
    meta.insert("dataset".to_owned(), key.dataset_id.clone());
    meta.insert("scheme".to_owned(), key.scheme.as_str().to_owned());
    meta.insert("regime".to_owned(), regime.as_str().to_owned());
    meta.insert("k".to_owned(), a.k.to_string());
    meta.insert("lambda".to_owned(), a.lambda.to_string());
    if let Some(s) = output.sigma {
        meta.insert("sigma".to_owned(), s.to_string());
    }
    write_predictions(&a.out, &meta, &output.predictions)?;
    let rows: usize = output.predictions.values().map(|m| m.len()).sum();
    println!(
        "wrote {rows} predictions ({} attributes) -> {}",
        output.predictions.len(),
        a.out.display()
    );
    if let Some(s) = output.sigma {
        println!("sigma = {s}");
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let (registry, samples) = load_split_manifest(&a.manifest)?;
    let pred = read_predictions(&a.predictions)?;

    let mut rows = Vec::new();
    for (attr, preds) in &pred.by_attribute {
        let ai = registry.index_of(attr).ok_or_else(|| {
            Error::invalid(format!("prediction file names unknown attribute {attr:?}"))
        })?;
        let truth: BTreeMap<String, u8> = samples
            .iter()
            .filter(|s| s.split == Some(Split::Test))
            .filter_map(|s| s.labels[ai].known().map(|b| (s.id.clone(), u8::from(b))))
            .collect();
        if truth.is_empty() {
            return Err(Error::invalid(format!(
                "no labeled test samples for attribute {attr:?}"
            )));
        }
        // Unlabeled test samples are predicted but never scored.
        let scored: BTreeMap<String, u8> = preds
            .iter()
            .filter(|(id, _)| truth.contains_key(*id))
            .map(|(id, &l)| (id.clone(), l))
            .collect();
        let acc = evaluate(&scored, &truth)?;
        rows.push((attr.clone(), acc));
    }

    let w = rows
        .iter()
        .map(|(attr, _)| attr.len())
        .chain(["attribute".len(), "AVERAGE".len()])
        .max()
        .unwrap();
    let mut text = format!("{:<w$}  {:>8}  {:>8}\n", "attribute", "plain", "balanced");
    for (attr, acc) in &rows {
        text.push_str(&format!(
            "{attr:<w$}  {:>8.2}  {:>8.2}\n",
            acc.plain, acc.balanced
        ));
    }
    let mean = |f: fn(&pedattr::harness::Accuracy) -> f64| {
        rows.iter().map(|(_, a)| f(a)).sum::<f64>() / rows.len() as f64
    };
    text.push_str(&format!(
        "{:<w$}  {:>8.2}  {:>8.2}\n",
        "AVERAGE",
        mean(|a| a.plain),
        mean(|a| a.balanced)
    ));
    print!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, &text).map_err(|e| Error::io(out, e))?;
        println!("table written to {}", out.display());
    }
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let mut map = match &a.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    if !map.contains_key("cache-dir") {
        if let Ok(dir) = std::env::var("PEDATTR_CACHE_DIR") {
            if !dir.is_empty() {
                map.insert("cache-dir".to_owned(), dir);
            }
        }
    }
    let overrides = [
        ("manifest", &a.manifest),
        ("out-dir", &a.out_dir),
        ("cache-dir", &a.cache_dir),
        ("scheme", &a.scheme),
        ("regime", &a.regime),
        ("k", &a.k),
        ("lambda", &a.lambda),
        ("sigma", &a.sigma),
        ("trees", &a.trees),
        ("c", &a.c),
        ("seed", &a.seed),
        ("augment", &a.augment),
        ("synth-n", &a.synth_n),
        ("synth-attrs", &a.synth_attrs),
        ("synth-noise", &a.synth_noise),
        ("resize", &a.resize),
        ("strips", &a.strips),
        ("bins", &a.bins),
        ("split-ratios", &a.split_ratios),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            map.insert(key.to_owned(), v.clone());
        }
    }
    let cfg = RunConfig::from_map(&map)?;
    let report = run_pipeline(&cfg)?;
    print!("{}", report.to_text());
    println!("\nreports written to {}", cfg.out_dir.display());
    Ok(())
}
