//! End-to-end inference regimes.
//!
//! A regime decides which samples become graph nodes, where pairwise
//! affinities come from, and which nodes are clamped:
//!
//! * `iksvm`  - no graph; each test sample is labeled by thresholding its
//!   calibrated unary probability at 0.5.
//! * `mrf-g1` - graph over test samples only, Gaussian affinities.
//! * `mrf-g2` - graph over train + test samples, Gaussian affinities; train
//!   nodes with known labels are clamped to them.
//! * `mrf-r1` - graph over test samples only, forest affinities.
//! * `mrf-r2` - graph over train + test samples, forest affinities with
//!   train-node clamping.
//!
//! The graph is built once per call and shared by every attribute; only the
//! unary terms and clamps change between attributes.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ingest::{Label, Split};
use crate::similarity::forest::{train_unsupervised_forest, ForestConfig, ForestModel};
use crate::similarity::gaussian_similarity_values;
use crate::unary::UnaryModel;

use super::{assemble_problem, build_knn_graph, solve_maxflow, KnnGraph};

/// Inference regime selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Unary-only thresholding.
    Iksvm,
    /// MRF over test nodes, Gaussian pairwise.
    MrfG1,
    /// MRF over train + test nodes, Gaussian pairwise, train clamped.
    MrfG2,
    /// MRF over test nodes, forest pairwise.
    MrfR1,
    /// MRF over train + test nodes, forest pairwise, train clamped.
    MrfR2,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Iksvm => "iksvm",
            Regime::MrfG1 => "mrf-g1",
            Regime::MrfG2 => "mrf-g2",
            Regime::MrfR1 => "mrf-r1",
            Regime::MrfR2 => "mrf-r2",
        }
    }

    pub fn all() -> [Regime; 5] {
        [
            Regime::Iksvm,
            Regime::MrfG1,
            Regime::MrfG2,
            Regime::MrfR1,
            Regime::MrfR2,
        ]
    }

    /// Whether this regime builds a similarity graph at all.
    pub fn uses_graph(&self) -> bool {
        !matches!(self, Regime::Iksvm)
    }

    /// Whether pairwise affinities come from an unsupervised forest.
    pub fn uses_forest(&self) -> bool {
        matches!(self, Regime::MrfR1 | Regime::MrfR2)
    }

    /// Whether train samples join the graph (and get clamped).
    pub fn includes_train(&self) -> bool {
        matches!(self, Regime::MrfG2 | Regime::MrfR2)
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iksvm" => Ok(Regime::Iksvm),
            "mrf-g1" => Ok(Regime::MrfG1),
            "mrf-g2" => Ok(Regime::MrfG2),
            "mrf-r1" => Ok(Regime::MrfR1),
            "mrf-r2" => Ok(Regime::MrfR2),
            other => Err(Error::invalid(format!(
                "unknown regime {other:?}; expected one of iksvm, mrf-g1, mrf-g2, mrf-r1, mrf-r2"
            ))),
        }
    }
}

/// Knobs shared by all regimes. Graph-free regimes ignore the graph fields.
#[derive(Debug, Clone)]
pub struct RegimeConfig {
    /// Neighbors per node before symmetrization.
    pub k: usize,
    /// Pairwise strength multiplier.
    pub lambda: f64,
    /// Gaussian bandwidth; `None` tunes it on the verify split.
    pub sigma: Option<f64>,
    /// Forest hyperparameters, used when a forest must be trained in place.
    pub forest: ForestConfig,
    /// Seed for forest training inside the regime.
    pub seed: u64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        RegimeConfig {
            k: 5,
            lambda: 1.0,
            sigma: None,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

/// Borrowed view of everything a regime needs. All slices are parallel:
/// `ids[i]`, `features[i]`, `splits[i]`, and `labels[i]` describe sample `i`.
pub struct RegimeInput<'a> {
    pub ids: &'a [String],
    pub features: &'a [FeatureVector],
    pub splits: &'a [Split],
    /// Per-sample attribute labels, ordered like `attributes`.
    pub labels: &'a [&'a [Label]],
    /// Attribute names to infer, each of which must have a model.
    pub attributes: &'a [String],
    pub models: &'a BTreeMap<String, UnaryModel>,
    /// Pretrained forest; `None` trains one on the graph population.
    pub forest: Option<&'a ForestModel>,
}

/// Result of one regime run.
#[derive(Debug, Clone)]
pub struct RegimeOutput {
    /// attribute name -> test sample id -> predicted label (0 or 1).
    pub predictions: BTreeMap<String, BTreeMap<String, u8>>,
    /// Gaussian bandwidth actually used, when one was.
    pub sigma: Option<f64>,
}

/// Runs one inference regime over the samples in `input`.
///
/// Predictions are produced for test-split samples only, even when train
/// samples participate in the graph.
pub fn run_regime(input: &RegimeInput, regime: Regime, cfg: &RegimeConfig) -> Result<RegimeOutput> {
    validate_input(input)?;
    if !cfg.lambda.is_finite() || cfg.lambda < 0.0 {
        return Err(Error::invalid(format!(
            "lambda must be finite and nonnegative, got {}",
            cfg.lambda
        )));
    }

    let test: Vec<usize> = indices_of(input.splits, Split::Test);
    if test.is_empty() {
        return Err(Error::invalid("no test samples to infer on"));
    }

    if regime == Regime::Iksvm {
        let mut predictions = BTreeMap::new();
        for attr in input.attributes {
            let model = &input.models[attr.as_str()];
            let mut per_attr = BTreeMap::new();
            for &i in &test {
                let p = model.predict_proba(&input.features[i].values)?;
                per_attr.insert(input.ids[i].clone(), u8::from(p > 0.5));
            }
            predictions.insert(attr.clone(), per_attr);
        }
        return Ok(RegimeOutput {
            predictions,
            sigma: None,
        });
    }

    // Graph population: test nodes first, then train nodes for scheme-2
    // regimes. Node order only affects internal indices, not output.
    let mut nodes = test.clone();
    if regime.includes_train() {
        nodes.extend(indices_of(input.splits, Split::Train));
    }
    let node_ids: Vec<String> = nodes.iter().map(|&i| input.ids[i].clone()).collect();
    let node_features: Vec<&FeatureVector> = nodes.iter().map(|&i| &input.features[i]).collect();

    let (graph, used_sigma) = build_regime_graph(input, regime, cfg, &node_ids, &node_features)?;

    let n_test = test.len();
    let mut predictions = BTreeMap::new();
    for (ai, attr) in input.attributes.iter().enumerate() {
        let model = &input.models[attr.as_str()];
        let mut probs = Vec::with_capacity(nodes.len());
        for f in &node_features {
            probs.push(model.predict_proba(&f.values)?);
        }
        // Scheme-2 regimes clamp train nodes whose label is known; unknowns
        // keep their unary term and are inferred alongside the test nodes.
        let clamps: Vec<Option<u8>> = nodes
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                if pos < n_test {
                    None
                } else {
                    match input.labels[i][ai] {
                        Label::Positive => Some(1),
                        Label::Negative => Some(0),
                        Label::Unknown => None,
                    }
                }
            })
            .collect();
        let problem = assemble_problem(&graph, &probs, &clamps, cfg.lambda)?;
        let assignment = solve_maxflow(&problem)?;
        let mut per_attr = BTreeMap::new();
        for (pos, &i) in test.iter().enumerate() {
            per_attr.insert(input.ids[i].clone(), assignment.labels[pos]);
        }
        predictions.insert(attr.clone(), per_attr);
    }

    Ok(RegimeOutput {
        predictions,
        sigma: used_sigma,
    })
}

fn validate_input(input: &RegimeInput) -> Result<()> {
    let n = input.ids.len();
    if input.features.len() != n || input.splits.len() != n || input.labels.len() != n {
        return Err(Error::invalid(format!(
            "parallel input slices disagree: {} ids, {} features, {} splits, {} label rows",
            n,
            input.features.len(),
            input.splits.len(),
            input.labels.len()
        )));
    }
    if input.attributes.is_empty() {
        return Err(Error::invalid("no attributes requested"));
    }
    for row in input.labels {
        if row.len() != input.attributes.len() {
            return Err(Error::invalid(format!(
                "label row has {} entries for {} attributes",
                row.len(),
                input.attributes.len()
            )));
        }
    }
    let missing: Vec<String> = input
        .attributes
        .iter()
        .filter(|a| !input.models.contains_key(a.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingModels { missing });
    }
    Ok(())
}

fn indices_of(splits: &[Split], want: Split) -> Vec<usize> {
    splits
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == want)
        .map(|(i, _)| i)
        .collect()
}

/// Builds the k-NN graph for a graph-using regime, returning the Gaussian
/// bandwidth that was used when affinities were Gaussian.
fn build_regime_graph(
    input: &RegimeInput,
    regime: Regime,
    cfg: &RegimeConfig,
    node_ids: &[String],
    node_features: &[&FeatureVector],
) -> Result<(KnnGraph, Option<f64>)> {
    if regime.uses_forest() {
        let owned;
        let forest = match input.forest {
            Some(f) => f,
            None => {
                let rows: Vec<&[f64]> = node_features.iter().map(|f| f.values.as_slice()).collect();
                owned = train_unsupervised_forest(&rows, &cfg.forest, cfg.seed)?;
                &owned
            }
        };
        let mut leaves = Vec::with_capacity(node_features.len());
        for f in node_features {
            leaves.push(forest.leaves(&f.values)?);
        }
        let graph = build_knn_graph(
            node_ids,
            |u, v| crate::similarity::forest::similarity_from_leaves(&leaves[u], &leaves[v]),
            cfg.k,
        )?;
        Ok((graph, None))
    } else {
        let sigma = match cfg.sigma {
            Some(s) => {
                if !s.is_finite() || s <= 0.0 {
                    return Err(Error::invalid(format!(
                        "sigma must be finite and positive, got {s}"
                    )));
                }
                s
            }
            None => tune_sigma(input, cfg)?,
        };
        let graph = build_knn_graph(
            node_ids,
            |u, v| {
                gaussian_similarity_values(
                    &node_features[u].values,
                    &node_features[v].values,
                    sigma,
                )
            },
            cfg.k,
        )?;
        Ok((graph, Some(sigma)))
    }
}

/// Picks a Gaussian bandwidth by grid search on the verify split.
///
/// Candidates are distance quantiles {0.1, 0.25, 0.5, 0.75, 0.9} over the
/// verify samples' pairwise Euclidean distances. Each candidate is scored by
/// running MRF inference over the verify nodes alone (no clamps) and
/// measuring mean labeled accuracy across attributes; ties prefer the
/// smaller bandwidth.
fn tune_sigma(input: &RegimeInput, cfg: &RegimeConfig) -> Result<f64> {
    let verify = indices_of(input.splits, Split::Verify);
    if verify.len() < 2 {
        return Err(Error::invalid(
            "sigma tuning needs at least two verify samples; pass an explicit sigma",
        ));
    }

    let mut dists = Vec::with_capacity(verify.len() * (verify.len() - 1) / 2);
    for (a, &i) in verify.iter().enumerate() {
        for &j in verify.iter().skip(a + 1) {
            let d2 = crate::similarity::squared_distance(
                &input.features[i].values,
                &input.features[j].values,
            );
            if d2 > 0.0 {
                dists.push(d2.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::invalid(
            "verify features are all identical; pass an explicit sigma",
        ));
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut candidates: Vec<f64> = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|q| dists[((dists.len() - 1) as f64 * q).round() as usize])
        .collect();
    candidates.dedup();

    let ids: Vec<String> = verify.iter().map(|&i| input.ids[i].clone()).collect();
    let feats: Vec<&FeatureVector> = verify.iter().map(|&i| &input.features[i]).collect();
    let clamps = vec![None; verify.len()];

    let mut best: Option<(f64, f64)> = None; // (accuracy, sigma)
    for &sigma in &candidates {
        let graph = build_knn_graph(
            &ids,
            |u, v| gaussian_similarity_values(&feats[u].values, &feats[v].values, sigma),
            cfg.k,
        )?;
        let mut acc_sum = 0.0;
        let mut acc_count = 0usize;
        for (ai, attr) in input.attributes.iter().enumerate() {
            let model = &input.models[attr.as_str()];
            let mut probs = Vec::with_capacity(verify.len());
            for f in &feats {
                probs.push(model.predict_proba(&f.values)?);
            }
            let problem = assemble_problem(&graph, &probs, &clamps, cfg.lambda)?;
            let assignment = solve_maxflow(&problem)?;
            let mut hits = 0usize;
            let mut total = 0usize;
            for (pos, &i) in verify.iter().enumerate() {
                let truth = match input.labels[i][ai] {
                    Label::Positive => 1,
                    Label::Negative => 0,
                    Label::Unknown => continue,
                };
                total += 1;
                if assignment.labels[pos] == truth {
                    hits += 1;
                }
            }
            if total > 0 {
                acc_sum += hits as f64 / total as f64;
                acc_count += 1;
            }
        }
        if acc_count == 0 {
            return Err(Error::invalid(
                "sigma tuning needs labeled verify samples; pass an explicit sigma",
            ));
        }
        let acc = acc_sum / acc_count as f64;
        let better = match best {
            None => true,
            Some((best_acc, _)) => acc > best_acc,
        };
        if better {
            best = Some((acc, sigma));
        }
    }
    Ok(best.expect("at least one candidate").1)
}
