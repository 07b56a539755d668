//! Unsupervised random forest and leaf co-location similarity.
//!
//! Each tree is trained to separate the real rows from an equal number of
//! synthetic rows drawn independently per dimension from the empirical
//! marginals, so splits concentrate where the real joint distribution
//! differs from the product of its marginals. Similarity between two
//! vectors is the fraction of trees routing both to the same leaf.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Number of trees.
    pub trees: usize,
    pub max_depth: usize,
    /// No split may create a child smaller than this.
    pub min_leaf: usize,
    /// Candidate features per node; None means floor(sqrt(dim)), at least 1.
    pub features_per_node: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: 12,
            min_leaf: 5,
            features_per_node: None,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        if self.features_per_node == Some(0) {
            return Err(Error::invalid("features_per_node must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        id: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
    leaf_count: u32,
}

impl Tree {
    fn leaf_of(&self, x: &[f64]) -> u32 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { id } => return *id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    dim: usize,
    trees: Vec<Tree>,
}

impl ForestModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Leaf id reached in every tree.
    pub fn leaves(&self, x: &[f64]) -> Result<Vec<u32>> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.leaf_of(x)).collect())
    }

    /// Leaf ids for a whole population, row-major [row][tree].
    pub fn leaf_table(&self, rows: &[&[f64]]) -> Result<Vec<Vec<u32>>> {
        rows.iter().map(|r| self.leaves(r)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ForestFile {
            format: FORMAT_TAG.to_owned(),
            version: FORMAT_VERSION,
            dim: self.dim,
            trees: self.trees.clone(),
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ForestFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(Error::format(
                path,
                format!("format tag {:?}, expected {FORMAT_TAG:?}", file.format),
            ));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("version {}, expected {FORMAT_VERSION}", file.version),
            ));
        }
        Ok(ForestModel {
            dim: file.dim,
            trees: file.trees,
        })
    }
}

const FORMAT_TAG: &str = "unsupervised-forest";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    dim: usize,
    trees: Vec<Tree>,
}

/// Fraction of trees in which both vectors land in the same leaf.
pub fn forest_similarity(model: &ForestModel, u: &[f64], v: &[f64]) -> Result<f64> {
    let lu = model.leaves(u)?;
    let lv = model.leaves(v)?;
    Ok(similarity_from_leaves(&lu, &lv))
}

/// Co-location fraction from precomputed leaf rows.
pub fn similarity_from_leaves(a: &[u32], b: &[u32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len() as f64
}

/// Trains `cfg.trees` trees on `rows`; trees are seeded independently from
/// `seed`, so the forest is reproducible regardless of thread scheduling.
pub fn train_unsupervised_forest(
    rows: &[&[f64]],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<ForestModel> {
    cfg.validate()?;
    if rows.len() < 2 {
        return Err(Error::invalid(
            "forest training needs at least two samples",
        ));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::invalid("forest training features have zero dimension"));
    }
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: r.len(),
            });
        }
    }

    let trees: Vec<Tree> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed.wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            train_tree(rows, dim, cfg, tree_seed)
        })
        .collect();

    Ok(ForestModel { dim, trees })
}

fn train_tree(rows: &[&[f64]], dim: usize, cfg: &ForestConfig, seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows.len();

    // Synthetic contrast rows: independent per-dimension marginal draws.
    // Each cell picks its own donor row, which is what breaks inter-feature
    // dependence while preserving every marginal.
    let mut synthetic = vec![0.0f64; n * dim];
    for j in 0..n {
        for d in 0..dim {
            let donor = rng.gen_range(0..n);
            synthetic[j * dim + d] = rows[donor][d];
        }
    }

    let value_of = |idx: u32, feature: usize| -> f64 {
        let idx = idx as usize;
        if idx < n {
            rows[idx][feature]
        } else {
            synthetic[(idx - n) * dim + feature]
        }
    };
    let label_of = |idx: u32| -> bool { (idx as usize) < n };

    let candidate_count = cfg
        .features_per_node
        .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
        .clamp(1, dim);

    let mut tree = Tree {
        nodes: Vec::new(),
        leaf_count: 0,
    };
    let root: Vec<u32> = (0..(2 * n) as u32).collect();
    build_node(
        &mut tree,
        root,
        0,
        cfg,
        candidate_count,
        dim,
        &value_of,
        &label_of,
        &mut rng,
    );
    tree
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    tree: &mut Tree,
    indices: Vec<u32>,
    depth: usize,
    cfg: &ForestConfig,
    candidate_count: usize,
    dim: usize,
    value_of: &impl Fn(u32, usize) -> f64,
    label_of: &impl Fn(u32) -> bool,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let node_idx = tree.nodes.len() as u32;
    let positives = indices.iter().filter(|&&i| label_of(i)).count();
    let pure = positives == 0 || positives == indices.len();

    let make_leaf = |tree: &mut Tree| -> u32 {
        let id = tree.leaf_count;
        tree.leaf_count += 1;
        tree.nodes.push(Node::Leaf { id });
        tree.nodes.len() as u32 - 1
    };

    if depth >= cfg.max_depth || indices.len() < 2 * cfg.min_leaf || pure {
        return make_leaf(tree);
    }

    let candidates = rand::seq::index::sample(rng, dim, candidate_count);
    let mut best: Option<(f64, usize, f64)> = None;
    let parent_gini = gini(positives, indices.len());
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(indices.len());
    for feature in candidates.iter() {
        sorted.clear();
        sorted.extend(
            indices
                .iter()
                .map(|&i| (value_of(i, feature), label_of(i))),
        );
        sorted.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let total = sorted.len();
        let mut left_pos = 0usize;
        for i in 1..total {
            if sorted[i - 1].1 {
                left_pos += 1;
            }
            if sorted[i - 1].0 == sorted[i].0 {
                continue;
            }
            if i < cfg.min_leaf || total - i < cfg.min_leaf {
                continue;
            }
            let right_pos = positives - left_pos;
            let weighted = (i as f64 * gini(left_pos, i)
                + (total - i) as f64 * gini(right_pos, total - i))
                / total as f64;
            let gain = parent_gini - weighted;
            let better = match best {
                None => gain > 0.0,
                Some((bg, _, _)) => gain > bg,
            };
            if better {
                let threshold = (sorted[i - 1].0 + sorted[i].0) / 2.0;
                best = Some((gain, feature, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return make_leaf(tree);
    };

    let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = indices
        .into_iter()
        .partition(|&i| value_of(i, feature) <= threshold);

    // Placeholder; children are appended next and the node patched.
    tree.nodes.push(Node::Split {
        feature: feature as u32,
        threshold,
        left: 0,
        right: 0,
    });
    let left = build_node(
        tree,
        left_idx,
        depth + 1,
        cfg,
        candidate_count,
        dim,
        value_of,
        label_of,
        rng,
    );
    let right = build_node(
        tree,
        right_idx,
        depth + 1,
        cfg,
        candidate_count,
        dim,
        value_of,
        label_of,
        rng,
    );
    if let Node::Split {
        left: l, right: r, ..
    } = &mut tree.nodes[node_idx as usize]
    {
        *l = left;
        *r = right;
    }
    node_idx
}

/// Binary Gini impurity of a node with `pos` positives out of `total`.
fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}
