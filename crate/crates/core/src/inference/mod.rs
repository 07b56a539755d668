//! Per-attribute MRF refinement over a k-NN similarity graph.
//!
//! A labeling's energy is the sum of per-node label costs plus, for every
//! graph edge whose endpoints disagree, the edge weight. All edge weights are
//! nonnegative, so the energy is submodular and `solve_maxflow` finds an
//! exact minimizer via an s-t min cut.

mod maxflow;
mod regime;

pub use regime::{run_regime, Regime, RegimeConfig, RegimeInput, RegimeOutput};

use crate::error::{Error, Result};
use maxflow::FlowNetwork;

/// Undirected weighted edge between node indices, kept with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Sparse similarity graph from per-node k-nearest-neighbor selection.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    edges: Vec<WeightedEdge>,
}

impl KnnGraph {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Effective per-node list length: k capped at n - 1.
    pub fn k_eff(&self) -> usize {
        self.k.min(self.n.saturating_sub(1))
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.u == node || e.v == node)
            .count()
    }
}

/// Builds the k-NN graph over `ids` using a symmetric affinity.
///
/// Each node ranks the others by descending affinity, ties broken by the
/// lexicographically smaller id (then index); its top `min(k, n-1)` picks
/// become edges. Edge sets of the two directions are unioned, so a node's
/// degree is at least k_eff but may exceed 2k when many nodes pick it.
pub fn build_knn_graph<F>(ids: &[String], affinity: F, k: usize) -> Result<KnnGraph>
where
    F: Fn(usize, usize) -> f64,
{
    let n = ids.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("graph needs at least one node"));
    }
    let k_eff = k.min(n - 1);

    let mut chosen = std::collections::BTreeMap::<(usize, usize), f64>::new();
    let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    for u in 0..n {
        candidates.clear();
        for v in 0..n {
            if v == u {
                continue;
            }
            let a = affinity(u.min(v), u.max(v));
            if !a.is_finite() || a < 0.0 {
                return Err(Error::invalid(format!(
                    "affinity({u}, {v}) = {a}; affinities must be finite and nonnegative"
                )));
            }
            candidates.push((v, a));
        }
        candidates.sort_unstable_by(|&(i, ai), &(j, aj)| {
            aj.partial_cmp(&ai)
                .expect("affinities checked finite")
                .then_with(|| ids[i].cmp(&ids[j]))
                .then_with(|| i.cmp(&j))
        });
        for &(v, a) in candidates.iter().take(k_eff) {
            chosen.insert((u.min(v), u.max(v)), a);
        }
    }

    let edges = chosen
        .into_iter()
        .map(|((u, v), weight)| WeightedEdge { u, v, weight })
        .collect();
    Ok(KnnGraph { n, k, edges })
}

/// Binary labeling problem: per-node costs for labels 0 and 1, plus
/// disagreement penalties on edges.
#[derive(Debug, Clone)]
pub struct MrfProblem {
    pub unary: Vec<[f64; 2]>,
    pub edges: Vec<WeightedEdge>,
}

/// A labeling together with its energy.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelAssignment {
    pub labels: Vec<u8>,
    pub energy: f64,
}

/// Unary cost assigned to a clamped node's forbidden label.
pub const CLAMP_COST: f64 = 1e9;

/// Fixed-point resolution for integer flow capacities.
const FLOW_SCALE: f64 = 1e12;

/// Largest node count `brute_force_solve` accepts.
pub const MAX_BRUTE_NODES: usize = 24;

/// Evaluates the energy of `labels` under `problem`.
pub fn energy_of(problem: &MrfProblem, labels: &[u8]) -> f64 {
    debug_assert_eq!(labels.len(), problem.unary.len());
    let mut e = 0.0;
    for (node, costs) in problem.unary.iter().enumerate() {
        e += costs[labels[node] as usize];
    }
    for edge in &problem.edges {
        if labels[edge.u] != labels[edge.v] {
            e += edge.weight;
        }
    }
    e
}

/// Turns calibrated probabilities into an MRF over `graph`.
///
/// Unclamped nodes get costs (-ln(1-p), -ln p); clamped nodes get cost 0 for
/// the fixed label and [`CLAMP_COST`] for the other. Edge weights are the
/// graph affinities scaled by `lambda`.
pub fn assemble_problem(
    graph: &KnnGraph,
    probs: &[f64],
    clamp: &[Option<u8>],
    lambda: f64,
) -> Result<MrfProblem> {
    if probs.len() != graph.n {
        return Err(Error::DimMismatch {
            expected: graph.n,
            got: probs.len(),
        });
    }
    if clamp.len() != graph.n {
        return Err(Error::DimMismatch {
            expected: graph.n,
            got: clamp.len(),
        });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!(
            "lambda = {lambda}; must be finite and nonnegative"
        )));
    }

    let mut unary = Vec::with_capacity(graph.n);
    for node in 0..graph.n {
        match clamp[node] {
            Some(0) => unary.push([0.0, CLAMP_COST]),
            Some(1) => unary.push([CLAMP_COST, 0.0]),
            Some(other) => {
                return Err(Error::invalid(format!(
                    "clamp label {other} for node {node}; labels are 0 or 1"
                )))
            }
            None => {
                let p = probs[node];
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::BadProbability { node, p });
                }
                unary.push([-(1.0 - p).ln(), -p.ln()]);
            }
        }
    }

    let edges = graph
        .edges
        .iter()
        .map(|e| WeightedEdge {
            u: e.u,
            v: e.v,
            weight: lambda * e.weight,
        })
        .collect();

    Ok(MrfProblem { unary, edges })
}

fn validate_problem(problem: &MrfProblem) -> Result<()> {
    let n = problem.unary.len();
    if n == 0 {
        return Err(Error::invalid("problem has no nodes"));
    }
    for (node, costs) in problem.unary.iter().enumerate() {
        for &c in costs {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::invalid(format!(
                    "unary cost {c} at node {node}; costs must be finite and nonnegative"
                )));
            }
        }
    }
    for e in &problem.edges {
        if e.u >= n || e.v >= n || e.u == e.v {
            return Err(Error::invalid(format!(
                "edge ({}, {}) out of range for {n} nodes",
                e.u, e.v
            )));
        }
        if !e.weight.is_finite() || e.weight < 0.0 {
            return Err(Error::NegativeEdgeWeight {
                u: e.u,
                v: e.v,
                w: e.weight,
            });
        }
    }
    Ok(())
}

fn to_fixed(x: f64) -> i128 {
    (x * FLOW_SCALE).round() as i128
}

/// Exact minimizer via s-t min cut.
///
/// Each node u gets arcs s->u with capacity cost(u, 0) and u->t with capacity
/// cost(u, 1); each edge becomes an arc pair of its weight in both
/// directions. Cutting s->u puts u on the sink side (label 0 paid), cutting
/// u->t puts it on the source side (label 1 paid), and a disagreement cuts
/// one direction of the edge pair, so the min cut value is the minimum
/// energy. Nodes reachable from s in the residual take label 1; exact cost
/// ties on a single node therefore resolve to label 0.
pub fn solve_maxflow(problem: &MrfProblem) -> Result<LabelAssignment> {
    validate_problem(problem)?;
    let n = problem.unary.len();
    let s = n;
    let t = n + 1;
    let mut net = FlowNetwork::new(n + 2);
    for (node, costs) in problem.unary.iter().enumerate() {
        net.add_edge(s, node, to_fixed(costs[0]), 0);
        net.add_edge(node, t, to_fixed(costs[1]), 0);
    }
    for e in &problem.edges {
        let w = to_fixed(e.weight);
        net.add_edge(e.u, e.v, w, w);
    }
    net.max_flow(s, t);
    let side = net.source_side(s);
    let labels: Vec<u8> = (0..n).map(|u| side[u] as u8).collect();
    let energy = energy_of(problem, &labels);
    Ok(LabelAssignment { labels, energy })
}

/// Exhaustive minimizer for problems of up to [`MAX_BRUTE_NODES`] nodes.
///
/// Enumerates labelings in lexicographic order (node 0 most significant) and
/// keeps the first strict improvement, so among ties it returns the
/// lexicographically smallest labeling.
pub fn brute_force_solve(problem: &MrfProblem) -> Result<LabelAssignment> {
    validate_problem(problem)?;
    let n = problem.unary.len();
    if n > MAX_BRUTE_NODES {
        return Err(Error::TooManyNodes {
            n,
            max: MAX_BRUTE_NODES,
        });
    }
    let mut best_labels = vec![0u8; n];
    let mut best_energy = f64::INFINITY;
    let mut labels = vec![0u8; n];
    for mask in 0u64..(1u64 << n) {
        for (node, label) in labels.iter_mut().enumerate() {
            *label = ((mask >> (n - 1 - node)) & 1) as u8;
        }
        let e = energy_of(problem, &labels);
        if e < best_energy {
            best_energy = e;
            best_labels.copy_from_slice(&labels);
        }
    }
    Ok(LabelAssignment {
        labels: best_labels,
        energy: best_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i:03}")).collect()
    }

    #[test]
    fn two_node_example_prefers_agreement() {
        // Disagreement costs 5, so the cheaper joint labeling keeps both at
        // 0 even though node 1 alone would pick 1.
        let problem = MrfProblem {
            unary: vec![[0.0, 10.0], [3.0, 0.0]],
            edges: vec![WeightedEdge {
                u: 0,
                v: 1,
                weight: 5.0,
            }],
        };
        let by_enumeration: Vec<f64> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|l| energy_of(&problem, &[l[0], l[1]]))
            .collect();
        assert_eq!(by_enumeration, vec![3.0, 5.0, 18.0, 10.0]);

        let exact = solve_maxflow(&problem).unwrap();
        assert_eq!(exact.labels, vec![0, 0]);
        assert_eq!(exact.energy, 3.0);

        let brute = brute_force_solve(&problem).unwrap();
        assert_eq!(brute.labels, exact.labels);
        assert_eq!(brute.energy, exact.energy);
    }

    #[test]
    fn no_edges_decouples_nodes() {
        let problem = MrfProblem {
            unary: vec![[1.0, 2.0], [5.0, 0.5], [0.7, 0.7]],
            edges: vec![],
        };
        let got = solve_maxflow(&problem).unwrap();
        // Per-node argmin; exact tie at node 2 resolves to 0.
        assert_eq!(got.labels, vec![0, 1, 0]);
        assert_eq!(got.energy, 1.0 + 0.5 + 0.7);
    }

    #[test]
    fn clamped_pair_pulls_neighbor() {
        // Node 0 clamped to 1; strong edge flips node 1 against its unary.
        let graph = KnnGraph {
            n: 2,
            k: 1,
            edges: vec![WeightedEdge {
                u: 0,
                v: 1,
                weight: 1.0,
            }],
        };
        let problem = assemble_problem(&graph, &[0.5, 0.4], &[Some(1), None], 2.0).unwrap();
        let got = solve_maxflow(&problem).unwrap();
        assert_eq!(got.labels, vec![1, 1]);
    }

    #[test]
    fn brute_force_breaks_ties_lexicographically() {
        // Fully symmetric two-node problem: every labeling costs 1.0 except
        // the disagreeing ones which cost 1.0 too (weight 0 edge).
        let problem = MrfProblem {
            unary: vec![[0.5, 0.5], [0.5, 0.5]],
            edges: vec![WeightedEdge {
                u: 0,
                v: 1,
                weight: 0.0,
            }],
        };
        let got = brute_force_solve(&problem).unwrap();
        assert_eq!(got.labels, vec![0, 0]);
    }

    #[test]
    fn brute_force_rejects_oversized_problems() {
        let problem = MrfProblem {
            unary: vec![[0.0, 1.0]; MAX_BRUTE_NODES + 1],
            edges: vec![],
        };
        match brute_force_solve(&problem) {
            Err(Error::TooManyNodes { n, max }) => {
                assert_eq!(n, MAX_BRUTE_NODES + 1);
                assert_eq!(max, MAX_BRUTE_NODES);
            }
            other => panic!("expected TooManyNodes, got {other:?}"),
        }
    }

    #[test]
    fn negative_weight_is_rejected() {
        let problem = MrfProblem {
            unary: vec![[0.0, 1.0], [1.0, 0.0]],
            edges: vec![WeightedEdge {
                u: 0,
                v: 1,
                weight: -0.1,
            }],
        };
        assert!(matches!(
            solve_maxflow(&problem),
            Err(Error::NegativeEdgeWeight { .. })
        ));
    }

    #[test]
    fn three_nodes_with_large_k_form_complete_graph() {
        let graph = build_knn_graph(&ids(3), |_, _| 0.5, 5).unwrap();
        assert_eq!(graph.k_eff(), 2);
        let pairs: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn equal_affinities_tie_break_deterministically() {
        // k = 1 with all-equal affinities: every node picks the smallest id
        // other than itself, so the union is the star around node 0.
        let graph = build_knn_graph(&ids(4), |_, _| 0.25, 1).unwrap();
        let pairs: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
        let again = build_knn_graph(&ids(4), |_, _| 0.25, 1).unwrap();
        let again_pairs: Vec<(usize, usize)> = again.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(pairs, again_pairs);
    }

    #[test]
    fn every_edge_comes_from_some_top_k_list() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        let k = 3;
        let mut aff = vec![vec![0.0f64; n]; n];
        for u in 0..n {
            for v in (u + 1)..n {
                let a = rng.gen_range(0.0..1.0);
                aff[u][v] = a;
                aff[v][u] = a;
            }
        }
        let graph = build_knn_graph(&ids(n), |u, v| aff[u][v], k).unwrap();
        for e in graph.edges() {
            let in_top = |u: usize, v: usize| {
                let mut others: Vec<usize> = (0..n).filter(|&w| w != u).collect();
                others.sort_by(|&a, &b| aff[u][b].partial_cmp(&aff[u][a]).unwrap());
                others[..k].contains(&v)
            };
            assert!(
                in_top(e.u, e.v) || in_top(e.v, e.u),
                "edge ({}, {}) in neither endpoint's top-{k}",
                e.u,
                e.v
            );
            assert!(graph.degree(e.u) >= graph.k_eff());
        }
    }

    #[test]
    fn assemble_rejects_bad_probabilities() {
        let graph = build_knn_graph(&ids(2), |_, _| 1.0, 1).unwrap();
        for bad in [0.0, 1.0, -0.2, 1.3, f64::NAN] {
            let got = assemble_problem(&graph, &[bad, 0.5], &[None, None], 1.0);
            assert!(matches!(got, Err(Error::BadProbability { node: 0, .. })));
        }
        // The same values are fine on a clamped node.
        assert!(assemble_problem(&graph, &[0.0, 0.5], &[Some(1), None], 1.0).is_ok());
    }

    #[test]
    fn assemble_unary_costs_match_negative_log() {
        let graph = build_knn_graph(&ids(2), |_, _| 0.5, 1).unwrap();
        let problem = assemble_problem(&graph, &[0.5, 0.9], &[None, None], 1.0).unwrap();
        let half = -(0.5f64).ln();
        assert!((problem.unary[0][0] - half).abs() < 1e-12);
        assert!((problem.unary[0][1] - half).abs() < 1e-12);
        assert!((half - 0.6931).abs() < 1e-4);
        assert!((problem.unary[1][1] - -(0.9f64).ln()).abs() < 1e-12);
        assert!((problem.unary[1][0] - -(0.1f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_reduces_to_thresholding() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 40;
        let node_ids = ids(n);
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
        let graph = build_knn_graph(&node_ids, |u, v| ((u * 31 + v) % 17) as f64 / 17.0, 5).unwrap();
        let problem = assemble_problem(&graph, &probs, &vec![None; n], 0.0).unwrap();
        let got = solve_maxflow(&problem).unwrap();
        for (node, &p) in probs.iter().enumerate() {
            assert_eq!(got.labels[node], (p > 0.5) as u8, "node {node} p = {p}");
        }
    }
}
