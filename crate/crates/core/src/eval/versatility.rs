//! Unsupervised versatility scoring from learned variances, pairwise
//! agreement with expert judgments, rank correlation through random
//! topological sorts, and the entropy heuristics.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ExpertPair;
use crate::error::Result;
use crate::invalid;
use crate::params::ModelParams;

/// Mean log-variance of an actor's Gaussian: scale-robust, equal to
/// `log var` in spherical mode, and strictly increasing in every variance
/// component. Higher means more versatile.
pub fn versatility_score(params: &ModelParams, actor: usize) -> Result<f64> {
    let g = params
        .actors
        .get(actor)
        .ok_or_else(|| invalid!("actor index {actor} out of range"))?;
    let dim = params.dim();
    let sum: f64 = (0..dim).map(|d| g.var_at(d).ln()).sum();
    Ok(sum / dim as f64)
}

/// Versatility scores for every actor in the model.
pub fn versatility_scores(params: &ModelParams) -> HashMap<usize, f64> {
    (0..params.actors.len())
        .map(|a| (a, versatility_score(params, a).expect("in range")))
        .collect()
}

/// Fraction of expert pairs where the winner outscores the loser, with half
/// credit for exact ties. Reported as a percentage.
pub fn pairwise_accuracy(scores: &HashMap<usize, f64>, pairs: &[ExpertPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid!("no expert pairs to score"));
    }
    let mut credit = 0.0;
    for p in pairs {
        let w = scores
            .get(&p.winner)
            .ok_or_else(|| invalid!("actor {} has no score", p.winner))?;
        let l = scores
            .get(&p.loser)
            .ok_or_else(|| invalid!("actor {} has no score", p.loser))?;
        credit += if w > l {
            1.0
        } else if w == l {
            0.5
        } else {
            0.0
        };
    }
    Ok(credit / pairs.len() as f64 * 100.0)
}

/// Shannon entropy (natural log) of a normalized nonnegative count vector.
pub fn entropy(counts: &[f64]) -> Result<f64> {
    if counts.iter().any(|&c| c < 0.0) {
        return Err(invalid!("negative count"));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(invalid!("all-zero count vector"));
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0.0 {
            let p = c / total;
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Entropy heuristic over per-actor count vectors (genre counts, persona
/// topic-group counts, or keyword-topic counts).
pub fn entropy_baseline(counts: &HashMap<usize, Vec<f64>>) -> Result<HashMap<usize, f64>> {
    counts.iter().map(|(&a, v)| entropy(v).map(|h| (a, h))).collect()
}

/// Average ranks (1-based, ties averaged) of the values sorted descending.
fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite scores"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // mean of 1-based positions i+1..=j+1
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation between two parallel value lists (ranks with
/// averaged ties, then Pearson on the ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid!("need two lists of equal length >= 2"));
    }
    let ra = descending_ranks(a);
    let rb = descending_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Edge {
    winner: usize,
    loser: usize,
}

/// Detect a directed cycle; returns the edges of one cycle if present.
fn find_cycle(nodes: &[usize], edges: &HashSet<Edge>) -> Option<Vec<Edge>> {
    let adj: HashMap<usize, Vec<usize>> = {
        let mut m: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in edges {
            m.entry(e.winner).or_default().push(e.loser);
        }
        for targets in m.values_mut() {
            targets.sort_unstable();
        }
        m
    };

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let mut marks: HashMap<usize, Mark> = nodes.iter().map(|&n| (n, Mark::White)).collect();
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        u: usize,
        adj: &HashMap<usize, Vec<usize>>,
        marks: &mut HashMap<usize, Mark>,
        stack: &mut Vec<usize>,
    ) -> Option<Vec<Edge>> {
        marks.insert(u, Mark::Gray);
        stack.push(u);
        for &v in adj.get(&u).map(|v| v.as_slice()).unwrap_or(&[]) {
            match marks.get(&v).copied().unwrap_or(Mark::White) {
                Mark::Gray => {
                    let start = stack.iter().position(|&x| x == v).expect("on stack");
                    let mut cycle = Vec::new();
                    for w in start..stack.len() {
                        let from = stack[w];
                        let to = if w + 1 < stack.len() { stack[w + 1] } else { v };
                        cycle.push(Edge { winner: from, loser: to });
                    }
                    return Some(cycle);
                }
                Mark::White => {
                    if let Some(c) = dfs(v, adj, marks, stack) {
                        return Some(c);
                    }
                }
                Mark::Black => {}
            }
        }
        stack.pop();
        marks.insert(u, Mark::Black);
        None
    }

    let mut sorted_nodes = nodes.to_vec();
    sorted_nodes.sort_unstable();
    for &n in &sorted_nodes {
        if marks[&n] == Mark::White {
            if let Some(c) = dfs(n, &adj, &mut marks, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Build an acyclic winner->loser edge set from expert pairs. Cycles are
/// repaired by dropping their weakest (lowest majority count) edges; a cycle
/// whose edges all carry the same majority has no weakest edge and is
/// reported as an error.
fn acyclic_edges(nodes: &[usize], pairs: &[ExpertPair]) -> Result<HashSet<Edge>> {
    let mut weight: HashMap<Edge, u32> = HashMap::new();
    for p in pairs {
        let e = Edge { winner: p.winner, loser: p.loser };
        let w = weight.entry(e).or_insert(0);
        *w = (*w).max(p.majority_count);
    }
    let mut edges: HashSet<Edge> = weight.keys().copied().collect();

    while let Some(cycle) = find_cycle(nodes, &edges) {
        let min = cycle.iter().map(|e| weight[e]).min().expect("nonempty cycle");
        let max = cycle.iter().map(|e| weight[e]).max().expect("nonempty cycle");
        if min == max {
            let desc: Vec<String> = cycle
                .iter()
                .map(|e| format!("{} > {} (majority {})", e.winner, e.loser, weight[e]))
                .collect();
            return Err(invalid!(
                "expert pairs contain an unrepairable cycle of equal-majority edges: {}",
                desc.join(", ")
            ));
        }
        for e in cycle.iter().filter(|e| weight[e] == min) {
            edges.remove(e);
        }
    }
    Ok(edges)
}

/// One topological sort with uniform random choice among the ready nodes.
/// With no edges this is exactly a uniform random permutation.
fn random_topological_sort(
    nodes: &[usize],
    edges: &HashSet<Edge>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut indegree: HashMap<usize, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in edges {
        *indegree.get_mut(&e.loser).expect("known node") += 1;
        adj.entry(e.winner).or_default().push(e.loser);
    }
    let mut ready: Vec<usize> = nodes.iter().copied().filter(|n| indegree[n] == 0).collect();
    ready.sort_unstable();
    let mut order = Vec::with_capacity(nodes.len());
    while !ready.is_empty() {
        let pick = rng.random_range(0..ready.len());
        let u = ready.swap_remove(pick);
        order.push(u);
        for &v in adj.get(&u).map(|v| v.as_slice()).unwrap_or(&[]) {
            let d = indegree.get_mut(&v).expect("known node");
            *d -= 1;
            if *d == 0 {
                ready.push(v);
            }
        }
    }
    order
}

/// Mean Spearman correlation between the model's score ranking and
/// `n_sorts` random linear extensions of the expert partial order. The
/// actor universe is the key set of `scores`.
pub fn rank_correlation(
    scores: &HashMap<usize, f64>,
    pairs: &[ExpertPair],
    n_sorts: usize,
    seed: u64,
) -> Result<f64> {
    if scores.len() < 2 {
        return Err(invalid!("need at least two scored actors"));
    }
    if n_sorts == 0 {
        return Err(invalid!("n_sorts must be >= 1"));
    }
    let mut nodes: Vec<usize> = scores.keys().copied().collect();
    nodes.sort_unstable();
    for p in pairs {
        if !scores.contains_key(&p.winner) || !scores.contains_key(&p.loser) {
            return Err(invalid!(
                "expert pair ({}, {}) references an unscored actor",
                p.winner,
                p.loser
            ));
        }
    }
    let edges = acyclic_edges(&nodes, pairs)?;

    let model_values: Vec<f64> = nodes.iter().map(|n| scores[n]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_sorts {
        let order = random_topological_sort(&nodes, &edges, &mut rng);
        // Most versatile first: invert positions into scores so descending
        // ranks line up with the model's descending score ranks.
        let mut extension_value = vec![0.0; nodes.len()];
        for (pos, actor) in order.iter().enumerate() {
            let idx = nodes.binary_search(actor).expect("known node");
            extension_value[idx] = -(pos as f64);
        }
        total += spearman(&model_values, &extension_value)?;
    }
    Ok(total / n_sorts as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_params, ModelConfig, VocabSizes};

    fn score_map(values: &[f64]) -> HashMap<usize, f64> {
        values.iter().enumerate().map(|(i, &v)| (i, v)).collect()
    }

    fn chain_pairs(order: &[usize]) -> Vec<ExpertPair> {
        order
            .windows(2)
            .map(|w| ExpertPair { winner: w[0], loser: w[1], majority_count: 4 })
            .collect()
    }

    #[test]
    fn versatility_score_examples() {
        let cfg = ModelConfig { dim: 2, spherical: false, ..ModelConfig::default() };
        let mut p = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 2, keywords: 1 },
            None,
            None,
            1,
        )
        .unwrap();
        p.actors[0].var = vec![4.0, 4.0];
        p.actors[1].var = vec![1.0, 4.0];
        assert!((versatility_score(&p, 0).unwrap() - 4.0f64.ln()).abs() < 1e-12);
        assert!((versatility_score(&p, 1).unwrap() - 4.0f64.ln() / 2.0).abs() < 1e-12);

        // Spherical: score equals log of the shared variance.
        let cfg = ModelConfig { dim: 3, spherical: true, ..ModelConfig::default() };
        let mut p = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 1, keywords: 1 },
            None,
            None,
            1,
        )
        .unwrap();
        p.actors[0].var = vec![4.0];
        assert!((versatility_score(&p, 0).unwrap() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn versatility_score_monotone_in_variance() {
        let cfg = ModelConfig { dim: 2, spherical: false, ..ModelConfig::default() };
        let mut p = init_params(
            &cfg,
            VocabSizes { movies: 1, actors: 1, keywords: 1 },
            None,
            None,
            1,
        )
        .unwrap();
        p.actors[0].var = vec![1.0, 2.0];
        let base = versatility_score(&p, 0).unwrap();
        p.actors[0].var = vec![1.5, 2.0];
        assert!(versatility_score(&p, 0).unwrap() > base);
    }

    #[test]
    fn pairwise_accuracy_examples() {
        let pairs = vec![
            ExpertPair { winner: 0, loser: 1, majority_count: 4 },
            ExpertPair { winner: 1, loser: 2, majority_count: 4 },
            ExpertPair { winner: 0, loser: 2, majority_count: 4 },
            ExpertPair { winner: 2, loser: 3, majority_count: 3 },
        ];
        let perfect = score_map(&[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(pairwise_accuracy(&perfect, &pairs).unwrap(), 100.0);
        let flat = score_map(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(pairwise_accuracy(&flat, &pairs).unwrap(), 50.0);
        let three_of_four = score_map(&[4.0, 3.0, 2.0, 5.0]);
        assert_eq!(pairwise_accuracy(&three_of_four, &pairs).unwrap(), 75.0);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[1.0, 1.0, 1.0, 1.0]).unwrap() - 4.0f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[5.0, 0.0, 0.0]).unwrap(), 0.0);
        let expected = -(0.75f64.ln() * 0.75 + 0.25f64.ln() * 0.25);
        let got = entropy(&[3.0, 1.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.5623).abs() < 1e-4);
        assert!(entropy(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn spearman_basics() {
        let a = [3.0, 2.0, 1.0];
        assert!((spearman(&a, &[30.0, 20.0, 10.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[10.0, 20.0, 30.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_correlation_total_order() {
        let scores = score_map(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let pairs = chain_pairs(&[0, 1, 2, 3, 4]);
        let rho = rank_correlation(&scores, &pairs, 20, 3).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);

        let reversed = score_map(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let rho = rank_correlation(&reversed, &pairs, 20, 3).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_correlation_empty_pairs_is_chance() {
        let scores = score_map(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let rho = rank_correlation(&scores, &[], 4000, 9).unwrap();
        assert!(rho.abs() < 0.05, "mean correlation {rho}");
    }

    #[test]
    fn cycle_repair_drops_weakest_edge() {
        let scores = score_map(&[3.0, 2.0, 1.0]);
        let pairs = vec![
            ExpertPair { winner: 0, loser: 1, majority_count: 4 },
            ExpertPair { winner: 1, loser: 2, majority_count: 4 },
            ExpertPair { winner: 2, loser: 0, majority_count: 3 },
        ];
        let rho = rank_correlation(&scores, &pairs, 10, 1).unwrap();
        assert!((rho - 1.0).abs() < 1e-12); // weak back edge removed
    }

    #[test]
    fn equal_majority_cycle_is_error() {
        let scores = score_map(&[3.0, 2.0, 1.0]);
        let pairs = vec![
            ExpertPair { winner: 0, loser: 1, majority_count: 3 },
            ExpertPair { winner: 1, loser: 2, majority_count: 3 },
            ExpertPair { winner: 2, loser: 0, majority_count: 3 },
        ];
        let err = rank_correlation(&scores, &pairs, 10, 1).unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }
}
