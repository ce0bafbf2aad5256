//! Conditional-inference random forest. Split variables are chosen by a
//! permutation test on a maximally selected rank statistic rather than raw
//! impurity reduction, which makes variable selection invariant under
//! strictly monotone feature transformations and sensitive to non-monotone
//! association.

use super::derive_seed;
use crate::numeric::stats::ranks;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CForestParams {
    pub trees: usize,
    pub mtry: usize,
    /// Significance level a variable must reach to be split on.
    pub alpha: f64,
    pub min_node_size: usize,
    /// Monte Carlo permutations per association test.
    pub permutations: usize,
    /// Fraction of rows drawn without replacement per tree.
    pub subsample: f64,
}

impl Default for CForestParams {
    fn default() -> Self {
        Self {
            trees: 500,
            mtry: 2,
            alpha: 0.05,
            min_node_size: 7,
            permutations: 200,
            subsample: 0.632,
        }
    }
}

/// Standardized two-sample statistic for every admissible cut along a sorted
/// feature, returning the maximum and the cut index attaining it.
///
/// `yr_sorted` holds the response ranks in feature order; `tie_with_next[k]`
/// marks cuts that fall between equal feature values and are skipped.
fn max_cut_statistic(
    yr_sorted: &[f64],
    tie_with_next: &[bool],
    min_node: usize,
) -> Option<(f64, usize)> {
    let n = yr_sorted.len();
    if n < 2 * min_node {
        return None;
    }
    let total: f64 = yr_sorted.iter().sum();
    let mu = total / n as f64;
    let mut best: Option<(f64, usize)> = None;
    let mut prefix = 0.0;
    for k in 1..n {
        prefix += yr_sorted[k - 1];
        if tie_with_next[k - 1] || k < min_node || n - k < min_node {
            continue;
        }
        let scale = (k as f64 * (n - k) as f64).sqrt();
        let stat = (prefix - k as f64 * mu).abs() / scale;
        if best.map_or(true, |(s, _)| stat > s) {
            best = Some((stat, k));
        }
    }
    best
}

/// Monte Carlo permutation p-value of the maximally selected rank statistic
/// between `x` and `y`, plus the best cut position in the sorted order.
/// Deterministic given the seed and invariant under strictly monotone
/// transformations of either argument.
pub fn max_association_p_value(
    x: &[f64],
    y: &[f64],
    min_node: usize,
    permutations: usize,
    seed: u64,
) -> Option<(f64, f64)> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let tie_with_next: Vec<bool> =
        (0..n).map(|k| k + 1 < n && x[order[k]] == x[order[k + 1]]).collect();
    let yr = ranks(y);
    let mut yr_sorted: Vec<f64> = order.iter().map(|&i| yr[i]).collect();
    let (observed, cut) = max_cut_statistic(&yr_sorted, &tie_with_next, min_node)?;
    // threshold midway between the last left value and the first right value
    let threshold = 0.5 * (x[order[cut - 1]] + x[order[cut]]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at_least = 1usize;
    for _ in 0..permutations {
        yr_sorted.shuffle(&mut rng);
        if let Some((s, _)) = max_cut_statistic(&yr_sorted, &tie_with_next, min_node) {
            if s >= observed - 1e-12 {
                at_least += 1;
            }
        }
    }
    Some((at_least as f64 / (permutations + 1) as f64, threshold))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CForestModel {
    params: CForestParams,
    trees: Vec<Tree>,
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    params: &CForestParams,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let p = x[0].len();
    let leaf_value =
        |idx: &[usize]| idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len().max(1) as f64;
    let leaf = |nodes: &mut Vec<Node>, idx: &[usize]| {
        let at = nodes.len();
        nodes.push(Node::Leaf(leaf_value(idx)));
        at
    };
    if idx.len() < 2 * params.min_node_size {
        return leaf(nodes, &idx);
    }

    let mut features: Vec<usize> = (0..p).collect();
    features.shuffle(rng);
    features.truncate(params.mtry.clamp(1, p));
    features.sort_unstable();
    let yv: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut chosen: Option<(usize, f64, f64)> = None;
    for &f in &features {
        let xv: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
        let seed = rng.random::<u64>();
        if let Some((pv, thr)) =
            max_association_p_value(&xv, &yv, params.min_node_size, params.permutations, seed)
        {
            if chosen.map_or(true, |(_, best, _)| pv < best) {
                chosen = Some((f, pv, thr));
            }
        }
    }
    let Some((feature, pv, threshold)) = chosen else {
        return leaf(nodes, &idx);
    };
    // Bonferroni adjustment over the tested features
    if pv * features.len() as f64 > params.alpha {
        return leaf(nodes, &idx);
    }
    let (li, ri): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x[i][feature] <= threshold);
    if li.is_empty() || ri.is_empty() {
        let all: Vec<usize> = li.into_iter().chain(ri).collect();
        return leaf(nodes, &all);
    }
    let at = nodes.len();
    nodes.push(Node::Leaf(0.0)); // placeholder
    let left = grow(x, y, li, params, rng, nodes);
    let right = grow(x, y, ri, params, rng, nodes);
    nodes[at] = Node::Split { feature, threshold, left, right };
    at
}

impl CForestModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: CForestParams, seed: u64) -> Self {
        let n = y.len();
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                // subsample without replacement, as conditional forests do
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(&mut rng);
                all.truncate(((n as f64 * params.subsample).ceil() as usize).clamp(1, n));
                let mut nodes = Vec::new();
                grow(x, y, all, &params, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Self { params, trees }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn params(&self) -> CForestParams {
        self.params
    }
}
