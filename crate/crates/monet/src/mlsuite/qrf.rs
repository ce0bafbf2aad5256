//! Quantile random forest: variance-split trees that keep the training
//! responses in every leaf, so arbitrary conditional quantiles can be read
//! off the forest weights.

use super::derive_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrfParams {
    pub trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Indices into the training set.
    Leaf(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, row: &[f64]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(idx) => return idx,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QrfModel {
    params: QrfParams,
    trees: Vec<Tree>,
    y: Vec<f64>,
}

fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    idx: &[usize],
    features: &[usize],
    min_node: usize,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for &f in features {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).unwrap());
        let total: f64 = order.iter().map(|&i| y[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
        let n = order.len();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..n - 1 {
            let i = order[k];
            left_sum += y[i];
            left_sq += y[i] * y[i];
            if x[order[k]][f] == x[order[k + 1]][f] {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            if (k + 1) < min_node || (n - k - 1) < min_node {
                continue;
            }
            let sse_left = left_sq - left_sum * left_sum / nl;
            let right_sum = total - left_sum;
            let sse_right = (total_sq - left_sq) - right_sum * right_sum / nr;
            let score = sse_left + sse_right;
            if best.map_or(true, |(_, _, s)| score < s) {
                let threshold = 0.5 * (x[order[k]][f] + x[order[k + 1]][f]);
                best = Some((f, threshold, score));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    params: &QrfParams,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let p = x[0].len();
    if idx.len() < 2 * params.min_node_size {
        let at = nodes.len();
        nodes.push(Node::Leaf(idx));
        return at;
    }
    let mut features: Vec<usize> = (0..p).collect();
    features.shuffle(rng);
    features.truncate(params.mtry.clamp(1, p));
    match best_split(x, y, &idx, &features, params.min_node_size) {
        None => {
            let at = nodes.len();
            nodes.push(Node::Leaf(idx));
            at
        }
        Some((feature, threshold)) => {
            let (li, ri): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| x[i][feature] <= threshold);
            let at = nodes.len();
            nodes.push(Node::Leaf(Vec::new())); // placeholder
            let left = grow(x, y, li, params, rng, nodes);
            let right = grow(x, y, ri, params, rng, nodes);
            nodes[at] = Node::Split { feature, threshold, left, right };
            at
        }
    }
}

impl QrfModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: QrfParams, seed: u64) -> Self {
        let n = y.len();
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut nodes = Vec::new();
                grow(x, y, sample, &params, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Self { params, trees, y: y.to_vec() }
    }

    /// Forest weights over the training responses for one query row.
    fn weights(&self, row: &[f64]) -> Vec<(f64, f64)> {
        let mut acc = std::collections::HashMap::<usize, f64>::new();
        for tree in &self.trees {
            let leaf = tree.leaf(row);
            if leaf.is_empty() {
                continue;
            }
            let w = 1.0 / (leaf.len() as f64 * self.trees.len() as f64);
            for &i in leaf {
                *acc.entry(i).or_insert(0.0) += w;
            }
        }
        let mut pairs: Vec<(f64, f64)> = acc.into_iter().map(|(i, w)| (self.y[i], w)).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pairs
    }

    /// Weighted conditional quantile in the sense of quantile forests.
    pub fn predict_quantile(&self, row: &[f64], q: f64) -> f64 {
        let pairs = self.weights(row);
        if pairs.is_empty() {
            return f64::NAN;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut cum = 0.0;
        for (value, w) in &pairs {
            cum += w / total;
            if cum >= q {
                return *value;
            }
        }
        pairs.last().unwrap().0
    }

    /// Conditional median, the forest's point prediction.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_quantile(row, 0.5)
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn params(&self) -> QrfParams {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    fn params(trees: usize) -> QrfParams {
        QrfParams { trees, mtry: 1, min_node_size: 5 }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let y = vec![3.5; 60];
        let model = QrfModel::fit(&x, &y, params(50), 1);
        for row in &x {
            assert_eq!(model.predict(row), 3.5);
        }
    }

    #[test]
    fn median_stays_within_training_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let nz = rand_distr::Normal::new(0.0, 0.3).unwrap();
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 25.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0].sin() + nz.sample(&mut rng)).collect();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let model = QrfModel::fit(&x, &y, params(100), 3);
        for probe in 0..50 {
            let v = model.predict(&[probe as f64 / 6.0]);
            assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<Vec<f64>> = (0..80).map(|i| vec![(i as f64 * 0.7).sin(), i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + r[1] * 0.01).collect();
        let a = QrfModel::fit(&x, &y, params(40), 9).predict_all(&x);
        let b = QrfModel::fit(&x, &y, params(40), 9).predict_all(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn interval_coverage_on_gaussian_data() {
        let mut covered = 0usize;
        let mut total = 0usize;
        for run in 0..50u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100 + run);
            let nz = rand_distr::Normal::new(0.0, 1.0).unwrap();
            let n = 300;
            let x: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.random::<f64>() * 4.0 - 2.0]).collect();
            let y: Vec<f64> = x.iter().map(|r| r[0] + nz.sample(&mut rng)).collect();
            let model = QrfModel::fit(
                &x,
                &y,
                QrfParams { trees: 100, mtry: 1, min_node_size: 20 },
                200 + run,
            );
            for _ in 0..20 {
                let xo = rng.random::<f64>() * 4.0 - 2.0;
                let yo = xo + nz.sample(&mut rng);
                let lo = model.predict_quantile(&[xo], 0.05);
                let hi = model.predict_quantile(&[xo], 0.95);
                if yo >= lo && yo <= hi {
                    covered += 1;
                }
                total += 1;
            }
        }
        let coverage = covered as f64 / total as f64;
        assert!((0.85..=0.95).contains(&coverage), "coverage {coverage}");
    }
}
