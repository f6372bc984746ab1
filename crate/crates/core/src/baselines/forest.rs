//! Randomized tree ensembles with Gini splits.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    RandomForest,
    ExtraTrees,
}

impl ForestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForestKind::RandomForest => "random_forest",
            ForestKind::ExtraTrees => "extra_trees",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub kind: ForestKind,
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(kind: ForestKind, seed: u64) -> Self {
        Self {
            kind,
            n_trees: 100,
            max_features: None,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; 2],
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> [usize; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return *counts,
            }
        }
    }

    /// Majority class at the reached leaf, ties to class 0.
    pub fn vote(&self, x: &[f64]) -> usize {
        let c = self.leaf_counts(x);
        usize::from(c[1] > c[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub dim: usize,
    pub trees: Vec<Tree>,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

/// Weighted child impurity of splitting at `threshold`.
fn split_impurity(x: &Matrix, y: &[usize], idx: &[usize], feature: usize, threshold: f64) -> (f64, usize) {
    let mut l = [0usize; 2];
    let mut r = [0usize; 2];
    for &i in idx {
        if x.get(i, feature) <= threshold {
            l[y[i]] += 1;
        } else {
            r[y[i]] += 1;
        }
    }
    let (nl, nr) = (l[0] + l[1], r[0] + r[1]);
    let n = (nl + nr) as f64;
    ((nl as f64 * gini(l) + nr as f64 * gini(r)) / n, nl)
}

/// Best Gini threshold over midpoints of consecutive distinct values.
fn best_threshold(x: &Matrix, y: &[usize], idx: &[usize], feature: usize) -> Option<(f64, f64)> {
    let mut pairs: Vec<(f64, usize)> = idx.iter().map(|&i| (x.get(i, feature), y[i])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut total = [0usize; 2];
    for p in &pairs {
        total[p.1] += 1;
    }
    let mut left = [0usize; 2];
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n - 1 {
        left[pairs[k].1] += 1;
        if pairs[k].0 == pairs[k + 1].0 {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let nl = (k + 1) as f64;
        let imp = (nl * gini(left) + (n as f64 - nl) * gini(right)) / n as f64;
        if best.is_none_or(|(b, _)| imp < b) {
            let mut thr = 0.5 * (pairs[k].0 + pairs[k + 1].0);
            if thr >= pairs[k + 1].0 {
                thr = pairs[k].0;
            }
            best = Some((imp, thr));
        }
    }
    best
}

fn random_threshold<R: Rng>(x: &Matrix, y: &[usize], idx: &[usize], feature: usize, rng: &mut R) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in idx {
        lo = lo.min(x.get(i, feature));
        hi = hi.max(x.get(i, feature));
    }
    if lo >= hi {
        return None;
    }
    let t = rng.random_range(lo..hi);
    let (imp, nl) = split_impurity(x, y, idx, feature, t);
    (nl > 0 && nl < idx.len()).then_some((imp, t))
}

struct Grower<'a, R: Rng> {
    x: &'a Matrix,
    y: &'a [usize],
    kind: ForestKind,
    max_features: usize,
    rng: R,
    nodes: Vec<TreeNode>,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let mut counts = [0usize; 2];
        for &i in &idx {
            counts[self.y[i]] += 1;
        }
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts });
        if idx.len() < 2 || counts[0] == 0 || counts[1] == 0 {
            return at;
        }
        let d = self.x.cols();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        // Keep drawing features past max_features until a valid split exists.
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            let cand = match self.kind {
                ForestKind::RandomForest => best_threshold(self.x, self.y, &idx, f),
                ForestKind::ExtraTrees => random_threshold(self.x, self.y, &idx, f, &mut self.rng),
            };
            if let Some((imp, thr)) = cand {
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[at] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Fits `n_trees` fully grown trees in parallel. Each tree draws from its
/// own seed derived from the master seed.
pub fn train_forest(x: &Matrix, y: &[usize], config: &ForestConfig) -> Result<ForestModel> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Invalid("forest needs at least two samples".into()));
    }
    if y.len() != n {
        return Err(Error::dim("forest labels", n, y.len()));
    }
    if y.iter().any(|&c| c > 1) {
        return Err(Error::Invalid("forest labels must be 0 or 1".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let d = x.cols();
    let max_features = config
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.n_trees).map(|_| master.random()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = match config.kind {
                ForestKind::RandomForest => (0..n).map(|_| rng.random_range(0..n)).collect(),
                ForestKind::ExtraTrees => (0..n).collect(),
            };
            let mut g = Grower {
                x,
                y,
                kind: config.kind,
                max_features,
                rng,
                nodes: Vec::new(),
            };
            g.grow(idx);
            Tree { nodes: g.nodes }
        })
        .collect();
    Ok(ForestModel {
        config: config.clone(),
        dim: d,
        trees,
    })
}

impl ForestModel {
    /// Vote fractions `[p_class0, p_class1]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.dim {
            return Err(Error::dim("forest input", self.dim, x.len()));
        }
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        let p1 = ones as f64 / self.trees.len() as f64;
        Ok([1.0 - p1, p1])
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, [f64; 2])> {
        let p = self.predict_proba(x)?;
        Ok((usize::from(p[1] > p[0]), p))
    }

    /// One line per node: `tree node split feature threshold left right` or
    /// `tree node leaf count0 count1`.
    pub fn to_text(&self) -> String {
        let mut out = format!("forest {} trees={} dim={}\n", self.config.kind.as_str(), self.trees.len(), self.dim);
        for (t, tree) in self.trees.iter().enumerate() {
            for (i, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "{t} {i} split {feature} {} {left} {right}", fmt_f64(*threshold)),
                    TreeNode::Leaf { counts } => writeln!(out, "{t} {i} leaf {} {}", counts[0], counts[1]),
                };
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest, ProptestConfig};

    fn data(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let f0 = if c == 0 { rng.random_range(-2.0..-0.1) } else { rng.random_range(0.1..2.0) };
            rows.push(vec![f0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn single_feature_separates() {
        let (x, y) = data(1);
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let m = train_forest(&x, &y, &ForestConfig::new(kind, 3)).unwrap();
            let correct = (0..x.rows()).filter(|&r| m.predict(x.row(r)).unwrap().0 == y[r]).count();
            assert_eq!(correct, x.rows(), "{kind:?}");
            assert_eq!(m.trees.len(), 100);
        }
    }

    #[test]
    fn single_class_is_constant() {
        let (x, _) = data(2);
        let y = vec![1; x.rows()];
        let m = train_forest(&x, &y, &ForestConfig::new(ForestKind::RandomForest, 0)).unwrap();
        assert_eq!(m.predict(&[0.0; 4]).unwrap(), (1, [0.0, 1.0]));
        assert!(train_forest(&Matrix::zeros(1, 2), &[0], &ForestConfig::new(ForestKind::ExtraTrees, 0)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = data(4);
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let a = train_forest(&x, &y, &ForestConfig::new(kind, 8)).unwrap();
            let b = train_forest(&x, &y, &ForestConfig::new(kind, 8)).unwrap();
            assert_eq!(a.to_text(), b.to_text());
        }
    }

    #[test]
    fn internal_nodes_have_children() {
        let (x, y) = data(5);
        let m = train_forest(&x, &y, &ForestConfig::new(ForestKind::ExtraTrees, 1)).unwrap();
        for t in &m.trees {
            for node in &t.nodes {
                if let TreeNode::Split { left, right, .. } = node {
                    assert!(*left < t.nodes.len() && *right < t.nodes.len() && left != right);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn vote_fractions_are_distributions(
            rows in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 3), 0usize..2), 2..30),
            probe in prop::collection::vec(-6.0f64..6.0, 3),
        ) {
            let x = Matrix::from_rows(&rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>()).unwrap();
            let y: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let cfg = ForestConfig { n_trees: 10, ..ForestConfig::new(ForestKind::RandomForest, 2) };
            let p = train_forest(&x, &y, &cfg).unwrap().predict_proba(&probe).unwrap();
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }
}
