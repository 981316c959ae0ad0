//! Depth-limited classification tree.
//!
//! The only randomness is the order in which candidate features are visited
//! at each node; exact Gini ties resolve to the first feature in that order,
//! which is how the stream shapes the tree.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleTable;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Two candidate splits whose Gini scores differ by no more than this are
/// treated as tied.
pub const GINI_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Longest allowed root-to-leaf path, counted in edges.
    pub max_depth: usize,
    /// Minimum training rows on each side of every split.
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 10,
            min_leaf: 1,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        label: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// A trained tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    config: TreeConfig,
    class_count: usize,
    feature_dim: usize,
    root: TreeNode,
}

impl TreeModel {
    /// Assemble a tree from parts, verifying every structural invariant:
    /// finite thresholds, in-range features and labels, depth bound.
    pub fn from_parts(
        config: TreeConfig,
        class_count: usize,
        feature_dim: usize,
        root: TreeNode,
    ) -> Result<TreeModel> {
        config.validate()?;
        if class_count < 2 {
            return Err(Error::InvalidArgument("class_count must be at least 2".into()));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        fn walk(node: &TreeNode, depth: usize, model_depth: usize, c: usize, d: usize) -> Result<()> {
            match node {
                TreeNode::Leaf { label } => {
                    if *label >= c {
                        return Err(Error::Data(format!("leaf label {label} out of range")));
                    }
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if depth == model_depth {
                        return Err(Error::Data("tree exceeds max_depth".into()));
                    }
                    if *feature >= d {
                        return Err(Error::Data(format!("split feature {feature} out of range")));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Data("split threshold must be finite".into()));
                    }
                    walk(left, depth + 1, model_depth, c, d)?;
                    walk(right, depth + 1, model_depth, c, d)?;
                }
            }
            Ok(())
        }
        walk(&root, 0, config.max_depth, class_count, feature_dim)?;
        Ok(TreeModel {
            config,
            class_count,
            feature_dim,
            root,
        })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Longest root-to-leaf path in edges.
    pub fn depth(&self) -> usize {
        fn go(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    pub fn node_count(&self) -> usize {
        fn go(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => 1 + go(left) + go(right),
            }
        }
        go(&self.root)
    }

    pub fn predict_labels(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        if features.ncols() != self.feature_dim {
            return Err(Error::Shape(format!(
                "{} feature columns, tree expects {}",
                features.ncols(),
                self.feature_dim
            )));
        }
        Ok(features
            .rows()
            .into_iter()
            .map(|row| {
                let mut node = &self.root;
                loop {
                    match node {
                        TreeNode::Leaf { label } => return *label,
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            node = if row[*feature] <= *threshold { left } else { right };
                        }
                    }
                }
            })
            .collect())
    }
}

/// Class counts over a set of rows.
fn label_counts(labels: &[usize], rows: &[usize], class_count: usize) -> Vec<usize> {
    let mut counts = vec![0usize; class_count];
    for &r in rows {
        counts[labels[r]] += 1;
    }
    counts
}

/// Most frequent class, lowest index on ties.
fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

fn gini(counts: &[usize], n: f64) -> f64 {
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

struct Builder<'a> {
    table: &'a SampleTable,
    config: TreeConfig,
}

impl Builder<'_> {
    fn build(&self, rows: Vec<usize>, depth: usize, stream: &mut Stream) -> TreeNode {
        let counts = label_counts(self.table.labels(), &rows, self.table.class_count());
        let leaf = TreeNode::Leaf {
            label: majority(&counts),
        };
        if counts.iter().filter(|&&c| c > 0).count() <= 1 {
            return leaf;
        }
        if depth == self.config.max_depth || rows.len() < 2 * self.config.min_leaf {
            return leaf;
        }

        // The permutation is drawn at every node that attempts a split, in
        // preorder, so two streams disagree as soon as any node's order does.
        let perm = stream.permutation(self.table.dim());
        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in &perm {
            if let Some((score, threshold)) = self.best_threshold(&rows, feature, &counts) {
                let better = match best {
                    None => true,
                    Some((b, _, _)) => score < b - GINI_TIE,
                };
                if better {
                    best = Some((score, feature, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };

        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for r in rows {
            if self.table.features()[(r, feature)] <= threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.build(left_rows, depth + 1, stream)),
            right: Box::new(self.build(right_rows, depth + 1, stream)),
        }
    }

    /// Best (weighted Gini, midpoint threshold) for one feature, or None when
    /// no cut keeps `min_leaf` rows on both sides. Within a feature the first
    /// threshold (in ascending value order) wins ties.
    fn best_threshold(
        &self,
        rows: &[usize],
        feature: usize,
        total: &[usize],
    ) -> Option<(f64, f64)> {
        let n = rows.len();
        let mut pairs: Vec<(f64, usize)> = rows
            .iter()
            .map(|&r| (self.table.features()[(r, feature)], self.table.labels()[r]))
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

        let mut left = vec![0usize; total.len()];
        let mut right = total.to_vec();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let (value, label) = pairs[i];
            left[label] += 1;
            right[label] -= 1;
            let next = pairs[i + 1].0;
            if next <= value {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < self.config.min_leaf || nr < self.config.min_leaf {
                continue;
            }
            let score =
                (nl as f64 * gini(&left, nl as f64) + nr as f64 * gini(&right, nr as f64)) / n as f64;
            let better = match best {
                None => true,
                Some((b, _)) => score < b - GINI_TIE,
            };
            if better {
                best = Some((score, (value + next) / 2.0));
            }
        }
        best
    }
}

/// Grow a tree by greedy Gini splitting. At each node candidate features are
/// visited in a fresh permutation from `perm_stream`; within [`GINI_TIE`] of
/// the best score the earliest candidate wins. Recursion stops at purity,
/// `max_depth` edges, or when a child would fall under `min_leaf` rows;
/// leaves take the majority label with lowest-class-index tie-break.
pub fn tree_train(
    train: &SampleTable,
    config: &TreeConfig,
    perm_stream: &mut Stream,
) -> Result<TreeModel> {
    config.validate()?;
    let builder = Builder {
        table: train,
        config: *config,
    };
    let rows: Vec<usize> = (0..train.len()).collect();
    let root = builder.build(rows, 0, perm_stream);
    TreeModel::from_parts(*config, train.class_count(), train.dim(), root)
}
