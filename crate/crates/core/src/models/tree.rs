//! Classification trees over coefficient features: exact greedy Gini
//! splits, deterministic tie-breaking, and a flat node representation for
//! persistence.

use ndarray::Array2;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// A node of a trained tree. Split rule: feature value <= threshold goes
/// left, otherwise right. `leaf_weight` is used by boosting trees only;
/// classification leaves carry (possibly weighted) class counts.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: Vec<f64>,
        predicted_class: usize,
        leaf_weight: f64,
    },
}

impl TreeNode {
    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// The leaf an instance falls into.
    pub fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Internal {
            feature_index,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature_index] <= *threshold {
                left
            } else {
                right
            };
        }
        node
    }
}

/// Training controls for a single tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Number of features drawn (without replacement) at every split;
    /// `None` considers all features.
    pub mtry: Option<usize>,
    /// Fixed feature subset for the whole tree; checked before `mtry`.
    pub feature_subset: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_split: 2,
            mtry: None,
            feature_subset: None,
            seed: 0,
        }
    }
}

pub(crate) struct TreeContext<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a [usize],
    pub n_classes: usize,
    pub weights: Option<&'a [f64]>,
}

impl TreeContext<'_> {
    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn class_weights(&self, rows: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &i in rows {
            counts[self.y[i]] += self.weight(i);
        }
        counts
    }
}

fn majority_class(counts: &[f64]) -> usize {
    let mut best = 0;
    for (c, &w) in counts.iter().enumerate() {
        if w > counts[best] {
            best = c;
        }
    }
    best
}

fn gini_term(counts: &[f64], total: f64) -> f64 {
    // total * (1 - sum p_c^2) = total - sum counts^2 / total
    if total <= 0.0 {
        return 0.0;
    }
    total - counts.iter().map(|&c| c * c).sum::<f64>() / total
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Scans one feature for the threshold minimizing the weighted child Gini
/// sum. Returns None if the feature is constant on these rows.
fn best_threshold_for_feature(
    ctx: &TreeContext,
    rows: &[usize],
    feature: usize,
    parent_counts: &[f64],
    parent_weight: f64,
) -> Option<(f64, f64)> {
    let mut order: Vec<(f64, usize)> = rows.iter().map(|&i| (ctx.x[[i, feature]], i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut left_counts = vec![0.0; ctx.n_classes];
    let mut left_weight = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for w in 0..order.len() - 1 {
        let (v, i) = order[w];
        left_counts[ctx.y[i]] += ctx.weight(i);
        left_weight += ctx.weight(i);
        let v_next = order[w + 1].0;
        if v_next <= v {
            continue;
        }
        let threshold = 0.5 * (v + v_next);
        let right_weight = parent_weight - left_weight;
        let mut right_sq = 0.0;
        let mut left_sq = 0.0;
        for c in 0..ctx.n_classes {
            left_sq += left_counts[c] * left_counts[c];
            let rc = parent_counts[c] - left_counts[c];
            right_sq += rc * rc;
        }
        let score =
            (left_weight - left_sq / left_weight) + (right_weight - right_sq / right_weight);
        match best {
            Some((s, _)) if s <= score => {}
            _ => best = Some((score, threshold)),
        }
    }
    best
}

fn candidate_features(ctx: &TreeContext, params: &TreeParams, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if let Some(subset) = &params.feature_subset {
        let mut s = subset.clone();
        s.sort_unstable();
        return s;
    }
    let p = ctx.x.ncols();
    match params.mtry {
        Some(m) if m < p => {
            let mut s: Vec<usize> = sample(rng, p, m).into_iter().collect();
            s.sort_unstable();
            s
        }
        _ => (0..p).collect(),
    }
}

fn build_node(
    ctx: &TreeContext,
    rows: &[usize],
    depth: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let counts = ctx.class_weights(rows);
    let weight: f64 = counts.iter().sum();
    let leaf = |counts: Vec<f64>| TreeNode::Leaf {
        predicted_class: majority_class(&counts),
        class_counts: counts,
        leaf_weight: 0.0,
    };
    let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
    if pure || depth >= params.max_depth || weight < params.min_samples_split as f64 {
        return leaf(counts);
    }

    let parent_score = gini_term(&counts, weight);
    let mut best: Option<BestSplit> = None;
    for feature in candidate_features(ctx, params, rng) {
        if let Some((score, threshold)) =
            best_threshold_for_feature(ctx, rows, feature, &counts, weight)
        {
            match &best {
                Some(b) if b.score <= score => {}
                _ => {
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        score,
                    })
                }
            }
        }
    }
    let Some(split) = best else {
        return leaf(counts);
    };
    if split.score >= parent_score {
        return leaf(counts);
    }

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&i| ctx.x[[i, split.feature]] <= split.threshold);
    let left = build_node(ctx, &left_rows, depth + 1, params, rng);
    let right = build_node(ctx, &right_rows, depth + 1, params, rng);
    TreeNode::Internal {
        feature_index: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Trains a classification tree by exact greedy search: at each node, every
/// candidate (feature, midpoint-threshold) pair is scored by weighted Gini
/// impurity; ties resolve to the lowest feature index, then the lowest
/// threshold.
pub fn train_tree(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
    sample_weights: Option<&[f64]>,
) -> Result<TreeNode, ModelError> {
    let mut rng = crate::models::stream_rng(params.seed, 0);
    train_tree_with_rng(x, y, n_classes, params, sample_weights, &mut rng)
}

/// Tree training on an externally managed RNG stream; the forest threads
/// one stream per tree through bootstrap draw and per-split sampling.
pub(crate) fn train_tree_with_rng(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
    sample_weights: Option<&[f64]>,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode, ModelError> {
    if x.nrows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(w) = sample_weights {
        if w.len() != x.nrows() {
            return Err(ModelError::DimensionMismatch {
                expected: x.nrows(),
                got: w.len(),
            });
        }
    }
    if let Some(m) = params.mtry {
        if m == 0 || m > x.ncols() {
            return Err(ModelError::InvalidMtry {
                mtry: m,
                n_features: x.ncols(),
            });
        }
    }
    let ctx = TreeContext {
        x,
        y,
        n_classes,
        weights: sample_weights,
    };
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| ctx.weight(i) > 0.0).collect();
    if rows.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    Ok(build_node(&ctx, &rows, 0, params, rng))
}

/// Routes an instance down the tree; `<= threshold` goes left.
pub fn predict_tree(tree: &TreeNode, x: &[f64]) -> usize {
    match tree.leaf_for(x) {
        TreeNode::Leaf {
            predicted_class, ..
        } => *predicted_class,
        TreeNode::Internal { .. } => unreachable!("leaf_for returns a leaf"),
    }
}

/// Class-proportion vector at the leaf an instance falls into.
pub fn tree_proba(tree: &TreeNode, x: &[f64], n_classes: usize) -> Vec<f64> {
    match tree.leaf_for(x) {
        TreeNode::Leaf { class_counts, .. } => {
            let total: f64 = class_counts.iter().sum();
            if total > 0.0 {
                class_counts.iter().map(|&c| c / total).collect()
            } else {
                vec![1.0 / n_classes as f64; n_classes]
            }
        }
        TreeNode::Internal { .. } => unreachable!(),
    }
}

/// Flat node-list form of a tree for persistence; children are indices into
/// the list, with the root at index 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FlatNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<f64>,
        class: usize,
        weight: f64,
    },
}

pub fn to_flat(tree: &TreeNode) -> Vec<FlatNode> {
    fn push(tree: &TreeNode, out: &mut Vec<FlatNode>) -> usize {
        let slot = out.len();
        match tree {
            TreeNode::Leaf {
                class_counts,
                predicted_class,
                leaf_weight,
            } => {
                out.push(FlatNode::Leaf {
                    counts: class_counts.clone(),
                    class: *predicted_class,
                    weight: *leaf_weight,
                });
                slot
            }
            TreeNode::Internal {
                feature_index,
                threshold,
                left,
                right,
            } => {
                out.push(FlatNode::Split {
                    feature: *feature_index,
                    threshold: *threshold,
                    left: 0,
                    right: 0,
                });
                let l = push(left, out);
                let r = push(right, out);
                if let FlatNode::Split { left, right, .. } = &mut out[slot] {
                    *left = l;
                    *right = r;
                }
                slot
            }
        }
    }
    let mut out = Vec::new();
    push(tree, &mut out);
    out
}

pub fn from_flat(nodes: &[FlatNode]) -> Result<TreeNode, ModelError> {
    fn build(nodes: &[FlatNode], idx: usize, depth: usize) -> Result<TreeNode, ModelError> {
        if depth > nodes.len() || idx >= nodes.len() {
            return Err(ModelError::MalformedModel("bad node index".into()));
        }
        match &nodes[idx] {
            FlatNode::Leaf {
                counts,
                class,
                weight,
            } => Ok(TreeNode::Leaf {
                class_counts: counts.clone(),
                predicted_class: *class,
                leaf_weight: *weight,
            }),
            FlatNode::Split {
                feature,
                threshold,
                left,
                right,
            } => Ok(TreeNode::Internal {
                feature_index: *feature,
                threshold: *threshold,
                left: Box::new(build(nodes, *left, depth + 1)?),
                right: Box::new(build(nodes, *right, depth + 1)?),
            }),
        }
    }
    if nodes.is_empty() {
        return Err(ModelError::MalformedModel("empty node list".into()));
    }
    build(nodes, 0, 0)
}
