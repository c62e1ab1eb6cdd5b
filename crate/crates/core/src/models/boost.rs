//! Gradient boosting with the second-order (Newton) split gain and leaf
//! weights, multiclass softmax objective, and a choice of level-wise or
//! leaf-wise (best-first) tree growth.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::TreeNode;
use super::{stream_rng, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Expand every frontier node breadth-first up to `max_depth`.
    LevelWise,
    /// Repeatedly split the frontier leaf with the highest gain until
    /// `max_leaves` or no positive gain remains.
    LeafWise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub rounds: usize,
    /// Constant shrinkage applied to every leaf contribution.
    pub learning_rate: f64,
    /// Depth cap for level-wise growth.
    pub max_depth: usize,
    /// Leaf cap for leaf-wise growth.
    pub max_leaves: usize,
    /// L2 penalty on leaf weights.
    pub reg_lambda: f64,
    /// Per-leaf complexity penalty subtracted from each split gain.
    pub reg_gamma: f64,
    /// Row fraction drawn (without replacement) per tree.
    pub subsample: f64,
    /// Feature fraction drawn (without replacement) per tree.
    pub colsample: f64,
    pub growth: Growth,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.3,
            max_depth: 6,
            max_leaves: 31,
            reg_lambda: 1.0,
            reg_gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            growth: Growth::LevelWise,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoostModel {
    pub params: BoostParams,
    /// trees[round][class], each a regression tree whose leaves carry
    /// unscaled Newton weights -G/(H+lambda).
    pub trees: Vec<Vec<TreeNode>>,
    pub base_scores: Vec<f64>,
    /// Training log-loss after the base scores and after each round.
    pub train_log_loss: Vec<f64>,
    pub n_classes: usize,
    pub n_features: usize,
}

fn validate(params: &BoostParams) -> Result<(), ModelError> {
    if params.rounds == 0 {
        return Err(ModelError::InvalidParam("rounds must be >= 1".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(ModelError::InvalidParam(format!(
            "learning_rate {} not in (0, 1]",
            params.learning_rate
        )));
    }
    for (name, v) in [
        ("subsample", params.subsample),
        ("colsample", params.colsample),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(ModelError::InvalidParam(format!(
                "{name} {v} not in (0, 1]"
            )));
        }
    }
    if !(params.reg_lambda >= 0.0) {
        return Err(ModelError::InvalidParam("reg_lambda must be >= 0".into()));
    }
    if !(params.reg_gamma >= 0.0) {
        return Err(ModelError::InvalidParam("reg_gamma must be >= 0".into()));
    }
    if params.growth == Growth::LeafWise && params.max_leaves < 1 {
        return Err(ModelError::InvalidParam("max_leaves must be >= 1".into()));
    }
    Ok(())
}

/// Second-order gain of splitting (G, H) into (gl, hl) and (G-gl, H-hl).
fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let gr = g - gl;
    let hr = h - hl;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best (feature, threshold) for a node by scanning sorted feature columns
/// with gradient/hessian prefix sums. Ties keep the first candidate in
/// (feature asc, threshold asc) order.
fn best_split(
    x: &Array2<f64>,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
    lambda: f64,
    gamma: f64,
) -> Option<SplitChoice> {
    let g_total: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h_total: f64 = rows.iter().map(|&i| hess[i]).sum();
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let mut order: Vec<(f64, usize)> = rows.iter().map(|&i| (x[[i, f]], i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut gl = 0.0;
        let mut hl = 0.0;
        for w in 0..order.len() - 1 {
            let (v, i) = order[w];
            gl += grad[i];
            hl += hess[i];
            let v_next = order[w + 1].0;
            if v_next <= v {
                continue;
            }
            let gain = split_gain(gl, hl, g_total, h_total, lambda, gamma);
            let threshold = 0.5 * (v + v_next);
            match &best {
                Some(b) if b.gain >= gain => {}
                _ => {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    })
                }
            }
        }
    }
    best
}

// Arena node used while growing; converted to TreeNode afterwards.
struct GrowNode {
    rows: Vec<usize>,
    depth: usize,
    split: Option<(usize, f64, usize, usize)>,
    weight: f64,
}

fn make_leaf(rows: &[usize], grad: &[f64], hess: &[f64], lambda: f64, depth: usize) -> GrowNode {
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h: f64 = rows.iter().map(|&i| hess[i]).sum();
    GrowNode {
        rows: rows.to_vec(),
        depth,
        split: None,
        weight: leaf_weight(g, h, lambda),
    }
}

fn to_tree(arena: &[GrowNode], idx: usize, n_classes: usize) -> TreeNode {
    match arena[idx].split {
        Some((feature, threshold, l, r)) => TreeNode::Internal {
            feature_index: feature,
            threshold,
            left: Box::new(to_tree(arena, l, n_classes)),
            right: Box::new(to_tree(arena, r, n_classes)),
        },
        None => TreeNode::Leaf {
            class_counts: vec![0.0; n_classes],
            predicted_class: 0,
            leaf_weight: arena[idx].weight,
        },
    }
}

fn grow_tree(
    x: &Array2<f64>,
    rows: Vec<usize>,
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
    params: &BoostParams,
    n_classes: usize,
) -> TreeNode {
    let lambda = params.reg_lambda;
    let gamma = params.reg_gamma;
    let mut arena: Vec<GrowNode> = vec![make_leaf(&rows, grad, hess, lambda, 0)];

    match params.growth {
        Growth::LevelWise => {
            let mut frontier = vec![0usize];
            while let Some(idx) = frontier.pop() {
                if arena[idx].depth >= params.max_depth || arena[idx].rows.len() < 2 {
                    continue;
                }
                let Some(choice) =
                    best_split(x, &arena[idx].rows, grad, hess, features, lambda, gamma)
                else {
                    continue;
                };
                if choice.gain <= 0.0 {
                    continue;
                }
                let (lrows, rrows): (Vec<usize>, Vec<usize>) = arena[idx]
                    .rows
                    .iter()
                    .partition(|&&i| x[[i, choice.feature]] <= choice.threshold);
                let depth = arena[idx].depth + 1;
                let l = arena.len();
                arena.push(make_leaf(&lrows, grad, hess, lambda, depth));
                let r = arena.len();
                arena.push(make_leaf(&rrows, grad, hess, lambda, depth));
                arena[idx].split = Some((choice.feature, choice.threshold, l, r));
                // Expand right first so the left child pops first; expansion
                // order does not affect the result in level-wise growth.
                frontier.push(r);
                frontier.push(l);
            }
        }
        Growth::LeafWise => {
            // Candidate best splits per frontier leaf, recomputed lazily.
            let mut candidates: Vec<(usize, Option<SplitChoice>)> = Vec::new();
            let root_choice = if rows.len() >= 2 {
                best_split(x, &arena[0].rows, grad, hess, features, lambda, gamma)
            } else {
                None
            };
            candidates.push((0, root_choice));
            let mut n_leaves = 1usize;
            while n_leaves < params.max_leaves {
                // Highest positive gain; ties keep the earliest-created leaf.
                let mut pick: Option<usize> = None;
                for (ci, (_, choice)) in candidates.iter().enumerate() {
                    if let Some(c) = choice {
                        if c.gain > 0.0 {
                            let better = match pick {
                                None => true,
                                Some(prev) => {
                                    let prev_gain =
                                        candidates[prev].1.as_ref().map(|c| c.gain).unwrap();
                                    c.gain > prev_gain
                                }
                            };
                            if better {
                                pick = Some(ci);
                            }
                        }
                    }
                }
                let Some(ci) = pick else { break };
                let (node_idx, choice) = candidates.swap_remove(ci);
                let choice = choice.unwrap();
                let (lrows, rrows): (Vec<usize>, Vec<usize>) = arena[node_idx]
                    .rows
                    .iter()
                    .partition(|&&i| x[[i, choice.feature]] <= choice.threshold);
                let depth = arena[node_idx].depth + 1;
                let l = arena.len();
                arena.push(make_leaf(&lrows, grad, hess, lambda, depth));
                let r = arena.len();
                arena.push(make_leaf(&rrows, grad, hess, lambda, depth));
                arena[node_idx].split = Some((choice.feature, choice.threshold, l, r));
                n_leaves += 1;
                for idx in [l, r] {
                    let ch = if arena[idx].rows.len() >= 2 {
                        best_split(x, &arena[idx].rows, grad, hess, features, lambda, gamma)
                    } else {
                        None
                    };
                    candidates.push((idx, ch));
                }
            }
        }
    }
    to_tree(&arena, 0, n_classes)
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        let e = (s - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn mean_log_loss(probs: &Array2<f64>, y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        total -= probs[[i, label]].max(1e-15).ln();
    }
    total / y.len() as f64
}

/// Trains the boosted ensemble: per round and class, fits a regression tree
/// to softmax gradients/hessians and advances the scores by
/// `learning_rate * leaf_weight`.
pub fn train_boost(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &BoostParams,
) -> Result<BoostModel, ModelError> {
    validate(params)?;
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 {
        return Err(ModelError::EmptyInput);
    }
    if y.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }

    let base_scores = vec![0.0; n_classes];
    let mut scores = Array2::<f64>::zeros((n, n_classes));
    let mut probs = Array2::<f64>::zeros((n, n_classes));
    let mut trees: Vec<Vec<TreeNode>> = Vec::with_capacity(params.rounds);
    let mut losses = Vec::with_capacity(params.rounds + 1);

    for round in 0..params.rounds {
        for i in 0..n {
            let (srow, mut prow) = (scores.row(i), probs.row_mut(i));
            softmax_into(srow.as_slice().unwrap(), prow.as_slice_mut().unwrap());
        }
        if round == 0 {
            losses.push(mean_log_loss(&probs, y));
        }

        let round_trees: Vec<TreeNode> = (0..n_classes)
            .into_par_iter()
            .map(|class| {
                let mut rng = stream_rng(params.seed, (round * n_classes + class) as u64 + 1);
                let rows: Vec<usize> = if params.subsample < 1.0 {
                    let m = ((params.subsample * n as f64).floor() as usize).max(1);
                    let mut s: Vec<usize> = rand::seq::index::sample(&mut rng, n, m)
                        .into_iter()
                        .collect();
                    s.sort_unstable();
                    s
                } else {
                    (0..n).collect()
                };
                let features: Vec<usize> = if params.colsample < 1.0 {
                    let m = ((params.colsample * p as f64).floor() as usize).max(1);
                    let mut s: Vec<usize> = rand::seq::index::sample(&mut rng, p, m)
                        .into_iter()
                        .collect();
                    s.sort_unstable();
                    s
                } else {
                    (0..p).collect()
                };
                let mut grad = vec![0.0; n];
                let mut hess = vec![0.0; n];
                for i in 0..n {
                    let pc = probs[[i, class]];
                    grad[i] = pc - f64::from(u8::from(y[i] == class));
                    hess[i] = pc * (1.0 - pc);
                }
                grow_tree(x, rows, &grad, &hess, &features, params, n_classes)
            })
            .collect();

        for (class, tree) in round_trees.iter().enumerate() {
            for i in 0..n {
                let row = x.row(i).to_vec();
                if let TreeNode::Leaf { leaf_weight, .. } = tree.leaf_for(&row) {
                    scores[[i, class]] += params.learning_rate * leaf_weight;
                }
            }
        }
        trees.push(round_trees);

        for i in 0..n {
            let (srow, mut prow) = (scores.row(i), probs.row_mut(i));
            softmax_into(srow.as_slice().unwrap(), prow.as_slice_mut().unwrap());
        }
        losses.push(mean_log_loss(&probs, y));
    }

    Ok(BoostModel {
        params: params.clone(),
        trees,
        base_scores,
        train_log_loss: losses,
        n_classes,
        n_features: p,
    })
}

/// Raw class scores: base plus shrunk leaf weights over all rounds.
pub fn boost_scores(model: &BoostModel, x: &[f64]) -> Vec<f64> {
    let mut scores = model.base_scores.clone();
    for round in &model.trees {
        for (class, tree) in round.iter().enumerate() {
            if let TreeNode::Leaf { leaf_weight, .. } = tree.leaf_for(x) {
                scores[class] += model.params.learning_rate * leaf_weight;
            }
        }
    }
    scores
}

/// Softmax class probabilities; sums to 1 within 1e-12.
pub fn predict_boost_proba(model: &BoostModel, x: &[f64]) -> Vec<f64> {
    let scores = boost_scores(model, x);
    let mut probs = vec![0.0; scores.len()];
    softmax_into(&scores, &mut probs);
    probs
}

/// Argmax class with the smallest-index tie-break.
pub fn predict_boost(model: &BoostModel, x: &[f64]) -> usize {
    let scores = boost_scores(model, x);
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}
