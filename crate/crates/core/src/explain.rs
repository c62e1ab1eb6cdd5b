//! Model explanation tools: separation curves reconstructed from tree-path
//! thresholds, and correlation-aware conditional feature importance computed
//! by retraining with and without the feature of interest.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

use crate::basis::{BasisError, BasisSystem};
use crate::enrich::{BlockLayout, BlockTag};
use crate::models::{
    log_loss, stream_rng, train_boost, train_forest, train_knn, train_tree, BoostParams,
    ForestParams, ModelError, TrainedModel, TreeNode, TreeParams,
};
use rand::seq::SliceRandom;

#[derive(Error, Debug)]
pub enum ExplainError {
    #[error("path step {0} descends past a leaf")]
    InvalidPath(usize),
    #[error("feature index {index} outside the {total}-column layout")]
    BadFeatureIndex { index: usize, total: usize },
    #[error("correlation threshold {0} must lie in [0, 1]")]
    InvalidTau(f64),
    #[error("the feature set to evaluate is empty")]
    NoFeatures,
    #[error("conditioning set already contains feature {0}")]
    FeatureInConditioning(usize),
    #[error("need at least {need} rows for a train/validation split, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn parse_path(s: &str) -> Option<Vec<Direction>> {
        s.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'L' => Some(Direction::Left),
                'R' => Some(Direction::Right),
                _ => None,
            })
            .collect()
    }
}

/// One split encountered on the way to the target node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathStep {
    pub depth: usize,
    pub feature_index: usize,
    pub block: BlockTag,
    pub basis_index: usize,
    pub threshold: f64,
    pub direction: Direction,
}

/// Fill for coefficients the path never touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillPolicy {
    /// Training-set mean coefficient of the block (default; yields a curve
    /// comparable to data curves).
    TrainMean,
    Zeros,
}

#[derive(Debug, Clone)]
pub struct SeparationCurve {
    pub node_path: Vec<PathStep>,
    /// Per touched block: the full coefficient vector (thresholds at split
    /// indices, fill elsewhere).
    pub per_block_coeffs: Vec<(BlockTag, Vec<f64>)>,
    /// Per touched block: the curve evaluated on the requested grid.
    pub per_block_curves: Vec<(BlockTag, Vec<f64>)>,
    /// Training row closest (L2 over the touched blocks' coefficients) to
    /// the theoretical curve, with its distance.
    pub empirical_match: Option<(usize, f64)>,
}

/// Reconstructs the separation curve of the node reached by `path`: for
/// every block touched on the way, split thresholds become coefficients at
/// their basis indices and the remaining coefficients take the fill value;
/// the nearest training curve in those coefficients is reported as the
/// empirical counterpart.
pub fn separation_curve(
    tree: &TreeNode,
    path: &[Direction],
    basis: &BasisSystem,
    layout: &BlockLayout,
    train_features: &Array2<f64>,
    t_grid: &[f64],
    fill: FillPolicy,
) -> Result<SeparationCurve, ExplainError> {
    let mut node = tree;
    let mut steps = Vec::with_capacity(path.len());
    for (depth, &direction) in path.iter().enumerate() {
        match node {
            TreeNode::Internal {
                feature_index,
                threshold,
                left,
                right,
            } => {
                let (block, basis_index) =
                    layout
                        .locate(*feature_index)
                        .ok_or(ExplainError::BadFeatureIndex {
                            index: *feature_index,
                            total: layout.n_columns(),
                        })?;
                steps.push(PathStep {
                    depth,
                    feature_index: *feature_index,
                    block,
                    basis_index,
                    threshold: *threshold,
                    direction,
                });
                node = match direction {
                    Direction::Left => left,
                    Direction::Right => right,
                };
            }
            TreeNode::Leaf { .. } => return Err(ExplainError::InvalidPath(depth)),
        }
    }

    let s = layout.basis_size();
    let mut touched: Vec<BlockTag> = Vec::new();
    for step in &steps {
        if !touched.contains(&step.block) {
            touched.push(step.block);
        }
    }
    touched.sort_by_key(|b| BlockTag::ALL.iter().position(|x| x == b));

    let n = train_features.nrows() as f64;
    let mut per_block_coeffs = Vec::with_capacity(touched.len());
    for &block in &touched {
        let range = layout.range_of(block).expect("touched block is in layout");
        let mut coeffs = match fill {
            FillPolicy::Zeros => vec![0.0; s],
            FillPolicy::TrainMean => range
                .clone()
                .map(|col| train_features.column(col).sum() / n)
                .collect(),
        };
        for step in &steps {
            if step.block == block {
                coeffs[step.basis_index] = step.threshold;
            }
        }
        per_block_coeffs.push((block, coeffs));
    }

    let mut per_block_curves = Vec::with_capacity(per_block_coeffs.len());
    for (block, coeffs) in &per_block_coeffs {
        let mut curve = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let (first, vals) = basis.eval_nonzero(t, 0)?;
            curve.push(
                vals.iter()
                    .enumerate()
                    .map(|(off, v)| v * coeffs[first + off])
                    .sum(),
            );
        }
        per_block_curves.push((*block, curve));
    }

    let empirical_match = (train_features.nrows() > 0).then(|| {
        let mut best = (0usize, f64::INFINITY);
        for i in 0..train_features.nrows() {
            let mut d2 = 0.0;
            for (block, coeffs) in &per_block_coeffs {
                let range = layout.range_of(*block).unwrap();
                for (offset, col) in range.enumerate() {
                    let diff = train_features[[i, col]] - coeffs[offset];
                    d2 += diff * diff;
                }
            }
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    });

    Ok(SeparationCurve {
        node_path: steps,
        per_block_coeffs,
        per_block_curves,
        empirical_match,
    })
}

/// Writes a separation curve as `t,block,value` rows.
pub fn save_separation_curve_csv(
    curve: &SeparationCurve,
    t_grid: &[f64],
    path: impl AsRef<Path>,
) -> Result<(), ExplainError> {
    let mut out = String::from("t,block,value\n");
    for (block, values) in &curve.per_block_curves {
        for (&t, &v) in t_grid.iter().zip(values.iter()) {
            let _ = writeln!(out, "{t},{},{v}", block.as_str());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Conditioning sets
// ---------------------------------------------------------------------------

fn pearson(x: &Array2<f64>, a: usize, b: usize) -> f64 {
    let n = x.nrows() as f64;
    let ma = x.column(a).sum() / n;
    let mb = x.column(b).sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..x.nrows() {
        let da = x[[i, a]] - ma;
        let db = x[[i, b]] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        // Constant columns correlate with nothing.
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// All columns whose absolute Pearson correlation with column `j` exceeds
/// `tau` on the given rows.
pub fn correlation_conditioning(
    features: &Array2<f64>,
    j: usize,
    tau: f64,
) -> Result<Vec<usize>, ExplainError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(ExplainError::InvalidTau(tau));
    }
    if j >= features.ncols() {
        return Err(ExplainError::BadFeatureIndex {
            index: j,
            total: features.ncols(),
        });
    }
    Ok((0..features.ncols())
        .filter(|&i| i != j && pearson(features, i, j).abs() > tau)
        .collect())
}

/// Columns holding the same basis function as `j` in every other block.
pub fn same_spline_conditioning(
    layout: &BlockLayout,
    j: usize,
) -> Result<Vec<usize>, ExplainError> {
    let (block, s) = layout.locate(j).ok_or(ExplainError::BadFeatureIndex {
        index: j,
        total: layout.n_columns(),
    })?;
    Ok(layout
        .entries()
        .iter()
        .filter(|(b, _)| *b != block)
        .map(|(_, range)| range.start + s)
        .collect())
}

// ---------------------------------------------------------------------------
// Conditional importance
// ---------------------------------------------------------------------------

/// A model-training recipe the importance loop can re-run on column subsets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TrainRecipe {
    Tree(TreeParams),
    Forest(ForestParams),
    Boost(BoostParams),
    Knn { k: usize },
}

impl TrainRecipe {
    pub fn fit(
        &self,
        x: &Array2<f64>,
        y: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<TrainedModel, ModelError> {
        Ok(match self {
            TrainRecipe::Tree(params) => {
                let params = TreeParams {
                    seed,
                    ..params.clone()
                };
                TrainedModel::Tree {
                    root: train_tree(x, y, n_classes, &params, None)?,
                    params,
                    n_classes,
                    n_features: x.ncols(),
                }
            }
            TrainRecipe::Forest(params) => {
                let params = ForestParams {
                    seed,
                    ..params.clone()
                };
                TrainedModel::Forest(train_forest(x, y, n_classes, &params)?)
            }
            TrainRecipe::Boost(params) => {
                let params = BoostParams {
                    seed,
                    ..params.clone()
                };
                TrainedModel::Boost(train_boost(x, y, n_classes, &params)?)
            }
            TrainRecipe::Knn { k } => {
                TrainedModel::Knn(train_knn(x, y, n_classes, (*k).min(x.nrows()))?)
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningPolicy {
    SameSpline,
    CorrThreshold(f64),
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_index: usize,
    pub policy: ConditioningPolicy,
    pub conditioning: Vec<usize>,
    /// Mean over repetitions of loss(model on C_j) - loss(model on C_j + j).
    pub importance: f64,
    pub repetitions: usize,
    pub loss_name: String,
    pub per_repetition: Vec<f64>,
}

fn select_columns(x: &Array2<f64>, rows: &[usize], columns: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), columns.len()));
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in columns.iter().enumerate() {
            out[[ri, cj]] = x[[i, j]];
        }
    }
    out
}

/// Cross-entropy of the training-label distribution, used as the baseline
/// "model" when the conditioning set is empty.
fn prior_loss(train_labels: &[usize], val_labels: &[usize], n_classes: usize) -> f64 {
    let mut counts = vec![0.0f64; n_classes];
    for &y in train_labels {
        counts[y] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let mut loss = 0.0;
    for &y in val_labels {
        let p = (counts[y] / total).max(1e-12);
        loss -= p.ln();
    }
    loss / val_labels.len() as f64
}

/// Conditional importance of feature `j` given conditioning set `c_j`:
/// the mean, over repetitions with fresh model seeds on one fixed
/// train/validation split, of the held-out cross-entropy of the model
/// trained on C_j alone minus the model trained on C_j plus j. Positive
/// values mean j adds information beyond its conditioning set.
#[allow(clippy::too_many_arguments)]
pub fn conditional_importance(
    recipe: &TrainRecipe,
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    j: usize,
    c_j: &[usize],
    policy: ConditioningPolicy,
    repetitions: usize,
    seed: u64,
) -> Result<ImportanceReport, ExplainError> {
    if j >= x.ncols() {
        return Err(ExplainError::BadFeatureIndex {
            index: j,
            total: x.ncols(),
        });
    }
    if c_j.contains(&j) {
        return Err(ExplainError::FeatureInConditioning(j));
    }
    let mut with_j: Vec<usize> = c_j.to_vec();
    with_j.push(j);
    with_j.sort_unstable();
    if with_j.is_empty() {
        return Err(ExplainError::NoFeatures);
    }
    if repetitions == 0 {
        return Err(ExplainError::NoFeatures);
    }
    let n = x.nrows();
    if n < 6 {
        return Err(ExplainError::TooFewRows { need: 6, got: n });
    }

    // One fixed split: a third held out for the loss, the rest for training.
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = stream_rng(seed, 0);
    order.shuffle(&mut split_rng);
    let n_val = (n / 3).max(1);
    let val_rows = &order[..n_val];
    let train_rows = &order[n_val..];
    let y_train: Vec<usize> = train_rows.iter().map(|&i| y[i]).collect();
    let y_val: Vec<usize> = val_rows.iter().map(|&i| y[i]).collect();

    let without_cols: Vec<usize> = {
        let mut c = c_j.to_vec();
        c.sort_unstable();
        c
    };
    let x_train_without = select_columns(x, train_rows, &without_cols);
    let x_val_without = select_columns(x, val_rows, &without_cols);
    let x_train_with = select_columns(x, train_rows, &with_j);
    let x_val_with = select_columns(x, val_rows, &with_j);

    let per_repetition: Vec<f64> = (0..repetitions)
        .into_par_iter()
        .map(|rep| -> Result<f64, ExplainError> {
            let rep_seed = seed ^ ((rep as u64 + 1) << 32);
            let loss_without = if without_cols.is_empty() {
                prior_loss(&y_train, &y_val, n_classes)
            } else {
                let model = recipe.fit(&x_train_without, &y_train, n_classes, rep_seed)?;
                log_loss(&model, &x_val_without, &y_val)?
            };
            let model = recipe.fit(&x_train_with, &y_train, n_classes, rep_seed)?;
            let loss_with = log_loss(&model, &x_val_with, &y_val)?;
            Ok(loss_without - loss_with)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let importance = per_repetition.iter().sum::<f64>() / repetitions as f64;
    Ok(ImportanceReport {
        feature_index: j,
        policy,
        conditioning: without_cols,
        importance,
        repetitions,
        loss_name: "cross_entropy".to_string(),
        per_repetition,
    })
}

/// Writes importance reports as CSV, one row per feature.
pub fn save_importance_csv(
    reports: &[ImportanceReport],
    path: impl AsRef<Path>,
) -> Result<(), ExplainError> {
    let mut out =
        String::from("feature_index,policy,conditioning_size,importance,repetitions,loss\n");
    for r in reports {
        let policy = match r.policy {
            ConditioningPolicy::SameSpline => "same_spline".to_string(),
            ConditioningPolicy::CorrThreshold(tau) => format!("corr_{tau}"),
            ConditioningPolicy::Explicit => "explicit".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.feature_index,
            policy,
            r.conditioning.len(),
            r.importance,
            r.repetitions,
            r.loss_name
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
