//! Classifier families over coefficient feature matrices: single trees,
//! random forests, level- and leaf-wise boosted ensembles, and K-NN, plus
//! a self-describing persistence document.

pub mod boost;
pub mod forest;
pub mod knn;
pub mod tree;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisSystem;
use crate::enrich::BlockLayout;

pub use boost::{predict_boost, predict_boost_proba, train_boost, BoostModel, BoostParams, Growth};
pub use forest::{predict_forest, train_forest, ForestModel, ForestParams};
pub use knn::{predict_knn, train_knn, train_knn_with_distance, Distance, KnnModel};
pub use tree::{predict_tree, train_tree, FlatNode, TreeNode, TreeParams};

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mtry {mtry} must be in 1..={n_features}")]
    InvalidMtry { mtry: usize, n_features: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("malformed model document: {0}")]
    MalformedModel(String),
}

/// Deterministic per-unit RNG: every parallel unit (tree, round, class,
/// repetition) derives its own ChaCha stream from the master seed, so
/// results do not depend on worker-thread count or scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Any trained classifier, with enough metadata to validate inputs and to
/// reconnect predictions to feature blocks.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Tree {
        root: TreeNode,
        params: TreeParams,
        n_classes: usize,
        n_features: usize,
    },
    Forest(ForestModel),
    Boost(BoostModel),
    Knn(KnnModel),
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Tree { n_features, .. } => *n_features,
            TrainedModel::Forest(m) => m.n_features,
            TrainedModel::Boost(m) => m.n_features,
            TrainedModel::Knn(m) => m.n_features(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::Tree { n_classes, .. } => *n_classes,
            TrainedModel::Forest(m) => m.n_classes,
            TrainedModel::Boost(m) => m.n_classes,
            TrainedModel::Knn(m) => m.n_classes,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TrainedModel::Tree { .. } => "tree",
            TrainedModel::Forest(_) => "forest",
            TrainedModel::Boost(m) => match m.params.growth {
                Growth::LevelWise => "boost_level",
                Growth::LeafWise => "boost_leaf",
            },
            TrainedModel::Knn(_) => "knn",
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(match self {
            TrainedModel::Tree { root, .. } => predict_tree(root, x),
            TrainedModel::Forest(m) => predict_forest(m, x),
            TrainedModel::Boost(m) => predict_boost(m, x),
            TrainedModel::Knn(m) => predict_knn(m, x),
        })
    }

    /// Class-probability vector; sums to 1.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(match self {
            TrainedModel::Tree {
                root, n_classes, ..
            } => tree::tree_proba(root, x, *n_classes),
            TrainedModel::Forest(m) => forest::forest_proba(m, x),
            TrainedModel::Boost(m) => predict_boost_proba(m, x),
            TrainedModel::Knn(m) => knn::knn_proba(m, x),
        })
    }
}

/// Fraction of exact label matches on a test matrix.
pub fn evaluate(
    model: &TrainedModel,
    x_test: &Array2<f64>,
    y_test: &[usize],
) -> Result<f64, ModelError> {
    if x_test.nrows() != y_test.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x_test.nrows(),
            got: y_test.len(),
        });
    }
    if y_test.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut correct = 0usize;
    for (i, &label) in y_test.iter().enumerate() {
        let row = x_test.row(i).to_vec();
        if model.predict(&row)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / y_test.len() as f64)
}

/// Mean multiclass cross-entropy of predicted probabilities, with the
/// usual clamp away from log(0).
pub fn log_loss(model: &TrainedModel, x: &Array2<f64>, y: &[usize]) -> Result<f64, ModelError> {
    if y.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = x.row(i).to_vec();
        let p = self::TrainedModel::predict_proba(model, &row)?;
        total -= p[label].max(1e-12).ln();
    }
    Ok(total / y.len() as f64)
}

// ---------------------------------------------------------------------------
// Persistence document
// ---------------------------------------------------------------------------

/// Self-describing JSON form of a trained model: kind, parameters, optional
/// block layout and basis metadata, and trees as flat node lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub n_classes: usize,
    pub n_features: usize,
    pub block_layout: Option<BlockLayout>,
    pub basis: Option<BasisSystem>,
    pub model: ModelPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Tree {
        params: TreeParams,
        nodes: Vec<FlatNode>,
    },
    Forest {
        params: ForestParams,
        oob_accuracy: Option<f64>,
        trees: Vec<Vec<FlatNode>>,
    },
    Boost {
        params: BoostParams,
        base_scores: Vec<f64>,
        /// trees[round][class] is one regression tree.
        trees: Vec<Vec<Vec<FlatNode>>>,
    },
    Knn {
        k: usize,
        #[serde(default)]
        distance: knn::Distance,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
    },
}

impl ModelDocument {
    pub fn from_model(
        model: &TrainedModel,
        block_layout: Option<BlockLayout>,
        basis: Option<BasisSystem>,
    ) -> Self {
        let payload = match model {
            TrainedModel::Tree { root, params, .. } => ModelPayload::Tree {
                params: params.clone(),
                nodes: tree::to_flat(root),
            },
            TrainedModel::Forest(m) => ModelPayload::Forest {
                params: m.params.clone(),
                oob_accuracy: m.oob_accuracy,
                trees: m.trees.iter().map(tree::to_flat).collect(),
            },
            TrainedModel::Boost(m) => ModelPayload::Boost {
                params: m.params.clone(),
                base_scores: m.base_scores.clone(),
                trees: m
                    .trees
                    .iter()
                    .map(|round| round.iter().map(tree::to_flat).collect())
                    .collect(),
            },
            TrainedModel::Knn(m) => ModelPayload::Knn {
                k: m.k,
                distance: m.distance,
                features: m.features.rows().into_iter().map(|r| r.to_vec()).collect(),
                labels: m.labels.clone(),
            },
        };
        Self {
            format_version: 1,
            n_classes: model.n_classes(),
            n_features: model.n_features(),
            block_layout,
            basis,
            model: payload,
        }
    }

    pub fn into_model(self) -> Result<TrainedModel, ModelError> {
        let n_classes = self.n_classes;
        let n_features = self.n_features;
        Ok(match self.model {
            ModelPayload::Tree { params, nodes } => TrainedModel::Tree {
                root: tree::from_flat(&nodes)?,
                params,
                n_classes,
                n_features,
            },
            ModelPayload::Forest {
                params,
                oob_accuracy,
                trees,
            } => {
                let trees = trees
                    .iter()
                    .map(|n| tree::from_flat(n))
                    .collect::<Result<Vec<_>, _>>()?;
                TrainedModel::Forest(ForestModel {
                    trees,
                    params,
                    oob_accuracy,
                    n_classes,
                    n_features,
                })
            }
            ModelPayload::Boost {
                params,
                base_scores,
                trees,
            } => {
                if base_scores.len() != n_classes {
                    return Err(ModelError::MalformedModel(
                        "base score length != n_classes".into(),
                    ));
                }
                let trees = trees
                    .iter()
                    .map(|round| {
                        round
                            .iter()
                            .map(|n| tree::from_flat(n))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                TrainedModel::Boost(BoostModel {
                    params,
                    trees,
                    base_scores,
                    train_log_loss: Vec::new(),
                    n_classes,
                    n_features,
                })
            }
            ModelPayload::Knn {
                k,
                distance,
                features,
                labels,
            } => {
                let n = features.len();
                let p = features.first().map_or(0, |r| r.len());
                if features.iter().any(|r| r.len() != p) {
                    return Err(ModelError::MalformedModel("ragged KNN features".into()));
                }
                let flat: Vec<f64> = features.into_iter().flatten().collect();
                let features = Array2::from_shape_vec((n, p), flat)
                    .map_err(|e| ModelError::MalformedModel(e.to_string()))?;
                TrainedModel::Knn(KnnModel {
                    features,
                    labels,
                    k,
                    n_classes,
                    distance,
                })
            }
        })
    }
}
