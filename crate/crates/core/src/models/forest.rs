//! Random forest: bagged Gini trees with a fresh random feature subset at
//! every split, majority-vote prediction, and an out-of-bag accuracy
//! estimate.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{predict_tree, tree_proba, TreeNode, TreeParams};
use super::{stream_rng, ModelError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features drawn per split; defaults to floor(sqrt(P)).
    pub mtry: Option<usize>,
    /// Draw the feature subset once per tree instead of at every split.
    pub per_tree_features: bool,
    /// Disable bootstrap resampling (every tree sees all rows); meant for
    /// tests that compare a degenerate forest against a single tree.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_samples_split: 2,
            mtry: None,
            per_tree_features: false,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub params: ForestParams,
    pub oob_accuracy: Option<f64>,
    pub n_classes: usize,
    pub n_features: usize,
}

pub fn train_forest(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
) -> Result<ForestModel, ModelError> {
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
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParam("n_trees must be >= 1".into()));
    }
    let mtry = params
        .mtry
        .unwrap_or_else(|| (p as f64).sqrt() as usize)
        .max(1);
    if mtry > p {
        return Err(ModelError::InvalidMtry {
            mtry,
            n_features: p,
        });
    }

    let results: Vec<(TreeNode, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(params.seed, b as u64 + 1);
            // Bootstrap as multiplicity weights: N draws with replacement.
            let weights: Vec<f64> = if params.bootstrap {
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1.0;
                }
                w
            } else {
                vec![1.0; n]
            };
            let feature_subset = if params.per_tree_features && mtry < p {
                let mut s: Vec<usize> = rand::seq::index::sample(&mut rng, p, mtry)
                    .into_iter()
                    .collect();
                s.sort_unstable();
                Some(s)
            } else {
                None
            };
            let tree_params = TreeParams {
                max_depth: params.max_depth,
                min_samples_split: params.min_samples_split,
                mtry: if params.per_tree_features {
                    None
                } else {
                    Some(mtry)
                },
                feature_subset,
                // Per-split feature sampling continues this tree's stream.
                seed: params.seed,
            };
            // train_tree would reseed; build with the already-advanced rng
            // by delegating through a private entry point.
            let tree = super::tree::train_tree_with_rng(
                x,
                y,
                n_classes,
                &tree_params,
                Some(&weights),
                &mut rng,
            )
            .expect("validated inputs");
            (tree, weights)
        })
        .collect();

    let trees: Vec<TreeNode> = results.iter().map(|(t, _)| t.clone()).collect();

    // Out-of-bag vote: rows a tree never saw are scored by that tree.
    let oob_accuracy = if params.bootstrap {
        let mut votes = vec![vec![0usize; n_classes]; n];
        for (tree, weights) in &results {
            for i in 0..n {
                if weights[i] == 0.0 {
                    let row = x.row(i).to_vec();
                    votes[i][predict_tree(tree, &row)] += 1;
                }
            }
        }
        let mut correct = 0usize;
        let mut counted = 0usize;
        for i in 0..n {
            let total: usize = votes[i].iter().sum();
            if total == 0 {
                continue;
            }
            counted += 1;
            let pred = argmax_votes(&votes[i]);
            if pred == y[i] {
                correct += 1;
            }
        }
        if counted > 0 {
            Some(correct as f64 / counted as f64)
        } else {
            None
        }
    } else {
        None
    };

    Ok(ForestModel {
        trees,
        params: params.clone(),
        oob_accuracy,
        n_classes,
        n_features: p,
    })
}

fn argmax_votes(votes: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

/// Plurality vote across trees; ties go to the smallest class index.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> usize {
    let mut votes = vec![0usize; model.n_classes];
    for tree in &model.trees {
        votes[predict_tree(tree, x)] += 1;
    }
    argmax_votes(&votes)
}

/// Mean of per-tree leaf class proportions.
pub fn forest_proba(model: &ForestModel, x: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; model.n_classes];
    for tree in &model.trees {
        for (c, p) in tree_proba(tree, x, model.n_classes).into_iter().enumerate() {
            acc[c] += p;
        }
    }
    let b = model.trees.len() as f64;
    acc.iter_mut().for_each(|v| *v /= b);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::train_tree;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, n: usize, p: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::<f64>::zeros((n, p));
        for v in x.iter_mut() {
            *v = rng.random::<f64>();
        }
        let y: Vec<usize> = (0..n)
            .map(|i| usize::from(x[[i, 0]] + 0.3 * x[[i, p - 1]] > 0.6))
            .collect();
        (x, y)
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let (x, y) = random_data(1, 30, 4);
        let params = ForestParams {
            n_trees: 1,
            mtry: Some(4),
            bootstrap: false,
            max_depth: 6,
            ..ForestParams::default()
        };
        let forest = train_forest(&x, &y, 2, &params).unwrap();
        let tree = train_tree(
            &x,
            &y,
            2,
            &TreeParams {
                max_depth: 6,
                ..TreeParams::default()
            },
            None,
        )
        .unwrap();
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn pure_labels_vote_unanimously() {
        let (x, _) = random_data(2, 20, 3);
        let y = vec![1usize; 20];
        let forest = train_forest(&x, &y, 2, &ForestParams::default()).unwrap();
        let q = vec![0.5, 0.5, 0.5];
        for tree in &forest.trees {
            assert_eq!(predict_tree(tree, &q), 1);
        }
        assert_eq!(predict_forest(&forest, &q), 1);
    }

    #[test]
    fn same_seed_reproduces_predictions() {
        let (x, y) = random_data(3, 40, 5);
        let (xt, _) = random_data(4, 15, 5);
        let params = ForestParams {
            n_trees: 25,
            seed: 99,
            ..ForestParams::default()
        };
        let f1 = train_forest(&x, &y, 2, &params).unwrap();
        let f2 = train_forest(&x, &y, 2, &params).unwrap();
        for i in 0..xt.nrows() {
            let row = xt.row(i).to_vec();
            assert_eq!(predict_forest(&f1, &row), predict_forest(&f2, &row));
        }
    }

    #[test]
    fn thread_count_does_not_change_model() {
        let (x, y) = random_data(5, 50, 6);
        let params = ForestParams {
            n_trees: 16,
            seed: 7,
            ..ForestParams::default()
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let f1 = pool1.install(|| train_forest(&x, &y, 2, &params).unwrap());
        let f4 = pool4.install(|| train_forest(&x, &y, 2, &params).unwrap());
        assert_eq!(f1.trees, f4.trees);
        assert_eq!(f1.oob_accuracy, f4.oob_accuracy);
    }

    #[test]
    fn vote_equals_manual_tally() {
        let (x, y) = random_data(6, 35, 4);
        let forest = train_forest(
            &x,
            &y,
            2,
            &ForestParams {
                n_trees: 9,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let q = [0.2, 0.8, 0.5, 0.1];
        let mut tally = [0usize; 2];
        for tree in &forest.trees {
            tally[predict_tree(tree, &q)] += 1;
        }
        let expected = if tally[0] >= tally[1] { 0 } else { 1 };
        assert_eq!(predict_forest(&forest, &q), expected);
    }

    #[test]
    fn constructed_two_vs_one_vote() {
        let leaf = |c: usize| TreeNode::Leaf {
            class_counts: vec![1.0; 2],
            predicted_class: c,
            leaf_weight: 0.0,
        };
        let model = ForestModel {
            trees: vec![leaf(1), leaf(1), leaf(0)],
            params: ForestParams::default(),
            oob_accuracy: None,
            n_classes: 2,
            n_features: 1,
        };
        assert_eq!(predict_forest(&model, &[0.0]), 1);
    }

    #[test]
    fn invalid_mtry_rejected() {
        let (x, y) = random_data(8, 10, 3);
        let params = ForestParams {
            mtry: Some(4),
            ..ForestParams::default()
        };
        assert!(matches!(
            train_forest(&x, &y, 2, &params),
            Err(ModelError::InvalidMtry { .. })
        ));
    }

    #[test]
    fn oob_accuracy_reasonable_on_separable_data() {
        let (x, y) = random_data(9, 120, 4);
        let forest = train_forest(&x, &y, 2, &ForestParams::default()).unwrap();
        let oob = forest.oob_accuracy.expect("bootstrap leaves OOB rows");
        assert!(oob > 0.7, "oob accuracy {oob}");
    }
}
