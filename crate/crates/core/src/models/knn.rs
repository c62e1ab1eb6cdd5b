//! K-nearest-neighbour classification on coefficient feature vectors.
//! Euclidean distance by default; distance ties break on the lower stored
//! index, vote ties on the smallest class index.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    Manhattan,
}

impl Distance {
    fn between(&self, a: ndarray::ArrayView1<f64>, b: &[f64]) -> f64 {
        match self {
            // Squared Euclidean; monotone in the true distance, so ranks
            // and ties are unchanged.
            Distance::Euclidean => a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum(),
            Distance::Manhattan => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub n_classes: usize,
    pub distance: Distance,
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }
}

pub fn train_knn(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    k: usize,
) -> Result<KnnModel, ModelError> {
    train_knn_with_distance(x, y, n_classes, k, Distance::Euclidean)
}

pub fn train_knn_with_distance(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    k: usize,
    distance: Distance,
) -> Result<KnnModel, ModelError> {
    if x.nrows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if k == 0 || k > x.nrows() {
        return Err(ModelError::InvalidParam(format!(
            "k {} not in 1..={}",
            k,
            x.nrows()
        )));
    }
    Ok(KnnModel {
        features: x.clone(),
        labels: y.to_vec(),
        k,
        n_classes,
        distance,
    })
}

fn neighbour_votes(model: &KnnModel, x: &[f64]) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = model
        .features
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| (model.distance.between(row, x), i))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; model.n_classes];
    for &(_, i) in dist.iter().take(model.k) {
        votes[model.labels[i]] += 1;
    }
    votes
}

pub fn predict_knn(model: &KnnModel, x: &[f64]) -> usize {
    let votes = neighbour_votes(model, x);
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

pub fn knn_proba(model: &KnnModel, x: &[f64]) -> Vec<f64> {
    let votes = neighbour_votes(model, x);
    votes.iter().map(|&v| v as f64 / model.k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k1_returns_own_label_on_stored_point() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let y = vec![2, 0, 1];
        let m = train_knn(&x, &y, 3, 1).unwrap();
        for i in 0..3 {
            assert_eq!(predict_knn(&m, &x.row(i).to_vec()), y[i]);
        }
    }

    #[test]
    fn k_equals_n_returns_global_majority() {
        let x = array![[0.0], [10.0], [20.0], [30.0], [40.0]];
        let y = vec![1, 1, 1, 0, 0];
        let m = train_knn(&x, &y, 2, 5).unwrap();
        assert_eq!(predict_knn(&m, &[100.0]), 1);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 60;
        let p = 5;
        let mut x = Array2::<f64>::zeros((n, p));
        for v in x.iter_mut() {
            *v = rng.random::<f64>();
        }
        let y: Vec<usize> = (0..n).map(|_| (rng.random::<u32>() % 3) as usize).collect();
        for k in [1usize, 3, 7] {
            let m = train_knn(&x, &y, 3, k).unwrap();
            for _ in 0..30 {
                let q: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
                // Oracle: full sort of (distance, index) pairs, count votes,
                // smallest class wins ties.
                let mut d: Vec<(f64, usize)> = (0..n)
                    .map(|i| {
                        let dist = x
                            .row(i)
                            .iter()
                            .zip(&q)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        (dist, i)
                    })
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = [0usize; 3];
                for &(_, i) in d.iter().take(k) {
                    votes[y[i]] += 1;
                }
                let mut want = 0;
                for (c, &v) in votes.iter().enumerate() {
                    if v > votes[want] {
                        want = c;
                    }
                }
                assert_eq!(predict_knn(&m, &q), want);
            }
        }
    }

    #[test]
    fn distance_ties_take_lower_index() {
        // Two stored points equidistant from the query; k=1 must pick index 0.
        let x = array![[1.0], [-1.0]];
        let y = vec![1, 0];
        let m = train_knn(&x, &y, 2, 1).unwrap();
        assert_eq!(predict_knn(&m, &[0.0]), 1);
    }

    #[test]
    fn vote_ties_take_smallest_class() {
        let x = array![[0.0], [1.0]];
        let y = vec![1, 0];
        let m = train_knn(&x, &y, 2, 2).unwrap();
        assert_eq!(predict_knn(&m, &[0.5]), 0);
    }

    #[test]
    fn invalid_k_rejected() {
        let x = array![[0.0], [1.0]];
        let y = vec![0, 1];
        assert!(matches!(
            train_knn(&x, &y, 2, 0),
            Err(ModelError::InvalidParam(_))
        ));
        assert!(matches!(
            train_knn(&x, &y, 2, 3),
            Err(ModelError::InvalidParam(_))
        ));
    }
}
