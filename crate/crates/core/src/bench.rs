//! Benchmark sweeps: paired original-vs-enriched runs of every classifier
//! family with randomized hyperparameters, plus accuracy-distribution
//! summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;
use thiserror::Error;

use crate::enrich::{build_enriched, CurveSet, EnrichConfig, EnrichError, EnrichedMatrix};
use crate::models::{
    evaluate, stream_rng, train_boost, train_forest, train_knn, train_tree, BoostParams,
    ForestParams, Growth, ModelError, TrainedModel, TreeParams,
};
use rand::Rng;

#[derive(Error, Debug)]
pub enum BenchError {
    #[error("train and test sets use different time grids")]
    GridMismatch,
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tree,
    Forest,
    BoostLevel,
    BoostLeaf,
    Knn,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Tree,
        Method::Forest,
        Method::BoostLevel,
        Method::BoostLeaf,
        Method::Knn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Tree => "tree",
            Method::Forest => "forest",
            Method::BoostLevel => "boost_level",
            Method::BoostLeaf => "boost_leaf",
            Method::Knn => "knn",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "tree" => Some(Method::Tree),
            "forest" => Some(Method::Forest),
            "boost_level" | "xgb" => Some(Method::BoostLevel),
            "boost_leaf" | "lgbm" => Some(Method::BoostLeaf),
            "knn" => Some(Method::Knn),
            _ => None,
        }
    }

    fn index(&self) -> u64 {
        Method::ALL.iter().position(|m| m == self).unwrap() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Enriched,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Enriched => "enriched",
        }
    }
}

/// Hyperparameter sampling ranges; bounds are inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperRanges {
    pub depth: (usize, usize),
    pub min_split: (usize, usize),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub subsample: (f64, f64),
    pub colsample: (f64, f64),
    /// K-NN neighbour count is drawn from the odd values in 1..=k_max.
    pub k_max: usize,
    pub n_trees: usize,
    pub rounds: usize,
    pub max_leaves: (usize, usize),
}

impl Default for HyperRanges {
    fn default() -> Self {
        Self {
            depth: (2, 12),
            min_split: (2, 20),
            learning_rate: (0.03, 0.3),
            subsample: (0.6, 1.0),
            colsample: (0.6, 1.0),
            k_max: 15,
            n_trees: 100,
            rounds: 100,
            max_leaves: (4, 64),
        }
    }
}

impl HyperRanges {
    fn validate(&self) -> Result<(), BenchError> {
        let ok_u = |(lo, hi): (usize, usize)| lo <= hi && lo > 0;
        let ok_f = |(lo, hi): (f64, f64)| lo <= hi && lo > 0.0;
        if !ok_u(self.depth)
            || !ok_u(self.min_split)
            || !ok_u(self.max_leaves)
            || !ok_f(self.learning_rate)
            || !ok_f(self.subsample)
            || !ok_f(self.colsample)
            || self.k_max == 0
            || self.n_trees == 0
            || self.rounds == 0
        {
            return Err(BenchError::InvalidConfig(
                "ranges must be non-empty with positive lower bounds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub variants: Vec<Variant>,
    pub repetitions: u64,
    pub master_seed: u64,
    pub ranges: HyperRanges,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            variants: vec![Variant::Original, Variant::Enriched],
            repetitions: 30,
            master_seed: 0,
            ranges: HyperRanges::default(),
        }
    }
}

/// One benchmark run's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub enriched: bool,
    pub run_id: u64,
    pub seed: u64,
    pub hyperparams_json: String,
    pub accuracy: f64,
    pub train_seconds: f64,
}

/// Hyperparameters drawn for one (method, run_id); shared verbatim between
/// the original and enriched variants of the same run.
#[derive(Debug, Clone)]
enum Sampled {
    Tree {
        max_depth: usize,
        min_split: usize,
    },
    Forest {
        max_depth: usize,
        min_split: usize,
        n_trees: usize,
    },
    Boost {
        max_depth: usize,
        max_leaves: usize,
        learning_rate: f64,
        subsample: f64,
        colsample: f64,
        rounds: usize,
    },
    Knn {
        k: usize,
    },
}

impl Sampled {
    fn to_json(&self) -> String {
        match self {
            Sampled::Tree {
                max_depth,
                min_split,
            } => json!({"max_depth": max_depth, "min_samples_split": min_split}).to_string(),
            Sampled::Forest {
                max_depth,
                min_split,
                n_trees,
            } => json!({
                "max_depth": max_depth,
                "min_samples_split": min_split,
                "n_trees": n_trees
            })
            .to_string(),
            Sampled::Boost {
                max_depth,
                max_leaves,
                learning_rate,
                subsample,
                colsample,
                rounds,
            } => json!({
                "colsample": colsample,
                "learning_rate": learning_rate,
                "max_depth": max_depth,
                "max_leaves": max_leaves,
                "rounds": rounds,
                "subsample": subsample
            })
            .to_string(),
            Sampled::Knn { k } => json!({"k": k}).to_string(),
        }
    }
}

fn sample_uniform_usize(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn sample_uniform_f64(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sample_log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (rng.random_range(lo.ln()..hi.ln())).exp()
    } else {
        lo
    }
}

fn sample_params(method: Method, ranges: &HyperRanges, rng: &mut impl Rng) -> Sampled {
    match method {
        Method::Tree => Sampled::Tree {
            max_depth: sample_uniform_usize(rng, ranges.depth),
            min_split: sample_uniform_usize(rng, ranges.min_split),
        },
        Method::Forest => Sampled::Forest {
            max_depth: sample_uniform_usize(rng, ranges.depth),
            min_split: sample_uniform_usize(rng, ranges.min_split),
            n_trees: ranges.n_trees,
        },
        Method::BoostLevel | Method::BoostLeaf => Sampled::Boost {
            max_depth: sample_uniform_usize(rng, ranges.depth),
            max_leaves: sample_uniform_usize(rng, ranges.max_leaves),
            learning_rate: sample_log_uniform(rng, ranges.learning_rate),
            subsample: sample_uniform_f64(rng, ranges.subsample),
            colsample: sample_uniform_f64(rng, ranges.colsample),
            rounds: ranges.rounds,
        },
        Method::Knn => {
            let n_odd = ranges.k_max.div_ceil(2);
            let pick = rng.random_range(0..n_odd);
            Sampled::Knn { k: 2 * pick + 1 }
        }
    }
}

fn train_with(
    method: Method,
    sampled: &Sampled,
    train: &EnrichedMatrix,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let x = &train.features;
    let y = &train.labels;
    let c = train.n_classes;
    Ok(match (method, sampled) {
        (
            Method::Tree,
            Sampled::Tree {
                max_depth,
                min_split,
            },
        ) => {
            let params = TreeParams {
                max_depth: *max_depth,
                min_samples_split: *min_split,
                seed,
                ..TreeParams::default()
            };
            TrainedModel::Tree {
                root: train_tree(x, y, c, &params, None)?,
                params,
                n_classes: c,
                n_features: x.ncols(),
            }
        }
        (
            Method::Forest,
            Sampled::Forest {
                max_depth,
                min_split,
                n_trees,
            },
        ) => {
            let params = ForestParams {
                n_trees: *n_trees,
                max_depth: *max_depth,
                min_samples_split: *min_split,
                seed,
                ..ForestParams::default()
            };
            TrainedModel::Forest(train_forest(x, y, c, &params)?)
        }
        (
            method @ (Method::BoostLevel | Method::BoostLeaf),
            Sampled::Boost {
                max_depth,
                max_leaves,
                learning_rate,
                subsample,
                colsample,
                rounds,
            },
        ) => {
            let params = BoostParams {
                rounds: *rounds,
                learning_rate: *learning_rate,
                max_depth: *max_depth,
                max_leaves: *max_leaves,
                subsample: *subsample,
                colsample: *colsample,
                growth: if method == Method::BoostLevel {
                    Growth::LevelWise
                } else {
                    Growth::LeafWise
                },
                seed,
                ..BoostParams::default()
            };
            TrainedModel::Boost(train_boost(x, y, c, &params)?)
        }
        (Method::Knn, Sampled::Knn { k }) => {
            TrainedModel::Knn(train_knn(x, y, c, (*k).min(x.nrows()))?)
        }
        _ => unreachable!("sampled params always match their method"),
    })
}

fn dataset_name(train: &CurveSet) -> String {
    train
        .name
        .strip_suffix("-train")
        .unwrap_or(&train.name)
        .to_string()
}

// Stream-id layout: hyperparameter streams exclude the variant so that the
// original/enriched pair of a run draws identical samples.
fn hp_stream(method: Method, run_id: u64) -> u64 {
    (1 << 50) | (method.index() << 40) | run_id
}

fn model_stream(method: Method, variant: Variant, run_id: u64) -> u64 {
    let v = match variant {
        Variant::Original => 0u64,
        Variant::Enriched => 1u64,
    };
    (2 << 50) | (method.index() << 40) | (v << 36) | run_id
}

/// Runs the full sweep: for each method and variant, `repetitions` runs
/// with hyperparameters drawn from the configured ranges. The basis is
/// built once from the training grid and reused for the test set; the
/// original variant uses the ORIG block only, the enriched variant all six
/// blocks. Records come back sorted by (method, variant, run_id).
pub fn run_sweep(
    config: &SweepConfig,
    train: &CurveSet,
    test: &CurveSet,
) -> Result<Vec<RunRecord>, BenchError> {
    config.ranges.validate()?;
    if config.repetitions < 1 {
        return Err(BenchError::InvalidConfig("repetitions must be >= 1".into()));
    }
    if config.methods.is_empty() || config.variants.is_empty() {
        return Err(BenchError::InvalidConfig(
            "methods and variants must be non-empty".into(),
        ));
    }
    if train.time_grid != test.time_grid {
        return Err(BenchError::GridMismatch);
    }

    let dataset = dataset_name(train);
    let mut variant_data: Vec<(Variant, EnrichedMatrix, EnrichedMatrix)> = Vec::new();
    for &variant in &config.variants {
        let enrich_config = match variant {
            Variant::Original => EnrichConfig::original_only(),
            Variant::Enriched => EnrichConfig::default(),
        };
        let (train_m, enricher) = build_enriched(train, &enrich_config)?;
        let test_m = enricher.apply(test)?;
        variant_data.push((variant, train_m, test_m));
    }

    struct Job<'a> {
        method: Method,
        variant: Variant,
        run_id: u64,
        train_m: &'a EnrichedMatrix,
        test_m: &'a EnrichedMatrix,
    }
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for (variant, train_m, test_m) in &variant_data {
            for run_id in 0..config.repetitions {
                jobs.push(Job {
                    method,
                    variant: *variant,
                    run_id,
                    train_m,
                    test_m,
                });
            }
        }
    }

    let mut records = jobs
        .par_iter()
        .map(|job| {
            let mut hp_rng = stream_rng(config.master_seed, hp_stream(job.method, job.run_id));
            let sampled = sample_params(job.method, &config.ranges, &mut hp_rng);
            let seed_rng_stream = model_stream(job.method, job.variant, job.run_id);
            let seed = config.master_seed ^ seed_rng_stream;
            let started = Instant::now();
            let model = train_with(job.method, &sampled, job.train_m, seed)?;
            let accuracy = evaluate(&model, &job.test_m.features, &job.test_m.labels)?;
            let train_seconds = started.elapsed().as_secs_f64();
            log::info!(
                "{} {} {} run {} -> accuracy {:.4} in {:.3}s",
                dataset,
                job.method.as_str(),
                job.variant.as_str(),
                job.run_id,
                accuracy,
                train_seconds
            );
            Ok(RunRecord {
                dataset: dataset.clone(),
                method: job.method.as_str().to_string(),
                enriched: job.variant == Variant::Enriched,
                run_id: job.run_id,
                seed,
                hyperparams_json: sampled.to_json(),
                accuracy,
                train_seconds,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    records
        .sort_by(|a, b| (&a.method, a.enriched, a.run_id).cmp(&(&b.method, b.enriched, b.run_id)));
    Ok(records)
}

/// Five-number summary of one method-variant group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub method: String,
    pub enriched: bool,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Groups records by (method, enriched) and computes accuracy quartiles.
pub fn summarize(records: &[RunRecord]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, bool)> = records
        .iter()
        .map(|r| (r.method.clone(), r.enriched))
        .collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::new();
    for (method, enriched) in keys {
        let mut acc: Vec<f64> = records
            .iter()
            .filter(|r| r.method == method && r.enriched == enriched)
            .map(|r| r.accuracy)
            .collect();
        if acc.is_empty() {
            log::warn!("group {method}/{enriched} has no records; omitted");
            continue;
        }
        acc.sort_by(f64::total_cmp);
        out.push(GroupSummary {
            method,
            enriched,
            n: acc.len(),
            min: acc[0],
            q1: quantile_sorted(&acc, 0.25),
            median: quantile_sorted(&acc, 0.5),
            q3: quantile_sorted(&acc, 0.75),
            max: acc[acc.len() - 1],
        });
    }
    out
}

/// Median accuracy of one (method, variant) group, if present.
pub fn median_accuracy(records: &[RunRecord], method: Method, enriched: bool) -> Option<f64> {
    summarize(records)
        .into_iter()
        .find(|g| g.method == method.as_str() && g.enriched == enriched)
        .map(|g| g.median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate_scenario, ScenarioSpec};

    fn tiny_config(methods: Vec<Method>, reps: u64) -> SweepConfig {
        SweepConfig {
            methods,
            repetitions: reps,
            master_seed: 5,
            ranges: HyperRanges {
                n_trees: 10,
                rounds: 5,
                ..HyperRanges::default()
            },
            ..SweepConfig::default()
        }
    }

    fn scenario_data(id: u8) -> (CurveSet, CurveSet) {
        let mut spec = ScenarioSpec::standard(id, 99).unwrap();
        spec.curves_per_class = 15;
        let data = generate_scenario(&spec).unwrap();
        (data.train, data.test)
    }

    #[test]
    fn degenerate_ranges_are_deterministic() {
        let (train, test) = scenario_data(1);
        let mut config = tiny_config(vec![Method::Tree], 1);
        config.ranges.depth = (6, 6);
        config.ranges.min_split = (4, 4);
        let r1 = run_sweep(&config, &train, &test).unwrap();
        let r2 = run_sweep(&config, &train, &test).unwrap();
        assert_eq!(r1.len(), 2); // two variants
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.hyperparams_json, b.hyperparams_json);
            assert_eq!(a.accuracy, b.accuracy);
            assert_eq!(a.seed, b.seed);
        }
        assert!(r1[0].hyperparams_json.contains("\"max_depth\":6"));
    }

    #[test]
    fn record_count_is_methods_times_variants_times_reps() {
        let (train, test) = scenario_data(1);
        let config = tiny_config(vec![Method::Tree, Method::Knn], 3);
        let records = run_sweep(&config, &train, &test).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3);
        assert!(records.iter().all(|r| r.accuracy.is_finite()));
    }

    #[test]
    fn paired_variants_draw_identical_hyperparameters() {
        let (train, test) = scenario_data(1);
        let config = tiny_config(vec![Method::Forest, Method::Knn], 4);
        let records = run_sweep(&config, &train, &test).unwrap();
        for method in ["forest", "knn"] {
            for run_id in 0..4u64 {
                let original = records
                    .iter()
                    .find(|r| r.method == method && !r.enriched && r.run_id == run_id)
                    .unwrap();
                let enriched = records
                    .iter()
                    .find(|r| r.method == method && r.enriched && r.run_id == run_id)
                    .unwrap();
                assert_eq!(original.hyperparams_json, enriched.hyperparams_json);
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let (train, test) = scenario_data(1);
        let config = tiny_config(vec![Method::Tree, Method::Forest], 2);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap();
        let r1 = pool1.install(|| run_sweep(&config, &train, &test).unwrap());
        let r8 = pool8.install(|| run_sweep(&config, &train, &test).unwrap());
        assert_eq!(r1.len(), r8.len());
        for (a, b) in r1.iter().zip(&r8) {
            assert_eq!(a.method, b.method);
            assert_eq!(a.enriched, b.enriched);
            assert_eq!(a.run_id, b.run_id);
            assert_eq!(a.hyperparams_json, b.hyperparams_json);
            assert_eq!(a.accuracy, b.accuracy);
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let (train, _) = scenario_data(1);
        let mut spec = ScenarioSpec::standard(1, 7).unwrap();
        spec.time_points = 40;
        spec.curves_per_class = 5;
        let other = generate_scenario(&spec).unwrap();
        let config = tiny_config(vec![Method::Tree], 1);
        assert!(matches!(
            run_sweep(&config, &train, &other.test),
            Err(BenchError::GridMismatch)
        ));
    }

    #[test]
    fn summarize_single_record_collapses() {
        let r = RunRecord {
            dataset: "d".into(),
            method: "tree".into(),
            enriched: false,
            run_id: 0,
            seed: 0,
            hyperparams_json: "{}".into(),
            accuracy: 0.8,
            train_seconds: 0.0,
        };
        let s = summarize(&[r]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].min, 0.8);
        assert_eq!(s[0].q1, 0.8);
        assert_eq!(s[0].median, 0.8);
        assert_eq!(s[0].q3, 0.8);
        assert_eq!(s[0].max, 0.8);
        assert_eq!(s[0].n, 1);
    }

    #[test]
    fn summarize_matches_hand_computed_quartiles() {
        let accs = [0.5, 0.9, 0.7, 0.6, 0.8];
        let records: Vec<RunRecord> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| RunRecord {
                dataset: "d".into(),
                method: "knn".into(),
                enriched: true,
                run_id: i as u64,
                seed: 0,
                hyperparams_json: "{}".into(),
                accuracy: a,
                train_seconds: 0.0,
            })
            .collect();
        let s = summarize(&records);
        // sorted: .5 .6 .7 .8 .9 -> min .5, q1 .6, median .7, q3 .8, max .9
        assert_eq!(s[0].min, 0.5);
        assert_eq!(s[0].q1, 0.6);
        assert_eq!(s[0].median, 0.7);
        assert_eq!(s[0].q3, 0.8);
        assert_eq!(s[0].max, 0.9);
    }

    #[test]
    fn summarize_empty_is_empty() {
        assert!(summarize(&[]).is_empty());
    }
}
