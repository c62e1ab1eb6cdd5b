//! Command-line front end: simulate scenario data, enrich curve sets,
//! train/evaluate classifiers, run benchmark sweeps, and export
//! explanation artifacts.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use eftc_core::basis::{linspace, make_basis};
use eftc_core::bench::{run_sweep, summarize, Method, SweepConfig};
use eftc_core::dataio::{
    load_matrix, load_model_document, load_ucr_pair, save_dataset_tsv, save_matrix, save_model,
    save_runs, validate_manifest, DatasetManifest,
};
use eftc_core::enrich::{build_enriched, BlockTag, CurveSet, EnrichConfig};
use eftc_core::explain::{
    conditional_importance, correlation_conditioning, same_spline_conditioning,
    save_importance_csv, save_separation_curve_csv, separation_curve, ConditioningPolicy,
    Direction, FillPolicy, TrainRecipe,
};
use eftc_core::models::{
    evaluate, train_boost, train_forest, train_knn, train_tree, BoostParams, ForestParams, Growth,
    ModelPayload, TrainedModel, TreeParams,
};
use eftc_core::simgen::{generate_scenario, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "eftc",
    about = "Enriched functional tree-based classifiers",
    version
)]
struct Cli {
    /// Bound the worker-thread count (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one simulation scenario as train/test TSV files.
    Simulate(SimulateArgs),
    /// Convert a curve-set TSV into an enriched coefficient matrix CSV.
    Enrich(EnrichArgs),
    /// Train a classifier on a matrix CSV and save it as JSON.
    Train(TrainArgs),
    /// Print the accuracy of a saved model on a matrix CSV.
    Evaluate(EvaluateArgs),
    /// Run the randomized-hyperparameter sweep and write run records.
    Bench(BenchArgs),
    /// Explanation tools.
    #[command(subcommand)]
    Explain(ExplainCommand),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnrichArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated blocks among ORIG,D1,D2,CURV,RADIUS,ELAST.
    #[arg(long, default_value = "ORIG,D1,D2,CURV,RADIUS,ELAST")]
    blocks: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    kappa_min: f64,
    #[arg(long, default_value_t = 1e-6)]
    x_min: f64,
    #[arg(long, default_value_t = false)]
    standardize: bool,
    /// Field delimiter of the input file; auto-detected when omitted.
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// One of tree, forest, boost_level, boost_leaf, knn.
    #[arg(long)]
    method: String,
    /// Method parameters as a JSON object; missing fields take defaults.
    #[arg(long, default_value = "{}")]
    params: String,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep configuration JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Either `scenario:<1..6>` or a directory holding train/test files.
    #[arg(long)]
    data: String,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `zero` keeps runs.csv byte-reproducible; `wall` records wall time.
    #[arg(long, default_value = "zero")]
    timing: String,
}

#[derive(Subcommand)]
enum ExplainCommand {
    /// Reconstruct the separation curve of a tree path.
    SepCurve(SepCurveArgs),
    /// Conditional feature importance by retraining.
    Importance(ImportanceArgs),
}

#[derive(Args)]
struct SepCurveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    /// Root-to-node directions, e.g. `LRL`.
    #[arg(long)]
    path: String,
    #[arg(long)]
    out: PathBuf,
    /// Tree index for forest models.
    #[arg(long, default_value_t = 0)]
    tree_index: usize,
    /// Fill for untouched coefficients: `mean` or `zeros`.
    #[arg(long, default_value = "mean")]
    fill: String,
    /// Number of evaluation points over the domain.
    #[arg(long)]
    eval_points: Option<usize>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Feature column index (0-based).
    #[arg(long)]
    feature: usize,
    /// `same-spline` or `corr:<tau>`.
    #[arg(long, default_value = "same-spline")]
    policy: String,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training recipe: tree, forest, boost_level, boost_leaf, knn.
    #[arg(long, default_value = "forest")]
    method: String,
    /// Recipe parameters as JSON.
    #[arg(long, default_value = "{}")]
    params: String,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(msg: impl ToString) -> Self {
        CliError::Validation(msg.to_string())
    }

    fn runtime(msg: impl ToString) -> Self {
        CliError::Runtime(msg.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        // Results are thread-count independent; this only bounds parallelism.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Enrich(args) => cmd_enrich(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Explain(ExplainCommand::SepCurve(args)) => cmd_sep_curve(args),
        Command::Explain(ExplainCommand::Importance(args)) => cmd_importance(args),
    }
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let spec = ScenarioSpec::standard(args.scenario, args.seed).map_err(CliError::validation)?;
    let data = generate_scenario(&spec).map_err(CliError::runtime)?;
    std::fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    save_dataset_tsv(&data.train, args.out.join("train.tsv")).map_err(CliError::runtime)?;
    save_dataset_tsv(&data.test, args.out.join("test.tsv")).map_err(CliError::runtime)?;
    println!(
        "scenario {}: wrote {} train and {} test curves ({} classes, {} points) to {}",
        args.scenario,
        data.train.n_curves(),
        data.test.n_curves(),
        data.train.n_classes,
        data.train.n_points(),
        args.out.display()
    );
    Ok(())
}

fn parse_blocks(s: &str) -> CliResult<Vec<BlockTag>> {
    let mut blocks = Vec::new();
    for token in s.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let tag = BlockTag::parse(token)
            .ok_or_else(|| CliError::validation(format!("unknown block {token:?}")))?;
        if !blocks.contains(&tag) {
            blocks.push(tag);
        }
    }
    if blocks.is_empty() {
        return Err(CliError::validation("block list is empty"));
    }
    Ok(blocks)
}

fn cmd_enrich(args: EnrichArgs) -> CliResult {
    let blocks = parse_blocks(&args.blocks)?;
    if args.kappa_min <= 0.0 || args.x_min <= 0.0 {
        return Err(CliError::validation("floors must be positive"));
    }
    let set =
        eftc_core::dataio::load_ucr(&args.input, args.delimiter).map_err(CliError::runtime)?;
    let config = EnrichConfig {
        blocks,
        kappa_min: args.kappa_min,
        x_min: args.x_min,
        standardize: args.standardize,
        ..EnrichConfig::default()
    };
    let (matrix, _) = build_enriched(&set, &config).map_err(CliError::runtime)?;
    save_matrix(&matrix, &args.out).map_err(CliError::runtime)?;
    println!(
        "enriched {} curves into a {}x{} matrix ({} blocks) at {}",
        set.n_curves(),
        matrix.n_rows(),
        matrix.n_features(),
        matrix.layout.entries().len(),
        args.out.display()
    );
    Ok(())
}

fn parse_json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> CliResult<T> {
    serde_json::from_str(s).map_err(|e| CliError::validation(format!("bad {what} JSON: {e}")))
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let method = Method::parse(&args.method)
        .ok_or_else(|| CliError::validation(format!("unknown method {:?}", args.method)))?;
    let matrix = load_matrix(&args.matrix).map_err(CliError::runtime)?;
    let x = &matrix.features;
    let y = &matrix.labels;
    let c = matrix.n_classes;
    let model = match method {
        Method::Tree => {
            let mut params: TreeParams = parse_json(&args.params, "tree params")?;
            params.seed = args.seed;
            let root = train_tree(x, y, c, &params, None).map_err(CliError::runtime)?;
            TrainedModel::Tree {
                root,
                params,
                n_classes: c,
                n_features: x.ncols(),
            }
        }
        Method::Forest => {
            let mut params: ForestParams = parse_json(&args.params, "forest params")?;
            params.seed = args.seed;
            TrainedModel::Forest(train_forest(x, y, c, &params).map_err(CliError::runtime)?)
        }
        Method::BoostLevel | Method::BoostLeaf => {
            let mut params: BoostParams = parse_json(&args.params, "boost params")?;
            params.growth = if method == Method::BoostLevel {
                Growth::LevelWise
            } else {
                Growth::LeafWise
            };
            params.seed = args.seed;
            TrainedModel::Boost(train_boost(x, y, c, &params).map_err(CliError::runtime)?)
        }
        Method::Knn => {
            #[derive(serde::Deserialize)]
            struct KnnArgs {
                #[serde(default = "default_k")]
                k: usize,
            }
            fn default_k() -> usize {
                5
            }
            let knn_args: KnnArgs = parse_json(&args.params, "knn params")?;
            TrainedModel::Knn(train_knn(x, y, c, knn_args.k).map_err(CliError::runtime)?)
        }
    };
    let train_accuracy = evaluate(&model, x, y).map_err(CliError::runtime)?;
    save_model(
        &model,
        Some(matrix.layout.clone()),
        matrix.basis.clone(),
        &args.model_out,
    )
    .map_err(CliError::runtime)?;
    println!(
        "trained {} on {}x{} matrix (train accuracy {:.6}); saved to {}",
        method.as_str(),
        x.nrows(),
        x.ncols(),
        train_accuracy,
        args.model_out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let model = eftc_core::dataio::load_model(&args.model).map_err(CliError::runtime)?;
    let matrix = load_matrix(&args.matrix).map_err(CliError::runtime)?;
    let acc = evaluate(&model, &matrix.features, &matrix.labels).map_err(CliError::runtime)?;
    println!("{acc:.6}");
    Ok(())
}

/// Loads `--data`: either `scenario:<id>` (generated with `seed`) or a
/// directory holding train.tsv/test.tsv or a *_TRAIN/*_TEST pair.
fn load_bench_data(data: &str, seed: u64) -> CliResult<(CurveSet, CurveSet)> {
    if let Some(id) = data.strip_prefix("scenario:") {
        let id: u8 = id
            .parse()
            .map_err(|_| CliError::validation(format!("bad scenario id {id:?}")))?;
        let spec = ScenarioSpec::standard(id, seed).map_err(CliError::validation)?;
        let generated = generate_scenario(&spec).map_err(CliError::runtime)?;
        return Ok((generated.train, generated.test));
    }
    let dir = Path::new(data);
    if !dir.is_dir() {
        return Err(CliError::validation(format!(
            "--data must be scenario:<id> or a directory, got {data:?}"
        )));
    }
    let plain = (dir.join("train.tsv"), dir.join("test.tsv"));
    let (train_path, test_path) = if plain.0.exists() && plain.1.exists() {
        plain
    } else {
        let mut train_path = None;
        let mut test_path = None;
        for entry in std::fs::read_dir(dir).map_err(CliError::runtime)? {
            let path = entry.map_err(CliError::runtime)?.path();
            let name = path
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .to_string();
            if name.contains("_TRAIN") {
                train_path = Some(path);
            } else if name.contains("_TEST") {
                test_path = Some(path);
            }
        }
        match (train_path, test_path) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(CliError::validation(format!(
                    "{data:?} holds neither train.tsv/test.tsv nor a *_TRAIN/*_TEST pair"
                )))
            }
        }
    };
    let (train, test) = load_ucr_pair(&train_path, &test_path, None).map_err(CliError::runtime)?;
    // Validate against the published shape when the dataset is a known one.
    if let Some(stem) = train_path.file_stem().and_then(|s| s.to_str()) {
        let base = stem.trim_end_matches("_TRAIN");
        if let Some(expected) = DatasetManifest::known_shape(base) {
            let manifest = DatasetManifest {
                name: base.to_string(),
                train_path: train_path.display().to_string(),
                test_path: test_path.display().to_string(),
                expected,
            };
            let report = validate_manifest(&manifest, &train, &test);
            for m in &report.mismatches {
                log::warn!("{m}");
            }
        }
    }
    Ok((train, test))
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    let mut config: SweepConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::runtime)?;
            parse_json(&text, "sweep config")?
        }
        None => SweepConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let zero_timing = match args.timing.as_str() {
        "zero" => true,
        "wall" => false,
        other => {
            return Err(CliError::validation(format!(
                "--timing must be zero or wall, got {other:?}"
            )))
        }
    };
    let (train, test) = load_bench_data(&args.data, config.master_seed)?;
    let started = std::time::Instant::now();
    let mut records = run_sweep(&config, &train, &test).map_err(|e| match e {
        eftc_core::bench::BenchError::GridMismatch
        | eftc_core::bench::BenchError::InvalidConfig(_) => CliError::validation(e),
        other => CliError::runtime(other),
    })?;
    let wall = started.elapsed().as_secs_f64();
    if zero_timing {
        for r in &mut records {
            r.train_seconds = 0.0;
        }
    }
    save_runs(&records, &args.out).map_err(CliError::runtime)?;
    println!(
        "{} runs on {} in {:.2}s -> {}",
        records.len(),
        records.first().map(|r| r.dataset.as_str()).unwrap_or("?"),
        wall,
        args.out.display()
    );
    println!(
        "{:<12} {:>9} {:>4} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "method", "variant", "n", "min", "q1", "median", "q3", "max"
    );
    for g in summarize(&records) {
        println!(
            "{:<12} {:>9} {:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            g.method,
            if g.enriched { "enriched" } else { "original" },
            g.n,
            g.min,
            g.q1,
            g.median,
            g.q3,
            g.max
        );
    }
    Ok(())
}

fn tree_from_model(
    model: &TrainedModel,
    tree_index: usize,
) -> CliResult<eftc_core::models::TreeNode> {
    match model {
        TrainedModel::Tree { root, .. } => Ok(root.clone()),
        TrainedModel::Forest(f) => f.trees.get(tree_index).cloned().ok_or_else(|| {
            CliError::validation(format!(
                "tree index {} out of range ({} trees)",
                tree_index,
                f.trees.len()
            ))
        }),
        _ => Err(CliError::validation(
            "separation curves need a tree or forest model",
        )),
    }
}

fn cmd_sep_curve(args: SepCurveArgs) -> CliResult {
    let path = Direction::parse_path(&args.path)
        .ok_or_else(|| CliError::validation("path must consist of L and R"))?;
    if path.is_empty() {
        return Err(CliError::validation("path must have at least one step"));
    }
    let fill = match args.fill.as_str() {
        "mean" => FillPolicy::TrainMean,
        "zeros" => FillPolicy::Zeros,
        other => {
            return Err(CliError::validation(format!(
                "--fill must be mean or zeros, got {other:?}"
            )))
        }
    };
    let doc = load_model_document(&args.model).map_err(CliError::runtime)?;
    let layout_from_doc = doc.block_layout.clone();
    let basis_from_doc = doc.basis.clone();
    let is_tree_kind = matches!(
        doc.model,
        ModelPayload::Tree { .. } | ModelPayload::Forest { .. }
    );
    if !is_tree_kind {
        return Err(CliError::validation(
            "separation curves need a tree or forest model",
        ));
    }
    let model = doc.into_model().map_err(CliError::runtime)?;
    let matrix = load_matrix(&args.matrix).map_err(CliError::runtime)?;
    let layout = layout_from_doc.unwrap_or_else(|| matrix.layout.clone());
    // Matrices carry no knot vector; the sampling grids this tool ingests
    // are equispaced on [0, 1], so the basis rebuilds from its size.
    let basis = match basis_from_doc {
        Some(b) => b,
        None => {
            let t = layout.basis_size().saturating_sub(2);
            make_basis(&linspace(0.0, 1.0, t.max(2)), 4).map_err(CliError::runtime)?
        }
    };
    let tree = tree_from_model(&model, args.tree_index)?;
    let eval_points = args
        .eval_points
        .unwrap_or(layout.basis_size().saturating_sub(2).max(2));
    let (lo, hi) = basis.domain();
    let grid = linspace(lo, hi, eval_points);
    let sep = separation_curve(&tree, &path, &basis, &layout, &matrix.features, &grid, fill)
        .map_err(|e| match e {
            eftc_core::explain::ExplainError::InvalidPath(_) => CliError::validation(e),
            other => CliError::runtime(other),
        })?;
    save_separation_curve_csv(&sep, &grid, &args.out).map_err(CliError::runtime)?;
    for step in &sep.node_path {
        println!(
            "depth {}: {}[{}] (column {}) {} theta={:.6}",
            step.depth,
            step.block.as_str(),
            step.basis_index + 1,
            step.feature_index,
            match step.direction {
                Direction::Left => "<=",
                Direction::Right => ">",
            },
            step.threshold
        );
    }
    if let Some((idx, dist)) = sep.empirical_match {
        println!("empirical match: training curve {idx} at L2 distance {dist:.6}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> CliResult {
    let matrix = load_matrix(&args.matrix).map_err(CliError::runtime)?;
    let (policy, conditioning) = if args.policy == "same-spline" {
        (
            ConditioningPolicy::SameSpline,
            same_spline_conditioning(&matrix.layout, args.feature).map_err(CliError::validation)?,
        )
    } else if let Some(tau) = args.policy.strip_prefix("corr:") {
        let tau: f64 = tau
            .parse()
            .map_err(|_| CliError::validation(format!("bad tau {tau:?}")))?;
        (
            ConditioningPolicy::CorrThreshold(tau),
            correlation_conditioning(&matrix.features, args.feature, tau)
                .map_err(CliError::validation)?,
        )
    } else {
        return Err(CliError::validation(format!(
            "--policy must be same-spline or corr:<tau>, got {:?}",
            args.policy
        )));
    };
    let method = Method::parse(&args.method)
        .ok_or_else(|| CliError::validation(format!("unknown method {:?}", args.method)))?;
    let recipe = match method {
        Method::Tree => TrainRecipe::Tree(parse_json(&args.params, "tree params")?),
        Method::Forest => TrainRecipe::Forest(parse_json(&args.params, "forest params")?),
        Method::BoostLevel | Method::BoostLeaf => {
            let mut params: BoostParams = parse_json(&args.params, "boost params")?;
            params.growth = if method == Method::BoostLevel {
                Growth::LevelWise
            } else {
                Growth::LeafWise
            };
            TrainRecipe::Boost(params)
        }
        Method::Knn => {
            #[derive(serde::Deserialize)]
            struct KnnArgs {
                #[serde(default = "default_k")]
                k: usize,
            }
            fn default_k() -> usize {
                5
            }
            let knn_args: KnnArgs = parse_json(&args.params, "knn params")?;
            TrainRecipe::Knn { k: knn_args.k }
        }
    };
    if args.reps == 0 {
        return Err(CliError::validation("--reps must be at least 1"));
    }
    let report = conditional_importance(
        &recipe,
        &matrix.features,
        &matrix.labels,
        matrix.n_classes,
        args.feature,
        &conditioning,
        policy,
        args.reps,
        args.seed,
    )
    .map_err(|e| match e {
        eftc_core::explain::ExplainError::BadFeatureIndex { .. }
        | eftc_core::explain::ExplainError::InvalidTau(_)
        | eftc_core::explain::ExplainError::FeatureInConditioning(_) => CliError::validation(e),
        other => CliError::runtime(other),
    })?;
    println!(
        "feature {} | conditioning on {} columns | importance {:.6} over {} repetitions",
        report.feature_index,
        report.conditioning.len(),
        report.importance,
        report.repetitions
    );
    save_importance_csv(&[report], &args.out).map_err(CliError::runtime)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
