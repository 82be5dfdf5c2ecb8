//! `claimsev` — train, evaluate and interpret claims severity models.
//!
//! Subcommands: `generate | train | evaluate | importance | pdp | compare`.
//! All stochastic steps derive from `--seed`, and every run is reproducible:
//! identical inputs, flags and seed produce byte-identical outputs no matter
//! how many worker threads are in use.
//!
//! The modeling pipeline is fixed: drop zero-claim rows, log-transform the
//! claim size, split train/test by contract year (`--test-years`, default
//! 2016), fit on the training slice.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit error,
//! 5 query error.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use claimsev_core::ensemble::{
    fit_bagging, fit_gradient_boosting, fit_random_forest, BoostConfig, EnsembleModel,
};
use claimsev_core::error::Error;
use claimsev_core::eval::{compare_models, fit_ols, summary_stats};
use claimsev_core::interpret::{partial_dependence, partial_dependence_2way, permutation_importance};
use claimsev_core::model::{Model, SavedModel, TreeModel};
use claimsev_core::rng::{derive_seed, stream};
use claimsev_core::synth::{generate_synthetic, GeneratorConfig};
use claimsev_core::tree::{fit_tree, TreeConfig, TreeTargets};
use claimsev_core::{Dataset, Schema};

const META_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "claimsev", version, about = "Claims severity modeling with tree ensembles")]
struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism). Outputs never depend
    /// on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Schema JSON file (default: the builtin vehicle schema).
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Output directory for generated files and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file mirroring the flags; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic claims dataset plus its generator sidecar.
    Generate(GenerateArgs),
    /// Fit a model on the pipeline's training slice and save it.
    Train(TrainArgs),
    /// Score a saved model on the train/test slices.
    Evaluate(EvaluateArgs),
    /// Permutation variable importance of a saved model.
    Importance(ImportanceArgs),
    /// One- or two-way partial dependence of a saved model.
    Pdp(PdpArgs),
    /// Train and compare ols, tree, bagging, rf and boosting.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of rows.
    #[arg(long)]
    n: Option<usize>,
    /// Probability of a zero claim per row.
    #[arg(long)]
    zero_inflation: Option<f64>,
    /// Strength of the non-additive response terms.
    #[arg(long)]
    interaction_strength: Option<f64>,
    /// Log-scale noise standard deviation.
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model family to fit.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Contract years forming the test slice.
    #[arg(long, value_delimiter = ',')]
    test_years: Option<Vec<i32>>,
}

#[derive(Args, Debug, Clone)]
struct HyperArgs {
    /// Trees per bagging/random-forest ensemble.
    #[arg(long)]
    trees: Option<usize>,
    /// Candidate features per split (random forest).
    #[arg(long)]
    mtry: Option<usize>,
    /// Boosting rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Boosting shrinkage in (0, 1].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 penalty on boosting leaf weights.
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-leaf penalty subtracted from split gains.
    #[arg(long)]
    gamma: Option<f64>,
    /// Maximum tree depth (boosting default 8; others unlimited).
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum samples per leaf.
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Minimum samples to attempt a split.
    #[arg(long)]
    min_split: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    test_years: Option<Vec<i32>>,
}

#[derive(Args, Debug)]
struct ImportanceArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Permutation repeats per feature.
    #[arg(long)]
    repeats: Option<usize>,
    /// Data slice to score on.
    #[arg(long, value_enum)]
    slice: Option<SliceArg>,
    #[arg(long, value_delimiter = ',')]
    test_years: Option<Vec<i32>>,
}

#[derive(Args, Debug)]
struct PdpArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// One feature (one-way) or two comma-separated features (two-way).
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Grid points for numeric features.
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    test_years: Option<Vec<i32>>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, value_delimiter = ',')]
    test_years: Option<Vec<i32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Tree,
    Bagging,
    Rf,
    Boosting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SliceArg {
    Train,
    Test,
}

/// JSON config file: a flat object mirroring the flag names. Unknown keys
/// are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    schema: Option<PathBuf>,
    out: Option<PathBuf>,
    n: Option<usize>,
    zero_inflation: Option<f64>,
    interaction_strength: Option<f64>,
    noise_sd: Option<f64>,
    data: Option<PathBuf>,
    model: Option<String>,
    trees: Option<usize>,
    mtry: Option<usize>,
    rounds: Option<usize>,
    learning_rate: Option<f64>,
    lambda: Option<f64>,
    gamma: Option<f64>,
    max_depth: Option<usize>,
    min_leaf: Option<usize>,
    min_split: Option<usize>,
    test_years: Option<Vec<i32>>,
    repeats: Option<usize>,
    slice: Option<String>,
    features: Option<Vec<String>>,
    grid_size: Option<usize>,
}

fn exit_class(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig { .. } | Error::InvalidRepeats => 2,
        Error::EmptyFile { .. }
        | Error::UnknownColumn { .. }
        | Error::MissingColumn { .. }
        | Error::UnknownCategoryLevel { .. }
        | Error::UnparsableNumber { .. }
        | Error::Schema(_)
        | Error::Io { .. }
        | Error::Csv { .. }
        | Error::Json { .. }
        | Error::UnsupportedVersion { .. }
        | Error::SchemaMismatch(_)
        | Error::EmptyResult
        | Error::NonPositiveResponse { .. }
        | Error::EmptyPartition { .. }
        | Error::NonPositiveValuation => 3,
        Error::EmptyDataset
        | Error::InvalidMtry { .. }
        | Error::NotApplicable { .. }
        | Error::NoOobRows
        | Error::NonFiniteObjective { .. }
        | Error::RankDeficient { .. }
        | Error::LengthMismatch { .. }
        | Error::EmptyInput => 4,
        Error::UnknownFeature(_) | Error::DuplicateFeature(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}

/// Flag value, then config-file value, then the builtin default.
fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_opt<T: Clone>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

struct Workspace {
    seed: u64,
    schema: Schema,
    out: PathBuf,
    file: FileConfig,
}

impl Workspace {
    fn test_years(&self, flag: Option<Vec<i32>>) -> Result<BTreeSet<i32>, Error> {
        let years = resolve(flag, self.file.test_years.clone(), vec![2016]);
        if years.is_empty() {
            return Err(Error::InvalidConfig {
                field: "test_years",
                reason: "must name at least one year".into(),
            });
        }
        Ok(years.into_iter().collect())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Error> {
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|err| Error::InvalidConfig {
                field: "config",
                reason: err.to_string(),
            })?
        }
        None => FileConfig::default(),
    };

    if let Some(threads) = resolve_opt(cli.threads, file.threads) {
        if threads == 0 {
            return Err(Error::InvalidConfig {
                field: "threads",
                reason: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|err| Error::InvalidConfig {
                field: "threads",
                reason: err.to_string(),
            })?;
    }

    let schema = match resolve_opt(cli.schema, file.schema.clone()) {
        Some(path) => Schema::load(path)?,
        None => Schema::vehicle_insurance(),
    };
    let out = resolve(cli.out, file.out.clone(), PathBuf::from("."));
    fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let seed = resolve(cli.seed, file.seed, 7);
    let workspace = Workspace {
        seed,
        schema,
        out,
        file,
    };

    match cli.command {
        Command::Generate(args) => cmd_generate(&workspace, args),
        Command::Train(args) => cmd_train(&workspace, args),
        Command::Evaluate(args) => cmd_evaluate(&workspace, args),
        Command::Importance(args) => cmd_importance(&workspace, args),
        Command::Pdp(args) => cmd_pdp(&workspace, args),
        Command::Compare(args) => cmd_compare(&workspace, args),
    }
}

// ── generate ───────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct GeneratorSidecar<'a> {
    version: u32,
    config: &'a GeneratorConfig,
}

fn cmd_generate(ws: &Workspace, args: GenerateArgs) -> Result<(), Error> {
    let defaults = GeneratorConfig::default();
    let config = GeneratorConfig {
        n_rows: resolve(args.n, ws.file.n, defaults.n_rows),
        zero_inflation_rate: resolve(
            args.zero_inflation,
            ws.file.zero_inflation,
            defaults.zero_inflation_rate,
        ),
        seed: ws.seed,
        interaction_strength: resolve(
            args.interaction_strength,
            ws.file.interaction_strength,
            defaults.interaction_strength,
        ),
        noise_sd: resolve(args.noise_sd, ws.file.noise_sd, defaults.noise_sd),
        target_correlations: defaults.target_correlations,
    };
    let data: Dataset = generate_synthetic(&config)?;
    let csv_path = ws.write("claims.csv", &data.to_csv_bytes())?;
    let sidecar = GeneratorSidecar {
        version: META_VERSION,
        config: &config,
    };
    let meta = serde_json::to_vec_pretty(&sidecar).expect("sidecar serialization cannot fail");
    ws.write("claims.meta.json", &meta)?;
    println!(
        "wrote {} ({} rows) and claims.meta.json",
        csv_path.display(),
        data.n()
    );
    Ok(())
}

// ── the shared modeling pipeline ───────────────────────────────────────────

/// Load, drop zero claims, log-transform, split by contract year.
fn pipeline(
    ws: &Workspace,
    data: Option<PathBuf>,
    test_years: Option<Vec<i32>>,
) -> Result<(Dataset, Dataset), Error> {
    let path = resolve_opt(data, ws.file.data.clone()).ok_or(Error::InvalidConfig {
        field: "data",
        reason: "a dataset path is required".into(),
    })?;
    let years = ws.test_years(test_years)?;
    let raw = Dataset::load_csv(&path, &ws.schema)?;
    let logged = raw.filter_positive_claims()?.log_transform_response()?;
    logged.split_by_year(&years)
}

// ── train ──────────────────────────────────────────────────────────────────

struct ResolvedHyper {
    trees: usize,
    mtry: Option<usize>,
    boost: BoostConfig<f64>,
    tree_config: TreeConfig<f64>,
}

fn resolve_hyper(ws: &Workspace, args: &HyperArgs) -> ResolvedHyper {
    let boost_defaults: BoostConfig<f64> = BoostConfig::default();
    let min_leaf = resolve(args.min_leaf, ws.file.min_leaf, 5);
    let min_split = resolve(args.min_split, ws.file.min_split, 10);
    let gamma = resolve(args.gamma, ws.file.gamma, 0.0);
    ResolvedHyper {
        trees: resolve(args.trees, ws.file.trees, 500),
        mtry: resolve_opt(args.mtry, ws.file.mtry),
        boost: BoostConfig {
            n_rounds: resolve(args.rounds, ws.file.rounds, boost_defaults.n_rounds),
            learning_rate: resolve(
                args.learning_rate,
                ws.file.learning_rate,
                boost_defaults.learning_rate,
            ),
            lambda: resolve(args.lambda, ws.file.lambda, boost_defaults.lambda),
            gamma,
            max_depth: Some(resolve(args.max_depth, ws.file.max_depth, 8)),
            min_leaf,
            min_split,
            mtry: None,
        },
        tree_config: TreeConfig {
            max_depth: resolve_opt(args.max_depth, ws.file.max_depth),
            min_leaf,
            min_split,
            mtry: None,
            leaf_mode: claimsev_core::tree::LeafMode::Mean,
            gamma,
        },
    }
}

/// Default random-forest feature draw: ⌈p/3⌉.
fn default_mtry(p: usize) -> usize {
    p.div_ceil(3)
}

fn training_log_csv(model: &EnsembleModel<f64>) -> Vec<u8> {
    let mut out = String::from("round,train_loss,penalty,objective\n");
    for round in model.training_log() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            round.round, round.train_loss, round.penalty, round.objective
        ));
    }
    out.into_bytes()
}

fn cmd_train(ws: &Workspace, args: TrainArgs) -> Result<(), Error> {
    let kind = match args.model {
        Some(kind) => kind,
        None => match ws.file.model.as_deref() {
            Some("tree") => ModelKind::Tree,
            Some("bagging") => ModelKind::Bagging,
            Some("rf") => ModelKind::Rf,
            Some("boosting") => ModelKind::Boosting,
            Some(other) => {
                return Err(Error::InvalidConfig {
                    field: "model",
                    reason: format!("unknown model kind `{other}`"),
                })
            }
            None => {
                return Err(Error::InvalidConfig {
                    field: "model",
                    reason: "a model kind is required".into(),
                })
            }
        },
    };
    let hyper = resolve_hyper(ws, &args.hyper);
    let (train, test) = pipeline(ws, args.data, args.test_years)?;

    let model_path = match kind {
        ModelKind::Tree => {
            let tree = fit_tree(
                &train,
                TreeTargets::Response(train.response()),
                &hyper.tree_config,
                &mut stream(ws.seed, 0),
            )?;
            let model = TreeModel::new(train.schema().clone(), hyper.tree_config, ws.seed, tree)?;
            ws.write("model.json", &model.to_json_bytes())?
        }
        ModelKind::Bagging => {
            let model = fit_bagging(&train, hyper.trees, &hyper.tree_config, ws.seed)?;
            ws.write("model.json", &model.to_json_bytes())?
        }
        ModelKind::Rf => {
            let mtry = hyper.mtry.unwrap_or_else(|| default_mtry(train.p()));
            let model = fit_random_forest(&train, hyper.trees, mtry, &hyper.tree_config, ws.seed)?;
            ws.write("model.json", &model.to_json_bytes())?
        }
        ModelKind::Boosting => {
            let model = fit_gradient_boosting(&train, &hyper.boost, ws.seed)?;
            ws.write("training_log.csv", &training_log_csv(&model))?;
            ws.write("model.json", &model.to_json_bytes())?
        }
    };
    println!(
        "trained on {} rows (test slice {} rows); wrote {}",
        train.n(),
        test.n(),
        model_path.display()
    );
    Ok(())
}

// ── evaluate ───────────────────────────────────────────────────────────────

fn load_model(ws: &Workspace, path: Option<PathBuf>) -> Result<SavedModel<f64>, Error> {
    let path = path.ok_or(Error::InvalidConfig {
        field: "model",
        reason: "a model path is required".into(),
    })?;
    let model = SavedModel::load(&path)?;
    if model.schema() != &ws.schema {
        return Err(Error::SchemaMismatch(
            "model was trained under a different schema".into(),
        ));
    }
    Ok(model)
}

fn cmd_evaluate(ws: &Workspace, args: EvaluateArgs) -> Result<(), Error> {
    let model = load_model(ws, args.model)?;
    let (train, test) = pipeline(ws, args.data, args.test_years)?;
    let name = model.kind_name();
    let report = compare_models(&[(name, model.as_model())], &train, &test)?;
    ws.write("metrics.csv", &report.metrics_csv_bytes())?;
    ws.write("predictions.csv", &report.predictions_csv_bytes())?;
    // Plot-ready summary statistics of the modeled training slice.
    let eda = summary_stats(&train);
    ws.write("eda.csv", &eda.to_csv_bytes())?;
    println!("wrote metrics.csv, predictions.csv, eda.csv");
    Ok(())
}

// ── importance ─────────────────────────────────────────────────────────────

fn cmd_importance(ws: &Workspace, args: ImportanceArgs) -> Result<(), Error> {
    let model = load_model(ws, args.model)?;
    let (train, test) = pipeline(ws, args.data, args.test_years)?;
    let repeats = resolve(args.repeats, ws.file.repeats, 20);
    let slice = match args.slice {
        Some(s) => s,
        None => match ws.file.slice.as_deref() {
            Some("test") => SliceArg::Test,
            _ => SliceArg::Train,
        },
    };
    let (data, label) = match slice {
        SliceArg::Train => (&train, "train"),
        SliceArg::Test => (&test, "test"),
    };
    let report = permutation_importance(model.as_model(), data, repeats, ws.seed, label)?;
    ws.write("importance.csv", &report.to_csv_bytes())?;
    println!("wrote importance.csv ({} features × {repeats} repeats)", data.p());
    Ok(())
}

// ── pdp ────────────────────────────────────────────────────────────────────

fn cmd_pdp(ws: &Workspace, args: PdpArgs) -> Result<(), Error> {
    let model = load_model(ws, args.model)?;
    let (train, _test) = pipeline(ws, args.data, args.test_years)?;
    let features = resolve(args.features, ws.file.features.clone(), Vec::new());
    let grid_size = resolve(args.grid_size, ws.file.grid_size, 25);
    let surface = match features.as_slice() {
        [a] => partial_dependence(model.as_model(), &train, a, grid_size)?,
        [a, b] => partial_dependence_2way(model.as_model(), &train, a, b, grid_size)?,
        _ => {
            return Err(Error::InvalidConfig {
                field: "features",
                reason: "pass one feature or two comma-separated features".into(),
            })
        }
    };
    ws.write("pdp.csv", &surface.to_csv_bytes())?;
    println!(
        "wrote pdp.csv ({} grid points over {} background rows)",
        surface.values.len(),
        surface.n_background
    );
    Ok(())
}

// ── compare ────────────────────────────────────────────────────────────────

fn cmd_compare(ws: &Workspace, args: CompareArgs) -> Result<(), Error> {
    let hyper = resolve_hyper(ws, &args.hyper);
    let (train, test) = pipeline(ws, args.data, args.test_years)?;

    let ols = fit_ols(&train)?;
    let tree = fit_tree(
        &train,
        TreeTargets::Response(train.response()),
        &hyper.tree_config,
        &mut stream(derive_seed(ws.seed, 1), 0),
    )?;
    let tree_model = TreeModel::new(
        train.schema().clone(),
        hyper.tree_config.clone(),
        derive_seed(ws.seed, 1),
        tree,
    )?;
    let bagging = fit_bagging(&train, hyper.trees, &hyper.tree_config, derive_seed(ws.seed, 2))?;
    let mtry = hyper.mtry.unwrap_or_else(|| default_mtry(train.p()));
    let forest = fit_random_forest(
        &train,
        hyper.trees,
        mtry,
        &hyper.tree_config,
        derive_seed(ws.seed, 3),
    )?;
    let boosting = fit_gradient_boosting(&train, &hyper.boost, derive_seed(ws.seed, 4))?;

    let models: Vec<(&str, &dyn Model<f64>)> = vec![
        ("ols", &ols),
        ("tree", &tree_model),
        ("bagging", &bagging),
        ("rf", &forest),
        ("boosting", &boosting),
    ];
    let report = compare_models(&models, &train, &test)?;
    ws.write("metrics.csv", &report.metrics_csv_bytes())?;
    ws.write("predictions.csv", &report.predictions_csv_bytes())?;
    println!(
        "compared {} models on {} train / {} test rows; wrote metrics.csv, predictions.csv",
        models.len(),
        train.n(),
        test.n()
    );
    Ok(())
}
