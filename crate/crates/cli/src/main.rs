//! `deepview` command-line tool.
//!
//! Exit codes: 0 success, 1 validation error, 2 classifier transport
//! failure, 3 I/O error.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deepview_core::classifier::{ClassifierSpec, LabelSource};
use deepview_core::metric::BaseMetric;

#[derive(Parser, Debug)]
#[command(
    name = "deepview",
    version,
    about = "Discriminative projections and decision-surface views of classifier embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Project a bundle and write the visualization payload.
    Project(ProjectArgs),
    /// Run the pipeline for several lambda values and emit one CSV row each.
    Sweep(SweepArgs),
    /// Score a payload: Q_kNN, Q_data and optionally the neighborhood
    /// preservation against the original embeddings.
    Eval(EvalArgs),
    /// Compare neighborhoods across embeddings of the same items.
    Compare(CompareArgs),
    /// Confusion matrix of classifier or leave-one-out kNN predictions.
    Confusion(ConfusionArgs),
    /// Render a payload to SVG.
    Render(RenderArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Bundle manifest.json (or the directory holding it).
    #[arg(long, env = "DEEPVIEW_BUNDLE")]
    bundle: PathBuf,
    /// Weights file, http(s) endpoint, or knn:<true_label|dataset_tag>[:k].
    #[arg(long, env = "DEEPVIEW_CLASSIFIER")]
    classifier: ClassifierSpec,
    /// Interpolation segments along each pair.
    #[arg(long, env = "DEEPVIEW_SEGMENTS", default_value_t = 5)]
    segments: usize,
    #[arg(long, env = "DEEPVIEW_BASE_METRIC", default_value = "cosine")]
    base_metric: BaseMetric,
    /// Divide each distance component by its mean before mixing.
    #[arg(long, env = "DEEPVIEW_NORMALIZE")]
    normalize: bool,
    /// Grid resolution as WIDTHxHEIGHT.
    #[arg(long, env = "DEEPVIEW_GRID", default_value = "100x100", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, env = "DEEPVIEW_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "DEEPVIEW_NEIGHBORS", default_value_t = 15)]
    neighbors: usize,
    #[arg(long, env = "DEEPVIEW_MIN_DIST", default_value_t = 0.1)]
    min_dist: f64,
    #[arg(long, env = "DEEPVIEW_EPOCHS", default_value_t = 500)]
    epochs: usize,
    /// Ridge strength of the inverse map.
    #[arg(long, env = "DEEPVIEW_RIDGE", default_value_t = 1e-3)]
    ridge: f64,
    /// Grid margin as a fraction of the projection extent.
    #[arg(long, env = "DEEPVIEW_MARGIN", default_value_t = 0.05)]
    margin: f64,
    /// Project a seeded uniform sample of this many points.
    #[arg(long, env = "DEEPVIEW_SAMPLE")]
    sample: Option<usize>,
    /// Reuse distance matrices stored in this directory.
    #[arg(long, env = "DEEPVIEW_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, env = "DEEPVIEW_LAMBDA", default_value_t = 0.8)]
    lambda: f64,
    /// Output payload path.
    #[arg(long, env = "DEEPVIEW_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated lambda values, run in the given order.
    #[arg(long, env = "DEEPVIEW_LAMBDAS", default_value = "1.0,0.8,0.6,0.4,0.2,0.0")]
    lambdas: String,
    /// CSV output path; stdout when omitted.
    #[arg(long, env = "DEEPVIEW_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, env = "DEEPVIEW_PAYLOAD")]
    payload: PathBuf,
    /// Original bundle; adds Q_NN/LCMC/AUC between it and the projection.
    #[arg(long, env = "DEEPVIEW_BUNDLE")]
    bundle: Option<PathBuf>,
    #[arg(long, env = "DEEPVIEW_K", default_value_t = 5)]
    k: usize,
    /// Write the per-k curves here as CSV.
    #[arg(long, env = "DEEPVIEW_CURVES")]
    curves: Option<PathBuf>,
    /// JSON output path; stdout when omitted.
    #[arg(long, env = "DEEPVIEW_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// NAME=MANIFEST, at least two; rows must describe the same items.
    #[arg(long = "embedding", env = "DEEPVIEW_EMBEDDINGS", value_delimiter = ',', required = true, value_parser = parse_named)]
    embeddings: Vec<(String, PathBuf)>,
    /// Directory for one curves CSV per pair.
    #[arg(long, env = "DEEPVIEW_CURVES_DIR")]
    curves_dir: Option<PathBuf>,
    /// Summary CSV path; stdout when omitted.
    #[arg(long, env = "DEEPVIEW_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfusionArgs {
    #[arg(long, env = "DEEPVIEW_BUNDLE")]
    bundle: PathBuf,
    /// Score this classifier against true labels instead of leave-one-out kNN.
    #[arg(long, env = "DEEPVIEW_CLASSIFIER")]
    classifier: Option<ClassifierSpec>,
    /// Labels for the leave-one-out kNN: true_label or dataset_tag.
    #[arg(long, env = "DEEPVIEW_LABEL_SOURCE", default_value = "dataset_tag")]
    label_source: LabelSource,
    #[arg(long, env = "DEEPVIEW_K", default_value_t = 5)]
    k: usize,
    /// JSON output path; stdout when omitted.
    #[arg(long, env = "DEEPVIEW_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long, env = "DEEPVIEW_PAYLOAD")]
    payload: PathBuf,
    #[arg(long, env = "DEEPVIEW_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "DEEPVIEW_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, env = "DEEPVIEW_DATA_DIR", default_value = "deepview-data")]
    data_dir: PathBuf,
    /// Built explorer UI to serve at /.
    #[arg(long, env = "DEEPVIEW_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    /// Weights file to expose over /v1/info and /v1/predict.
    #[arg(long, env = "DEEPVIEW_MODEL")]
    model: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
    if name.is_empty() {
        return Err(format!("empty name in {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage errors share the validation exit code
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Project(a) => commands::project(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::Confusion(a) => commands::confusion(a),
        Command::Render(a) => commands::render(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
