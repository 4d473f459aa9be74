//! Batch CLI for the open-set SVM toolkit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 training failure.

use clap::{Args, Parser, Subcommand};
use openset_svm::binary::BinaryTrainConfig;
use openset_svm::data::{
    dataset_manifest_csv, gen_blob_mixture, gen_synthetic, read_sparse, SparseSample,
    SyntheticKind,
};
use openset_svm::error::Error;
use openset_svm::experiment::{
    bias_report_text, bias_sign_report, compare_csv, means_csv, parse_results_csv, results_csv,
    run_experiment, ExperimentConfig, Method,
};
use openset_svm::metrics::{ConfusionMatrix, MetricReport};
use openset_svm::model_selection::{
    grid_report_csv, grid_search_external, grid_search_internal, GridSearchPlan,
    GsApproach, GsRegime,
};
use openset_svm::ova::{load_bundle, save_bundle, train_ova, train_ova_bounded, OvaConfig};
use openset_svm::raster::{raster_regions, write_ppm, RasterSpec};
use openset_svm::rng;
use openset_svm::Result;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "openset-svm", version, about = "Open-set SVM toolkit", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an OVA model with fixed parameters and save a model bundle.
    Train(TrainArgs),
    /// Predict labels (or UNKNOWN) for a dataset with a saved model.
    Predict(PredictArgs),
    /// Evaluate a saved model on a dataset: metrics and confusion matrix.
    Eval(EvalArgs),
    /// Run a grid search and write the per-point report.
    Gridsearch(GridsearchArgs),
    /// Run the paired open-set experiment protocol.
    Experiment(ExperimentArgs),
    /// Rasterize the decision regions of a 2D model to a PPM image.
    Raster(RasterArgs),
    /// Report bias-sign frequencies of the lambda = 0 binaries.
    BiasReport(BiasReportArgs),
    /// Compare two experiment result files with paired statistics.
    Compare(CompareArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Sparse dataset file ("label idx:val ...").
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic dataset: cone_torus | boat | four_gauss | regular |
    /// nested_rings | blobs:<classes>.
    #[arg(long)]
    synthetic: Option<String>,
    /// Samples per class for synthetic data.
    #[arg(long, default_value_t = 40)]
    per_class: usize,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<(Vec<SparseSample>, String)> {
        match (&self.data, &self.synthetic) {
            (Some(path), None) => {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "data".into());
                Ok((read_sparse(path)?, name))
            }
            (None, Some(spec)) => {
                let gen_seed = rng::derive_seed(seed, "dataset");
                if let Some(kind) = SyntheticKind::parse(spec) {
                    Ok((
                        gen_synthetic(kind, self.per_class, gen_seed),
                        kind.name().to_string(),
                    ))
                } else if let Some(k) = spec.strip_prefix("blobs:") {
                    let classes: usize = k.parse().map_err(|_| {
                        Error::Config(format!("bad synthetic spec {spec:?}"))
                    })?;
                    Ok((
                        gen_blob_mixture(classes, self.per_class, gen_seed),
                        format!("blobs{classes}"),
                    ))
                } else {
                    Err(Error::Config(format!("unknown synthetic kind {spec:?}")))
                }
            }
            _ => Err(Error::Config("provide exactly one of --data / --synthetic".into())),
        }
    }
}

fn parse_gs(spec: &str) -> Result<(GsApproach, GsRegime)> {
    match spec {
        "external-closed" => Ok((GsApproach::External, GsRegime::Closed)),
        "external-open" => Ok((GsApproach::External, GsRegime::Open)),
        "internal-closed" => Ok((GsApproach::Internal, GsRegime::Closed)),
        "internal-open" => Ok((GsApproach::Internal, GsRegime::Open)),
        other => Err(Error::Config(format!(
            "bad --gs value {other:?}; expected {{internal,external}}-{{closed,open}}"
        ))),
    }
}

/// Grids file: lines "c: ...", "gamma: ...", "lambda_frac: ..." with
/// space-separated values.
fn parse_grids_file(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let (mut c, mut gamma, mut lambda) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected 'key: values', got {line:?}"),
        })?;
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad value {t:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match key.trim() {
            "c" => c = values,
            "gamma" => gamma = values,
            "lambda_frac" => lambda = values,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("unknown grid key {other:?}"),
                })
            }
        }
    }
    if c.is_empty() || gamma.is_empty() || lambda.is_empty() {
        return Err(Error::Config(
            "grids file must define c, gamma, and lambda_frac".into(),
        ));
    }
    Ok((c, gamma, lambda))
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_frac: f64,
    /// KKT stopping tolerance.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Escalate lambda until every binary has a negative bias.
    #[arg(long)]
    bounded: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model bundle directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Where to write the confusion matrix CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridsearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "ssvm")]
    method: String,
    /// Regime: {internal,external}-{closed,open}.
    #[arg(long, default_value = "external-open")]
    gs: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Grids file overriding the defaults.
    #[arg(long)]
    grids: Option<PathBuf>,
    /// Report CSV path (external) or directory (internal, one file per class).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "ssvm")]
    method: String,
    #[arg(long, default_value = "external-open")]
    gs: String,
    /// Comma-separated available-class counts.
    #[arg(long, default_value = "3,6,9,12", value_delimiter = ',')]
    acs: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long)]
    grids: Option<PathBuf>,
    /// Output directory for results.csv, means.csv, and manifest.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RasterArgs {
    #[arg(long)]
    model: PathBuf,
    /// Bounds as x0,y0,x1,y1.
    #[arg(
        long,
        default_value = "-0.5,-0.5,1.5,1.5",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    bounds: Vec<f64>,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BiasReportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Also train all one-vs-one pairs.
    #[arg(long)]
    ovo: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// results.csv of method A.
    #[arg(long)]
    a: PathBuf,
    /// results.csv of method B.
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            use std::io::Write;
            // Tolerate a closed pipe (e.g. `... | head`).
            if let Err(e) = std::io::stdout().write_all(text.as_bytes()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (dataset, _) = args.data.load(args.seed)?;
    let cfg = BinaryTrainConfig {
        lambda_frac: args.lambda_frac,
        stop_eps: args.eps,
        ..BinaryTrainConfig::new(args.c, args.gamma)
    };
    let shared = OvaConfig::Shared(cfg);
    let model = if args.bounded {
        let (model, escalations) = train_ova_bounded(&dataset, &shared, 0.5)?;
        for (label, retrains) in escalations {
            eprintln!("class {label}: escalated lambda ({retrains} retrains)");
        }
        model
    } else {
        train_ova(&dataset, &shared)?
    };
    save_bundle(&args.out, &model)?;
    println!(
        "trained {} classes; klos_bounded={}",
        model.class_labels().len(),
        model.klos_is_bounded()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_bundle(&args.model)?;
    let dataset = read_sparse(&args.data)?;
    let mut out = String::from("index,true_label,predicted\n");
    for (i, s) in dataset.iter().enumerate() {
        let predicted = match model.predict(s).label {
            Some(l) => l.to_string(),
            None => "UNKNOWN".to_string(),
        };
        out.push_str(&format!("{i},{},{predicted}\n", s.label));
    }
    emit(&args.out, &out)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = load_bundle(&args.model)?;
    let dataset = read_sparse(&args.data)?;
    let mut cm = ConfusionMatrix::new(model.class_labels().to_vec());
    for s in &dataset {
        cm.record(s.label, model.predict(s).label);
    }
    match MetricReport::compute(&cm) {
        Ok(m) => {
            println!("aks {}", m.aks);
            println!("aus {}", m.aus);
            println!("na {}", m.na);
            println!("hna {}", m.hna);
            println!("osfm_macro {}", m.osfm_macro);
            println!("osfm_micro {}", m.osfm_micro);
            println!("fm_macro {}", m.fm_macro);
            println!("fm_micro {}", m.fm_micro);
        }
        Err(e @ (Error::NoKnownSamples | Error::NoUnknownSamples)) => {
            eprintln!("note: {e}; open-set measures unavailable on this test set");
        }
        Err(e) => return Err(e),
    }
    emit(&args.out, &cm.to_csv())
}

fn build_plan(
    approach: GsApproach,
    regime: GsRegime,
    method: Method,
    seed: u64,
    eps: f64,
    grids: &Option<PathBuf>,
) -> Result<GridSearchPlan> {
    let mut plan = GridSearchPlan::with_default_grids(
        approach,
        regime,
        matches!(method, Method::Ssvm),
        seed,
    );
    plan.stop_eps = eps;
    if let Some(path) = grids {
        let (c, gamma, lambda) = parse_grids_file(path)?;
        plan.c_grid = c;
        plan.gamma_grid = gamma;
        if matches!(method, Method::Ssvm) {
            plan.lambda_frac_grid = lambda;
        }
    }
    Ok(plan)
}

fn cmd_gridsearch(args: GridsearchArgs) -> Result<()> {
    let method = Method::parse(&args.method)
        .ok_or_else(|| Error::Config(format!("unknown method {:?}", args.method)))?;
    let (approach, regime) = parse_gs(&args.gs)?;
    let (dataset, _) = args.data.load(args.seed)?;
    let plan = build_plan(approach, regime, method, args.seed, args.eps, &args.grids)?;
    match approach {
        GsApproach::External => {
            let outcome = grid_search_external(&dataset, &plan)?;
            std::fs::write(&args.out, grid_report_csv(&outcome))?;
            println!(
                "best c={} gamma={} lambda_frac={} score={}",
                outcome.best.c, outcome.best.gamma, outcome.best.lambda_frac, outcome.best_score
            );
        }
        GsApproach::Internal => {
            std::fs::create_dir_all(&args.out)?;
            for label in openset_svm::data::class_labels(&dataset) {
                let outcome = grid_search_internal(&dataset, label, &plan)?;
                let path = args.out.join(format!("grid_class_{label}.csv"));
                std::fs::write(&path, grid_report_csv(&outcome))?;
                println!(
                    "class {label}: best c={} gamma={} lambda_frac={} score={}",
                    outcome.best.c, outcome.best.gamma, outcome.best.lambda_frac, outcome.best_score
                );
            }
        }
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let method = Method::parse(&args.method)
        .ok_or_else(|| Error::Config(format!("unknown method {:?}", args.method)))?;
    let (approach, regime) = parse_gs(&args.gs)?;
    let (dataset, name) = args.data.load(args.seed)?;
    let mut config = ExperimentConfig::new(dataset, &name, method);
    config.approach = approach;
    config.regime = regime;
    config.acs_list = args.acs.clone();
    config.trials = args.trials;
    config.seed = args.seed;
    config.stop_eps = args.eps;
    if let Some(path) = &args.grids {
        config.grids = Some(parse_grids_file(path)?);
    }
    let results = run_experiment(&config)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("results.csv"), results_csv(&results))?;
    std::fs::write(args.out.join("means.csv"), means_csv(&results))?;
    std::fs::write(
        args.out.join("manifest.csv"),
        dataset_manifest_csv(&config.dataset),
    )?;
    println!("{} rows written to {}", results.rows.len(), args.out.display());
    Ok(())
}

fn cmd_raster(args: RasterArgs) -> Result<()> {
    if args.bounds.len() != 4 {
        return Err(Error::Config("--bounds needs x0,y0,x1,y1".into()));
    }
    let model = load_bundle(&args.model)?;
    let spec = RasterSpec::new(
        (args.bounds[0], args.bounds[1], args.bounds[2], args.bounds[3]),
        args.resolution,
        model.class_labels(),
    )?;
    let raster = raster_regions(&model, &spec)?;
    write_ppm(&args.out, &raster, &spec.palette)?;
    let unknown = raster.labels.iter().filter(|l| l.is_none()).count();
    println!(
        "{}x{} raster written; {:.1}% unknown",
        raster.width,
        raster.height,
        100.0 * unknown as f64 / raster.labels.len() as f64
    );
    Ok(())
}

fn cmd_bias_report(args: BiasReportArgs) -> Result<()> {
    let (dataset, _) = args.data.load(args.seed)?;
    let cfg = BinaryTrainConfig::new(args.c, args.gamma);
    let report = bias_sign_report(&dataset, &cfg, args.ovo)?;
    emit(&args.out, &bias_report_text(&report))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let rows_a = parse_results_csv(&std::fs::read_to_string(&args.a)?)?;
    let rows_b = parse_results_csv(&std::fs::read_to_string(&args.b)?)?;
    let csv = compare_csv(&rows_a, &rows_b)?;
    emit(&args.out, &csv)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gridsearch(args) => cmd_gridsearch(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Raster(args) => cmd_raster(args),
        Command::BiasReport(args) => cmd_bias_report(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::NotEnoughClasses { .. }
        | Error::InsufficientClasses(_)
        | Error::ClassTooSmall { .. }
        | Error::NoKnownSamples
        | Error::NoUnknownSamples
        | Error::AllZeroDifferences
        | Error::DimensionMismatch { .. } => 2,
        Error::InfeasibleLambda { .. }
        | Error::DegenerateBias { .. }
        | Error::EscalationFailed { .. }
        | Error::ClassTraining { .. }
        | Error::AllRejected => 3,
        Error::Experiment { source, .. } => exit_code(source),
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(value) = std::env::var("OPENSET_SVM_THREADS") {
        match value.parse::<usize>() {
            Ok(threads) if threads >= 1 => {
                // Ignore the error if a pool already exists (tests).
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            _ => {
                eprintln!("error: OPENSET_SVM_THREADS must be a positive integer, got {value:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
