//! Command implementations behind the `abcboost` binary.

pub mod grid;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use abcboost::{
    load_csv, load_libsvm, train, Algorithm, BoostConfig, BoostError, DataError, Dataset, Ensemble,
    LoadOptions, ModelError, Role, TrainOptions,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "abcboost", version, about = "Multi-class boosted trees with adaptive base classes")]
pub struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model, optionally tracking test error per iteration.
    Train(TrainArgs),
    /// Count misclassifications of a saved model on a labelled file.
    Eval(EvalArgs),
    /// Write one predicted label (or probability row) per sample.
    Predict(PredictArgs),
    /// Run every (algorithm, J, nu) cell of a grid config file.
    Grid(GridArgs),
    /// Rebuild a grid's summary and table from its trace files.
    Summarize(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Report {
    /// Smallest test error over all iterations.
    #[default]
    Best,
    /// Test error at the last iteration.
    Final,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "libsvm")]
    pub format: Format,
    /// Zero-based column holding the label (CSV only).
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_algorithm)]
    pub algo: Algorithm,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Leaves per tree.
    #[arg(long = "J")]
    pub j: usize,
    /// Shrinkage.
    #[arg(long)]
    pub nu: f64,
    /// Maximum boosting iterations.
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    /// Working-response clamp for logit-classic.
    #[arg(long, default_value_t = 4.0)]
    pub zmax: f64,
    /// Stop after the iteration that exceeds this many seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "best")]
    pub report: Report,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Use only the first INT stages.
    #[arg(long)]
    pub upto: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub upto: Option<usize>,
    /// Print class probabilities instead of labels.
    #[arg(long)]
    pub proba: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid config file (key = value lines).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "best")]
    pub report: Report,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: BoostError| e.to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    /// 1 for user errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Boost(BoostError::Config(_))
            | CliError::Model(ModelError::StageOutOfRange { .. }) => 1,
            _ => 2,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Grid(a) => {
            let g = grid::ExperimentGrid::load(&a.config)?;
            let outcome = grid::run_grid(&g, a.report)?;
            print!("{}", outcome.table);
            if !outcome.failures.is_empty() {
                eprintln!("{} cell(s) failed; see {}", outcome.failures.len(), g.failures_path().display());
            }
            Ok(())
        }
        Command::Summarize(a) => {
            let g = grid::ExperimentGrid::load(&a.config)?;
            let rows = grid::summarize(&g, a.report)?;
            print!("{}", grid::write_summary(&g, &rows, a.report)?);
            Ok(())
        }
    }
}

pub fn load_dataset(path: &Path, data: &DataArgs, opts: &LoadOptions) -> Result<Dataset, DataError> {
    match data.format {
        Format::Libsvm => load_libsvm(path, opts),
        Format::Csv => load_csv(path, data.label_column, opts),
    }
}

/// Training set, plus a test set aligned to it.
pub fn load_pair(
    train_path: &Path,
    test_path: Option<&Path>,
    data: &DataArgs,
) -> Result<(Dataset, Option<Dataset>), DataError> {
    let train = load_dataset(train_path, data, &LoadOptions::train())?;
    let test = match test_path {
        Some(p) => Some(load_dataset(p, data, &LoadOptions::test_for(&train))?),
        None => None,
    };
    Ok((train, test))
}

fn options_for_model(model: &Ensemble) -> LoadOptions {
    LoadOptions {
        expected_features: Some(model.n_features()),
        n_classes: Some(model.n_classes()),
        labels: model.meta.label_scheme.unwrap_or_default(),
        role: Role::Test,
    }
}

pub fn boost_config(a: &TrainArgs) -> BoostConfig {
    BoostConfig {
        min_leaf: a.min_leaf,
        z_max: a.zmax,
        ..BoostConfig::new(a.algo, a.j, a.nu, a.m)
    }
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = boost_config(a);
    cfg.validate()?;
    let budget = match a.time_budget {
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::Usage(format!("--time-budget must be positive, got {s}"))),
        None => None,
    };
    let (train_ds, test_ds) = load_pair(&a.train, a.test.as_deref(), &a.data)?;
    let out = train(
        &train_ds,
        &cfg,
        TrainOptions {
            test: test_ds.as_ref(),
            time_budget: budget,
        },
    )?;
    if let Some(p) = &a.model_out {
        out.model.save(p)?;
    }
    if let Some(p) = &a.trace_out {
        out.trace.save(p)?;
    }
    println!(
        "{}: {} iterations ({}), final training loss {:e}",
        a.algo,
        out.model.n_stages(),
        out.stop.as_str(),
        out.state.loss()
    );
    let reported = match a.report {
        Report::Best => out.trace.best_test().map(|r| ("best", r)),
        Report::Final => out.trace.final_test().map(|r| ("final", r)),
    };
    if let (Some((label, (errors, iter))), Some(test)) = (reported, &test_ds) {
        println!(
            "{label} test errors: {errors} / {} ({:.3}%) at iteration {iter}",
            test.n_samples(),
            100.0 * errors as f64 / test.n_samples() as f64
        );
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let model = Ensemble::load(&a.model)?;
    if let Some(m) = a.upto {
        if m > model.n_stages() {
            return Err(ModelError::StageOutOfRange {
                requested: m,
                available: model.n_stages(),
            }
            .into());
        }
    }
    let ds = load_dataset(&a.test, &a.data, &options_for_model(&model))?;
    let errors = model.count_errors(&ds, a.upto)?;
    let stages = a.upto.unwrap_or(model.n_stages());
    println!(
        "test errors: {errors} / {} ({:.3}%) using {stages} of {} stages",
        ds.n_samples(),
        100.0 * errors as f64 / ds.n_samples() as f64,
        model.n_stages()
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    let model = Ensemble::load(&a.model)?;
    let ds = load_dataset(&a.input, &a.data, &options_for_model(&model))?;
    let first = model.meta.label_scheme.unwrap_or_default().first_label();
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(CliError::io(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let sink = a.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    for i in 0..ds.n_samples() {
        let line = if a.proba {
            let p = model.predict_proba(ds.row(i), a.upto)?;
            p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        } else {
            (model.predict_class(ds.row(i), a.upto)? as i64 + first).to_string()
        };
        writeln!(out, "{line}").map_err(CliError::io(&sink))?;
    }
    out.flush().map_err(CliError::io(&sink))
}
