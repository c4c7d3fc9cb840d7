//! `dplr`: generate data, fit ILR / HILR models, predict, evaluate, benchmark.

mod config;
mod model;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dplr_core::data::generators::Generator;
use dplr_core::data::{load_csv, load_csv_auto, save_csv, Dataset};
use dplr_core::ilr::IlrModel;
use dplr_core::metrics::{mse, nmse};
use dplr_core::predictive::{Prediction, PredictionMode};
use dplr_core::FitTrace;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use config::{FitMode, ModelKind, RunConfig};
use model::Model;

/// Relative ELBO decrease tolerated in batch traces before a model is written.
const TRACE_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "dplr", version, about = "Dirichlet-process mixtures of Bayesian local linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate {
        /// sinc-hetero, gap-sine, steps, cubics, chirp, triangle, inverse-mapping, piecewise-linear
        name: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model; writes the model JSON, `<out>.trace.csv`, and prints metrics on the training data.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Write per-row predictions (means, stds, top component and weight).
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV whose first d_x columns are inputs.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mean")]
        mode: PredictionMode,
    },
    /// Print MSE / NMSE / active experts of a model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "mean")]
        mode: PredictionMode,
    },
    /// Learn from batches in order, each posterior becoming the next prior (ILR).
    Sequential {
        /// Starting model; the first batch is fitted from scratch when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Run a suite end to end and print one CSV row per problem.
    Benchmark {
        /// `synthetic`, or `invdyn` with `--data TRAIN TEST`.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training size per synthetic problem.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, num_args = 2)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Emit the default run configuration with every field explicit.
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<PredictionMode>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    trunc_k: Option<usize>,
    #[arg(long)]
    trunc_m: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    /// Switches to stochastic fitting with this minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug)]
struct CliError {
    category: &'static str,
    msg: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self {
            category: "config",
            msg: msg.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category {
            "config" => 2,
            "io" | "parse" => 3,
            _ => 4,
        }
    }
}

impl From<dplr_core::Error> for CliError {
    fn from(e: dplr_core::Error) -> Self {
        Self {
            category: e.category(),
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            category: "io",
            msg: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Serialize)]
struct Metrics {
    mse: f64,
    nmse: f64,
    experts: usize,
    /// Training iterations; absent when only evaluating.
    iterations: Option<usize>,
    elapsed_ms: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.msg.replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate { name, n, seed, out } => {
            let g: Generator = name.parse()?;
            let data = g.generate(n, &mut ChaCha8Rng::seed_from_u64(seed))?;
            save_csv(&data, &out)?;
            Ok(())
        }
        Command::Fit { data, out, opts } => {
            let cfg = resolve(&opts)?;
            let data = load_csv_auto(&data)?;
            let start = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (model, trace) = fit(&data, &cfg, &mut rng)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let monotone = cfg.fit_mode == FitMode::Stochastic || trace.is_monotone(TRACE_TOL);
            write_fit_outputs(&model, &trace, monotone, &out)?;
            let m = metrics(&model, &data, cfg.prediction_mode, Some(trace.iterations), elapsed)?;
            print_json(&m)
        }
        Command::Predict { model, data, out, mode } => {
            let model = Model::load(&model)?;
            let data = load_inputs(&data, model.dim_x())?;
            let preds = model.predict_many(&data.x, mode)?;
            write_predictions(&preds, model.dim_y(), &out)
        }
        Command::Evaluate { model, data, mode } => {
            let model = Model::load(&model)?;
            let data = load_csv_auto(&data)?;
            let start = Instant::now();
            let m = metrics(&model, &data, mode, None, 0.0)?;
            print_json(&Metrics {
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                ..m
            })
        }
        Command::Sequential { model, data, out, opts } => {
            let cfg = resolve(&opts)?;
            if cfg.model != ModelKind::Ilr {
                return Err(CliError::config("sequential learning is available for ilr models only"));
            }
            let batches = data.iter().map(load_csv_auto).collect::<Result<Vec<_>, _>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let start = Instant::now();
            let (fitted, trace, monotone) = sequential(model.as_deref(), &batches, &cfg, &mut rng)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let model = Model::Ilr(fitted);
            write_fit_outputs(&model, &trace, monotone, &out)?;
            let all = concat(&batches)?;
            let m = metrics(&model, &all, cfg.prediction_mode, Some(trace.iterations), elapsed)?;
            print_json(&m)
        }
        Command::Benchmark { suite, seed, n, data, out } => {
            let rows = match suite.as_str() {
                "synthetic" => benchmark_synthetic(seed, n)?,
                "invdyn" => {
                    if data.len() != 2 {
                        return Err(CliError::config("benchmark invdyn needs --data TRAIN TEST"));
                    }
                    benchmark_invdyn(seed, &data[0], &data[1])?
                }
                other => return Err(CliError::config(format!("unknown benchmark suite {other:?}"))),
            };
            let mut text = String::from(BenchRow::HEADER);
            text.push('\n');
            for r in &rows {
                text.push_str(&r.to_csv());
                text.push('\n');
            }
            emit(&text, out.as_deref())
        }
        Command::Config {
            action: ConfigAction::Init { out },
        } => {
            let text = serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes");
            emit(&(text + "\n"), out.as_deref())
        }
    }
}

fn resolve(opts: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &opts.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(v) = opts.mode {
        cfg.prediction_mode = v;
    }
    if let Some(v) = opts.degree {
        cfg.ilr.degree = v;
        cfg.hilr.degree = v;
    }
    if let Some(v) = opts.trunc_k {
        cfg.ilr.truncation = v;
        cfg.hilr.lower_truncation = v;
    }
    if let Some(v) = opts.trunc_m {
        cfg.hilr.upper_truncation = v;
    }
    if let Some(v) = opts.alpha0 {
        cfg.ilr.alpha0 = v;
        cfg.hilr.alpha0 = v;
    }
    if let Some(v) = opts.beta0 {
        cfg.hilr.beta0 = v;
    }
    if let Some(v) = opts.batch_size {
        cfg.ilr.svi.batch_size = Some(v);
        cfg.fit_mode = FitMode::Stochastic;
    }
    if let Some(v) = opts.tol {
        cfg.ilr.tol = v;
        cfg.hilr.tol = v;
    }
    if let Some(v) = opts.max_iters {
        cfg.ilr.max_iters = v;
        cfg.hilr.max_iters = v;
    }
    cfg.check()?;
    Ok(cfg)
}

fn fit(data: &Dataset, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> CliResult<(Model, FitTrace)> {
    Ok(match (cfg.model, cfg.fit_mode) {
        (ModelKind::Ilr, FitMode::Batch) => {
            let (m, t) = IlrModel::fit(data, &cfg.ilr, rng)?;
            (Model::Ilr(m), t)
        }
        (ModelKind::Ilr, FitMode::Stochastic) => {
            let (m, t) = IlrModel::fit_stochastic(data, &cfg.ilr, rng)?;
            (Model::Ilr(m), t)
        }
        (ModelKind::Hilr, FitMode::Batch) => {
            let (m, t) = dplr_core::hilr::HilrModel::fit(data, &cfg.hilr, rng)?;
            (Model::Hilr(m), t)
        }
        (ModelKind::Hilr, FitMode::Stochastic) => {
            return Err(CliError::config("stochastic fitting is available for ilr models only"));
        }
    })
}

fn sequential(
    start: Option<&Path>,
    batches: &[Dataset],
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> CliResult<(IlrModel, FitTrace, bool)> {
    let (mut model, mut trace, rest) = match start {
        Some(p) => match Model::load(p)? {
            Model::Ilr(m) => (m, FitTrace::default(), batches),
            Model::Hilr(_) => return Err(CliError::config("sequential learning needs an ilr model")),
        },
        None => {
            let (m, t) = IlrModel::fit(&batches[0], &cfg.ilr, rng)?;
            (m, t, &batches[1..])
        }
    };
    let mut monotone = trace.is_monotone(TRACE_TOL);
    for b in rest {
        let (m, t) = model.sequential_update(b, &cfg.ilr, rng)?;
        monotone &= t.is_monotone(TRACE_TOL);
        model = m;
        trace.elbo_per_iteration.extend(t.elbo_per_iteration);
        trace.active_components_per_iteration.extend(t.active_components_per_iteration);
        trace.iterations += t.iterations;
        trace.converged = t.converged;
    }
    Ok((model, trace, monotone))
}

fn write_fit_outputs(model: &Model, trace: &FitTrace, monotone: bool, out: &Path) -> CliResult<()> {
    let trace_path = out.with_extension("trace.csv");
    fs::write(&trace_path, trace.to_csv())?;
    if !monotone {
        return Err(CliError {
            category: "numeric",
            msg: format!("ELBO decreased during fitting; see {}", trace_path.display()),
        });
    }
    Ok(model.save(out)?)
}

fn metrics(model: &Model, data: &Dataset, mode: PredictionMode, iterations: Option<usize>, elapsed_ms: f64) -> CliResult<Metrics> {
    let preds = model.predict_many(&data.x, mode)?;
    let p = means(&preds, data.dim_y());
    Ok(Metrics {
        mse: mse(&p, &data.y)?,
        nmse: nmse(&p, &data.y)?,
        experts: model.experts(data)?,
        iterations,
        elapsed_ms,
    })
}

fn means(preds: &[Prediction], dy: usize) -> DMatrix<f64> {
    DMatrix::from_fn(preds.len(), dy, |i, j| preds[i].mean[j])
}

fn concat(batches: &[Dataset]) -> CliResult<Dataset> {
    let mut all = batches[0].clone();
    for b in &batches[1..] {
        all = all.concat(b)?;
    }
    Ok(all)
}

/// Load the first `dx` columns of a CSV as inputs; any further columns are
/// kept as outputs.
fn load_inputs(path: &Path, dx: usize) -> CliResult<Dataset> {
    let mut header = String::new();
    BufReader::new(fs::File::open(path)?).read_line(&mut header)?;
    let width = header.trim_end().split(',').count();
    if width < dx {
        return Err(CliError {
            category: "parse",
            msg: format!("{} has {width} columns, the model needs {dx} inputs", path.display()),
        });
    }
    Ok(load_csv(path, dx, width - dx)?)
}

fn write_predictions(preds: &[Prediction], dy: usize, out: &Path) -> CliResult<()> {
    let mut cols: Vec<String> = (1..=dy).map(|j| format!("mean{j}")).collect();
    cols.extend((1..=dy).map(|j| format!("std{j}")));
    cols.push("top_component".into());
    cols.push("top_weight".into());
    let mut w = std::io::BufWriter::new(fs::File::create(out)?);
    writeln!(w, "{}", cols.join(","))?;
    for p in preds {
        let mut row: Vec<String> = p.mean.iter().map(|v| format!("{v:?}")).collect();
        match &p.std {
            Some(s) => row.extend(s.iter().map(|v| format!("{v:?}"))),
            None => row.extend((0..dy).map(|_| "NaN".to_string())),
        }
        row.push(p.top_component.to_string());
        row.push(format!("{:?}", p.top_weight));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(v: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string(v).expect("metrics serialize"));
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

struct BenchRow {
    problem: String,
    model: &'static str,
    fit: &'static str,
    mode: PredictionMode,
    n_train: usize,
    n_test: usize,
    metrics: Metrics,
}

impl BenchRow {
    const HEADER: &'static str = "problem,model,fit,mode,n_train,n_test,mse,nmse,experts,iterations,elapsed_ms";

    fn to_csv(&self) -> String {
        let mode = match self.mode {
            PredictionMode::Mean => "mean",
            PredictionMode::Mode => "mode",
        };
        let m = &self.metrics;
        format!(
            "{},{},{},{mode},{},{},{:e},{:e},{},{},{:.1}",
            self.problem,
            self.model,
            self.fit,
            self.n_train,
            self.n_test,
            m.mse,
            m.nmse,
            m.experts,
            m.iterations.unwrap_or(0),
            m.elapsed_ms
        )
    }
}

/// Problem, model, fit style and prediction mode of each synthetic benchmark.
const SYNTHETIC: [(Generator, ModelKind, &str, PredictionMode); 7] = [
    (Generator::GapSine, ModelKind::Ilr, "batch", PredictionMode::Mean),
    (Generator::SincHetero, ModelKind::Ilr, "batch", PredictionMode::Mean),
    (Generator::Steps, ModelKind::Ilr, "batch", PredictionMode::Mean),
    (Generator::Cubics, ModelKind::Ilr, "batch", PredictionMode::Mean),
    (Generator::Triangle, ModelKind::Hilr, "batch", PredictionMode::Mean),
    (Generator::InverseMapping, ModelKind::Ilr, "batch", PredictionMode::Mode),
    (Generator::Chirp, ModelKind::Ilr, "sequential", PredictionMode::Mean),
];

/// Batches used for the sequential chirp benchmark.
const CHIRP_BATCHES: usize = 3;

fn benchmark_synthetic(seed: u64, n: usize) -> CliResult<Vec<BenchRow>> {
    if n < CHIRP_BATCHES {
        return Err(CliError::config(format!("benchmark needs --n >= {CHIRP_BATCHES}")));
    }
    let n_test = (n / 2).max(1);
    let mut rows = Vec::new();
    for (i, (g, kind, fit_style, mode)) in SYNTHETIC.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let train = g.generate(n, &mut rng)?;
        let test = g.generate(n_test, &mut rng)?;
        let cfg = RunConfig {
            model: kind,
            ..RunConfig::default()
        };
        let start = Instant::now();
        let (model, trace) = if fit_style == "sequential" {
            let batches = train.batches(CHIRP_BATCHES)?;
            let (m, t, _) = sequential(None, &batches, &cfg, &mut rng)?;
            (Model::Ilr(m), t)
        } else {
            fit(&train, &cfg, &mut rng)?
        };
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        rows.push(BenchRow {
            problem: g.name().to_string(),
            model: kind.name(),
            fit: fit_style,
            mode,
            n_train: n,
            n_test,
            metrics: metrics(&model, &test, mode, Some(trace.iterations), elapsed)?,
        });
    }
    Ok(rows)
}

fn benchmark_invdyn(seed: u64, train: &Path, test: &Path) -> CliResult<Vec<BenchRow>> {
    let name = train.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let train = load_csv_auto(train)?;
    let test = load_csv_auto(test)?;
    if (train.dim_x(), train.dim_y()) != (test.dim_x(), test.dim_y()) {
        return Err(CliError {
            category: "parse",
            msg: "train and test files have different columns".into(),
        });
    }
    let mut rows = Vec::new();
    for kind in [ModelKind::Ilr, ModelKind::Hilr] {
        let cfg = RunConfig {
            model: kind,
            ..RunConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Instant::now();
        let (model, trace) = fit(&train, &cfg, &mut rng)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        rows.push(BenchRow {
            problem: name.clone(),
            model: kind.name(),
            fit: "batch",
            mode: PredictionMode::Mean,
            n_train: train.len(),
            n_test: test.len(),
            metrics: metrics(&model, &test, PredictionMode::Mean, Some(trace.iterations), elapsed)?,
        });
    }
    Ok(rows)
}
