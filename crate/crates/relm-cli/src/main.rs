//! `relm`: train, score, and benchmark non-iteratively trained recurrent
//! networks from the command line.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 on usage errors.

mod plan;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use relm_core::arch::{ArchKind, ArchitectureSpec};
use relm_core::dataset;
use relm_core::hgen::{Backend, ExecConfig};
use relm_core::model_io;
use relm_core::synth::{synth_series, SynthKind};
use relm_core::trainer::{self, FeedbackMode};

#[derive(Parser)]
#[command(
    name = "relm",
    version,
    about = "Non-iterative training of recurrent networks with sequential, flat-parallel, and tiled-parallel backends"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model on a CSV series and write a model file plus an
    /// evaluation report.
    Train(TrainArgs),
    /// Score a saved model against a CSV series.
    Predict(PredictArgs),
    /// Execute a benchmark plan: sweeps, speedup/RMSE tables, timing
    /// decomposition, and plots.
    Bench(BenchArgs),
    /// Closed-form and instrumented memory/FLOP counts.
    Cost(CostArgs),
    /// Generate a synthetic series CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Architecture: elman | jordan | narmax | fully | lstm | gru
    #[arg(long)]
    arch: String,
    /// Hidden neuron count M.
    #[arg(long)]
    hidden: usize,
    /// Lag count Q.
    #[arg(long)]
    lags: usize,
    /// Input CSV (header row required).
    #[arg(long)]
    data: PathBuf,
    /// Column holding the series.
    #[arg(long, default_value = "y")]
    column: String,
    /// Extra feature columns (multivariate input; the --column series stays
    /// the prediction target).
    #[arg(long)]
    feature: Vec<String>,
    /// Backend: seq | basic | tiled
    #[arg(long, default_value = "tiled")]
    backend: String,
    /// Block size / tile width (16 or 32).
    #[arg(long, default_value_t = 32)]
    tile: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Train fraction (chronological split).
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Output-feedback length (narmax only).
    #[arg(long, default_value_t = 2)]
    narmax_f: usize,
    /// Error-feedback length (narmax only).
    #[arg(long, default_value_t = 2)]
    narmax_r: usize,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Evaluation report CSV (default: <out>.eval.csv).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    column: String,
    #[arg(long)]
    feature: Vec<String>,
    /// Predictions CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Feed the model's own outputs back instead of teacher forcing
    /// (genuine forecasting for output-feedback architectures).
    #[arg(long)]
    recursive: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark plan (TOML).
    #[arg(long)]
    plan: PathBuf,
    /// Output directory (overrides the plan's `output_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Watts assumed for the energy estimate (joules = watts x seconds).
    #[arg(long, default_value_t = 30.0)]
    watts: f64,
    /// Run plan entries in parallel (disables timing integrity; for
    /// non-timed sweeps only).
    #[arg(long)]
    parallel_runs: bool,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    arch: String,
    #[arg(long = "S", default_value_t = 1)]
    s: usize,
    #[arg(long = "Q", default_value_t = 10)]
    q: usize,
    #[arg(long = "M", default_value_t = 10)]
    m: usize,
    #[arg(long = "F", default_value_t = 2)]
    f: usize,
    #[arg(long = "R", default_value_t = 2)]
    r: usize,
    /// Tile width for the staged-read prediction.
    #[arg(long, default_value_t = 16)]
    tile: usize,
    /// Also run the counting interpreter and report measured counts.
    #[arg(long)]
    measure: bool,
    /// CSV file to append the report row to (also printed).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// sine | ar2 | random_walk
    #[arg(long)]
    kind: String,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV file to write (single column "y").
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Predict(args) => cmd_predict(args),
        Cmd::Bench(args) => plan::cmd_bench(args.plan, args.out_dir, args.watts, args.parallel_runs),
        Cmd::Cost(args) => cmd_cost(args),
        Cmd::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Worker cap from the environment, if set.
fn env_workers() -> Option<usize> {
    std::env::var("RELM_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|w| *w > 0)
}

fn exec_config(backend: &str, tile: usize) -> anyhow::Result<ExecConfig> {
    let backend = Backend::parse(backend)?;
    let mut cfg = match backend {
        Backend::Sequential => ExecConfig::sequential(),
        Backend::BasicParallel => ExecConfig::basic(tile),
        Backend::TiledParallel => ExecConfig::tiled(tile),
    };
    cfg.workers = env_workers();
    Ok(cfg)
}

fn build_spec(
    arch: &str,
    m: usize,
    q: usize,
    s: usize,
    narmax_f: usize,
    narmax_r: usize,
) -> anyhow::Result<ArchitectureSpec> {
    let kind = ArchKind::parse(arch)?;
    Ok(match kind {
        ArchKind::Narmax => ArchitectureSpec::narmax(m, q, s, narmax_f, narmax_r)?,
        k => ArchitectureSpec::new(k, m, q, s)?,
    })
}

fn load_dataset(
    data: &PathBuf,
    column: &str,
    features: &[String],
    lags: usize,
    split: f64,
) -> anyhow::Result<relm_core::TimeSeriesDataset> {
    let mut series = vec![dataset::load_csv(data, column)?];
    for feat in features {
        series.push(dataset::load_csv(data, feat)?);
    }
    let ds = dataset::window_multi(&series, lags)?;
    Ok(dataset::normalize_split(&ds, split)?)
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&args.data, &args.column, &args.feature, args.lags, args.split)?;
    let spec = build_spec(
        &args.arch,
        args.hidden,
        args.lags,
        1 + args.feature.len(),
        args.narmax_f,
        args.narmax_r,
    )?;
    let cfg = exec_config(&args.backend, args.tile)?;
    let model = trainer::fit(&ds, &spec, &cfg, args.seed)?;
    let eval = trainer::evaluate(&model, &ds)?;
    model_io::save_model(&model, &args.out)?;

    let report_path = args
        .report
        .unwrap_or_else(|| PathBuf::from(format!("{}.eval.csv", args.out.display())));
    report::write_eval_csv(&report_path, &args.arch, &args.backend, args.seed, &eval)?;

    let t = model.timing;
    println!(
        "trained {} (M={}, Q={}) on {} rows via {} backend in {:.3}s \
         (init {:.1}us, h {:.3}s, solve {:.3}s)",
        args.arch,
        args.hidden,
        args.lags,
        ds.n_train,
        args.backend,
        t.total().as_secs_f64(),
        t.init.as_secs_f64() * 1e6,
        t.h_compute.as_secs_f64(),
        t.solve.as_secs_f64()
    );
    println!(
        "rmse: train {:.6} test {:.6} (normalized), test {:.6} (original units); \
         naive last-value test rmse {:.6}",
        eval.rmse_train,
        eval.rmse_test,
        eval.rmse_test_denorm,
        trainer::naive_last_value_rmse(&ds, ds.test_rows())
    );
    println!("model written to {}", args.out.display());
    println!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    let model = model_io::load_model(&args.model)?;
    let mut series = vec![dataset::load_csv(&args.data, &args.column)?];
    for feat in &args.feature {
        series.push(dataset::load_csv(&args.data, feat)?);
    }
    let raw = dataset::window_multi(&series, model.spec.q)?;
    let ds = match &model.norm {
        Some(norm) => dataset::apply_normalization(&raw, norm)?,
        None => raw,
    };
    let mode = if args.recursive {
        FeedbackMode::Recursive
    } else {
        FeedbackMode::TeacherForced
    };
    let preds = trainer::predict_with_mode(&model, &ds, 0..ds.n(), mode)?;
    report::write_predictions_csv(&args.out, &ds, &preds, model.norm.as_ref())?;
    println!("{} predictions written to {}", preds.len(), args.out.display());
    Ok(())
}

fn cmd_cost(args: CostArgs) -> anyhow::Result<()> {
    let spec = build_spec(&args.arch, args.m, args.q, args.s, args.f, args.r)?;
    let mut rep = relm_core::cost::predict_costs(&spec, args.tile);
    if args.measure {
        let mut rng = relm_core::SeededRng::new(1);
        let weights = relm_core::WeightSet::sample(&spec, &mut rng)?;
        let x = relm_core::tensor::uniform_fill(&mut rng, &[4, args.s, args.q], -1.0, 1.0)?;
        let y = relm_core::tensor::uniform_fill(&mut rng, &[4], -1.0, 1.0)?;
        let ds = relm_core::TimeSeriesDataset::from_parts(x, y)?;
        rep.measured_basic = Some(relm_core::cost::measure_basic(&ds, &spec, &weights, args.tile)?);
        rep.measured_tiled = Some(relm_core::cost::measure_tiled(&ds, &spec, &weights, args.tile)?);
    }
    println!("{}", report::cost_header());
    println!("{}", report::cost_row(&rep));
    if let Some(path) = &args.out {
        report::append_cost_csv(path, &rep)?;
        println!("cost row appended to {}", path.display());
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let kind = SynthKind::parse(&args.kind)?;
    let series = synth_series(kind, args.length, args.noise, args.seed)?;
    report::write_series_csv(&args.out, &series)?;
    println!(
        "{} values of {} (noise {}, seed {}) written to {}",
        series.len(),
        args.kind,
        args.noise,
        args.seed,
        args.out.display()
    );
    Ok(())
}
