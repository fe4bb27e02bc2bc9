use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairvec::data::{synth_two_gaussians, write_csv, SynthConfig, TargetRule};
use fairvec::harness::{
    analyze_corrections, audc_threshold_sweep, compare_records, emit_direction_plot, evaluate, load_view,
    probe_representation, run_experiment, train_full, write_correction_csv, write_folds_csv, write_run,
    write_sweep_csv, DataSource, ExperimentConfig, ProbeKind, TrainedModel, COMPARE_FOLDS,
};
use fairvec::{Corrector, Dataset, Error, NormalizationSpec, Result, ScoredPredictions, Task};
use serde::Serialize;

const MODEL_FILE: &str = "model.json";
const NORM_FILE: &str = "normalization.json";

#[derive(Parser, Debug)]
#[command(name = "fairvec", version, about = "Fair representation experiments")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a two-Gaussians dataset and its schema.
    Synth(SynthArgs),
    /// Fit the configured model on every row.
    Train,
    /// Cross-validated evaluation with fixed hyperparameters, or scoring
    /// of a trained model with `--model`.
    Evaluate(ModelArg),
    /// Nested cross-validation with random search.
    Search,
    /// Try to recover the sensitive attribute from the (corrected) features.
    Probe(ProbeArgs),
    /// Group means of features before and after correction.
    Analyze(AnalyzeArgs),
    /// SVG scatter of original and corrected points (2 features only).
    Plot(RequiredModel),
    /// Corrected t-test between two configs on shared external folds.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n_per_group: Option<usize>,
    /// Mean of group 1, as `a,b`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    mu1: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Group,
    Orthogonal,
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Directory written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RequiredModel {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// Directory written by `train`; probes raw features when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    kind: ProbeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProbeArg {
    Logistic,
    Knn,
    Both,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature to report; repeat for several. Defaults to all.
    #[arg(long)]
    feature: Vec<String>,
    #[arg(long, default_value_t = 1)]
    privileged: usize,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Second experiment config.
    #[arg(long)]
    against: PathBuf,
    #[arg(long, default_value_t = COMPARE_FOLDS)]
    folds: usize,
    /// Metric to compare; the selection objective when absent.
    #[arg(long)]
    metric: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    match &cli.command {
        Command::Synth(args) => synth(&cli, args),
        Command::Train => train(&cli),
        Command::Evaluate(args) => match &args.model {
            Some(dir) => evaluate_model(&cli, dir),
            None => cross_validate(&cli, false),
        },
        Command::Search => cross_validate(&cli, true),
        Command::Probe(args) => probe(&cli, args),
        Command::Analyze(args) => analyze(&cli, args),
        Command::Plot(args) => plot(&cli, &args.model),
        Command::Compare(args) => compare(&cli, args),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let path = path.ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    load_config(cli.config.as_deref(), cli.seed)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let mut sc = match &cli.config {
        Some(_) => match config(cli)?.data {
            DataSource::Synth(s) => s,
            DataSource::Csv { .. } => return Err(Error::Config("config data source is not synthetic".into())),
        },
        None => SynthConfig::default(),
    };
    if let Some(n) = args.n_per_group {
        sc.n_per_group = n;
    }
    if let Some(m) = &args.mu1 {
        sc.mu1 = [m[0], m[1]];
    }
    if let Some(s) = args.sigma {
        sc.sigma = s;
    }
    if let Some(t) = args.target {
        sc.target = match t {
            TargetArg::Group => TargetRule::Group,
            TargetArg::Orthogonal => TargetRule::Orthogonal,
        };
    }
    let ds = synth_two_gaussians(&sc, cli.seed.unwrap_or(0))?;
    write_csv(&ds, cli.out.join("data.csv"))?;
    let schema = cli.out.join("schema.json");
    std::fs::write(&schema, ds.schema.to_json()? + "\n").map_err(|e| Error::io(&schema, e))
}

fn train(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let fit = train_full(&cfg)?;
    fit.model.save(cli.out.join(MODEL_FILE))?;
    write_json(&cli.out.join(NORM_FILE), &fit.spec)?;
    write_json(&cli.out.join("train_report.json"), &fit.report)
}

fn cross_validate(cli: &Cli, with_search: bool) -> Result<()> {
    let mut cfg = config(cli)?;
    if with_search {
        if cfg.search.is_none() {
            return Err(Error::Config("config has no search section".into()));
        }
    } else {
        cfg.search = None;
    }
    let out = run_experiment(&cfg)?;
    log::info!("run finished in {:.1}s", out.record.wall_time_secs);
    write_run(&out, &cli.out)
}

/// Trained model plus the config's data in that model's normalized view.
fn load_model(cli: &Cli, dir: &Path) -> Result<(ExperimentConfig, TrainedModel, Dataset)> {
    let cfg = config(cli)?;
    let model = TrainedModel::load(dir.join(MODEL_FILE))?;
    let path = dir.join(NORM_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let spec: NormalizationSpec = serde_json::from_str(&text)?;
    let ds = load_view(&cfg)?.normalized(&spec)?;
    Ok((cfg, model, ds))
}

fn evaluate_model(cli: &Cli, dir: &Path) -> Result<()> {
    let (cfg, model, ds) = load_model(cli, dir)?;
    let report = evaluate(&cfg, &model, &ds)?;
    write_json(&cli.out.join("report.json"), &report)?;
    if cfg.task == Task::Cls {
        let pred = ScoredPredictions::new(model.score(&ds.x)?, ds.y.clone(), ds.s.clone())?;
        write_sweep_csv(&audc_threshold_sweep(&pred)?, create(&cli.out.join("sweep.csv"))?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ProbeOutput {
    representation: &'static str,
    reports: Vec<fairvec::harness::ProbeReport>,
}

fn probe(cli: &Cli, args: &ProbeArgs) -> Result<()> {
    let (x, s, representation) = match &args.model {
        Some(dir) => {
            let (_, model, ds) = load_model(cli, dir)?;
            (model.correct(&ds.x)?.1, ds.s, "corrected")
        }
        None => {
            let ds = load_view(&config(cli)?)?;
            (ds.x, ds.s, "raw")
        }
    };
    let kinds = match args.kind {
        ProbeArg::Logistic => vec![ProbeKind::Logistic],
        ProbeArg::Knn => vec![ProbeKind::Knn],
        ProbeArg::Both => vec![ProbeKind::Logistic, ProbeKind::Knn],
    };
    let reports = kinds
        .into_iter()
        .map(|k| probe_representation(&x, &s, k))
        .collect::<Result<Vec<_>>>()?;
    write_json(&cli.out.join("probe.json"), &ProbeOutput { representation, reports })
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let (_, model, ds) = load_model(cli, &args.model)?;
    let features: Vec<String> = if args.feature.is_empty() {
        ds.features.iter().map(|f| f.name.clone()).collect()
    } else {
        args.feature.clone()
    };
    let reports = features
        .iter()
        .map(|f| analyze_corrections(&model, &ds, f, args.privileged))
        .collect::<Result<Vec<_>>>()?;
    write_json(&cli.out.join("corrections.json"), &reports)?;
    write_correction_csv(&reports, create(&cli.out.join("corrections.csv"))?)
}

fn plot(cli: &Cli, dir: &Path) -> Result<()> {
    let (_, model, ds) = load_model(cli, dir)?;
    let (_, z) = model.correct(&ds.x)?;
    let spec = ds
        .normalization
        .as_ref()
        .ok_or_else(|| Error::Contract("dataset is not normalized".into()))?;
    let before = spec.invert(&ds.x)?;
    let after = spec.invert(&z)?;
    emit_direction_plot(&before, &after, &ds.s, cli.out.join("direction.svg"))
}

fn compare(cli: &Cli, args: &CompareArgs) -> Result<()> {
    let mut a = config(cli)?;
    let mut b = load_config(Some(&args.against), cli.seed)?;
    a.external_folds = args.folds;
    b.external_folds = args.folds;
    if a.data != b.data || a.seed != b.seed {
        return Err(Error::Config("compared configs must share data and seed".into()));
    }
    let ra = run_experiment(&a)?.record;
    let rb = run_experiment(&b)?.record;
    write_folds_csv(&ra, create(&cli.out.join("folds_a.csv"))?)?;
    write_folds_csv(&rb, create(&cli.out.join("folds_b.csv"))?)?;
    write_json(&cli.out.join("comparison.json"), &compare_records(&ra, &rb, args.metric.as_deref())?)
}
