mod dataset;
mod layering;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use otta_lab::adaptation::{adapt_dataset, train_source, AdaptConfig, AdaptLoss, Scoring, SgdConfig, TrainConfig};
use otta_lab::data::{apply_corruption, write_csv_dataset, CorruptionKind, CorruptionSpec, CsvSchema, LabeledData};
use otta_lab::diagnostics::{
    batch_sweep, correctness_histograms, histogram_csv, simplex_trace, sweep_svg, trace_csv, trace_svg, write_bytes,
    Parametrization,
};
use otta_lab::losses::LossKind;
use otta_lab::model::{init_model, load_checkpoint, save_checkpoint, Model, ModelSpec, ParamSelector, Stats};
use serde::Serialize;
use serde_json::Value;

use dataset::Split;

const DEFAULT_BLOBS: &str = "blobs:C=10,d=32,m=500,spread=0.1";

#[derive(Parser, Debug)]
#[command(name = "otta", version, about = "Online test-time adaptation laboratory", args_override_self = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Global {
    /// Seed for data generation, initialization, stream order and corruption.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file whose keys mirror the flags; explicit flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a source model with supervised cross-entropy.
    TrainSource(TrainArgs),
    /// Adapt a source model over one shifted stream.
    Adapt(AdaptArgs),
    /// Final error over batch sizes, losses and seeds.
    Sweep(SweepArgs),
    /// Gradient-descent trace on the three-class simplex.
    Simplex(SimplexArgs),
    /// Entropy and cosine histograms of a frozen model, split by correctness.
    Diagnose(DiagnoseArgs),
    /// Write a synthetic blobs dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum LossArg {
    Em,
    Pl,
    Com,
    Comm,
    None,
}

impl From<LossArg> for AdaptLoss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Em => AdaptLoss::Em,
            LossArg::Pl => AdaptLoss::Pl,
            LossArg::Com => AdaptLoss::Com,
            LossArg::Comm => AdaptLoss::Comm,
            LossArg::None => AdaptLoss::None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum TraceLossArg {
    Em,
    Pl,
    Com,
    Comm,
}

impl From<TraceLossArg> for LossKind {
    fn from(l: TraceLossArg) -> Self {
        match l {
            TraceLossArg::Em => LossKind::Em,
            TraceLossArg::Pl => LossKind::Pl,
            TraceLossArg::Com => LossKind::Com,
            TraceLossArg::Comm => LossKind::Comm,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum CorruptionArg {
    GaussianNoise,
    FeatureScale,
    Rotation,
    MeanShift,
    FeatureDropout,
}

impl From<CorruptionArg> for CorruptionKind {
    fn from(c: CorruptionArg) -> Self {
        match c {
            CorruptionArg::GaussianNoise => CorruptionKind::GaussianNoise,
            CorruptionArg::FeatureScale => CorruptionKind::FeatureScale,
            CorruptionArg::Rotation => CorruptionKind::Rotation,
            CorruptionArg::MeanShift => CorruptionKind::MeanShift,
            CorruptionArg::FeatureDropout => CorruptionKind::FeatureDropout,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ParamsArg {
    Affine,
    Feat,
    All,
}

impl From<ParamsArg> for ParamSelector {
    fn from(p: ParamsArg) -> Self {
        match p {
            ParamsArg::Affine => ParamSelector::AffineOnly,
            ParamsArg::Feat => ParamSelector::FeatureExtractor,
            ParamsArg::All => ParamSelector::All,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum StatsArg {
    Batch,
    Running,
}

impl From<StatsArg> for Stats {
    fn from(s: StatsArg) -> Self {
        match s {
            StatsArg::Batch => Stats::Batch,
            StatsArg::Running => Stats::Running,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ScoringArg {
    BeforeUpdate,
    AfterUpdate,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ParametrizationArg {
    Feature,
    Logit,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct TrainArgs {
    /// `blobs:C=..,d=..,m=..,spread=..,seed=..` or a CSV path.
    #[arg(long, default_value = DEFAULT_BLOBS)]
    dataset: String,
    /// Which blobs split to train on (CSV files are used whole).
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    /// Hidden widths of the dense/norm/relu blocks.
    #[arg(long, value_delimiter = ',', default_value = "64,64,64")]
    hidden: Vec<usize>,
    /// Classifier bias (off by default).
    #[arg(long)]
    bias: bool,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ShiftArgs {
    /// `blobs:...` spec or CSV path; blobs must match the model's dimensions.
    #[arg(long, default_value = DEFAULT_BLOBS)]
    dataset: String,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    #[arg(long, value_enum, default_value_t = CorruptionArg::GaussianNoise)]
    corruption: CorruptionArg,
    /// 0 (clean) to 5.
    #[arg(long, default_value_t = 5)]
    severity: u8,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct AdaptArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    shift: ShiftArgs,
    #[arg(long, value_enum, default_value_t = LossArg::Comm)]
    loss: LossArg,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, value_enum, default_value_t = ParamsArg::Affine)]
    params: ParamsArg,
    #[arg(long, value_enum, default_value_t = StatsArg::Batch)]
    stats: StatsArg,
    #[arg(long, value_enum, default_value_t = ScoringArg::BeforeUpdate)]
    scoring: ScoringArg,
    #[arg(long, default_value = "report.csv")]
    report: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    shift: ShiftArgs,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    batch_sizes: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "em,comm")]
    losses: Vec<LossArg>,
    /// Inclusive range `a..b` or a comma list; each seed reshuffles the stream
    /// and redraws the corruption.
    #[arg(long, default_value = "1..10")]
    seeds: String,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, value_enum, default_value_t = ParamsArg::Affine)]
    params: ParamsArg,
    #[arg(long, value_enum, default_value_t = StatsArg::Batch)]
    stats: StatsArg,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SimplexArgs {
    #[arg(long, value_enum, default_value_t = TraceLossArg::Comm)]
    loss: TraceLossArg,
    /// Initial probabilities `p0,p1,p2`.
    #[arg(long, value_delimiter = ',', default_value = "0.4568,0.4433,0.0999")]
    init: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = ParametrizationArg::Feature)]
    parametrization: ParametrizationArg,
    #[arg(long, default_value = "trace.csv")]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct DiagnoseArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    shift: ShiftArgs,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, value_enum, default_value_t = StatsArg::Running)]
    stats: StatsArg,
    #[arg(long, default_value = "hist.csv")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    #[arg(long, value_enum, default_value_t = Split::All)]
    split: Split,
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,
}

fn resolve(global: &Global, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        global.out_dir.join(path)
    }
}

/// Write the resolved configuration as `<stem>.config.json` beside `output`.
fn write_resolved(global: &Global, command: &str, args: &impl Serialize, output: &Path) -> Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("command".into(), Value::String(command.into()));
    for v in [serde_json::to_value(global)?, serde_json::to_value(args)?] {
        if let Value::Object(m) = v {
            map.extend(m);
        }
    }
    // absolute paths keep the file usable from any working directory
    for key in ["model", "out-dir", "dataset"] {
        if let Some(Value::String(p)) = map.get(key) {
            if Path::new(p).exists() {
                let abs = std::path::absolute(p)?;
                map.insert(key.into(), Value::String(abs.to_string_lossy().into_owned()));
            }
        }
    }
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let path = output.with_file_name(format!("{stem}.config.json"));
    let mut text = serde_json::to_string_pretty(&Value::Object(map))?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    load_checkpoint(path).with_context(|| format!("--model {}", path.display()))
}

fn shifted(model: &Model, shift: &ShiftArgs, seed: u64) -> Result<LabeledData> {
    let schema = CsvSchema { n_classes: Some(model.classes()), dim: Some(model.input_dim()) };
    let data = dataset::load(&shift.dataset, shift.split, seed, schema)?;
    if data.dim() != model.input_dim() {
        bail!("--dataset has {} features but the model expects {}", data.dim(), model.input_dim());
    }
    let spec = CorruptionSpec { kind: shift.corruption.into(), severity: shift.severity, seed };
    apply_corruption(&data, &spec).context("--severity")
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || format!("--seeds: `{s}` is not `a..b` or a comma list");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().with_context(bad)?, b.trim().parse().with_context(bad)?);
        (a..=b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().with_context(bad)).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        bail!("--seeds: empty range `{s}`");
    }
    Ok(seeds)
}

fn prepare_out(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn train(g: &Global, a: &TrainArgs) -> Result<String> {
    let out = resolve(g, &a.out);
    prepare_out(&out)?;
    let data = dataset::load(&a.dataset, a.split, g.seed, CsvSchema::default())?;
    let mut widths = vec![data.dim()];
    widths.extend(&a.hidden);
    let mut model = init_model(&ModelSpec { widths, classes: data.n_classes(), bias: a.bias, seed: g.seed })?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        sgd: SgdConfig { learning_rate: a.lr, momentum: a.momentum, weight_decay: a.weight_decay },
        batch_size: a.batch_size,
        seed: g.seed,
    };
    let summary = train_source(&mut model, &data, &cfg)?;
    save_checkpoint(&model, &out)?;
    write_resolved(g, "train-source", a, &out)?;
    let last = summary.epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "train-source: train_err={:.4} final_loss={last:.4} epochs={} samples={} out={}",
        summary.final_train_error,
        a.epochs,
        data.len(),
        out.display()
    ))
}

fn adapt(g: &Global, a: &AdaptArgs) -> Result<String> {
    let out = resolve(g, &a.report);
    prepare_out(&out)?;
    let mut model = load_model(&a.model)?;
    let data = shifted(&model, &a.shift, g.seed)?;
    let cfg = AdaptConfig {
        loss: a.loss.into(),
        selector: a.params.into(),
        sgd: SgdConfig { learning_rate: a.lr, momentum: a.momentum, weight_decay: a.weight_decay },
        batch_size: a.batch_size,
        stats: a.stats.into(),
        record_entropy_trace: false,
        seed: g.seed,
        scoring: match a.scoring {
            ScoringArg::BeforeUpdate => Scoring::BeforeUpdate,
            ScoringArg::AfterUpdate => Scoring::AfterUpdate,
        },
    };
    let report = adapt_dataset(&mut model, &data, &cfg)?;
    report.write_csv(&out)?;
    write_resolved(g, "adapt", a, &out)?;
    let err = report.cumulative_top1_error.map_or("undefined".to_string(), |e| format!("{e:.4}"));
    Ok(format!(
        "adapt: loss={} final_err={err} batches={} dropped={} warnings={} report={}",
        AdaptLoss::from(a.loss).name(),
        report.per_batch.len(),
        report.dropped,
        report.clamp_warnings,
        out.display()
    ))
}

fn sweep(g: &Global, a: &SweepArgs) -> Result<String> {
    let out = resolve(g, &a.out);
    prepare_out(&out)?;
    let model = load_model(&a.model)?;
    let seeds = parse_seeds(&a.seeds)?;
    let losses: Vec<AdaptLoss> = a.losses.iter().map(|&l| l.into()).collect();
    let base = AdaptConfig {
        selector: a.params.into(),
        sgd: SgdConfig { learning_rate: a.lr, momentum: a.momentum, weight_decay: 0.0 },
        stats: a.stats.into(),
        ..AdaptConfig::default()
    };
    // validate shared inputs once so a bad flag is a validation error, not a failed cell
    shifted(&model, &a.shift, seeds[0])?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = g.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let table = pool
        .build()?
        .install(|| batch_sweep(&model, |s| shifted(&model, &a.shift, s).map_err(to_lab), &a.batch_sizes, &losses, &seeds, &base));
    write_bytes(&out, &table.to_csv()?)?;
    if let Some(svg) = &a.svg {
        let svg = resolve(g, svg);
        prepare_out(&svg)?;
        write_bytes(&svg, sweep_svg(&table).as_bytes())?;
    }
    write_resolved(g, "sweep", a, &out)?;
    let failed = table.failed().count();
    if let Some(row) = table.failed().next() {
        eprintln!("sweep: {failed} failed cell(s); first: {} b={} seed={}: {}", row.loss, row.batch_size, row.seed, row.failure.as_deref().unwrap_or(""));
    }
    Ok(format!("sweep: cells={} failed={failed} out={}", table.rows.len(), out.display()))
}

fn to_lab(e: anyhow::Error) -> otta_lab::Error {
    match e.downcast::<otta_lab::Error>() {
        Ok(e) => e,
        Err(e) => otta_lab::Error::Malformed(format!("{e:#}")),
    }
}

fn simplex(g: &Global, a: &SimplexArgs) -> Result<String> {
    let out = resolve(g, &a.out);
    prepare_out(&out)?;
    let [p0, p1, p2] = a.init[..] else {
        bail!("--init needs exactly three probabilities, got {}", a.init.len());
    };
    let par = match a.parametrization {
        ParametrizationArg::Feature => Parametrization::Feature,
        ParametrizationArg::Logit => Parametrization::Logit,
    };
    let trace = simplex_trace(a.loss.into(), [p0, p1, p2], a.lr, a.steps, par).context("--init")?;
    write_bytes(&out, &trace_csv(&trace)?)?;
    if let Some(svg) = &a.svg {
        let svg = resolve(g, svg);
        prepare_out(&svg)?;
        write_bytes(&svg, trace_svg(&trace).as_bytes())?;
    }
    write_resolved(g, "simplex", a, &out)?;
    let (first, last) = (&trace.steps[0], &trace.steps[trace.steps.len() - 1]);
    Ok(format!(
        "simplex: loss={} steps={} entropy={:.4}->{:.4} pred={}->{} out={}",
        LossKind::from(a.loss),
        a.steps,
        first.entropy,
        last.entropy,
        first.pred_class,
        last.pred_class,
        out.display()
    ))
}

fn diagnose(g: &Global, a: &DiagnoseArgs) -> Result<String> {
    let out = resolve(g, &a.out);
    prepare_out(&out)?;
    let model = load_model(&a.model)?;
    let data = shifted(&model, &a.shift, g.seed)?;
    let (h_entropy, h_cos) = correctness_histograms(&model, &data, a.bins, a.stats.into())?;
    write_bytes(&out, &histogram_csv(&[h_entropy.clone(), h_cos])?)?;
    write_resolved(g, "diagnose", a, &out)?;
    let wrong: usize = h_entropy.count_incorrect.iter().sum();
    Ok(format!(
        "diagnose: samples={} err={:.4} bins={} out={}",
        data.len(),
        wrong as f64 / data.len() as f64,
        a.bins,
        out.display()
    ))
}

fn gen_data(g: &Global, a: &GenDataArgs) -> Result<String> {
    let out = resolve(g, &a.out);
    prepare_out(&out)?;
    let spec = format!("blobs:C={},d={},m={},spread={},seed={}", a.classes, a.dim, a.per_class, a.spread, g.seed);
    let data = dataset::load(&spec, a.split, g.seed, CsvSchema::default())?;
    write_csv_dataset(&data, &out)?;
    write_resolved(g, "gen-data", a, &out)?;
    Ok(format!("gen-data: samples={} classes={} dim={} out={}", data.len(), a.classes, a.dim, out.display()))
}

fn run(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    match &cli.command {
        Command::TrainSource(a) => train(g, a),
        Command::Adapt(a) => adapt(g, a),
        Command::Sweep(a) => sweep(g, a),
        Command::Simplex(a) => simplex(g, a),
        Command::Diagnose(a) => diagnose(g, a),
        Command::GenData(a) => gen_data(g, a),
    }
}

fn parse(argv: &[OsString]) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

const SUBCOMMANDS: [&str; 6] = ["train-source", "adapt", "sweep", "simplex", "diagnose", "gen-data"];

/// The value of `--config` and the subcommand name, scanned before parsing so
/// that flags required by the subcommand may come from the file.
fn config_request(argv: &[OsString]) -> Option<(PathBuf, String)> {
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let path = args.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config=").map(PathBuf::from).or_else(|| (a == "--config").then(|| args.get(i + 1).map(PathBuf::from)).flatten())
    })?;
    let command = args.iter().find(|a| SUBCOMMANDS.contains(&a.as_str()))?.clone();
    Some((path, command))
}

/// Parse argv with any `--config` file spliced in ahead of the explicit flags.
fn parse_layered(argv: Vec<OsString>) -> Result<Cli, ExitCode> {
    let clap_exit = |e: clap::Error| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    };
    let argv = match config_request(&argv) {
        None => argv,
        Some((path, command)) => {
            match layering::read_config(&path).and_then(|cfg| layering::splice(&argv, &command, &cfg)) {
                Ok(spliced) => spliced,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return Err(ExitCode::from(1));
                }
            }
        }
    };
    parse(&argv).map_err(clap_exit)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numeric = e.chain().filter_map(|c| c.downcast_ref::<otta_lab::Error>()).any(otta_lab::Error::is_numeric_failure);
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match parse_layered(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
