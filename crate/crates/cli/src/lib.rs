//! The `oamncc` command line: batch runs, the overboard sweep, distribution
//! comparison and preset listing.

pub mod format;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use oamncc_core::config::{parse_kv, Config, PRESET_NAMES};
use oamncc_core::montecarlo::{
    compare, run_batch, run_single, sweep_overboard, BatchSpec, ComparisonReport, OutcomeDistribution, DEFAULT_ALPHA,
    DEFAULT_TRIALS,
};
use oamncc_core::scenarios::metric_names;
use oamncc_core::strategies::{policy_by_name, STRATEGY_NAMES};
use oamncc_core::Error;

pub const SEED_ENV: &str = "OAMNCC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Internal = 1,
    Config = 2,
    Sampling = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(e) => match e.root() {
                Error::InvalidConfiguration(_) | Error::InvalidArgument(_) | Error::Comparison(_) => ExitCode::Config,
                Error::SamplingFailure(_) => ExitCode::Sampling,
                _ => ExitCode::Internal,
            },
            CliError::Config(_) => ExitCode::Config,
            CliError::Io { .. } | CliError::Internal(_) => ExitCode::Internal,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "oamncc", version, about = "Seeded maritime constraint-conflict simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of trials and write per-trial CSV plus summary.json.
    Run(RunArgs),
    /// Sweep overboard policies over margins and ratios.
    Sweep(SweepArgs),
    /// Compare one metric between two runs with a two-sample KS test.
    Compare(CompareArgs),
    /// List presets, strategies and metrics.
    Presets,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario preset; overrides a preset named in --config.
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat key/value config file, or a summary.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter override `key=value`; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    /// Master seed; falls back to $OAMNCC_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub strategy: String,
    /// Re-run a single trial by index and print its record instead of writing files.
    #[arg(long, value_name = "INDEX")]
    pub replay: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated RTB confidence margins.
    #[arg(long, default_value = "0.5,0.75,0.9,0.95")]
    pub margins: String,
    /// Comma-separated rescue/RTB value ratios.
    #[arg(long, default_value = "0.1,0.5,1,2,5,10")]
    pub ratios: String,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Strategy of run A.
    #[arg(long, required_unless_present = "csv_a")]
    pub a: Option<String>,
    /// Strategy of run B.
    #[arg(long, required_unless_present = "csv_b")]
    pub b: Option<String>,
    /// Preset of run B when it differs from run A.
    #[arg(long)]
    pub preset_b: Option<String>,
    /// Override applied to run A only.
    #[arg(long = "set-a", value_name = "KEY=VALUE")]
    pub set_a: Vec<String>,
    /// Override applied to run B only.
    #[arg(long = "set-b", value_name = "KEY=VALUE")]
    pub set_b: Vec<String>,
    /// Read run A from an existing trials CSV instead of running it.
    #[arg(long)]
    pub csv_a: Option<PathBuf>,
    #[arg(long)]
    pub csv_b: Option<PathBuf>,
    /// Metric to compare; defaults to the scenario's first metric.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

/// Writes to stdout. A reader that hangs up early (`| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Internal(format!("writing stdout: {e}"))),
        _ => Ok(()),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr on one line.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
        Command::Compare(a) => cmd_compare(a).map(|_| ()),
        Command::Presets => {
            emit(&presets_listing())
        }
    };
    match result {
        Ok(()) => ExitCode::Ok as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn split_override(s: &str) -> CliResult<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{s}' must look like key=value")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Key/value pairs of a config file: flat text, or the `config` object of
/// a summary.json.
fn config_file_pairs(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = read(path)?;
    if !text.trim_start().starts_with('{') {
        return Ok(parse_kv(&text)?);
    }
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let obj = doc
        .get("config")
        .and_then(Value::as_object)
        .ok_or_else(|| CliError::Config(format!("{}: no \"config\" object", path.display())))?;
    obj.iter()
        .map(|(k, v)| match v {
            Value::String(s) => Ok((k.clone(), s.clone())),
            other => Err(CliError::Config(format!("{}: config value for '{k}' is not a string: {other}", path.display()))),
        })
        .collect()
}

/// Resolves the configuration with precedence flag > config file > preset
/// default.
pub fn resolve_config(preset: Option<&str>, config: Option<&Path>, overrides: &[String]) -> CliResult<Config> {
    let file_pairs = match config {
        Some(path) => config_file_pairs(path)?,
        None => Vec::new(),
    };
    let file_preset = file_pairs.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
    let name = preset
        .or(file_preset)
        .ok_or_else(|| CliError::Config("no preset: pass --preset or name one in --config".into()))?;
    let mut cfg = Config::preset(name)?;
    for (k, v) in file_pairs.iter().filter(|(k, _)| k != "preset") {
        cfg.set(k, v)?;
    }
    for o in overrides {
        let (k, v) = split_override(o)?;
        cfg.set(&k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `--seed`, else `$OAMNCC_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })
}

/// Strategy names may contain `:`; file names use `_` instead.
pub fn file_stem(preset: &str, strategy: &str, seed: u64) -> String {
    let clean = |s: &str| -> String {
        s.chars().map(|c| if c.is_ascii_alphanumeric() || "-._".contains(c) { c } else { '_' }).collect()
    };
    format!("{}_{}_{seed}", clean(preset), clean(strategy))
}

fn config_json(cfg: &Config) -> Value {
    let mut map = BTreeMap::new();
    map.insert("preset".to_owned(), cfg.preset.clone());
    for (k, v) in cfg.entries() {
        map.insert(k.to_owned(), v);
    }
    json!(map)
}

fn summary_json(spec: &BatchSpec, distributions: &[OutcomeDistribution]) -> CliResult<String> {
    let mut metrics = serde_json::Map::new();
    for d in distributions {
        let s = oamncc_core::stats::summarize(&d.samples)?;
        metrics.insert(d.metric.clone(), serde_json::to_value(s).map_err(|e| CliError::Internal(e.to_string()))?);
    }
    let doc = json!({
        "preset": spec.config.preset,
        "scenario": spec.config.scenario.name(),
        "strategy": spec.strategy,
        "master_seed": spec.master_seed,
        "n_trials": spec.n_trials,
        "metrics": metrics,
        "config": config_json(&spec.config),
    });
    serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| CliError::Internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub distributions: Vec<OutcomeDistribution>,
}

fn batch_spec(common: &CommonArgs, cfg: Config, strategy: &str) -> CliResult<BatchSpec> {
    Ok(BatchSpec {
        config: cfg,
        strategy: strategy.to_owned(),
        n_trials: common.trials,
        master_seed: resolve_seed(common.seed)?,
        workers: common.workers,
    })
}

/// Runs the batch, then writes `<out>/<preset>_<strategy>_<seed>.csv` and
/// `<out>/summary.json`. With `--replay` only the one trial is run and
/// printed.
pub fn cmd_run(args: &RunArgs) -> CliResult<Option<RunReport>> {
    let c = &args.common;
    let cfg = resolve_config(c.preset.as_deref(), c.config.as_deref(), &c.overrides)?;
    let spec = batch_spec(c, cfg, &args.strategy)?;
    if let Some(index) = args.replay {
        let policy = policy_by_name(&spec.strategy)?;
        policy.check_applicable(spec.config.scenario)?;
        let outcome = run_single(&spec.config, &policy, spec.master_seed, index)?;
        let metrics: BTreeMap<_, _> = outcome.metrics.iter().map(|(k, v)| (*k, *v)).collect();
        let doc = json!({ "trial": index, "seed": outcome.seed, "metrics": metrics, "pipeline": outcome.pipeline });
        emit(&(serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))? + "\n"))?;
        return Ok(None);
    }
    let batch = run_batch(&spec)?;
    ensure_dir(&c.out)?;
    let names = metric_names(spec.config.scenario);
    let csv_path = c.out.join(format!("{}.csv", file_stem(&spec.config.preset, &spec.strategy, spec.master_seed)));
    let summary_path = c.out.join("summary.json");
    write(&csv_path, &format::trials_csv(names, &batch.outcomes))?;
    write(&summary_path, &summary_json(&spec, &batch.distributions)?)?;
    for d in &batch.distributions {
        let s = oamncc_core::stats::summarize(&d.samples)?;
        emit(&format!(
            "{:<26} mean {:>14} median {:>14} q25 {:>14} q75 {:>14}\n",
            d.metric,
            format::fmt_g(s.mean),
            format::fmt_g(s.median),
            format::fmt_g(s.q25),
            format::fmt_g(s.q75)
        ))?;
    }
    emit(&format!("wrote {} and {}\n", csv_path.display(), summary_path.display()))?;
    Ok(Some(RunReport { csv_path, summary_path, distributions: batch.distributions }))
}

fn parse_grid(flag: &str, text: &str) -> CliResult<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("--{flag}: '{s}' is not a number"))))
        .collect::<CliResult<_>>()?;
    if values.is_empty() {
        return Err(CliError::Config(format!("--{flag} must list at least one value")));
    }
    Ok(values)
}

/// Writes `sweep.csv` and `sweep.svg`; returns the CSV path.
pub fn cmd_sweep(args: &SweepArgs) -> CliResult<PathBuf> {
    let c = &args.common;
    let preset = c.preset.clone().or_else(|| c.config.is_none().then(|| "overboard".to_owned()));
    let cfg = resolve_config(preset.as_deref(), c.config.as_deref(), &c.overrides)?;
    let margins = parse_grid("margins", &args.margins)?;
    let ratios = parse_grid("ratios", &args.ratios)?;
    let seed = resolve_seed(c.seed)?;
    let points = sweep_overboard(&cfg, &margins, &ratios, c.trials, seed, c.workers)?;
    ensure_dir(&c.out)?;
    let csv_path = c.out.join("sweep.csv");
    write(&csv_path, &format::sweep_csv(&points))?;
    write(&c.out.join("sweep.svg"), &svg::sweep_scatter(&points))?;
    emit(&format!("wrote {} ({} rows) and sweep.svg\n", csv_path.display(), points.len()))?;
    Ok(csv_path)
}

fn side(
    common: &CommonArgs,
    preset: Option<&str>,
    strategy: Option<&str>,
    extra: &[String],
    csv: Option<&Path>,
    metric: Option<&str>,
) -> CliResult<OutcomeDistribution> {
    if let Some(path) = csv {
        let metric = metric.ok_or_else(|| CliError::Config("--metric is required when reading a CSV".into()))?;
        let samples = format::read_metric_column(&read(path)?, metric).map_err(|e| {
            CliError::Core(Error::Comparison(format!("{}: {e}", path.display())))
        })?;
        return Ok(OutcomeDistribution {
            metric: metric.to_owned(),
            samples,
            preset: String::new(),
            strategy: path.display().to_string(),
            master_seed: 0,
        });
    }
    let strategy = strategy.ok_or_else(|| CliError::Config("a strategy is required for each side".into()))?;
    let overrides: Vec<String> = common.overrides.iter().chain(extra).cloned().collect();
    let cfg = resolve_config(preset, common.config.as_deref(), &overrides)?;
    let metric = metric.unwrap_or(metric_names(cfg.scenario)[0]).to_owned();
    let batch = run_batch(&batch_spec(common, cfg, strategy)?)?;
    batch.distribution(&metric).cloned().ok_or_else(|| {
        CliError::Core(Error::Comparison(format!("strategy '{strategy}' does not produce metric '{metric}'")))
    })
}

/// Compares run A against run B, writing `compare.json` and `compare.svg`.
pub fn cmd_compare(args: &CompareArgs) -> CliResult<ComparisonReport> {
    let c = &args.common;
    let a = side(c, c.preset.as_deref(), args.a.as_deref(), &args.set_a, args.csv_a.as_deref(), args.metric.as_deref())?;
    let preset_b = args.preset_b.as_deref().or(c.preset.as_deref());
    let metric_b = args.metric.as_deref().or(Some(a.metric.as_str()));
    let b = side(c, preset_b, args.b.as_deref(), &args.set_b, args.csv_b.as_deref(), metric_b)?;
    let report = compare(&a, &b, args.alpha)?;
    let doc = json!({
        "meanA": report.mean_a,
        "meanB": report.mean_b,
        "D": report.statistic,
        "p": report.p_value,
        "significant": report.significant,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    ensure_dir(&c.out)?;
    write(&c.out.join("compare.json"), &text)?;
    let label = |d: &OutcomeDistribution, k: &str| format!("{k}: {}", d.strategy);
    let (la, lb) = (label(&a, "A"), label(&b, "B"));
    write(
        &c.out.join("compare.svg"),
        &svg::strip_plot(&format!("{} (KS p = {})", report.metric, format::fmt_g(report.p_value)), &report.metric, (&la, &a.samples), (&lb, &b.samples)),
    )?;
    emit(&text)?;
    Ok(report)
}

pub fn presets_listing() -> String {
    let mut out = String::from("presets:\n");
    for name in PRESET_NAMES {
        let cfg = Config::preset(name).expect("built-in preset");
        out.push_str(&format!("  {name:<16} scenario {:<10} metrics {}\n", cfg.scenario.name(), metric_names(cfg.scenario).join(",")));
    }
    out.push_str("strategies:\n");
    for s in STRATEGY_NAMES {
        out.push_str(&format!("  {s}\n"));
    }
    out
}
