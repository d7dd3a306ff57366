//! Seeded batches of trials, the overboard policy sweep and distribution
//! comparison.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, ScenarioKind};
use crate::error::{Error, Result};
use crate::scenarios::{metric_names, run_trial, sample_instance, TrialOutcome};
use crate::sim::derive_seed;
use crate::stats::{ks_two_sample, summarize};
use crate::strategies::{overboard_utilitarian, policy_by_name, wrap_duty_once_spotted, Policy};

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MARGINS: [f64; 4] = [0.50, 0.75, 0.90, 0.95];
pub const DEFAULT_RATIOS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
/// Ratio of the policy wrapped by the duty-once-spotted rule in sweeps:
/// rescue and RTB weighted equally.
pub const DUTY_RATIO: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub config: Config,
    pub strategy: String,
    pub n_trials: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl BatchSpec {
    pub fn new(preset: &str, strategy: &str, n_trials: usize, master_seed: u64) -> Result<Self> {
        Ok(Self {
            config: Config::preset(preset)?,
            strategy: strategy.to_owned(),
            n_trials,
            master_seed,
            workers: None,
        })
    }

    pub fn with_overrides<K: AsRef<str>, V: AsRef<str>>(mut self, overrides: &[(K, V)]) -> Result<Self> {
        for (k, v) in overrides {
            self.config.set(k.as_ref(), v.as_ref())?;
        }
        self.config.validate()?;
        Ok(self)
    }
}

/// One metric's samples, in trial-index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    pub metric: String,
    pub samples: Vec<f64>,
    pub preset: String,
    pub strategy: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub outcomes: Vec<TrialOutcome>,
    pub distributions: Vec<OutcomeDistribution>,
}

impl BatchResult {
    pub fn distribution(&self, metric: &str) -> Option<&OutcomeDistribution> {
        self.distributions.iter().find(|d| d.metric == metric)
    }
}

/// Seed of trial `index`: keys every stochastic stream of that trial.
pub fn trial_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, index as u64)
}

/// Seed of the scenario instance for a trial. Shared across strategies
/// unless `batch.resample` is set.
pub fn instance_seed(cfg: &Config, trial_seed: u64, strategy: &str) -> u64 {
    if !cfg.resample {
        return trial_seed;
    }
    let tag = strategy.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    derive_seed(trial_seed, tag)
}

/// Trial `index` of a batch, run on its own.
pub fn run_single(cfg: &Config, policy: &Policy, master_seed: u64, index: usize) -> Result<TrialOutcome> {
    let seed = trial_seed(master_seed, index);
    let run = || {
        let instance = sample_instance(cfg, instance_seed(cfg, seed, policy.name()))?;
        run_trial(&instance, policy, cfg, seed)
    };
    run().map_err(|source| Error::TrialFailed { index, seed, source: Box::new(source) })
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfiguration(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn run_trials(cfg: &Config, policy: &Policy, n: usize, master_seed: u64, workers: Option<usize>) -> Result<Vec<TrialOutcome>> {
    let results: Vec<Result<TrialOutcome>> = with_workers(workers, || {
        (0..n).into_par_iter().map(|i| run_single(cfg, policy, master_seed, i)).collect()
    })?;
    results.into_iter().collect()
}

/// Runs `n_trials` independent trials in parallel and gathers every
/// metric's distribution. The first failing trial (by index) aborts the
/// batch and carries its seed.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchResult> {
    if spec.n_trials == 0 {
        return Err(Error::InvalidConfiguration("a batch needs at least one trial".into()));
    }
    spec.config.validate()?;
    let policy = policy_by_name(&spec.strategy)?;
    policy.check_applicable(spec.config.scenario)?;
    let outcomes = run_trials(&spec.config, &policy, spec.n_trials, spec.master_seed, spec.workers)?;
    let distributions = metric_names(spec.config.scenario)
        .iter()
        .map(|&metric| OutcomeDistribution {
            metric: metric.to_owned(),
            samples: outcomes.iter().map(|o| o.metric(metric).expect("declared metric")).collect(),
            preset: spec.config.preset.clone(),
            strategy: spec.strategy.clone(),
            master_seed: spec.master_seed,
        })
        .collect();
    Ok(BatchResult { outcomes, distributions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPolicy {
    Utilitarian,
    DutyOnceSpotted,
}

impl SweepPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SweepPolicy::Utilitarian => "utilitarian",
            SweepPolicy::DutyOnceSpotted => "duty",
        }
    }
}

/// Counts out of `n_trials` for one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub margin: f64,
    pub ratio: f64,
    pub policy: SweepPolicy,
    pub rescues: usize,
    pub rtb_successes: usize,
    pub spotted: usize,
    pub abandoned_after_spotting: usize,
}

fn count(outcomes: &[TrialOutcome], metric: &str) -> usize {
    outcomes.iter().filter(|o| o.metric(metric) == Some(1.0)).count()
}

/// One point per `(margin, ratio)` for the utilitarian policy, then one
/// duty-once-spotted point per margin wrapping the [`DUTY_RATIO`] policy.
pub fn sweep_overboard(
    cfg: &Config,
    margins: &[f64],
    ratios: &[f64],
    n_trials: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    if cfg.scenario != ScenarioKind::Overboard {
        return Err(Error::InvalidConfiguration(format!("sweeps need the overboard scenario, not {}", cfg.scenario.name())));
    }
    if margins.is_empty() || ratios.is_empty() || n_trials == 0 {
        return Err(Error::InvalidArgument("sweep grids and trial count must be non-empty".into()));
    }
    cfg.validate()?;
    let mut cells = Vec::new();
    for &m in margins {
        for &r in ratios {
            cells.push((m, r, SweepPolicy::Utilitarian));
        }
    }
    for &m in margins {
        cells.push((m, DUTY_RATIO, SweepPolicy::DutyOnceSpotted));
    }
    cells
        .into_iter()
        .map(|(margin, ratio, kind)| {
            let inner = overboard_utilitarian(margin, ratio)?;
            let policy = match kind {
                SweepPolicy::Utilitarian => inner,
                SweepPolicy::DutyOnceSpotted => wrap_duty_once_spotted(inner)?,
            };
            let outcomes = run_trials(cfg, &policy, n_trials, master_seed, workers)?;
            Ok(SweepPoint {
                margin,
                ratio,
                policy: kind,
                rescues: count(&outcomes, "rescued"),
                rtb_successes: count(&outcomes, "rtb_success"),
                spotted: count(&outcomes, "sailor_spotted"),
                abandoned_after_spotting: count(&outcomes, "abandoned_after_spotting"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub median_a: f64,
    pub median_b: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

/// Summary statistics and a two-sample KS test for two distributions of
/// the same metric.
pub fn compare(a: &OutcomeDistribution, b: &OutcomeDistribution, alpha: f64) -> Result<ComparisonReport> {
    if a.metric != b.metric {
        return Err(Error::Comparison(format!("metric '{}' cannot be compared with '{}'", a.metric, b.metric)));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Comparison(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let wrap = |e: Error| Error::Comparison(e.to_string());
    let sa = summarize(&a.samples).map_err(wrap)?;
    let sb = summarize(&b.samples).map_err(wrap)?;
    let ks = ks_two_sample(&a.samples, &b.samples).map_err(wrap)?;
    Ok(ComparisonReport {
        metric: a.metric.clone(),
        mean_a: sa.mean,
        mean_b: sb.mean,
        median_a: sa.median,
        median_b: sb.median,
        statistic: ks.statistic,
        p_value: ks.p_value,
        alpha,
        significant: ks.p_value < alpha,
    })
}
