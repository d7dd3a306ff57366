//! Scenario samplers and trial runners.

pub mod adrift;
pub mod overboard;
pub mod piracy;

use serde::Serialize;

use crate::config::{Config, ScenarioKind};
use crate::conflict::{monitor_resolution, ConflictCategory, PipelineTrace, ResolutionStatus};
use crate::error::Result;
use crate::sim::{seeded_rng, WorldState};
use crate::strategies::Policy;

pub use adrift::{sample_adrift, AdriftInstance};
pub use overboard::{sample_overboard, OverboardInstance};
pub use piracy::{apply_memo, sample_piracy, CapabilityMemo, PiracyInstance};

/// What the conflict pipeline saw and chose in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRecord {
    pub category: ConflictCategory,
    pub intra_constraint: bool,
    pub novel: bool,
    pub admitted_items: usize,
    /// `(candidate id, mitigation utility)` in generation order.
    pub candidates: Vec<(String, f64)>,
    /// `None` when nothing was viable and the agent escalated.
    pub selected: Option<String>,
    pub resolution: Option<ResolutionStatus>,
}

impl PipelineRecord {
    pub fn new<T>(trace: &PipelineTrace<T>, end_state: &WorldState) -> Self {
        Self {
            category: trace.conflict.category,
            intra_constraint: trace.conflict.structure.intra_constraint,
            novel: trace.conflict.novel,
            admitted_items: trace.admitted.len(),
            candidates: trace.candidates.iter().map(|c| (c.id.clone(), c.mitigation_utility)).collect(),
            selected: trace.selected.as_ref().map(|c| c.id.clone()),
            resolution: trace.selected.as_ref().map(|c| monitor_resolution(end_state, c, &trace.conflict)),
        }
    }

    pub fn candidate_utility(&self, id: &str) -> Option<f64> {
        self.candidates.iter().find(|(c, _)| c == id).map(|(_, u)| *u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    /// Metric values in [`metric_names`] order; flags are 0 or 1.
    pub metrics: Vec<(&'static str, f64)>,
    pub pipeline: Option<PipelineRecord>,
}

impl TrialOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

pub fn metric_names(kind: ScenarioKind) -> &'static [&'static str] {
    match kind {
        ScenarioKind::Overboard => &overboard::METRICS,
        ScenarioKind::Piracy => &piracy::METRICS,
        ScenarioKind::Adrift => &adrift::METRICS,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Overboard(OverboardInstance),
    Piracy(PiracyInstance),
    Adrift(AdriftInstance),
}

impl Instance {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Instance::Overboard(_) => ScenarioKind::Overboard,
            Instance::Piracy(_) => ScenarioKind::Piracy,
            Instance::Adrift(_) => ScenarioKind::Adrift,
        }
    }
}

/// Samples the scenario instance named by `cfg` from the `instance` stream
/// of `seed`.
pub fn sample_instance(cfg: &Config, seed: u64) -> Result<Instance> {
    let mut rng = seeded_rng(seed, "instance");
    Ok(match cfg.scenario {
        ScenarioKind::Overboard => Instance::Overboard(sample_overboard(&mut rng, cfg, seed)),
        ScenarioKind::Piracy => Instance::Piracy(sample_piracy(&mut rng, cfg, seed)?),
        ScenarioKind::Adrift => Instance::Adrift(sample_adrift(&mut rng, cfg, seed)?),
    })
}

/// Runs the conflict pipeline and the simulation for one instance.
/// `seed` keys every stochastic stream of the trial dynamics.
pub fn run_trial(instance: &Instance, policy: &Policy, cfg: &Config, seed: u64) -> Result<TrialOutcome> {
    policy.check_applicable(instance.kind())?;
    match instance {
        Instance::Overboard(i) => overboard::run_overboard(i, policy, cfg, seed),
        Instance::Piracy(i) => piracy::run_piracy(i, policy, cfg, seed),
        Instance::Adrift(i) => adrift::run_adrift(i, policy, cfg, seed),
    }
}
