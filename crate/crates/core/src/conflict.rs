//! Constraint representation, conflict classification and the five-step
//! mitigation pipeline (recognize novelty, assess structure, gate
//! information, propose and select a course of action, monitor).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::config::QualityConfig;
use crate::error::{Error, Result};
use crate::sim::{ParticipantStatus, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Duty,
    Order,
    Goal,
    Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Deontic,
    Utilitarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    CommandDirective,
    OfficialRegulation,
    Sensor,
    SocialMedia,
    Unknown,
}

impl Provenance {
    pub const ALL: [Provenance; 5] = [
        Provenance::CommandDirective,
        Provenance::OfficialRegulation,
        Provenance::Sensor,
        Provenance::SocialMedia,
        Provenance::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Provenance::CommandDirective => "command_directive",
            Provenance::OfficialRegulation => "official_regulation",
            Provenance::Sensor => "sensor",
            Provenance::SocialMedia => "social_media",
            Provenance::Unknown => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Option<Provenance> {
        Provenance::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// A duty, order, goal or norm bearing on the agent's behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub id: String,
    pub kind: ConstraintKind,
    pub frame: Frame,
    /// Runtime grounding flags, e.g. `sailor_spotted`.
    pub grounding: BTreeMap<String, bool>,
    pub priority: Option<u32>,
    pub provenance: Option<Provenance>,
}

impl Constraint {
    pub fn new(id: impl Into<String>, kind: ConstraintKind, frame: Frame) -> Self {
        Self {
            id: id.into(),
            kind,
            frame,
            grounding: BTreeMap::new(),
            priority: None,
            provenance: None,
        }
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = Some(priority);
        self
    }

    pub fn with_grounding(mut self, flag: impl Into<String>, value: bool) -> Self {
        self.grounding.insert(flag.into(), value);
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// The same constraint read under another frame (duty → utility).
    pub fn reframed(&self, frame: Frame) -> Constraint {
        Constraint { frame, ..self.clone() }
    }

    /// Lower number = higher priority. `None` unless both carry a priority.
    pub fn priority_cmp(&self, other: &Constraint) -> Option<std::cmp::Ordering> {
        Some(self.priority?.cmp(&other.priority?).reverse())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictCategory {
    Infeasibility,
    Incommensurability,
    TemporalResourceContention,
    SpatialResourceContention,
    CausalPreclusion,
    EpistemicUncertainty,
    ProbabilisticUncertainty,
}

impl ConflictCategory {
    pub fn name(self) -> &'static str {
        match self {
            ConflictCategory::Infeasibility => "infeasibility",
            ConflictCategory::Incommensurability => "incommensurability",
            ConflictCategory::TemporalResourceContention => "temporal-resource-contention",
            ConflictCategory::SpatialResourceContention => "spatial-resource-contention",
            ConflictCategory::CausalPreclusion => "causal-preclusion",
            ConflictCategory::EpistemicUncertainty => "epistemic-uncertainty",
            ConflictCategory::ProbabilisticUncertainty => "probabilistic-uncertainty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ResourceClass {
    Time,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Require,
    Forbid,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prescription {
    pub action: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceDemand {
    pub resource: ResourceClass,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatisfactionEstimate {
    pub value: f64,
    /// Satisfaction depends on stochastic outcomes.
    pub probabilistic: bool,
    /// Satisfaction depends on state the agent has not observed.
    pub unobserved: bool,
}

impl Default for SatisfactionEstimate {
    fn default() -> Self {
        Self { value: 1.0, probabilistic: false, unobserved: false }
    }
}

/// One grounded instance of a constraint, annotated with what the action
/// model knows about satisfying it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintInstance {
    pub instance_id: String,
    pub constraint: Constraint,
    pub prescriptions: Vec<Prescription>,
    /// Unit in which compliance is measured, for utilitarian constraints.
    pub measure: Option<String>,
    pub demands: Vec<ResourceDemand>,
    pub preconditions: Vec<String>,
    /// Facts deleted by the action that satisfies this instance.
    pub deletes: Vec<String>,
    pub satisfaction: SatisfactionEstimate,
}

impl ConstraintInstance {
    pub fn new(instance_id: impl Into<String>, constraint: Constraint) -> Self {
        Self {
            instance_id: instance_id.into(),
            constraint,
            prescriptions: Vec::new(),
            measure: None,
            demands: Vec::new(),
            preconditions: Vec::new(),
            deletes: Vec::new(),
            satisfaction: SatisfactionEstimate::default(),
        }
    }

    pub fn prescribe(mut self, action: impl Into<String>, polarity: Polarity) -> Self {
        self.prescriptions.push(Prescription { action: action.into(), polarity });
        self
    }

    pub fn demand(mut self, resource: ResourceClass, amount: f64) -> Self {
        self.demands.push(ResourceDemand { resource, amount });
        self
    }

    pub fn measured_in(mut self, unit: impl Into<String>) -> Self {
        self.measure = Some(unit.into());
        self
    }

    pub fn requires(mut self, fact: impl Into<String>) -> Self {
        self.preconditions.push(fact.into());
        self
    }

    pub fn deleting(mut self, fact: impl Into<String>) -> Self {
        self.deletes.push(fact.into());
        self
    }

    pub fn satisfaction(mut self, estimate: SatisfactionEstimate) -> Self {
        self.satisfaction = estimate;
        self
    }
}

/// What the scenario's action model makes available.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionModel {
    pub available: BTreeMap<ResourceClass, f64>,
    /// Unordered unit pairs with a known exchange rate.
    pub exchange_rates: BTreeSet<(String, String)>,
}

impl ActionModel {
    pub fn with_resource(mut self, resource: ResourceClass, amount: f64) -> Self {
        self.available.insert(resource, amount);
        self
    }

    pub fn with_exchange(mut self, a: &str, b: &str) -> Self {
        self.exchange_rates.insert((a.to_owned(), b.to_owned()));
        self
    }

    fn commensurable(&self, a: &str, b: &str) -> bool {
        a == b
            || self.exchange_rates.contains(&(a.to_owned(), b.to_owned()))
            || self.exchange_rates.contains(&(b.to_owned(), a.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictStructure {
    pub intra_constraint: bool,
    /// Instance ids, in input order.
    pub participants: Vec<String>,
    /// Constraint ids of the participants as a sorted multiset.
    pub constraint_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictDescriptor {
    pub category: ConflictCategory,
    pub secondary_categories: BTreeSet<ConflictCategory>,
    pub structure: ConflictStructure,
    pub novel: bool,
}

/// Assigns the conflict among `instances` a primary taxonomy leaf.
///
/// Tests run in order: contradictory prescriptions (infeasibility), utility
/// measures with no exchange rate (incommensurability), then joint
/// satisfiability under `model`: a resource that each instance fits alone but
/// not together gives time or space contention, and an action deleting
/// another's precondition gives causal preclusion. Later tests that also hold
/// become secondary categories, as do the uncertainty leaves whenever a
/// satisfaction estimate is probabilistic or rests on unobserved state. If
/// only uncertainty holds it becomes the primary.
pub fn classify_conflict(instances: &[ConstraintInstance], model: &ActionModel) -> Result<ConflictDescriptor> {
    if instances.len() < 2 {
        return Err(Error::NotAConflict(format!(
            "a conflict needs at least two participants, got {}",
            instances.len()
        )));
    }

    let mut fired: Vec<ConflictCategory> = Vec::new();

    if has_contradiction(instances) {
        fired.push(ConflictCategory::Infeasibility);
    }
    if has_incommensurable_measures(instances, model) {
        fired.push(ConflictCategory::Incommensurability);
    }
    for (resource, category) in [
        (ResourceClass::Time, ConflictCategory::TemporalResourceContention),
        (ResourceClass::Space, ConflictCategory::SpatialResourceContention),
    ] {
        if contends_for(instances, model, resource) {
            fired.push(category);
        }
    }
    if has_causal_preclusion(instances) {
        fired.push(ConflictCategory::CausalPreclusion);
    }

    let mut uncertainty = Vec::new();
    if instances.iter().any(|i| i.satisfaction.unobserved) {
        uncertainty.push(ConflictCategory::EpistemicUncertainty);
    }
    if instances.iter().any(|i| i.satisfaction.probabilistic) {
        uncertainty.push(ConflictCategory::ProbabilisticUncertainty);
    }

    let mut ordered = fired.into_iter().chain(uncertainty);
    let category = ordered.next().ok_or_else(|| {
        Error::NotAConflict("participants are jointly satisfiable under the action model".into())
    })?;
    let secondary_categories = ordered.collect();

    let participants: Vec<String> = instances.iter().map(|i| i.instance_id.clone()).collect();
    let mut constraint_ids: Vec<String> = instances.iter().map(|i| i.constraint.id.clone()).collect();
    constraint_ids.sort();
    let intra_constraint = constraint_ids.windows(2).all(|w| w[0] == w[1]);

    Ok(ConflictDescriptor {
        category,
        secondary_categories,
        structure: ConflictStructure { intra_constraint, participants, constraint_ids },
        novel: false,
    })
}

fn has_contradiction(instances: &[ConstraintInstance]) -> bool {
    instances.iter().enumerate().any(|(k, a)| {
        instances[k + 1..].iter().any(|b| {
            a.prescriptions.iter().any(|pa| {
                b.prescriptions.iter().any(|pb| pa.action == pb.action && pa.polarity != pb.polarity)
            })
        })
    })
}

fn has_incommensurable_measures(instances: &[ConstraintInstance], model: &ActionModel) -> bool {
    let measures: Vec<&str> = instances
        .iter()
        .filter(|i| i.constraint.frame == Frame::Utilitarian)
        .filter_map(|i| i.measure.as_deref())
        .collect();
    measures
        .iter()
        .enumerate()
        .any(|(k, a)| measures[k + 1..].iter().any(|b| !model.commensurable(a, b)))
}

fn contends_for(instances: &[ConstraintInstance], model: &ActionModel, resource: ResourceClass) -> bool {
    let Some(&available) = model.available.get(&resource) else {
        return false;
    };
    let demands: Vec<f64> = instances
        .iter()
        .map(|i| i.demands.iter().filter(|d| d.resource == resource).map(|d| d.amount).sum())
        .collect();
    let contenders = demands.iter().filter(|d| **d > 0.0).count();
    contenders >= 2 && demands.iter().all(|d| *d <= available) && demands.iter().sum::<f64>() > available
}

fn has_causal_preclusion(instances: &[ConstraintInstance]) -> bool {
    instances.iter().enumerate().any(|(k, a)| {
        instances.iter().enumerate().any(|(m, b)| {
            k != m && a.deletes.iter().any(|fact| b.preconditions.contains(fact))
        })
    })
}

/// Conflicts the pretrained policy already handles: `(category, multiset of
/// participant constraint ids)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyCoverage {
    entries: BTreeSet<(ConflictCategory, Vec<String>)>,
}

impl PolicyCoverage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cover<S: AsRef<str>>(mut self, category: ConflictCategory, constraint_ids: &[S]) -> Self {
        let mut ids: Vec<String> = constraint_ids.iter().map(|s| s.as_ref().to_owned()).collect();
        ids.sort();
        self.entries.insert((category, ids));
        self
    }

    pub fn covers(&self, category: ConflictCategory, constraint_ids: &[String]) -> bool {
        let mut ids = constraint_ids.to_vec();
        ids.sort();
        self.entries.contains(&(category, ids))
    }
}

pub fn detect_novelty(conflict: &ConflictDescriptor, coverage: &PolicyCoverage) -> bool {
    !coverage.covers(conflict.category, &conflict.structure.constraint_ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum KnowledgeTag {
    /// Constraints & frames.
    CF,
    /// Expressive preferences.
    EP,
    /// Action affordances.
    AA,
    /// Dynamic situation model.
    SM,
    /// Information quality.
    IQ,
    /// Mitigation utility.
    MU,
    /// Conflict structure.
    CS,
}

impl KnowledgeTag {
    pub const ALL: [KnowledgeTag; 7] = [
        KnowledgeTag::CF,
        KnowledgeTag::EP,
        KnowledgeTag::AA,
        KnowledgeTag::SM,
        KnowledgeTag::IQ,
        KnowledgeTag::MU,
        KnowledgeTag::CS,
    ];
}

pub fn tags(list: &[KnowledgeTag]) -> BTreeSet<KnowledgeTag> {
    list.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformationItem<T> {
    pub content: T,
    pub provenance: Provenance,
    pub timestamp: u32,
    pub quality: f64,
}

impl<T> InformationItem<T> {
    /// Quality comes from the provenance through `quality_map`.
    pub fn new(content: T, provenance: Provenance, timestamp: u32, quality_map: &QualityConfig) -> Self {
        Self { content, provenance, timestamp, quality: quality_map.quality(provenance) }
    }
}

/// Items with `quality >= min_quality`, in their original order.
pub fn filter_information<T: Clone>(items: &[InformationItem<T>], min_quality: f64) -> Vec<InformationItem<T>> {
    items.iter().filter(|i| i.quality >= min_quality).cloned().collect()
}

/// One step of a course of action; the scenario runner turns these into
/// helm commands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStep {
    Hold,
    Interdict { merchant: usize },
    LaunchDroneBeacon,
    InspectFlotsam,
    Backtrack,
    Rescue,
    ReturnToBase,
}

/// How a candidate tells the conflicting participants apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Differentiator {
    /// Ranking by the priority of the constraints themselves.
    ConstraintPriority,
    /// Features of individual instances (distance, ransom, odds).
    InstanceFeatures,
    /// An action effect that releases the contended resource.
    AffordanceEffect,
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateCoa {
    pub id: String,
    pub plan: Vec<PlanStep>,
    /// Estimated satisfaction in `[0, 1]` per participant instance id.
    pub expected_outcome: BTreeMap<String, f64>,
    pub tags_used: BTreeSet<KnowledgeTag>,
    pub mitigation_utility: f64,
    pub differentiator: Differentiator,
    /// Participant instances the candidate will not abandon.
    pub commits_to: BTreeSet<String>,
}

impl CandidateCoa {
    pub fn new(id: impl Into<String>, differentiator: Differentiator) -> Self {
        Self {
            id: id.into(),
            plan: Vec::new(),
            expected_outcome: BTreeMap::new(),
            tags_used: BTreeSet::new(),
            mitigation_utility: 1.0,
            differentiator,
            commits_to: BTreeSet::new(),
        }
    }
}

/// A strategy the agent knows, with the candidate it proposes in this
/// situation and the categories it applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyEntry {
    pub applies_to: BTreeSet<ConflictCategory>,
    pub candidate: CandidateCoa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceEntry {
    /// Resource class whose contention the effect releases.
    pub releases: ResourceClass,
    /// Constraint whose demand on that resource is released.
    pub for_constraint: String,
    /// Whether the affordance's preconditions hold right now.
    pub preconditions_hold: bool,
    pub candidate: CandidateCoa,
}

pub type StrategyCatalog = Vec<StrategyEntry>;
pub type AffordanceCatalog = Vec<AffordanceEntry>;

/// Candidate courses of action for `conflict`.
///
/// One per strategy whose categories include the conflict's primary
/// category, plus one per affordance that releases the contended resource of
/// a participating constraint and whose preconditions hold. A candidate that
/// ranks participants by constraint priority in an intra-constraint conflict
/// gets zero mitigation utility.
pub fn generate_candidates(
    conflict: &ConflictDescriptor,
    strategies: &[StrategyEntry],
    affordances: &[AffordanceEntry],
) -> Vec<CandidateCoa> {
    let mut out = Vec::new();
    for entry in strategies.iter().filter(|s| s.applies_to.contains(&conflict.category)) {
        let mut candidate = entry.candidate.clone();
        let undifferentiated = candidate.differentiator == Differentiator::Nothing
            || (conflict.structure.intra_constraint
                && candidate.differentiator == Differentiator::ConstraintPriority);
        if undifferentiated {
            candidate.mitigation_utility = 0.0;
        }
        candidate.tags_used.insert(KnowledgeTag::CS);
        out.push(candidate);
    }
    let released = match conflict.category {
        ConflictCategory::TemporalResourceContention => Some(ResourceClass::Time),
        ConflictCategory::SpatialResourceContention => Some(ResourceClass::Space),
        _ => None,
    };
    for entry in affordances {
        let applies = Some(entry.releases) == released
            && entry.preconditions_hold
            && conflict.structure.constraint_ids.contains(&entry.for_constraint);
        if applies {
            let mut candidate = entry.candidate.clone();
            candidate.tags_used.extend([KnowledgeTag::AA, KnowledgeTag::CS, KnowledgeTag::MU]);
            out.push(candidate);
        }
    }
    out
}

/// Hard rule: when `flag` of the constraint behind `instance` equals `when`,
/// only candidates committing to `instance` are acceptable.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingRule {
    pub instance: String,
    pub flag: String,
    pub when: bool,
}

/// Lexicographic preferences: grounding-conditioned rules first, then the
/// mitigation-utility-weighted value of the expected outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreferenceModel {
    pub rules: Vec<GroundingRule>,
    /// Grounding flags per participant instance id.
    pub grounding: BTreeMap<String, BTreeMap<String, bool>>,
    /// Value weight per participant instance id; missing ids weigh 1.
    pub weights: BTreeMap<String, f64>,
}

impl PreferenceModel {
    pub fn with_grounding_of(mut self, instances: &[ConstraintInstance]) -> Self {
        for i in instances {
            self.grounding.insert(i.instance_id.clone(), i.constraint.grounding.clone());
        }
        self
    }

    fn rule_active(&self, rule: &GroundingRule) -> bool {
        self.grounding
            .get(&rule.instance)
            .and_then(|g| g.get(&rule.flag))
            .is_some_and(|v| *v == rule.when)
    }

    pub fn score(&self, candidate: &CandidateCoa) -> f64 {
        let value: f64 = candidate
            .expected_outcome
            .iter()
            .map(|(id, p)| self.weights.get(id).copied().unwrap_or(1.0) * p)
            .sum();
        candidate.mitigation_utility * value
    }
}

pub fn select_candidate(candidates: &[CandidateCoa], prefs: &PreferenceModel) -> Result<CandidateCoa> {
    let mut viable: Vec<&CandidateCoa> = candidates.iter().filter(|c| c.mitigation_utility > 0.0).collect();
    if viable.is_empty() {
        return Err(Error::NoViableCandidate);
    }
    for rule in prefs.rules.iter().filter(|r| prefs.rule_active(r)) {
        let committed: Vec<&CandidateCoa> =
            viable.iter().copied().filter(|c| c.commits_to.contains(&rule.instance)).collect();
        if !committed.is_empty() {
            viable = committed;
        }
    }
    let best = viable
        .into_iter()
        .map(|c| (prefs.score(c), c))
        .reduce(|best, next| {
            let better = next.0 > best.0 || (next.0 == best.0 && next.1.id < best.1.id);
            if better {
                next
            } else {
                best
            }
        })
        .map(|(_, c)| c.clone())
        .expect("non-empty");
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Pending,
    Resolved,
    Failed,
}

/// Checks the participants' runtime statuses in `world.statuses`.
///
/// Instances the chosen candidate commits to must end satisfied; the others
/// only need to reach a terminal status (they are discharged by the choice).
pub fn monitor_resolution(world: &WorldState, chosen: &CandidateCoa, conflict: &ConflictDescriptor) -> ResolutionStatus {
    let status = |id: &str| world.statuses.get(id).copied().unwrap_or(ParticipantStatus::Pending);
    let mut pending = false;
    for id in &conflict.structure.participants {
        let s = status(id);
        if chosen.commits_to.contains(id) {
            match s {
                ParticipantStatus::Unsatisfiable => return ResolutionStatus::Failed,
                ParticipantStatus::Satisfied | ParticipantStatus::Discharged => {}
                ParticipantStatus::Pending => pending = true,
            }
        } else if !s.is_terminal() {
            pending = true;
        }
    }
    if pending {
        ResolutionStatus::Pending
    } else {
        ResolutionStatus::Resolved
    }
}

/// Record of one pass through steps 1–4.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace<T> {
    pub conflict: ConflictDescriptor,
    pub admitted: Vec<InformationItem<T>>,
    pub candidates: Vec<CandidateCoa>,
    /// `None` when no candidate was viable and the caller must escalate.
    pub selected: Option<CandidateCoa>,
}

pub struct PipelineInput<'a, T> {
    pub instances: &'a [ConstraintInstance],
    pub model: &'a ActionModel,
    pub coverage: &'a PolicyCoverage,
    pub information: &'a [InformationItem<T>],
    pub min_quality: f64,
    pub prefs: &'a PreferenceModel,
}

/// Runs recognition, assessment, information gating and candidate
/// selection. `catalogs` sees only the information that passed the filter.
pub fn run_pipeline<T: Clone>(
    input: PipelineInput<'_, T>,
    catalogs: impl FnOnce(&ConflictDescriptor, &[InformationItem<T>]) -> Result<(StrategyCatalog, AffordanceCatalog)>,
) -> Result<PipelineTrace<T>> {
    let mut conflict = classify_conflict(input.instances, input.model)?;
    conflict.novel = detect_novelty(&conflict, input.coverage);
    let admitted = filter_information(input.information, input.min_quality);
    let (strategies, affordances) = catalogs(&conflict, &admitted)?;
    let candidates = generate_candidates(&conflict, &strategies, &affordances);
    let selected = match select_candidate(&candidates, input.prefs) {
        Ok(c) => Some(c),
        Err(Error::NoViableCandidate) => None,
        Err(e) => return Err(e),
    };
    Ok(PipelineTrace { conflict, admitted, candidates, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::FuelModel;

    fn interdict_duty() -> Constraint {
        Constraint::new("interdict-piracy", ConstraintKind::Duty, Frame::Deontic).with_priority(1)
    }

    fn piracy_instances(n: usize) -> Vec<ConstraintInstance> {
        (0..n)
            .map(|k| {
                ConstraintInstance::new(format!("interdict-piracy#{k}"), interdict_duty())
                    .demand(ResourceClass::Time, 30.0)
                    .satisfaction(SatisfactionEstimate { value: 0.5, probabilistic: true, unobserved: false })
            })
            .collect()
    }

    fn time_model(minutes: f64) -> ActionModel {
        ActionModel::default().with_resource(ResourceClass::Time, minutes)
    }

    #[test]
    fn four_way_piracy_is_intra_temporal_contention() {
        let c = classify_conflict(&piracy_instances(4), &time_model(30.0)).unwrap();
        assert_eq!(c.category, ConflictCategory::TemporalResourceContention);
        assert!(c.structure.intra_constraint);
        assert_eq!(c.structure.participants.len(), 4);
        assert!(c.secondary_categories.contains(&ConflictCategory::ProbabilisticUncertainty));
    }

    #[test]
    fn rtb_versus_rescue_is_inter_constraint_contention() {
        let rtb = ConstraintInstance::new(
            "rtb#0",
            Constraint::new("rtb", ConstraintKind::Order, Frame::Deontic).with_priority(1),
        )
        .demand(ResourceClass::Time, 60.0);
        let rescue = ConstraintInstance::new(
            "rescue#0",
            Constraint::new("rescue", ConstraintKind::Duty, Frame::Deontic).with_grounding("sailor_spotted", false),
        )
        .demand(ResourceClass::Time, 50.0)
        .satisfaction(SatisfactionEstimate { value: 0.5, probabilistic: true, unobserved: false });
        let c = classify_conflict(&[rtb, rescue], &time_model(100.0)).unwrap();
        assert_eq!(c.category, ConflictCategory::TemporalResourceContention);
        assert!(!c.structure.intra_constraint);
        assert!(c.secondary_categories.contains(&ConflictCategory::ProbabilisticUncertainty));
    }

    #[test]
    fn contradictory_prescriptions_are_infeasible() {
        let a = ConstraintInstance::new("a", Constraint::new("a", ConstraintKind::Order, Frame::Deontic))
            .prescribe("enter-zone", Polarity::Require);
        let b = ConstraintInstance::new("b", Constraint::new("b", ConstraintKind::Norm, Frame::Deontic))
            .prescribe("enter-zone", Polarity::Forbid);
        let c = classify_conflict(&[a, b], &ActionModel::default()).unwrap();
        assert_eq!(c.category, ConflictCategory::Infeasibility);
    }

    #[test]
    fn incommensurable_measures() {
        let a = ConstraintInstance::new("a", Constraint::new("a", ConstraintKind::Goal, Frame::Utilitarian))
            .measured_in("currency");
        let b = ConstraintInstance::new("b", Constraint::new("b", ConstraintKind::Goal, Frame::Utilitarian))
            .measured_in("lives");
        let c = classify_conflict(&[a.clone(), b.clone()], &ActionModel::default()).unwrap();
        assert_eq!(c.category, ConflictCategory::Incommensurability);
        let exchange = ActionModel::default().with_exchange("lives", "currency");
        assert!(matches!(classify_conflict(&[a, b], &exchange), Err(Error::NotAConflict(_))));
    }

    #[test]
    fn spatial_contention_and_causal_preclusion() {
        let berth = |id: &str| {
            ConstraintInstance::new(id, Constraint::new(id, ConstraintKind::Goal, Frame::Deontic))
                .demand(ResourceClass::Space, 1.0)
        };
        let space = ActionModel::default().with_resource(ResourceClass::Space, 1.5);
        let c = classify_conflict(&[berth("x"), berth("y")], &space).unwrap();
        assert_eq!(c.category, ConflictCategory::SpatialResourceContention);

        let scuttle = ConstraintInstance::new("s", Constraint::new("s", ConstraintKind::Order, Frame::Deontic))
            .deleting("hulk-afloat");
        let salvage = ConstraintInstance::new("v", Constraint::new("v", ConstraintKind::Duty, Frame::Deontic))
            .requires("hulk-afloat");
        let c = classify_conflict(&[scuttle, salvage], &ActionModel::default()).unwrap();
        assert_eq!(c.category, ConflictCategory::CausalPreclusion);
    }

    #[test]
    fn uncertainty_only_becomes_primary() {
        let a = ConstraintInstance::new("a", interdict_duty())
            .satisfaction(SatisfactionEstimate { value: 0.5, probabilistic: false, unobserved: true });
        let b = ConstraintInstance::new("b", interdict_duty());
        let c = classify_conflict(&[a, b], &ActionModel::default()).unwrap();
        assert_eq!(c.category, ConflictCategory::EpistemicUncertainty);
        assert!(c.structure.intra_constraint);
    }

    #[test]
    fn fewer_than_two_participants_is_not_a_conflict() {
        assert!(matches!(
            classify_conflict(&piracy_instances(1), &time_model(30.0)),
            Err(Error::NotAConflict(_))
        ));
        assert!(matches!(classify_conflict(&[], &time_model(30.0)), Err(Error::NotAConflict(_))));
    }

    #[test]
    fn novelty_is_a_coverage_lookup() {
        let conflict = classify_conflict(&piracy_instances(4), &time_model(30.0)).unwrap();
        let single = PolicyCoverage::new()
            .cover(ConflictCategory::TemporalResourceContention, &["interdict-piracy"]);
        assert!(detect_novelty(&conflict, &single));
        let four = single.clone().cover(ConflictCategory::TemporalResourceContention, &["interdict-piracy"; 4]);
        assert!(!detect_novelty(&conflict, &four));
        assert!(detect_novelty(&conflict, &PolicyCoverage::new()));
    }

    #[test]
    fn information_filter_examples() {
        let q = QualityConfig::default();
        let memo = InformationItem::new("memo", Provenance::CommandDirective, 0, &q);
        let post = InformationItem::new("post", Provenance::SocialMedia, 0, &q);
        assert_eq!(memo.quality, 0.9);
        assert_eq!(post.quality, 0.2);
        let items = vec![post.clone(), memo.clone()];
        assert_eq!(filter_information(&items, 0.5), vec![memo]);
        assert_eq!(filter_information(&items, 0.0), items);
    }

    fn target_candidate(id: &str, mu: f64, target: usize, p: f64) -> CandidateCoa {
        let mut c = CandidateCoa::new(id, Differentiator::InstanceFeatures);
        c.mitigation_utility = mu;
        c.plan = vec![PlanStep::Interdict { merchant: target }];
        c.expected_outcome.insert(format!("interdict-piracy#{target}"), p);
        c.commits_to.insert(format!("interdict-piracy#{target}"));
        c
    }

    fn priority_candidate() -> CandidateCoa {
        let mut c = CandidateCoa::new("priority-rank", Differentiator::ConstraintPriority);
        c.plan = vec![PlanStep::Interdict { merchant: 0 }];
        c.expected_outcome.insert("interdict-piracy#0".into(), 0.9);
        c
    }

    #[test]
    fn generation_zeroes_priority_ranking_for_intra_conflicts() {
        let conflict = classify_conflict(&piracy_instances(4), &time_model(30.0)).unwrap();
        let all = tags(&[]);
        let cats: BTreeSet<_> = [ConflictCategory::TemporalResourceContention].into();
        let entries: Vec<StrategyEntry> = ["closest", "ransom", "marginal-gain"]
            .iter()
            .enumerate()
            .map(|(k, id)| StrategyEntry { applies_to: cats.clone(), candidate: target_candidate(id, 1.0, k, 0.5) })
            .chain(std::iter::once(StrategyEntry { applies_to: cats.clone(), candidate: priority_candidate() }))
            .collect();
        let out = generate_candidates(&conflict, &entries, &[]);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|c| c.tags_used.contains(&KnowledgeTag::CS) && c.tags_used != all));
        let prio = out.iter().find(|c| c.id == "priority-rank").unwrap();
        assert_eq!(prio.mitigation_utility, 0.0);
        assert_eq!(out.iter().filter(|c| c.mitigation_utility > 0.0).count(), 3);
    }

    #[test]
    fn affordance_candidates_need_matching_effect_and_preconditions() {
        let interdict = ConstraintInstance::new(
            "interdict-piracy#0",
            Constraint::new("interdict-piracy", ConstraintKind::Duty, Frame::Deontic).with_priority(1),
        )
        .demand(ResourceClass::Time, 40.0);
        let inspect = ConstraintInstance::new(
            "inspect-flotsam#0",
            Constraint::new("inspect-flotsam", ConstraintKind::Duty, Frame::Deontic).with_priority(2),
        )
        .demand(ResourceClass::Time, 40.0);
        let conflict = classify_conflict(&[interdict, inspect], &time_model(60.0)).unwrap();
        let mut drone = CandidateCoa::new("drone-beacon", Differentiator::AffordanceEffect);
        drone.plan = vec![PlanStep::LaunchDroneBeacon, PlanStep::Interdict { merchant: 0 }, PlanStep::InspectFlotsam];
        let entry = AffordanceEntry {
            releases: ResourceClass::Time,
            for_constraint: "inspect-flotsam".into(),
            preconditions_hold: true,
            candidate: drone,
        };
        let out = generate_candidates(&conflict, &[], std::slice::from_ref(&entry));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].tags_used, tags(&[KnowledgeTag::AA, KnowledgeTag::CS, KnowledgeTag::MU]));

        let blocked = AffordanceEntry { preconditions_hold: false, ..entry.clone() };
        assert!(generate_candidates(&conflict, &[], &[blocked]).is_empty());
        let wrong = AffordanceEntry { releases: ResourceClass::Space, ..entry };
        assert!(generate_candidates(&conflict, &[], &[wrong]).is_empty());
        assert!(generate_candidates(&conflict, &[], &[]).is_empty());
    }

    #[test]
    fn selection_discards_zero_utility_candidates() {
        let mut prio = priority_candidate();
        prio.mitigation_utility = 0.0;
        let mg = target_candidate("marginal-gain", 0.8, 2, 0.3);
        let chosen = select_candidate(&[prio.clone(), mg.clone()], &PreferenceModel::default()).unwrap();
        assert_eq!(chosen.id, "marginal-gain");
        assert_eq!(select_candidate(std::slice::from_ref(&mg), &PreferenceModel::default()).unwrap(), mg);
        assert!(matches!(
            select_candidate(&[prio], &PreferenceModel::default()),
            Err(Error::NoViableCandidate)
        ));
    }

    #[test]
    fn grounding_rule_overrides_scores() {
        let rescue = ConstraintInstance::new(
            "rescue#0",
            Constraint::new("rescue", ConstraintKind::Duty, Frame::Deontic).with_grounding("sailor_spotted", true),
        );
        let rtb = ConstraintInstance::new("rtb#0", Constraint::new("rtb", ConstraintKind::Order, Frame::Deontic));
        let mut turn = CandidateCoa::new("utilitarian-turn-back", Differentiator::InstanceFeatures);
        turn.expected_outcome.insert("rtb#0".into(), 1.0);
        let mut stay = CandidateCoa::new("rescue-continuation", Differentiator::InstanceFeatures);
        stay.mitigation_utility = 0.1;
        stay.expected_outcome.insert("rescue#0".into(), 0.2);
        stay.commits_to.insert("rescue#0".into());
        let rule = GroundingRule { instance: "rescue#0".into(), flag: "sailor_spotted".into(), when: true };

        let duty = PreferenceModel { rules: vec![rule], ..Default::default() }
            .with_grounding_of(&[rescue.clone(), rtb.clone()]);
        let candidates = [turn.clone(), stay.clone()];
        assert_eq!(select_candidate(&candidates, &duty).unwrap().id, "rescue-continuation");

        let plain = PreferenceModel::default().with_grounding_of(&[rescue, rtb]);
        assert_eq!(select_candidate(&candidates, &plain).unwrap().id, "utilitarian-turn-back");
    }

    #[test]
    fn ties_break_by_id() {
        let a = target_candidate("b-second", 1.0, 0, 0.5);
        let b = target_candidate("a-first", 1.0, 1, 0.5);
        let prefs = PreferenceModel::default();
        assert_eq!(select_candidate(&[a.clone(), b.clone()], &prefs).unwrap().id, "a-first");
        assert_eq!(select_candidate(&[b, a], &prefs).unwrap().id, "a-first");
    }

    #[test]
    fn monitoring_statuses() {
        let conflict = classify_conflict(&piracy_instances(4), &time_model(30.0)).unwrap();
        let chosen = target_candidate("closest", 1.0, 1, 0.9);
        let mut world = WorldState::new(30, FuelModel::default());
        assert_eq!(monitor_resolution(&world, &chosen, &conflict), ResolutionStatus::Pending);

        world.statuses.insert("interdict-piracy#1".into(), ParticipantStatus::Satisfied);
        world.statuses.insert("interdict-piracy#0".into(), ParticipantStatus::Unsatisfiable);
        world.statuses.insert("interdict-piracy#2".into(), ParticipantStatus::Discharged);
        assert_eq!(monitor_resolution(&world, &chosen, &conflict), ResolutionStatus::Pending);
        world.statuses.insert("interdict-piracy#3".into(), ParticipantStatus::Discharged);
        assert_eq!(monitor_resolution(&world, &chosen, &conflict), ResolutionStatus::Resolved);

        world.statuses.insert("interdict-piracy#1".into(), ParticipantStatus::Unsatisfiable);
        assert_eq!(monitor_resolution(&world, &chosen, &conflict), ResolutionStatus::Failed);
    }

    #[test]
    fn pipeline_never_hands_rejected_items_to_candidate_generation() {
        let q = QualityConfig::default();
        let items = vec![
            InformationItem::new(1u8, Provenance::SocialMedia, 0, &q),
            InformationItem::new(2u8, Provenance::CommandDirective, 0, &q),
        ];
        let instances = piracy_instances(4);
        let model = time_model(30.0);
        let coverage = PolicyCoverage::new();
        let prefs = PreferenceModel::default();
        let trace = run_pipeline(
            PipelineInput { instances: &instances, model: &model, coverage: &coverage, information: &items, min_quality: 0.5, prefs: &prefs },
            |_, admitted| {
                assert!(admitted.iter().all(|i| i.content == 2));
                let cats: BTreeSet<_> = [ConflictCategory::TemporalResourceContention].into();
                Ok((vec![StrategyEntry { applies_to: cats, candidate: target_candidate("mg", 1.0, 0, 0.5) }], vec![]))
            },
        )
        .unwrap();
        assert!(trace.conflict.novel);
        assert_eq!(trace.admitted.len(), 1);
        assert_eq!(trace.selected.unwrap().id, "mg");
    }
}
