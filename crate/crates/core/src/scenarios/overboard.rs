//! A sailor lost overboard somewhere behind an inbound ship.
//!
//! The ship runs along the x-axis toward port at the origin. The alert
//! comes at `alert_nm`; the sailor went over 5–15 nm further out.

use std::collections::BTreeSet;

use crate::config::{Config, ScenarioKind};
use crate::conflict::{
    run_pipeline, ActionModel, CandidateCoa, ConflictCategory, Constraint, ConstraintInstance, ConstraintKind,
    Differentiator, Frame, GroundingRule, InformationItem, PipelineInput, PipelineTrace, PlanStep, PolicyCoverage,
    PreferenceModel, ResourceClass, SatisfactionEstimate, StrategyEntry,
};
use crate::error::Result;
use crate::sim::{
    seeded_rng, Heading, HelmCommand, NoEvents, ParticipantStatus, Position, RngStream, ShipMode, ShipState,
    WorldState, ARRIVAL_EPS_NM,
};
use crate::strategies::{
    instance_id, OverboardAction, OverboardBelief, OverboardModel, Policy, PolicyKind, RESCUE_CONSTRAINT,
    RTB_CONSTRAINT,
};

use super::{PipelineRecord, TrialOutcome};

pub const METRICS: [&str; 6] =
    ["rescued", "rtb_success", "sailor_spotted", "fuel_at_port", "abandoned_after_spotting", "turn_back_nm"];

const PORT: Position = Position::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct OverboardInstance {
    /// Along-track distance from port where the sailor went over.
    pub distance_overboard_from_port: f64,
    /// Cross-track offset of the sailor.
    pub lateral_offset: f64,
    pub alert_at: f64,
    pub fuel_at_alert: f64,
    pub seed: u64,
}

impl OverboardInstance {
    pub fn sailor(&self) -> Position {
        Position::new(self.distance_overboard_from_port, self.lateral_offset)
    }
}

fn backtrack_step(cfg: &Config) -> f64 {
    cfg.overboard.backtrack_speed_kn / 60.0
}

fn transit_step(cfg: &Config) -> f64 {
    cfg.max_speed_kn / 60.0
}

/// Fuel that covers exactly the safe backtrack and the run home from its
/// far end, at nominal burn rates.
pub fn calibrated_fuel(cfg: &Config) -> f64 {
    let o = &cfg.overboard;
    let out_minutes = (o.safe_backtrack_nm / backtrack_step(cfg) - 1e-9).ceil();
    let home_minutes = ((o.alert_nm + o.safe_backtrack_nm) / transit_step(cfg) - 1e-9).ceil();
    out_minutes * cfg.fuel.backtrack + home_minutes * cfg.fuel.transit
}

pub fn sample_overboard(rng: &mut RngStream, cfg: &Config, seed: u64) -> OverboardInstance {
    let o = &cfg.overboard;
    let behind = rng.uniform_range(o.min_behind_nm, o.max_behind_nm);
    let lateral_offset = if o.lateral_sd_nm > 0.0 { rng.normal(0.0, o.lateral_sd_nm) } else { 0.0 };
    OverboardInstance {
        distance_overboard_from_port: o.alert_nm + behind,
        lateral_offset,
        alert_at: o.alert_nm,
        fuel_at_alert: calibrated_fuel(cfg),
        seed,
    }
}

pub fn agent_model(cfg: &Config) -> OverboardModel {
    let o = &cfg.overboard;
    OverboardModel {
        alert_nm: o.alert_nm,
        min_behind_nm: o.min_behind_nm,
        max_behind_nm: o.max_behind_nm,
        spot_radius_nm: o.spot_radius_nm,
        backtrack_speed_kn: o.backtrack_speed_kn,
        transit_speed_kn: cfg.max_speed_kn,
        backtrack_rate: cfg.fuel.backtrack,
        transit_rate: cfg.fuel.transit,
        rescue_rate: cfg.fuel.rescue,
        assumed_noise_sd: cfg.assumed_noise_sd,
        rescue_p0: o.rescue_p0,
        rescue_p_step: o.rescue_p_step,
    }
}

/// One minute of an overboard trial, after the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub minute: u32,
    pub action: OverboardAction,
    /// Grounding flags when the action was chosen.
    pub spotted: bool,
    pub rescued: bool,
    pub x: f64,
    pub fuel: f64,
}

fn conflict_instances(instance: &OverboardInstance, cfg: &Config) -> Vec<ConstraintInstance> {
    let o = &cfg.overboard;
    // Demands are in minutes of endurance at the transit burn rate.
    let per_transit_minute = |fuel: f64| fuel / cfg.fuel.transit;
    let home = (instance.alert_at / transit_step(cfg)).ceil() * cfg.fuel.transit;
    let search_span = o.max_behind_nm - o.spot_radius_nm;
    let search = search_span / backtrack_step(cfg) * cfg.fuel.backtrack;
    let extra_home = search_span / transit_step(cfg) * cfg.fuel.transit;
    let rtb = ConstraintInstance::new(
        instance_id(RTB_CONSTRAINT, 0),
        Constraint::new(RTB_CONSTRAINT, ConstraintKind::Order, Frame::Deontic).with_priority(1),
    )
    .demand(ResourceClass::Time, per_transit_minute(home))
    .satisfaction(SatisfactionEstimate { value: 1.0, probabilistic: cfg.fuel.noise.enabled, unobserved: false });
    let rescue = ConstraintInstance::new(
        instance_id(RESCUE_CONSTRAINT, 0),
        Constraint::new(RESCUE_CONSTRAINT, ConstraintKind::Duty, Frame::Deontic).with_grounding("sailor_spotted", false),
    )
    .demand(ResourceClass::Time, per_transit_minute(search + extra_home))
    .satisfaction(SatisfactionEstimate { value: 0.5, probabilistic: true, unobserved: true });
    vec![rtb, rescue]
}

fn candidates(policy: &Policy) -> Vec<CandidateCoa> {
    let rtb = instance_id(RTB_CONSTRAINT, 0);
    let rescue = instance_id(RESCUE_CONSTRAINT, 0);
    let mut search = CandidateCoa::new("utilitarian-search", Differentiator::InstanceFeatures);
    search.plan = vec![PlanStep::Backtrack, PlanStep::ReturnToBase];
    search.tags_used = policy.tags().clone();
    search.expected_outcome.insert(rtb.clone(), 1.0);
    search.expected_outcome.insert(rescue.clone(), 0.5);
    let mut out = vec![search.clone()];
    if matches!(policy.kind(), PolicyKind::Overboard { duty: true, .. }) {
        let mut commit = search;
        commit.id = "rescue-commitment".into();
        commit.plan = vec![PlanStep::Backtrack, PlanStep::Rescue, PlanStep::ReturnToBase];
        commit.commits_to.insert(rescue);
        out.push(commit);
    }
    out
}

fn run_alert_pipeline(
    instance: &OverboardInstance,
    policy: &Policy,
    cfg: &Config,
) -> Result<(Vec<ConstraintInstance>, PipelineTrace<()>)> {
    let participants = conflict_instances(instance, cfg);
    let model = ActionModel::default().with_resource(ResourceClass::Time, instance.fuel_at_alert / cfg.fuel.transit);
    let coverage = PolicyCoverage::new();
    let rules = match policy.kind() {
        PolicyKind::Overboard { duty: true, .. } => vec![GroundingRule {
            instance: instance_id(RESCUE_CONSTRAINT, 0),
            flag: "sailor_spotted".into(),
            when: true,
        }],
        _ => Vec::new(),
    };
    let prefs = PreferenceModel { rules, ..Default::default() }.with_grounding_of(&participants);
    let information: Vec<InformationItem<()>> = Vec::new();
    let trace = run_pipeline(
        PipelineInput {
            instances: &participants,
            model: &model,
            coverage: &coverage,
            information: &information,
            min_quality: cfg.quality.min_quality,
            prefs: &prefs,
        },
        |conflict, _| {
            let categories: BTreeSet<ConflictCategory> = [conflict.category].into();
            let strategies = candidates(policy)
                .into_iter()
                .map(|candidate| StrategyEntry { applies_to: categories.clone(), candidate })
                .collect();
            Ok((strategies, Vec::new()))
        },
    )?;
    Ok((participants, trace))
}

/// Runs one trial and returns the per-minute trace alongside the outcome.
pub fn run_overboard_traced(
    instance: &OverboardInstance,
    policy: &Policy,
    cfg: &Config,
    seed: u64,
) -> Result<(TrialOutcome, Vec<TraceRow>)> {
    policy.check_applicable(ScenarioKind::Overboard)?;
    let (_, trace) = run_alert_pipeline(instance, policy, cfg)?;

    let o = &cfg.overboard;
    let model = agent_model(cfg);
    let sailor = instance.sailor();
    let mut world = WorldState::new(o.horizon_min, cfg.fuel);
    world.add_ship(ShipState::new(Position::new(instance.alert_at, 0.0), instance.fuel_at_alert, cfg.max_speed_kn));
    world.statuses.insert(instance_id(RTB_CONSTRAINT, 0), ParticipantStatus::Pending);
    world.statuses.insert(instance_id(RESCUE_CONSTRAINT, 0), ParticipantStatus::Pending);

    let mut fuel_rng = seeded_rng(seed, "fuel");
    let mut rescue_rng = seeded_rng(seed, "rescue");
    let mut gauge_rng = seeded_rng(seed, "fuel-estimate");

    let mut covered_to = instance.alert_at + o.spot_radius_nm;
    let mut spotted = world.ships[0].position.distance(&sailor) <= o.spot_radius_nm;
    let mut rescued = false;
    let mut attempts = 0u32;
    let mut returning = false;
    let mut abandoned = false;
    let mut farthest = instance.alert_at;
    let mut rows = Vec::new();

    while !world.at_horizon() {
        let ship = &world.ships[0];
        if ship.position.distance(&PORT) <= ARRIVAL_EPS_NM {
            break;
        }
        let awaiting_rescue = spotted && !rescued;
        if ship.fuel_exhausted && !awaiting_rescue {
            break;
        }
        let action = if ship.fuel_exhausted {
            OverboardAction::Rescue
        } else {
            let gauge_error = if cfg.fuel_estimate_sd > 0.0 { gauge_rng.normal(0.0, cfg.fuel_estimate_sd) } else { 0.0 };
            let belief = OverboardBelief::new(
                model.clone(),
                ship.position.x,
                covered_to,
                ship.fuel + gauge_error,
                spotted,
                rescued,
                attempts,
                returning,
            );
            policy.decide_overboard(&belief)?
        };
        let cmd = match action {
            OverboardAction::Backtrack => {
                HelmCommand { entity: 0, heading: Heading::EAST, speed: o.backtrack_speed_kn, mode: ShipMode::Backtrack }
            }
            OverboardAction::Rescue => HelmCommand::hold(0, ShipMode::Rescue),
            OverboardAction::ReturnToBase => {
                returning = true;
                if awaiting_rescue {
                    abandoned = true;
                }
                HelmCommand::steer_to(0, &ship.position, &PORT, ship.max_speed, ShipMode::Transit)
            }
        };
        world.step(&[cmd], &mut fuel_rng, &mut NoEvents)?;

        let (position, fuel) = (world.ships[0].position, world.ships[0].fuel);
        farthest = farthest.max(position.x);
        if action == OverboardAction::Backtrack {
            covered_to = covered_to.max(position.x + o.spot_radius_nm);
        }
        if action == OverboardAction::Rescue && awaiting_rescue {
            attempts += 1;
            if rescue_rng.uniform() < model.rescue_probability(attempts) {
                rescued = true;
                world.statuses.insert(instance_id(RESCUE_CONSTRAINT, 0), ParticipantStatus::Satisfied);
            }
        }
        if !spotted && position.distance(&sailor) <= o.spot_radius_nm {
            spotted = true;
            world.set_flag("sailor_spotted", true);
        }
        rows.push(TraceRow {
            minute: world.clock.minutes(),
            action,
            spotted: awaiting_rescue,
            rescued,
            x: position.x,
            fuel,
        });
    }

    let ship = &world.ships[0];
    let at_port = ship.position.distance(&PORT) <= ARRIVAL_EPS_NM;
    world.statuses.insert(
        instance_id(RTB_CONSTRAINT, 0),
        if at_port { ParticipantStatus::Satisfied } else { ParticipantStatus::Unsatisfiable },
    );
    if !rescued {
        let status = if spotted { ParticipantStatus::Unsatisfiable } else { ParticipantStatus::Discharged };
        world.statuses.insert(instance_id(RESCUE_CONSTRAINT, 0), status);
    }
    let flag = |b: bool| f64::from(u8::from(b));
    let outcome = TrialOutcome {
        seed,
        metrics: vec![
            ("rescued", flag(rescued)),
            ("rtb_success", flag(at_port)),
            ("sailor_spotted", flag(spotted)),
            ("fuel_at_port", if at_port { ship.fuel } else { 0.0 }),
            ("abandoned_after_spotting", flag(abandoned)),
            ("turn_back_nm", farthest - instance.alert_at),
        ],
        pipeline: Some(PipelineRecord::new(&trace, &world)),
    };
    Ok((outcome, rows))
}

pub fn run_overboard(instance: &OverboardInstance, policy: &Policy, cfg: &Config, seed: u64) -> Result<TrialOutcome> {
    run_overboard_traced(instance, policy, cfg, seed).map(|(outcome, _)| outcome)
}
