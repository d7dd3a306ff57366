//! A drifting mass of unknown content found just before a nearby merchant
//! comes under attack.
//!
//! Ownship starts at the origin with the flotsam in sensor contact. Contact
//! lapses `contact_window_min` minutes in unless ownship stays on the
//! flotsam or a drone beacon marks it.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use crate::config::{Config, ScenarioKind};
use crate::conflict::{
    run_pipeline, ActionModel, AffordanceEntry, CandidateCoa, ConflictCategory, Constraint, ConstraintInstance,
    ConstraintKind, Differentiator, Frame, InformationItem, PipelineInput, PlanStep, PolicyCoverage, PreferenceModel,
    ResourceClass, SatisfactionEstimate, StrategyEntry,
};
use crate::error::{Error, Result};
use crate::sim::{
    intercept_time, seeded_rng, EventModel, HelmCommand, ParticipantStatus, Position, RngStream, ShipMode,
    ShipState, WorldState, ARRIVAL_EPS_NM,
};
use crate::strategies::{
    adrift_affordance_plan, instance_id, AdriftBelief, AdriftPlan, Policy, PolicyKind, INSPECT_CONSTRAINT,
    INTERDICT_CONSTRAINT,
};

use super::piracy::{per_minute_probability, Merchant, MerchantClass, UNLIMITED_FUEL};
use super::{PipelineRecord, TrialOutcome};

pub const METRICS: [&str; 4] = ["interdiction_success", "flotsam_reacquired", "both_duties_met", "inspected"];

/// Co-location tolerance for a pursuer meeting the drifting flotsam.
const CONTACT_EPS_NM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Flotsam {
    pub position: Position,
    /// Drift velocity, knots east and north.
    pub drift_kn: (f64, f64),
    /// Chance of finding the flotsam again once contact has lapsed.
    pub relocate_difficulty: f64,
}

impl Flotsam {
    pub fn at(&self, minutes: f64) -> Position {
        Position::new(
            self.position.x + self.drift_kn.0 * minutes / 60.0,
            self.position.y + self.drift_kn.1 * minutes / 60.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drone {
    pub speed_kn: f64,
    pub range_nm: f64,
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdriftInstance {
    pub merchant: Merchant,
    /// Minute the attack on the merchant begins.
    pub attack_start: u32,
    pub attack_window: u32,
    pub p_board_per_min: f64,
    pub flotsam: Flotsam,
    pub drone: Drone,
    pub ownship: ShipState,
    pub contact_window: u32,
    pub inspect_min: u32,
    pub engagement_min: u32,
    pub seed: u64,
}

impl AdriftInstance {
    fn minutes_to(&self, to: &Position, from: &Position) -> f64 {
        from.distance(to) / self.ownship.max_speed * 60.0
    }

    /// Continuous-time minute at which an inspect-first plan reaches the
    /// merchant.
    pub fn inspect_first_arrival(&self) -> Option<f64> {
        let start = self.ownship.position;
        let reach = intercept_time(&start, &self.flotsam.position, self.flotsam.drift_kn, self.ownship.max_speed)? * 60.0;
        let leave = reach + f64::from(self.inspect_min);
        Some(leave + self.minutes_to(&self.merchant.position, &self.flotsam.at(leave)))
    }

    /// Continuous-time minute at which an interdict-first plan could be back
    /// on the flotsam.
    pub fn interdict_first_return(&self) -> Option<f64> {
        let arrive = self.minutes_to(&self.merchant.position, &self.ownship.position);
        let free = arrive.max(f64::from(self.attack_start)) + f64::from(self.engagement_min);
        let drifted = self.flotsam.at(free);
        let chase = intercept_time(&self.merchant.position, &drifted, self.flotsam.drift_kn, self.ownship.max_speed)?;
        Some(free + chase * 60.0)
    }

    pub fn belief(&self) -> AdriftBelief {
        AdriftBelief::new(
            self.ownship.position,
            self.flotsam.position,
            self.flotsam.drift_kn,
            self.drone.available,
            self.drone.speed_kn,
            self.drone.range_nm,
        )
    }
}

fn polar(rng: &mut RngStream, lo: f64, hi: f64) -> (f64, f64) {
    let r = rng.uniform_range(lo, hi);
    let theta = rng.uniform() * TAU;
    (r * theta.cos(), r * theta.sin())
}

/// Draws instances until direct inspection precludes timely interdiction and
/// interdicting first lets flotsam contact lapse.
pub fn sample_adrift(rng: &mut RngStream, cfg: &Config, seed: u64) -> Result<AdriftInstance> {
    let a = &cfg.adrift;
    let p = &cfg.piracy;
    for _ in 0..p.max_attempts {
        let (mx, my) = polar(rng, a.merchant_min_nm, a.merchant_max_nm);
        let span = a.attack_start_max - a.attack_start_min + 1;
        let attack_start = a.attack_start_min + ((rng.uniform() * f64::from(span)) as u32).min(span - 1);
        let (fx, fy) = polar(rng, a.flotsam_min_nm, a.flotsam_max_nm);
        let drift = polar(rng, a.drift_min_kn, a.drift_max_kn);
        let ransom = rng.uniform_range(p.ransom_min.ln(), p.ransom_max.ln()).exp();
        let class = MerchantClass::ALL[((rng.uniform() * 4.0) as usize).min(3)];
        let instance = AdriftInstance {
            merchant: Merchant { position: Position::new(mx, my), ransom, class, water_cannon: false },
            attack_start,
            attack_window: p.window_min,
            p_board_per_min: per_minute_probability(p.p_eventual, p.window_min),
            flotsam: Flotsam {
                position: Position::new(fx, fy),
                drift_kn: drift,
                relocate_difficulty: a.relocate_difficulty,
            },
            drone: Drone { speed_kn: a.drone_speed_kn, range_nm: a.drone_range_nm, available: a.drone_available },
            ownship: ShipState::new(Position::default(), UNLIMITED_FUEL, cfg.max_speed_kn),
            contact_window: a.contact_window_min,
            inspect_min: a.inspect_min,
            engagement_min: a.engagement_min,
            seed,
        };
        let attack_over = f64::from(attack_start + p.window_min);
        let inspect_blocks = instance.inspect_first_arrival().is_none_or(|t| t >= attack_over);
        let interdict_loses = instance.interdict_first_return().is_none_or(|t| t > f64::from(a.contact_window_min));
        if inspect_blocks && interdict_loses {
            return Ok(instance);
        }
    }
    Err(Error::SamplingFailure(format!(
        "no adrift geometry where both duties collide after {} attempts",
        p.max_attempts
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    ToMerchant,
    Engaged { until: u32 },
    ToFlotsam,
    Inspecting { until: u32 },
    Done,
}

struct AdriftEvents {
    flotsam: Position,
    drift_kn: (f64, f64),
    attack_start: u32,
    attack_end: u32,
    p_board: f64,
    active: bool,
    boarded: bool,
    stream: RngStream,
}

impl EventModel for AdriftEvents {
    fn after_move(&mut self, world: &mut WorldState) -> Result<()> {
        self.flotsam = Position::new(
            self.flotsam.x + self.drift_kn.0 / 60.0,
            self.flotsam.y + self.drift_kn.1 / 60.0,
        );
        let t = world.clock.minutes();
        if self.active && t > self.attack_start && t <= self.attack_end && self.stream.uniform() < self.p_board {
            self.active = false;
            self.boarded = true;
            world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, 0), ParticipantStatus::Unsatisfiable);
        }
        if self.active && t >= self.attack_end {
            self.active = false;
            world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, 0), ParticipantStatus::Discharged);
        }
        Ok(())
    }
}

/// Per-trial results of an adrift rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdriftRollout {
    pub interdicted: bool,
    pub beacon_at: Option<u32>,
    pub custody_kept: bool,
    pub reacquired: bool,
    pub inspected: bool,
}

/// Executes `plan` minute by minute.
pub fn simulate_adrift(instance: &AdriftInstance, plan: AdriftPlan, seed: u64, cfg: &Config) -> Result<(AdriftRollout, WorldState)> {
    let horizon = cfg.adrift.horizon_min;
    let mut world = WorldState::new(horizon, cfg.fuel);
    world.add_ship(instance.ownship.clone());
    let drone_launched = plan == AdriftPlan::DroneThenInterdict;
    if drone_launched {
        world.add_ship(ShipState::drone(instance.ownship.position, instance.drone.speed_kn));
    }
    world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, 0), ParticipantStatus::Pending);
    world.statuses.insert(instance_id(INSPECT_CONSTRAINT, 0), ParticipantStatus::Pending);

    let mut events = AdriftEvents {
        flotsam: instance.flotsam.position,
        drift_kn: instance.flotsam.drift_kn,
        attack_start: instance.attack_start,
        attack_end: instance.attack_start + instance.attack_window,
        p_board: instance.p_board_per_min,
        active: true,
        boarded: false,
        stream: seeded_rng(seed, "board"),
    };
    let mut reacquire_rng = seeded_rng(seed, "reacquire");
    let mut fuel_rng = seeded_rng(seed, "fuel");

    let tracking_from_start = plan == AdriftPlan::InspectFirst;
    let mut phase = match plan {
        AdriftPlan::DroneThenInterdict | AdriftPlan::InterdictFirst => Phase::ToMerchant,
        AdriftPlan::InspectFirst => Phase::ToFlotsam,
        AdriftPlan::Hold => Phase::Done,
    };
    let mut rollout =
        AdriftRollout { interdicted: false, beacon_at: None, custody_kept: true, reacquired: false, inspected: false };
    let mut visited_merchant = false;
    let drift_step = |p: &Position, d: (f64, f64)| Position::new(p.x + d.0 / 60.0, p.y + d.1 / 60.0);

    loop {
        let t = world.clock.minutes();
        let ownship = world.ships[0].position;

        if rollout.custody_kept
            && !rollout.inspected
            && !tracking_from_start
            && t >= instance.contact_window
            && rollout.beacon_at.is_none_or(|b| b > instance.contact_window)
        {
            rollout.custody_kept = false;
        }

        // Interdiction is checked after the minute's boarding draw.
        let at_merchant = ownship.distance(&instance.merchant.position) <= ARRIVAL_EPS_NM;
        if at_merchant && events.active && t >= instance.attack_start {
            events.active = false;
            rollout.interdicted = true;
            world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, 0), ParticipantStatus::Satisfied);
        }

        phase = match phase {
            Phase::ToMerchant if rollout.interdicted => Phase::Engaged { until: t + instance.engagement_min },
            Phase::ToMerchant if !events.active => {
                visited_merchant = true;
                Phase::ToFlotsam
            }
            Phase::Engaged { until } if t >= until => {
                visited_merchant = true;
                Phase::ToFlotsam
            }
            Phase::ToFlotsam if rollout.inspected => {
                if visited_merchant || !events.active {
                    Phase::Done
                } else {
                    Phase::ToMerchant
                }
            }
            Phase::Inspecting { until } if t >= until => {
                rollout.inspected = true;
                world.statuses.insert(instance_id(INSPECT_CONSTRAINT, 0), ParticipantStatus::Satisfied);
                if visited_merchant || !events.active {
                    Phase::Done
                } else {
                    Phase::ToMerchant
                }
            }
            other => other,
        };
        if phase == Phase::ToFlotsam && ownship.distance(&events.flotsam) <= CONTACT_EPS_NM {
            phase = Phase::Inspecting { until: t + instance.inspect_min };
        }
        if phase == Phase::ToFlotsam && !rollout.custody_kept && !rollout.reacquired {
            if rollout.beacon_at.is_some() || reacquire_rng.bernoulli(instance.flotsam.relocate_difficulty) {
                rollout.reacquired = true;
            } else {
                world.statuses.insert(instance_id(INSPECT_CONSTRAINT, 0), ParticipantStatus::Unsatisfiable);
                phase = Phase::Done;
            }
        }
        if phase == Phase::ToFlotsam && rollout.custody_kept {
            rollout.reacquired = true;
        }

        if world.at_horizon() || (phase == Phase::Done && !events.active) {
            break;
        }

        let speed = world.ships[0].max_speed;
        let next_flotsam = drift_step(&events.flotsam, events.drift_kn);
        let mut commands = vec![match phase {
            Phase::ToMerchant => {
                HelmCommand::steer_to(0, &ownship, &instance.merchant.position, speed, ShipMode::Transit)
            }
            Phase::ToFlotsam | Phase::Inspecting { .. } => {
                HelmCommand::steer_to(0, &ownship, &next_flotsam, speed, ShipMode::Search)
            }
            Phase::Engaged { .. } | Phase::Done => HelmCommand::hold(0, ShipMode::Loiter),
        }];
        if drone_launched {
            let drone = &world.ships[1];
            commands.push(HelmCommand::steer_to(1, &drone.position, &next_flotsam, drone.max_speed, ShipMode::Transit));
        }
        world.step(&commands, &mut fuel_rng, &mut events)?;

        if drone_launched
            && rollout.beacon_at.is_none()
            && world.ships[1].position.distance(&events.flotsam) <= CONTACT_EPS_NM
        {
            rollout.beacon_at = Some(world.clock.minutes());
        }
    }

    if !rollout.inspected {
        world.statuses.insert(instance_id(INSPECT_CONSTRAINT, 0), ParticipantStatus::Unsatisfiable);
    }
    Ok((rollout, world))
}

fn conflict_instances(instance: &AdriftInstance) -> Vec<ConstraintInstance> {
    let to_merchant = instance.minutes_to(&instance.merchant.position, &instance.ownship.position);
    let to_flotsam = intercept_time(
        &instance.ownship.position,
        &instance.flotsam.position,
        instance.flotsam.drift_kn,
        instance.ownship.max_speed,
    )
    .map_or(f64::from(instance.contact_window), |h| h * 60.0);
    let interdict = ConstraintInstance::new(
        instance_id(INTERDICT_CONSTRAINT, 0),
        Constraint::new(INTERDICT_CONSTRAINT, ConstraintKind::Duty, Frame::Deontic).with_priority(1),
    )
    .demand(ResourceClass::Time, to_merchant + f64::from(instance.engagement_min))
    .satisfaction(SatisfactionEstimate { value: 0.95, probabilistic: true, unobserved: false });
    let inspect = ConstraintInstance::new(
        instance_id(INSPECT_CONSTRAINT, 0),
        Constraint::new(INSPECT_CONSTRAINT, ConstraintKind::Duty, Frame::Deontic).with_priority(2),
    )
    .demand(ResourceClass::Time, to_flotsam + f64::from(instance.inspect_min))
    .satisfaction(SatisfactionEstimate { value: 1.0, probabilistic: false, unobserved: true });
    vec![interdict, inspect]
}

fn interdiction_odds(instance: &AdriftInstance) -> f64 {
    let travel = instance.minutes_to(&instance.merchant.position, &instance.ownship.position);
    (1.0 - instance.p_board_per_min).powf((travel - f64::from(instance.attack_start)).max(0.0))
}

fn interdict_first_candidate(id: &str, differentiator: Differentiator, instance: &AdriftInstance) -> CandidateCoa {
    let mut c = CandidateCoa::new(id, differentiator);
    c.plan = vec![PlanStep::Interdict { merchant: 0 }, PlanStep::InspectFlotsam];
    c.expected_outcome.insert(instance_id(INTERDICT_CONSTRAINT, 0), interdiction_odds(instance));
    c.expected_outcome.insert(instance_id(INSPECT_CONSTRAINT, 0), instance.flotsam.relocate_difficulty);
    c.commits_to.insert(instance_id(INTERDICT_CONSTRAINT, 0));
    c
}

fn plan_of(candidate: Option<&CandidateCoa>) -> AdriftPlan {
    match candidate.and_then(|c| c.plan.first()) {
        Some(PlanStep::LaunchDroneBeacon) => AdriftPlan::DroneThenInterdict,
        Some(PlanStep::Interdict { .. }) => AdriftPlan::InterdictFirst,
        Some(PlanStep::InspectFlotsam) => AdriftPlan::InspectFirst,
        _ => AdriftPlan::Hold,
    }
}

pub fn run_adrift(instance: &AdriftInstance, policy: &Policy, cfg: &Config, seed: u64) -> Result<TrialOutcome> {
    policy.check_applicable(ScenarioKind::Adrift)?;
    let participants = conflict_instances(instance);
    let longest = participants
        .iter()
        .flat_map(|p| p.demands.iter().map(|d| d.amount))
        .fold(0.0, f64::max);
    let model = ActionModel::default().with_resource(ResourceClass::Time, longest);
    let coverage = PolicyCoverage::new().cover(ConflictCategory::TemporalResourceContention, &[INTERDICT_CONSTRAINT]);
    let prefs = PreferenceModel::default().with_grounding_of(&participants);
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
            let belief = instance.belief();
            let preferred = policy.adrift_plan(&belief)?;
            let mut strategies = Vec::new();
            let mut affordances = Vec::new();
            match policy.kind() {
                PolicyKind::NoAction => {
                    let mut hold = CandidateCoa::new("hold", Differentiator::Nothing);
                    hold.plan = vec![PlanStep::Hold];
                    strategies.push(StrategyEntry { applies_to: categories, candidate: hold });
                }
                PolicyKind::AdriftDrone => {
                    let fallback = interdict_first_candidate("priority-interdict", Differentiator::ConstraintPriority, instance);
                    strategies.push(StrategyEntry { applies_to: categories, candidate: fallback });
                    if preferred == AdriftPlan::DroneThenInterdict {
                        let mut drone = adrift_affordance_plan(&belief)?;
                        drone.expected_outcome.insert(instance_id(INTERDICT_CONSTRAINT, 0), interdiction_odds(instance));
                        drone.expected_outcome.insert(instance_id(INSPECT_CONSTRAINT, 0), 1.0);
                        affordances.push(AffordanceEntry {
                            releases: ResourceClass::Time,
                            for_constraint: INSPECT_CONSTRAINT.into(),
                            preconditions_hold: true,
                            candidate: drone,
                        });
                    }
                }
                _ => {
                    let mut c = interdict_first_candidate(policy.name(), Differentiator::InstanceFeatures, instance);
                    c.tags_used = policy.tags().clone();
                    strategies.push(StrategyEntry { applies_to: categories, candidate: c });
                }
            }
            Ok((strategies, affordances))
        },
    )?;

    let plan = plan_of(trace.selected.as_ref());
    let (rollout, world) = simulate_adrift(instance, plan, seed, cfg)?;
    let flag = |b: bool| f64::from(u8::from(b));
    let both = rollout.interdicted && rollout.custody_kept && rollout.inspected;
    Ok(TrialOutcome {
        seed,
        metrics: vec![
            ("interdiction_success", flag(rollout.interdicted)),
            ("flotsam_reacquired", flag(rollout.reacquired)),
            ("both_duties_met", flag(both)),
            ("inspected", flag(rollout.inspected)),
        ],
        pipeline: Some(PipelineRecord::new(&trace, &world)),
    })
}
