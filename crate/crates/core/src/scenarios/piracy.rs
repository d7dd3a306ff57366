//! Four simultaneous boarding attempts in a sea lane, one ownship.

use std::collections::BTreeSet;

use crate::config::Config;
use crate::conflict::{
    run_pipeline, ActionModel, AffordanceCatalog, CandidateCoa, ConflictCategory, Constraint, ConstraintInstance,
    ConstraintKind, Differentiator, Frame, InformationItem, KnowledgeTag, PipelineInput, PlanStep, PolicyCoverage,
    PreferenceModel, ResourceClass, SatisfactionEstimate, StrategyCatalog, StrategyEntry,
};
use crate::error::{Error, Result};
use crate::sim::{
    seeded_rng, EventModel, HelmCommand, ParticipantStatus, Position, RngStream, ShipMode, ShipState, WorldState,
    ARRIVAL_EPS_NM,
};
use crate::strategies::{instance_id, MerchantBelief, PiracyBelief, Policy, PolicyKind, INTERDICT_CONSTRAINT};

use super::{PipelineRecord, TrialOutcome};

pub const METRICS: [&str; 3] = ["ransom_avoided", "target_chosen", "interdiction_success"];

/// Ownship fuel in scenarios that do not ration it.
pub(crate) const UNLIMITED_FUEL: f64 = 1.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MerchantClass {
    Tanker,
    ContainerShip,
    BulkCarrier,
    GeneralCargo,
}

impl MerchantClass {
    pub const ALL: [MerchantClass; 4] =
        [MerchantClass::Tanker, MerchantClass::ContainerShip, MerchantClass::BulkCarrier, MerchantClass::GeneralCargo];
}

/// Classes the capability memo reports as newly cannon-equipped.
pub const MEMO_CLASSES: [MerchantClass; 2] = [MerchantClass::Tanker, MerchantClass::ContainerShip];

#[derive(Debug, Clone, PartialEq)]
pub struct Merchant {
    pub position: Position,
    pub ransom: f64,
    pub class: MerchantClass,
    /// Ground truth.
    pub water_cannon: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pirate {
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiracyInstance {
    pub merchants: Vec<Merchant>,
    pub pirates: Vec<Pirate>,
    pub ownship: ShipState,
    /// The agent's cannon flags; they differ from truth only after a
    /// rejected memo.
    pub believed_cannons: Vec<bool>,
    pub attack_window: u32,
    pub p_board_per_min: f64,
    pub p_board_defended: f64,
    pub seed: u64,
}

impl PiracyInstance {
    pub fn p_board_truth(&self, i: usize) -> f64 {
        if self.merchants[i].water_cannon {
            self.p_board_defended
        } else {
            self.p_board_per_min
        }
    }

    pub fn belief(&self) -> PiracyBelief {
        let merchants = self
            .merchants
            .iter()
            .zip(&self.believed_cannons)
            .map(|(m, cannon)| MerchantBelief {
                position: m.position,
                ransom: m.ransom,
                water_cannon: *cannon,
                under_attack: true,
            })
            .collect();
        PiracyBelief::new(
            self.ownship.position,
            self.ownship.max_speed,
            merchants,
            self.p_board_per_min,
            self.p_board_defended,
            self.attack_window,
        )
    }
}

/// Report that some merchant classes now carry water cannons.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityMemo {
    pub classes: BTreeSet<MerchantClass>,
}

impl CapabilityMemo {
    pub fn standard() -> Self {
        Self { classes: MEMO_CLASSES.into_iter().collect() }
    }
}

/// Per-minute probability giving `p_eventual` success within `window` tries.
pub fn per_minute_probability(p_eventual: f64, window: u32) -> f64 {
    1.0 - (1.0 - p_eventual).powf(1.0 / f64::from(window))
}

/// Sets cannon flags for the memo's classes in the ground truth, and in the
/// agent's belief only when `accepted`.
pub fn apply_memo(instance: &PiracyInstance, memo: &CapabilityMemo, accepted: bool) -> PiracyInstance {
    let mut out = instance.clone();
    for (i, m) in out.merchants.iter_mut().enumerate() {
        if memo.classes.contains(&m.class) {
            m.water_cannon = true;
            if accepted {
                out.believed_cannons[i] = true;
            }
        }
    }
    out
}

fn log_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.uniform_range(lo.ln(), hi.ln()).exp()
}

pub fn sample_piracy(rng: &mut RngStream, cfg: &Config, seed: u64) -> Result<PiracyInstance> {
    let p = &cfg.piracy;
    let separation = cfg.max_speed_kn * f64::from(p.window_min) / 60.0;
    let mut positions = None;
    for _ in 0..p.max_attempts {
        let draw: Vec<Position> = (0..4)
            .map(|_| Position::new(rng.uniform_range(0.0, p.lane_width_nm), rng.uniform_range(0.0, p.lane_length_nm)))
            .collect();
        let separated = draw
            .iter()
            .enumerate()
            .all(|(k, a)| draw[k + 1..].iter().all(|b| a.distance(b) > separation));
        if separated {
            positions = Some(draw);
            break;
        }
    }
    let positions = positions.ok_or_else(|| {
        Error::SamplingFailure(format!(
            "no placement of 4 merchants {separation:.1} nm apart in a {}x{} nm lane after {} attempts",
            p.lane_width_nm, p.lane_length_nm, p.max_attempts
        ))
    })?;

    let ownship = Position::new(
        p.lane_width_nm + rng.uniform_range(p.ownship_min_offset_nm, p.ownship_max_offset_nm),
        rng.uniform_range(0.0, p.lane_length_nm),
    );
    let ransoms: Vec<f64> = (0..4).map(|_| log_uniform(rng, p.ransom_min, p.ransom_max)).collect();

    let classes: Vec<MerchantClass> = if cfg.cannons.enabled {
        let defended = cfg.cannons.defended_count as usize;
        let mut order: Vec<usize> = (0..4).collect();
        for i in (1..order.len()).rev() {
            let j = (rng.uniform() * (i + 1) as f64) as usize;
            order.swap(i, j.min(i));
        }
        let mut classes = vec![MerchantClass::BulkCarrier; 4];
        for (rank, &i) in order.iter().enumerate() {
            let pool = if rank < defended { &MEMO_CLASSES[..] } else { &MerchantClass::ALL[2..] };
            classes[i] = pool[usize::from(rng.uniform() >= 0.5)];
        }
        classes
    } else {
        (0..4).map(|_| MerchantClass::ALL[((rng.uniform() * 4.0) as usize).min(3)]).collect()
    };

    // The pre-memo cannon fit covers only the largest tankers, which do not
    // use this lane.
    let merchants = positions
        .into_iter()
        .zip(ransoms)
        .zip(classes)
        .map(|((position, ransom), class)| Merchant { position, ransom, class, water_cannon: false })
        .collect();

    Ok(PiracyInstance {
        merchants,
        pirates: (0..4).map(|target| Pirate { target }).collect(),
        ownship: ShipState::new(ownship, UNLIMITED_FUEL, cfg.max_speed_kn),
        believed_cannons: vec![false; 4],
        attack_window: p.window_min,
        p_board_per_min: per_minute_probability(p.p_eventual, p.window_min),
        p_board_defended: per_minute_probability(cfg.cannons.p_eventual_defended, p.window_min),
        seed,
    })
}

/// Per-merchant results of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRollout {
    pub boarded: Vec<bool>,
    /// Minute of successful boarding, if any.
    pub boarded_at: Vec<Option<u32>>,
    pub interdicted: Vec<bool>,
    /// Minute the target was reached, if it was.
    pub arrival: Option<u32>,
}

struct AttackEvents {
    positions: Vec<Position>,
    p_board: Vec<f64>,
    active: Vec<bool>,
    streams: Vec<RngStream>,
    target: Option<usize>,
    rollout: AttackRollout,
}

impl AttackEvents {
    fn check_arrival(&mut self, world: &mut WorldState) {
        let Some(t) = self.target else { return };
        if world.ships[0].position.distance(&self.positions[t]) > ARRIVAL_EPS_NM {
            return;
        }
        self.rollout.arrival.get_or_insert(world.clock.minutes());
        if self.active[t] {
            self.active[t] = false;
            self.rollout.interdicted[t] = true;
            world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, t), ParticipantStatus::Satisfied);
        }
    }
}

impl EventModel for AttackEvents {
    fn after_move(&mut self, world: &mut WorldState) -> Result<()> {
        let minute = world.clock.minutes();
        for i in 0..self.positions.len() {
            if !self.active[i] {
                continue;
            }
            if self.streams[i].uniform() < self.p_board[i] {
                self.active[i] = false;
                self.rollout.boarded[i] = true;
                self.rollout.boarded_at[i] = Some(minute);
                world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, i), ParticipantStatus::Unsatisfiable);
            }
        }
        self.check_arrival(world);
        if minute >= world.horizon {
            for i in 0..self.active.len() {
                if self.active[i] {
                    self.active[i] = false;
                    world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, i), ParticipantStatus::Discharged);
                }
            }
        }
        Ok(())
    }
}

/// Steps the attacks with ownship heading for `target` (or holding).
///
/// Each minute every live attack draws once from its own stream, then
/// ownship's arrival is checked, so interdiction succeeds iff ownship
/// arrives strictly before the boarding minute.
pub fn simulate_attacks(instance: &PiracyInstance, target: Option<usize>, seed: u64, cfg: &Config) -> Result<(AttackRollout, WorldState)> {
    let n = instance.merchants.len();
    let mut world = WorldState::new(instance.attack_window, cfg.fuel);
    world.add_ship(instance.ownship.clone());
    for i in 0..n {
        world.statuses.insert(instance_id(INTERDICT_CONSTRAINT, i), ParticipantStatus::Pending);
    }
    let mut events = AttackEvents {
        positions: instance.merchants.iter().map(|m| m.position).collect(),
        p_board: (0..n).map(|i| instance.p_board_truth(i)).collect(),
        active: vec![true; n],
        streams: (0..n).map(|i| seeded_rng(seed, &format!("board-{i}"))).collect(),
        target,
        rollout: AttackRollout {
            boarded: vec![false; n],
            boarded_at: vec![None; n],
            interdicted: vec![false; n],
            arrival: None,
        },
    };
    events.check_arrival(&mut world);
    let mut fuel_rng = seeded_rng(seed, "fuel");
    while !world.at_horizon() && events.active.iter().any(|a| *a) {
        let ship = &world.ships[0];
        let cmd = match target {
            Some(t) if !events.rollout.interdicted[t] && events.active[t] => HelmCommand::steer_to(
                0,
                &ship.position,
                &instance.merchants[t].position,
                ship.max_speed,
                ShipMode::Transit,
            ),
            _ => HelmCommand::hold(0, ShipMode::Loiter),
        };
        world.step(&[cmd], &mut fuel_rng, &mut events)?;
    }
    Ok((events.rollout, world))
}

fn conflict_instances(instance: &PiracyInstance) -> Vec<ConstraintInstance> {
    let duty = Constraint::new(INTERDICT_CONSTRAINT, ConstraintKind::Duty, Frame::Deontic).with_priority(1);
    (0..instance.merchants.len())
        .map(|i| {
            ConstraintInstance::new(instance_id(INTERDICT_CONSTRAINT, i), duty.clone())
                .prescribe(format!("interdict-{i}"), crate::conflict::Polarity::Require)
                .demand(ResourceClass::Time, f64::from(instance.attack_window))
                .satisfaction(SatisfactionEstimate { value: 0.05, probabilistic: true, unobserved: false })
        })
        .collect()
}

/// Knowledge the pretrained policy has: a single attack at a time.
pub fn coverage() -> PolicyCoverage {
    PolicyCoverage::new().cover(ConflictCategory::TemporalResourceContention, &[INTERDICT_CONSTRAINT])
}

/// Candidate ranking the attacks by the priority of the interdiction duty.
/// All four share one constraint, so the ranking cannot tell them apart.
pub fn priority_rank_candidate(instance: &PiracyInstance) -> CandidateCoa {
    let mut c = CandidateCoa::new("priority-rank", Differentiator::ConstraintPriority);
    c.plan = vec![PlanStep::Interdict { merchant: 0 }];
    c.tags_used = [KnowledgeTag::CF].into();
    for i in 0..instance.merchants.len() {
        c.expected_outcome.insert(instance_id(INTERDICT_CONSTRAINT, i), 0.05);
    }
    c.expected_outcome.insert(instance_id(INTERDICT_CONSTRAINT, 0), instance.p_board_per_min.max(0.05));
    c
}

fn strategy_candidate(policy: &Policy, belief: &PiracyBelief) -> Result<CandidateCoa> {
    let target = policy.choose_target(belief)?;
    let differentiator = match policy.kind() {
        PolicyKind::NoAction => Differentiator::Nothing,
        _ => Differentiator::InstanceFeatures,
    };
    let mut c = CandidateCoa::new(policy.name(), differentiator);
    c.tags_used = policy.tags().clone();
    match target {
        Some(t) => {
            c.plan = vec![PlanStep::Interdict { merchant: t }];
            let travel = belief.travel_minutes(t);
            let reached_first = (1.0 - belief.p_board(t)).powf(travel);
            c.expected_outcome.insert(instance_id(INTERDICT_CONSTRAINT, t), reached_first);
            c.commits_to.insert(instance_id(INTERDICT_CONSTRAINT, t));
        }
        None => c.plan = vec![PlanStep::Hold],
    }
    Ok(c)
}

pub fn run_piracy(instance: &PiracyInstance, policy: &Policy, cfg: &Config, seed: u64) -> Result<TrialOutcome> {
    let memo_items: Vec<InformationItem<CapabilityMemo>> = if cfg.cannons.enabled {
        vec![InformationItem::new(CapabilityMemo::standard(), cfg.cannons.memo_provenance, 0, &cfg.quality)]
    } else {
        Vec::new()
    };
    let participants = conflict_instances(instance);
    let model = ActionModel::default().with_resource(ResourceClass::Time, f64::from(instance.attack_window));
    let coverage = coverage();
    let prefs = PreferenceModel::default().with_grounding_of(&participants);

    let mut situation = instance.clone();
    let trace = run_pipeline(
        PipelineInput {
            instances: &participants,
            model: &model,
            coverage: &coverage,
            information: &memo_items,
            min_quality: cfg.quality.min_quality,
            prefs: &prefs,
        },
        |conflict, admitted| {
            if cfg.cannons.enabled {
                let accepted = cfg.cannons.belief_update && !admitted.is_empty();
                situation = apply_memo(instance, &CapabilityMemo::standard(), accepted);
            }
            let categories: BTreeSet<_> = [conflict.category].into();
            let belief = situation.belief();
            let strategies: StrategyCatalog = vec![
                StrategyEntry { applies_to: categories.clone(), candidate: strategy_candidate(policy, &belief)? },
                StrategyEntry { applies_to: categories, candidate: priority_rank_candidate(&situation) },
            ];
            let affordances: AffordanceCatalog = Vec::new();
            Ok((strategies, affordances))
        },
    )?;

    let target = trace.selected.as_ref().and_then(|c| {
        c.plan.iter().find_map(|s| match s {
            PlanStep::Interdict { merchant } => Some(*merchant),
            _ => None,
        })
    });
    let (actual, world) = simulate_attacks(&situation, target, seed, cfg)?;
    let (baseline, _) = simulate_attacks(&situation, None, seed, cfg)?;
    let ransom_avoided: f64 = situation
        .merchants
        .iter()
        .enumerate()
        .map(|(i, m)| m.ransom * (f64::from(u8::from(baseline.boarded[i])) - f64::from(u8::from(actual.boarded[i]))))
        .sum();
    let interdicted = target.is_some_and(|t| actual.interdicted[t]);

    Ok(TrialOutcome {
        seed,
        metrics: vec![
            ("ransom_avoided", ransom_avoided),
            ("target_chosen", target.map_or(-1.0, |t| t as f64)),
            ("interdiction_success", f64::from(u8::from(interdicted))),
        ],
        pipeline: Some(PipelineRecord::new(&trace, &world)),
    })
}
