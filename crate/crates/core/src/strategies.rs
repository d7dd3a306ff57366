//! Decision strategies over the agent's belief state.
//!
//! Policies never see ground truth: scenarios build a belief from the world
//! and a policy reads it through accessors that log which kind of knowledge
//! was consumed, so a policy's declared tags can be audited against what it
//! actually read.

use std::cell::Cell;
use std::collections::BTreeSet;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::ScenarioKind;
use crate::conflict::{tags, CandidateCoa, Differentiator, KnowledgeTag, PlanStep};
use crate::error::{Error, Result};
use crate::sim::{intercept_time, travel_time, Position};

/// Constraint ids shared by the scenarios and their candidate builders.
pub const INTERDICT_CONSTRAINT: &str = "interdict-piracy";
pub const INSPECT_CONSTRAINT: &str = "inspect-flotsam";
pub const RTB_CONSTRAINT: &str = "rtb";
pub const RESCUE_CONSTRAINT: &str = "rescue";

pub fn instance_id(constraint: &str, k: usize) -> String {
    format!("{constraint}#{k}")
}

/// Bit set of knowledge tags read from a belief.
#[derive(Debug, Clone, Default)]
struct ReadLog(Cell<u8>);

impl ReadLog {
    fn mark(&self, tag: KnowledgeTag) {
        self.0.set(self.0.get() | 1 << tag as u8);
    }

    fn tags(&self) -> BTreeSet<KnowledgeTag> {
        KnowledgeTag::ALL.into_iter().filter(|t| self.0.get() & (1 << *t as u8) != 0).collect()
    }

    fn clear(&self) {
        self.0.set(0);
    }
}

/// `ransom × P(boarding happens after arrival but inside the window)`.
///
/// Zero once `travel_min >= window`. Requires `travel_min >= 0` and
/// `p_min ∈ (0, 1)`.
pub fn expected_ransom_avoided(travel_min: f64, p_min: f64, window: u32, ransom: f64) -> f64 {
    debug_assert!(travel_min >= 0.0 && p_min > 0.0 && p_min < 1.0);
    let w = f64::from(window);
    if travel_min >= w {
        return 0.0;
    }
    let q = 1.0 - p_min;
    ransom * (q.powf(travel_min.max(0.0)) - q.powf(w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MerchantBelief {
    pub position: Position,
    pub ransom: f64,
    pub water_cannon: bool,
    pub under_attack: bool,
}

/// The agent's view of a piracy situation.
#[derive(Debug, Clone)]
pub struct PiracyBelief {
    ownship: Position,
    max_speed: f64,
    merchants: Vec<MerchantBelief>,
    p_undefended: f64,
    p_defended: f64,
    window: u32,
    reads: ReadLog,
}

impl PiracyBelief {
    pub fn new(
        ownship: Position,
        max_speed: f64,
        merchants: Vec<MerchantBelief>,
        p_undefended: f64,
        p_defended: f64,
        window: u32,
    ) -> Self {
        Self { ownship, max_speed, merchants, p_undefended, p_defended, window, reads: ReadLog::default() }
    }

    pub fn len(&self) -> usize {
        self.merchants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merchants.is_empty()
    }

    pub fn merchants(&self) -> &[MerchantBelief] {
        &self.merchants
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    /// Merchants currently under attack, in id order.
    pub fn attacked(&self) -> Vec<usize> {
        self.reads.mark(KnowledgeTag::CS);
        (0..self.merchants.len()).filter(|i| self.merchants[*i].under_attack).collect()
    }

    pub fn travel_minutes(&self, i: usize) -> f64 {
        self.reads.mark(KnowledgeTag::SM);
        travel_time(&self.ownship, &self.merchants[i].position, self.max_speed).expect("positive max speed")
    }

    pub fn ransom(&self, i: usize) -> f64 {
        self.reads.mark(KnowledgeTag::SM);
        self.merchants[i].ransom
    }

    /// Believed per-minute boarding probability, cannon-aware.
    pub fn p_board(&self, i: usize) -> f64 {
        self.reads.mark(KnowledgeTag::CF);
        if self.merchants[i].water_cannon {
            self.p_defended
        } else {
            self.p_undefended
        }
    }

    pub fn tags_read(&self) -> BTreeSet<KnowledgeTag> {
        self.reads.tags()
    }

    pub fn clear_reads(&self) {
        self.reads.clear();
    }
}

/// Index of the best score; earlier ids win ties.
fn argmax_by_id(ids: &[usize], score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in ids {
        let s = score(i);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

pub fn target_closest(belief: &PiracyBelief) -> Result<usize> {
    let ids = belief.attacked();
    argmax_by_id(&ids, |i| -belief.travel_minutes(i)).ok_or(Error::NoTarget)
}

pub fn target_highest_ransom(belief: &PiracyBelief) -> Result<usize> {
    let ids = belief.attacked();
    argmax_by_id(&ids, |i| belief.ransom(i)).ok_or(Error::NoTarget)
}

pub fn marginal_gain(belief: &PiracyBelief, i: usize) -> f64 {
    expected_ransom_avoided(belief.travel_minutes(i), belief.p_board(i), belief.window(), belief.ransom(i))
}

pub fn target_marginal_gain(belief: &PiracyBelief) -> Result<usize> {
    let ids = belief.attacked();
    argmax_by_id(&ids, |i| marginal_gain(belief, i)).ok_or(Error::NoTarget)
}

/// Static parameters of the overboard situation known to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct OverboardModel {
    pub alert_nm: f64,
    pub min_behind_nm: f64,
    pub max_behind_nm: f64,
    pub spot_radius_nm: f64,
    pub backtrack_speed_kn: f64,
    pub transit_speed_kn: f64,
    pub backtrack_rate: f64,
    pub transit_rate: f64,
    pub rescue_rate: f64,
    /// Assumed per-minute sd of the multiplicative fuel noise.
    pub assumed_noise_sd: f64,
    pub rescue_p0: f64,
    pub rescue_p_step: f64,
}

impl OverboardModel {
    pub fn rescue_probability(&self, attempt: u32) -> f64 {
        (self.rescue_p0 + self.rescue_p_step * f64::from(attempt.saturating_sub(1))).min(1.0)
    }
}

/// The agent's view during an overboard trial. Track position `x` is the
/// distance from port along the inbound track.
#[derive(Debug, Clone)]
pub struct OverboardBelief {
    model: OverboardModel,
    x: f64,
    covered_to: f64,
    fuel_estimate: f64,
    spotted: bool,
    rescued: bool,
    rescue_attempts: u32,
    returning: bool,
    reads: ReadLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverboardAction {
    Backtrack,
    Rescue,
    ReturnToBase,
}

impl OverboardBelief {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: OverboardModel,
        x: f64,
        covered_to: f64,
        fuel_estimate: f64,
        spotted: bool,
        rescued: bool,
        rescue_attempts: u32,
        returning: bool,
    ) -> Self {
        Self { model, x, covered_to, fuel_estimate, spotted, rescued, rescue_attempts, returning, reads: ReadLog::default() }
    }

    fn situation(&self) -> (f64, f64, f64) {
        self.reads.mark(KnowledgeTag::SM);
        (self.x, self.covered_to, self.fuel_estimate)
    }

    fn progress(&self) -> (bool, bool, u32, bool) {
        self.reads.mark(KnowledgeTag::SM);
        (self.spotted, self.rescued, self.rescue_attempts, self.returning)
    }

    /// Reading the grounding flag as a preference condition.
    fn grounding_spotted(&self) -> bool {
        self.reads.mark(KnowledgeTag::EP);
        self.spotted
    }

    fn risk_model(&self) -> &OverboardModel {
        self.reads.mark(KnowledgeTag::CF);
        &self.model
    }

    pub fn tags_read(&self) -> BTreeSet<KnowledgeTag> {
        self.reads.tags()
    }
}

fn standard_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// P(fuel suffices) under a normal approximation of the remaining burn.
/// With zero variance it is a step at `fuel == mean_need`.
pub fn rtb_probability(fuel: f64, mean_need: f64, sd_need: f64) -> f64 {
    const TOL: f64 = 1e-12;
    if sd_need <= 0.0 {
        return if fuel + TOL >= mean_need { 1.0 } else { 0.0 };
    }
    let margin = fuel - mean_need;
    if margin.abs() <= TOL {
        return 0.5;
    }
    standard_normal_cdf(margin / sd_need)
}

fn return_minutes(m: &OverboardModel, x: f64) -> f64 {
    let step = m.transit_speed_kn / 60.0;
    (x / step - 1e-9).ceil().max(0.0)
}

/// RTB odds after `extra` more minutes at `rate` while moving `advance_nm`
/// further from port per minute.
fn rtb_after(m: &OverboardModel, x: f64, fuel: f64, extra: u32, rate: f64, advance_nm: f64) -> f64 {
    let k = f64::from(extra);
    let back = return_minutes(m, x + advance_nm * k);
    let mean = k * rate + back * m.transit_rate;
    let var_units = k * rate * rate + back * m.transit_rate * m.transit_rate;
    rtb_probability(fuel, mean, m.assumed_noise_sd * var_units.sqrt())
}

/// Picks the number of further minutes in `0..=max_k` maximizing
/// `ratio × gain(k) + P_rtb(k)` among those with `P_rtb(k) >= margin`
/// (zero is always admissible). Ties go to fewer minutes.
fn plan_extension(max_k: u32, margin: f64, ratio: f64, gain: impl Fn(u32) -> f64, rtb: impl Fn(u32) -> f64) -> u32 {
    let mut best = (0, ratio * gain(0) + rtb(0));
    for k in 1..=max_k {
        let p = rtb(k);
        if p < margin {
            continue;
        }
        let u = ratio * gain(k) + p;
        if u > best.1 {
            best = (k, u);
        }
    }
    best.0
}

fn utilitarian_overboard(belief: &OverboardBelief, margin: f64, ratio: f64) -> OverboardAction {
    let (x, covered_to, fuel) = belief.situation();
    let (spotted, rescued, attempts, returning) = belief.progress();
    let m = belief.risk_model();
    if rescued {
        return OverboardAction::ReturnToBase;
    }
    if spotted {
        let mut horizon = 0;
        while horizon < 100 && m.rescue_probability(attempts + horizon) < 1.0 {
            horizon += 1;
        }
        let by = |j: u32| 1.0 - (1..=j).map(|a| 1.0 - m.rescue_probability(attempts + a)).product::<f64>();
        let k = plan_extension(horizon.max(1), margin, ratio, by, |j| rtb_after(m, x, fuel, j, m.rescue_rate, 0.0));
        return if k >= 1 { OverboardAction::Rescue } else { OverboardAction::ReturnToBase };
    }
    if returning {
        return OverboardAction::ReturnToBase;
    }
    let lo = m.alert_nm + m.min_behind_nm;
    let hi = m.alert_nm + m.max_behind_nm;
    let start = covered_to.max(lo);
    if start >= hi {
        return OverboardAction::ReturnToBase;
    }
    let step = m.backtrack_speed_kn / 60.0;
    let max_k = ((hi - m.spot_radius_nm - x) / step).ceil().max(0.0) as u32;
    let spot = |k: u32| {
        let reach = (x + step * f64::from(k) + m.spot_radius_nm).min(hi);
        ((reach - start) / (hi - start)).max(0.0)
    };
    let k = plan_extension(max_k, margin, ratio, spot, |k| rtb_after(m, x, fuel, k, m.backtrack_rate, step));
    if k >= 1 {
        OverboardAction::Backtrack
    } else {
        OverboardAction::ReturnToBase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdriftPlan {
    /// Beacon the flotsam with the drone, interdict, then inspect.
    DroneThenInterdict,
    /// Interdict, then try to reacquire and inspect the flotsam.
    InterdictFirst,
    /// Inspect the flotsam, then head for the merchant.
    InspectFirst,
    Hold,
}

/// The agent's view of the adrift situation.
#[derive(Debug, Clone)]
pub struct AdriftBelief {
    ownship: Position,
    flotsam: Position,
    drift_kn: (f64, f64),
    drone_available: bool,
    drone_speed_kn: f64,
    drone_range_nm: f64,
    reads: ReadLog,
}

impl AdriftBelief {
    pub fn new(
        ownship: Position,
        flotsam: Position,
        drift_kn: (f64, f64),
        drone_available: bool,
        drone_speed_kn: f64,
        drone_range_nm: f64,
    ) -> Self {
        Self { ownship, flotsam, drift_kn, drone_available, drone_speed_kn, drone_range_nm, reads: ReadLog::default() }
    }

    /// Distance the drone would fly to meet the drifting flotsam.
    fn drone_intercept_nm(&self) -> Option<f64> {
        self.reads.mark(KnowledgeTag::AA);
        if !self.drone_available {
            return None;
        }
        intercept_time(&self.ownship, &self.flotsam, self.drift_kn, self.drone_speed_kn).map(|h| h * self.drone_speed_kn)
    }

    pub fn tags_read(&self) -> BTreeSet<KnowledgeTag> {
        self.reads.tags()
    }
}

/// Launch the drone to beacon the flotsam, interdict, then inspect.
pub fn adrift_affordance_plan(belief: &AdriftBelief) -> Result<CandidateCoa> {
    if !belief.drone_available {
        return Err(Error::AffordanceInapplicable("no drone available".into()));
    }
    let reach = belief
        .drone_intercept_nm()
        .ok_or_else(|| Error::AffordanceInapplicable("drone cannot catch the flotsam".into()))?;
    if reach > belief.drone_range_nm {
        return Err(Error::AffordanceInapplicable(format!(
            "flotsam intercept at {reach:.1} nm exceeds drone range {:.1} nm",
            belief.drone_range_nm
        )));
    }
    belief.reads.mark(KnowledgeTag::CS);
    belief.reads.mark(KnowledgeTag::MU);
    let mut c = CandidateCoa::new("drone-beacon", Differentiator::AffordanceEffect);
    c.plan = vec![PlanStep::LaunchDroneBeacon, PlanStep::Interdict { merchant: 0 }, PlanStep::InspectFlotsam];
    c.tags_used = tags(&[KnowledgeTag::AA, KnowledgeTag::CS, KnowledgeTag::MU]);
    c.commits_to = [instance_id(INTERDICT_CONSTRAINT, 0), instance_id(INSPECT_CONSTRAINT, 0)].into();
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Closest,
    HighestRansom,
    MarginalGain,
    Overboard { margin: f64, ratio: f64, duty: bool },
    AdriftDrone,
    NoAction,
}

/// A named strategy with the knowledge it relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    name: String,
    kind: PolicyKind,
    tags: BTreeSet<KnowledgeTag>,
    applicable: BTreeSet<ScenarioKind>,
}

impl Policy {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn tags(&self) -> &BTreeSet<KnowledgeTag> {
        &self.tags
    }

    pub fn applicable_scenarios(&self) -> &BTreeSet<ScenarioKind> {
        &self.applicable
    }

    pub fn check_applicable(&self, scenario: ScenarioKind) -> Result<()> {
        if self.applicable.contains(&scenario) {
            Ok(())
        } else {
            Err(Error::InvalidConfiguration(format!(
                "strategy '{}' does not apply to the {} scenario",
                self.name,
                scenario.name()
            )))
        }
    }

    /// The merchant to interdict; `None` for a policy that stays put.
    pub fn choose_target(&self, belief: &PiracyBelief) -> Result<Option<usize>> {
        match self.kind {
            PolicyKind::Closest => target_closest(belief).map(Some),
            PolicyKind::HighestRansom => target_highest_ransom(belief).map(Some),
            PolicyKind::MarginalGain => target_marginal_gain(belief).map(Some),
            PolicyKind::NoAction => Ok(None),
            _ => Err(Error::InvalidConfiguration(format!("strategy '{}' cannot pick a piracy target", self.name))),
        }
    }

    pub fn decide_overboard(&self, belief: &OverboardBelief) -> Result<OverboardAction> {
        match self.kind {
            PolicyKind::Overboard { margin, ratio, duty } => {
                if duty && belief.grounding_spotted() && !belief.progress().1 {
                    return Ok(OverboardAction::Rescue);
                }
                Ok(utilitarian_overboard(belief, margin, ratio))
            }
            _ => Err(Error::InvalidConfiguration(format!("strategy '{}' cannot steer the overboard scenario", self.name))),
        }
    }

    pub fn adrift_plan(&self, belief: &AdriftBelief) -> Result<AdriftPlan> {
        match self.kind {
            PolicyKind::AdriftDrone => match adrift_affordance_plan(belief) {
                Ok(_) => Ok(AdriftPlan::DroneThenInterdict),
                Err(Error::AffordanceInapplicable(_)) => Ok(AdriftPlan::InterdictFirst),
                Err(e) => Err(e),
            },
            PolicyKind::Closest | PolicyKind::HighestRansom | PolicyKind::MarginalGain => {
                belief.reads.mark(KnowledgeTag::CS);
                Ok(AdriftPlan::InterdictFirst)
            }
            PolicyKind::NoAction => Ok(AdriftPlan::Hold),
            PolicyKind::Overboard { .. } => {
                Err(Error::InvalidConfiguration(format!("strategy '{}' cannot act in the adrift scenario", self.name)))
            }
        }
    }
}

fn scenarios(list: &[ScenarioKind]) -> BTreeSet<ScenarioKind> {
    list.iter().copied().collect()
}

pub fn closest() -> Policy {
    Policy {
        name: "closest".into(),
        kind: PolicyKind::Closest,
        tags: tags(&[KnowledgeTag::CS, KnowledgeTag::SM]),
        applicable: scenarios(&[ScenarioKind::Piracy, ScenarioKind::Adrift]),
    }
}

pub fn highest_ransom() -> Policy {
    Policy {
        name: "ransom".into(),
        kind: PolicyKind::HighestRansom,
        tags: tags(&[KnowledgeTag::CS, KnowledgeTag::SM]),
        applicable: scenarios(&[ScenarioKind::Piracy, ScenarioKind::Adrift]),
    }
}

pub fn marginal_gain_policy() -> Policy {
    Policy {
        name: "marginal-gain".into(),
        kind: PolicyKind::MarginalGain,
        tags: tags(&[KnowledgeTag::CF, KnowledgeTag::SM, KnowledgeTag::MU, KnowledgeTag::CS]),
        applicable: scenarios(&[ScenarioKind::Piracy, ScenarioKind::Adrift]),
    }
}

pub fn adrift_drone() -> Policy {
    Policy {
        name: "adrift-drone".into(),
        kind: PolicyKind::AdriftDrone,
        tags: tags(&[KnowledgeTag::AA, KnowledgeTag::CS, KnowledgeTag::MU]),
        applicable: scenarios(&[ScenarioKind::Adrift]),
    }
}

pub fn no_action() -> Policy {
    Policy {
        name: "no-action".into(),
        kind: PolicyKind::NoAction,
        tags: tags(&[KnowledgeTag::CS]),
        applicable: scenarios(&[ScenarioKind::Piracy, ScenarioKind::Adrift]),
    }
}

/// Searches while the estimated RTB probability stays at or above `margin`,
/// weighing rescue gain (scaled by `ratio`) against RTB risk.
///
/// `ratio = 0` makes rescue worthless and the policy returns at once.
pub fn overboard_utilitarian(margin: f64, ratio: f64) -> Result<Policy> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidArgument(format!("margin must lie in (0, 1), got {margin}")));
    }
    if ratio < 0.0 || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("ratio must be finite and non-negative, got {ratio}")));
    }
    Ok(Policy {
        name: format!("overboard-util:{margin}:{ratio}"),
        kind: PolicyKind::Overboard { margin, ratio, duty: false },
        tags: tags(&[KnowledgeTag::CF, KnowledgeTag::SM]),
        applicable: scenarios(&[ScenarioKind::Overboard]),
    })
}

/// Behaves as `inner` until the sailor is spotted, then stays on rescue
/// until the sailor is recovered.
pub fn wrap_duty_once_spotted(inner: Policy) -> Result<Policy> {
    match inner.kind {
        PolicyKind::Overboard { margin, ratio, duty: false } => {
            let mut tags = inner.tags;
            tags.insert(KnowledgeTag::EP);
            Ok(Policy {
                name: format!("overboard-duty:{margin}:{ratio}"),
                kind: PolicyKind::Overboard { margin, ratio, duty: true },
                tags,
                applicable: inner.applicable,
            })
        }
        _ => Err(Error::InvalidConfiguration(format!(
            "strategy '{}' is not an unwrapped overboard policy",
            inner.name
        ))),
    }
}

pub const STRATEGY_NAMES: [&str; 7] = [
    "closest",
    "ransom",
    "marginal-gain",
    "overboard-util:<margin>:<ratio>",
    "overboard-duty:<margin>:<ratio>",
    "adrift-drone",
    "no-action",
];

fn parse_margin_ratio(name: &str, rest: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidConfiguration(format!("strategy '{name}' must look like <kind>:<margin>:<ratio>"));
    let (m, r) = rest.split_once(':').ok_or_else(bad)?;
    let margin = m.trim().parse::<f64>().map_err(|_| bad())?;
    let ratio = r.trim().parse::<f64>().map_err(|_| bad())?;
    Ok((margin, ratio))
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::InvalidConfiguration(msg),
        other => other,
    }
}

/// Looks up a strategy by its registry name.
pub fn policy_by_name(name: &str) -> Result<Policy> {
    if let Some(rest) = name.strip_prefix("overboard-util:") {
        let (m, r) = parse_margin_ratio(name, rest)?;
        return overboard_utilitarian(m, r).map_err(as_config_error);
    }
    if let Some(rest) = name.strip_prefix("overboard-duty:") {
        let (m, r) = parse_margin_ratio(name, rest)?;
        return overboard_utilitarian(m, r).and_then(wrap_duty_once_spotted).map_err(as_config_error);
    }
    match name {
        "closest" => Ok(closest()),
        "ransom" => Ok(highest_ransom()),
        "marginal-gain" => Ok(marginal_gain_policy()),
        "adrift-drone" => Ok(adrift_drone()),
        "no-action" => Ok(no_action()),
        other => Err(Error::InvalidConfiguration(format!(
            "unknown strategy '{other}' (known: {})",
            STRATEGY_NAMES.join(", ")
        ))),
    }
}
