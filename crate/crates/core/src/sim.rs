//! Fixed-increment time simulation engine.
//!
//! Distances are nautical miles on a flat plane, speeds are knots, and the
//! clock advances one minute per step. Every source of randomness is an
//! [`RngStream`] derived from a master seed and a stream label, so a trial is
//! a pure function of its inputs.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Step length in minutes.
pub const DT_MINUTES: u32 = 1;

/// Positions closer than this are treated as coincident (arrival).
pub const ARRIVAL_EPS_NM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    /// Nautical miles east.
    pub x: f64,
    /// Nautical miles north.
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn translate(&self, heading: Heading, distance_nm: f64) -> Position {
        Position::new(self.x + heading.dx * distance_nm, self.y + heading.dy * distance_nm)
    }
}

/// Unit direction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heading {
    dx: f64,
    dy: f64,
}

impl Heading {
    pub const NORTH: Heading = Heading { dx: 0.0, dy: 1.0 };
    pub const SOUTH: Heading = Heading { dx: 0.0, dy: -1.0 };
    pub const EAST: Heading = Heading { dx: 1.0, dy: 0.0 };
    pub const WEST: Heading = Heading { dx: -1.0, dy: 0.0 };

    /// Normalizes `(dx, dy)`; `None` for a zero or non-finite vector.
    pub fn new(dx: f64, dy: f64) -> Option<Heading> {
        let norm = dx.hypot(dy);
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(Heading { dx: dx / norm, dy: dy / norm })
    }

    pub fn between(from: &Position, to: &Position) -> Option<Heading> {
        Heading::new(to.x - from.x, to.y - from.y)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }
}

/// Minutes needed to cover the straight line `from → to` at `speed_kn`.
pub fn travel_time(from: &Position, to: &Position, speed_kn: f64) -> Result<f64> {
    if speed_kn <= 0.0 || !speed_kn.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "travel speed must be positive, got {speed_kn}"
        )));
    }
    Ok(from.distance(to) / speed_kn * 60.0)
}

/// Trial clock in whole minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct SimClock {
    t: u32,
}

impl SimClock {
    pub fn minutes(&self) -> u32 {
        self.t
    }

    pub fn dt(&self) -> u32 {
        DT_MINUTES
    }

    fn advance(&mut self) {
        self.t += DT_MINUTES;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShipMode {
    Transit,
    Backtrack,
    Search,
    Rescue,
    Loiter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    /// Burns fuel according to the world's [`FuelModel`].
    Ship,
    /// Range-limited by its scenario rather than by fuel accounting.
    Drone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShipState {
    pub kind: EntityKind,
    pub position: Position,
    pub speed: f64,
    pub heading: Heading,
    pub fuel: f64,
    pub mode: ShipMode,
    pub max_speed: f64,
    pub fuel_exhausted: bool,
    /// Total distance covered since trial start.
    pub distance_run: f64,
}

impl ShipState {
    pub fn new(position: Position, fuel: f64, max_speed: f64) -> Self {
        Self {
            kind: EntityKind::Ship,
            position,
            speed: 0.0,
            heading: Heading::NORTH,
            fuel,
            mode: ShipMode::Loiter,
            max_speed,
            fuel_exhausted: false,
            distance_run: 0.0,
        }
    }

    pub fn drone(position: Position, max_speed: f64) -> Self {
        Self {
            kind: EntityKind::Drone,
            fuel: 0.0,
            ..ShipState::new(position, 0.0, max_speed)
        }
    }
}

/// Multiplicative fuel-rate noise: normal around 1, truncated to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelNoise {
    pub enabled: bool,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for FuelNoise {
    fn default() -> Self {
        Self { enabled: true, sd: 0.05, min: 0.5, max: 1.5 }
    }
}

/// Per-mode burn rates in fuel units per minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelModel {
    pub transit: f64,
    pub backtrack: f64,
    pub search: f64,
    pub rescue: f64,
    pub loiter: f64,
    pub noise: FuelNoise,
}

impl Default for FuelModel {
    fn default() -> Self {
        Self {
            transit: 1.0,
            backtrack: 0.5,
            search: 0.6,
            rescue: 0.4,
            loiter: 0.2,
            noise: FuelNoise::default(),
        }
    }
}

impl FuelModel {
    pub fn base_rate(&self, mode: ShipMode) -> f64 {
        match mode {
            ShipMode::Transit => self.transit,
            ShipMode::Backtrack => self.backtrack,
            ShipMode::Search => self.search,
            ShipMode::Rescue => self.rescue,
            ShipMode::Loiter => self.loiter,
        }
    }

    /// One multiplicative noise factor; exactly 1 when noise is disabled.
    pub fn draw_noise(&self, rng: &mut RngStream) -> f64 {
        if !self.noise.enabled || self.noise.sd == 0.0 {
            return 1.0;
        }
        let normal = Normal::new(1.0, self.noise.sd).expect("validated noise sd");
        let lo = self.noise.min.max(f64::MIN_POSITIVE);
        loop {
            let n = normal.sample(rng);
            if n >= lo && n <= self.noise.max {
                return n;
            }
        }
    }
}

/// Burns `base_rate(mode) × dt × noise` from `ship`, flooring fuel at zero.
///
/// Returns the demanded amount. Running dry sets `fuel_exhausted`.
pub fn consume_fuel(ship: &mut ShipState, dt: f64, model: &FuelModel, rng: &mut RngStream) -> f64 {
    let demand = model.base_rate(ship.mode) * dt * model.draw_noise(rng);
    ship.fuel = (ship.fuel - demand).max(0.0);
    if ship.fuel <= 0.0 {
        ship.fuel_exhausted = true;
    }
    demand
}

/// A labelled, seeded random stream.
///
/// The master seed keys a ChaCha8 generator and the label selects one of its
/// 2^64 independent streams, so streams never share a draw sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

pub fn seeded_rng(master_seed: u64, stream_id: &str) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(fnv1a64(stream_id.as_bytes()));
    RngStream { seed: master_seed, stream_id: stream_id.to_owned(), rng }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd == 0.0 {
            return mean;
        }
        Normal::new(mean, sd).expect("finite sd").sample(self)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `index` of a batch keyed by `master_seed`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Steering order for one entity for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelmCommand {
    pub entity: usize,
    pub heading: Heading,
    pub speed: f64,
    pub mode: ShipMode,
}

impl HelmCommand {
    /// Stay in place in `mode`.
    pub fn hold(entity: usize, mode: ShipMode) -> Self {
        Self { entity, heading: Heading::NORTH, speed: 0.0, mode }
    }

    /// Head for `to` at up to `speed`, slowing so one step never overshoots.
    pub fn steer_to(entity: usize, from: &Position, to: &Position, speed: f64, mode: ShipMode) -> Self {
        match Heading::between(from, to) {
            Some(heading) => {
                let per_step = from.distance(to) * 60.0 / f64::from(DT_MINUTES);
                Self { entity, heading, speed: speed.min(per_step), mode }
            }
            None => Self::hold(entity, mode),
        }
    }
}

/// Hours until a pursuer at `from` moving at `speed_kn` meets a target at
/// `target` drifting with velocity `(vx, vy)` knots. `None` if it never can.
pub fn intercept_time(from: &Position, target: &Position, drift_kn: (f64, f64), speed_kn: f64) -> Option<f64> {
    let (rx, ry) = (target.x - from.x, target.y - from.y);
    let (vx, vy) = drift_kn;
    let a = vx * vx + vy * vy - speed_kn * speed_kn;
    let b = 2.0 * (rx * vx + ry * vy);
    let c = rx * rx + ry * ry;
    if c == 0.0 {
        return Some(0.0);
    }
    if a.abs() < 1e-12 {
        let t = -c / b;
        return (b < 0.0 && t > 0.0).then_some(t);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
        .into_iter()
        .filter(|t| *t > 0.0)
        .reduce(f64::min)
}

/// Hook for scenario-specific stochastic events evaluated after every move.
pub trait EventModel {
    fn after_move(&mut self, world: &mut WorldState) -> Result<()>;
}

/// Event model with no events.
pub struct NoEvents;

impl EventModel for NoEvents {
    fn after_move(&mut self, _world: &mut WorldState) -> Result<()> {
        Ok(())
    }
}

/// Satisfaction status of one constraint instance at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParticipantStatus {
    Pending,
    Satisfied,
    /// Resolved by its own process without the agent's involvement.
    Discharged,
    Unsatisfiable,
}

impl ParticipantStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, ParticipantStatus::Pending)
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub clock: SimClock,
    pub horizon: u32,
    pub ships: Vec<ShipState>,
    pub flags: BTreeMap<String, bool>,
    pub statuses: BTreeMap<String, ParticipantStatus>,
    pub fuel_model: FuelModel,
}

impl WorldState {
    pub fn new(horizon: u32, fuel_model: FuelModel) -> Self {
        Self {
            clock: SimClock::default(),
            horizon,
            ships: Vec::new(),
            flags: BTreeMap::new(),
            statuses: BTreeMap::new(),
            fuel_model,
        }
    }

    pub fn add_ship(&mut self, ship: ShipState) -> usize {
        self.ships.push(ship);
        self.ships.len() - 1
    }

    pub fn flag(&self, name: &str) -> bool {
        self.flags.get(name).copied().unwrap_or(false)
    }

    pub fn set_flag(&mut self, name: impl Into<String>, value: bool) {
        self.flags.insert(name.into(), value);
    }

    pub fn at_horizon(&self) -> bool {
        self.clock.minutes() >= self.horizon
    }

    /// Advances the world by one step.
    ///
    /// Commanded ships take the commanded heading, speed (clamped to their
    /// maximum) and mode; others keep their previous orders. Ships burn fuel
    /// for the step before moving and cover only the fraction of the step
    /// their remaining fuel pays for. Exhausted ships do not move.
    pub fn step(
        &mut self,
        commands: &[HelmCommand],
        fuel_rng: &mut RngStream,
        events: &mut dyn EventModel,
    ) -> Result<()> {
        if self.at_horizon() {
            return Err(Error::HorizonExceeded { clock: self.clock.minutes(), horizon: self.horizon });
        }
        for cmd in commands {
            if cmd.entity >= self.ships.len() {
                return Err(Error::InvalidCommand(format!("unknown entity {}", cmd.entity)));
            }
            if !cmd.speed.is_finite() || cmd.speed < 0.0 {
                return Err(Error::InvalidCommand(format!("speed {} for entity {}", cmd.speed, cmd.entity)));
            }
        }
        for cmd in commands {
            let ship = &mut self.ships[cmd.entity];
            ship.heading = cmd.heading;
            ship.speed = cmd.speed.min(ship.max_speed);
            ship.mode = cmd.mode;
        }

        let dt = f64::from(DT_MINUTES);
        let model = self.fuel_model;
        for ship in &mut self.ships {
            if ship.fuel_exhausted {
                ship.speed = 0.0;
                continue;
            }
            let mut fraction = 1.0;
            if ship.kind == EntityKind::Ship {
                let available = ship.fuel;
                let demand = consume_fuel(ship, dt, &model, fuel_rng);
                if demand > available {
                    fraction = if demand > 0.0 { available / demand } else { 1.0 };
                }
            }
            let leg = ship.speed / 60.0 * dt * fraction;
            ship.position = ship.position.translate(ship.heading, leg);
            ship.distance_run += leg;
            if ship.fuel_exhausted {
                ship.speed = 0.0;
            }
        }
        self.clock.advance();
        events.after_move(self)
    }
}
