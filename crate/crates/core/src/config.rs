//! Tunable parameters, scenario presets and the flat `key = value` format.
//!
//! Every tunable has a dotted key, a type and a validated range. Presets are
//! complete [`Config`] values; a config file or CLI override only touches the
//! keys it names.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::conflict::Provenance;
use crate::error::{Error, Result};
use crate::sim::{FuelModel, FuelNoise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    Overboard,
    Piracy,
    Adrift,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Overboard => "overboard",
            ScenarioKind::Piracy => "piracy",
            ScenarioKind::Adrift => "adrift",
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["overboard", "piracy", "piracy-cannons", "adrift"];

#[derive(Debug, Clone, PartialEq)]
pub struct OverboardConfig {
    pub alert_nm: f64,
    pub min_behind_nm: f64,
    pub max_behind_nm: f64,
    pub safe_backtrack_nm: f64,
    pub backtrack_speed_kn: f64,
    pub spot_radius_nm: f64,
    pub lateral_sd_nm: f64,
    pub rescue_p0: f64,
    pub rescue_p_step: f64,
    pub horizon_min: u32,
}

impl Default for OverboardConfig {
    fn default() -> Self {
        Self {
            alert_nm: 20.0,
            min_behind_nm: 5.0,
            max_behind_nm: 15.0,
            safe_backtrack_nm: 10.0,
            backtrack_speed_kn: 15.0,
            spot_radius_nm: 0.5,
            lateral_sd_nm: 0.28,
            rescue_p0: 0.2,
            rescue_p_step: 0.1,
            horizon_min: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiracyConfig {
    pub p_eventual: f64,
    pub window_min: u32,
    pub lane_length_nm: f64,
    pub lane_width_nm: f64,
    pub ownship_min_offset_nm: f64,
    pub ownship_max_offset_nm: f64,
    pub ransom_min: f64,
    pub ransom_max: f64,
    pub max_attempts: u32,
}

impl Default for PiracyConfig {
    fn default() -> Self {
        Self {
            p_eventual: 0.95,
            window_min: 30,
            lane_length_nm: 60.0,
            lane_width_nm: 4.0,
            ownship_min_offset_nm: 2.0,
            ownship_max_offset_nm: 10.0,
            ransom_min: 1.0e6,
            ransom_max: 1.0e7,
            max_attempts: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CannonConfig {
    /// Merchants carry the post-memo cannon fit in ground truth.
    pub enabled: bool,
    /// How many of the four merchants belong to the newly equipped classes.
    pub defended_count: u32,
    /// Eventual boarding success against a defended merchant.
    pub p_eventual_defended: f64,
    pub memo_provenance: Provenance,
    /// Whether the agent is able to revise its beliefs from a memo at all.
    pub belief_update: bool,
}

impl Default for CannonConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            defended_count: 2,
            p_eventual_defended: 0.30,
            memo_provenance: Provenance::CommandDirective,
            belief_update: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdriftConfig {
    pub merchant_min_nm: f64,
    pub merchant_max_nm: f64,
    pub attack_start_min: u32,
    pub attack_start_max: u32,
    pub flotsam_min_nm: f64,
    pub flotsam_max_nm: f64,
    pub drift_min_kn: f64,
    pub drift_max_kn: f64,
    pub relocate_difficulty: f64,
    pub contact_window_min: u32,
    pub inspect_min: u32,
    pub engagement_min: u32,
    pub drone_available: bool,
    pub drone_speed_kn: f64,
    pub drone_range_nm: f64,
    pub horizon_min: u32,
}

impl Default for AdriftConfig {
    fn default() -> Self {
        Self {
            merchant_min_nm: 3.0,
            merchant_max_nm: 8.0,
            attack_start_min: 12,
            attack_start_max: 25,
            flotsam_min_nm: 10.0,
            flotsam_max_nm: 30.0,
            drift_min_kn: 0.5,
            drift_max_kn: 2.0,
            relocate_difficulty: 0.2,
            contact_window_min: 30,
            inspect_min: 20,
            engagement_min: 30,
            drone_available: true,
            drone_speed_kn: 80.0,
            drone_range_nm: 40.0,
            horizon_min: 300,
        }
    }
}

/// Provenance → quality map used by the information filter.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityConfig {
    pub command_directive: f64,
    pub official_regulation: f64,
    pub sensor: f64,
    pub social_media: f64,
    pub unknown: f64,
    pub min_quality: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            command_directive: 0.9,
            official_regulation: 0.85,
            sensor: 0.7,
            social_media: 0.2,
            unknown: 0.1,
            min_quality: 0.5,
        }
    }
}

impl QualityConfig {
    pub fn quality(&self, provenance: Provenance) -> f64 {
        match provenance {
            Provenance::CommandDirective => self.command_directive,
            Provenance::OfficialRegulation => self.official_regulation,
            Provenance::Sensor => self.sensor,
            Provenance::SocialMedia => self.social_media,
            Provenance::Unknown => self.unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub preset: String,
    pub scenario: ScenarioKind,
    pub max_speed_kn: f64,
    pub fuel: FuelModel,
    /// Standard deviation of the agent's fuel-gauge error, in fuel units.
    pub fuel_estimate_sd: f64,
    /// Per-minute noise sd the agent assumes when estimating RTB odds.
    pub assumed_noise_sd: f64,
    pub overboard: OverboardConfig,
    pub piracy: PiracyConfig,
    pub cannons: CannonConfig,
    pub adrift: AdriftConfig,
    pub quality: QualityConfig,
    /// Draw a fresh instance per strategy instead of reusing instances.
    pub resample: bool,
}

impl Config {
    fn base(preset: &str, scenario: ScenarioKind) -> Self {
        Self {
            preset: preset.to_owned(),
            scenario,
            max_speed_kn: 30.0,
            fuel: FuelModel::default(),
            fuel_estimate_sd: 0.0,
            assumed_noise_sd: FuelNoise::default().sd,
            overboard: OverboardConfig::default(),
            piracy: PiracyConfig::default(),
            cannons: CannonConfig::default(),
            adrift: AdriftConfig::default(),
            quality: QualityConfig::default(),
            resample: false,
        }
    }

    pub fn preset(name: &str) -> Result<Config> {
        let cfg = match name {
            "overboard" => Config::base(name, ScenarioKind::Overboard),
            "piracy" => Config::base(name, ScenarioKind::Piracy),
            "piracy-cannons" => {
                let mut cfg = Config::base(name, ScenarioKind::Piracy);
                cfg.cannons.enabled = true;
                cfg
            }
            "adrift" => Config::base(name, ScenarioKind::Adrift),
            other => {
                return Err(Error::InvalidConfiguration(format!(
                    "unknown preset '{other}' (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Sets one dotted key from its textual value, validating type and range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let param = PARAMS
            .iter()
            .find(|p| p.key == key)
            .ok_or_else(|| Error::InvalidConfiguration(format!("unknown key '{key}'")))?;
        let parsed = param.kind.parse(key, value)?;
        (param.set)(self, parsed);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        PARAMS.iter().find(|p| p.key == key).map(|p| (p.get)(self).to_string())
    }

    /// Every key with its current value, in schema order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        PARAMS.iter().map(|p| (p.key, (p.get)(self).to_string())).collect()
    }

    /// Applies a flat `key = value` document (`#` starts a comment).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_kv(text)? {
            self.set(&key, &value)?;
        }
        self.validate()
    }

    /// Builds a config from a document that may name its own preset.
    pub fn from_text(text: &str) -> Result<Config> {
        let pairs = parse_kv(text)?;
        let preset = pairs
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::InvalidConfiguration("document does not name a preset".into()))?;
        let mut cfg = Config::preset(&preset)?;
        for (key, value) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "preset = {}", self.preset);
        for (key, value) in self.entries() {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Cross-field checks that single-key ranges cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfiguration(msg.to_owned()));
        let n = &self.fuel.noise;
        if n.min > 1.0 || n.max < 1.0 || n.min >= n.max {
            return bad("fuel.noise_min <= 1 <= fuel.noise_max must hold");
        }
        let o = &self.overboard;
        if o.min_behind_nm >= o.max_behind_nm {
            return bad("overboard.min_behind_nm must be below overboard.max_behind_nm");
        }
        if o.backtrack_speed_kn > self.max_speed_kn {
            return bad("overboard.backtrack_speed_kn exceeds sim.max_speed_kn");
        }
        let p = &self.piracy;
        if p.ransom_min > p.ransom_max {
            return bad("piracy.ransom_min must not exceed piracy.ransom_max");
        }
        if p.ownship_min_offset_nm > p.ownship_max_offset_nm {
            return bad("piracy.ownship_min_offset_nm must not exceed piracy.ownship_max_offset_nm");
        }
        let a = &self.adrift;
        if a.merchant_min_nm > a.merchant_max_nm
            || a.flotsam_min_nm > a.flotsam_max_nm
            || a.drift_min_kn > a.drift_max_kn
            || a.attack_start_min > a.attack_start_max
        {
            return bad("adrift ranges must have min <= max");
        }
        Ok(())
    }
}

/// Splits a flat key/value document into pairs, rejecting malformed lines.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfiguration(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        pairs.push((key.trim().to_owned(), value.trim().to_owned()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Float(f64),
    Int(u32),
    Bool(bool),
    Provenance(Provenance),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // `{}` on f64 prints the shortest string that parses back exactly.
            Value::Float(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Provenance(p) => f.write_str(p.name()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// Inclusive range.
    Float(f64, f64),
    /// Exclusive lower bound, inclusive upper bound.
    FloatOpenLow(f64, f64),
    Int(u32, u32),
    Bool,
    Provenance,
}

impl Kind {
    fn parse(self, key: &str, text: &str) -> Result<Value> {
        let invalid = |what: &str| Error::InvalidConfiguration(format!("{key}: {what} (got '{text}')"));
        match self {
            Kind::Float(lo, hi) | Kind::FloatOpenLow(lo, hi) => {
                let v: f64 = text.parse().map_err(|_| invalid("expected a number"))?;
                let low_ok = match self {
                    Kind::FloatOpenLow(..) => v > lo,
                    _ => v >= lo,
                };
                if !v.is_finite() || !low_ok || v > hi {
                    let open = if matches!(self, Kind::FloatOpenLow(..)) { "(" } else { "[" };
                    return Err(invalid(&format!("must lie in {open}{lo}, {hi}]")));
                }
                Ok(Value::Float(v))
            }
            Kind::Int(lo, hi) => {
                let v: u32 = text.parse().map_err(|_| invalid("expected a non-negative integer"))?;
                if v < lo || v > hi {
                    return Err(invalid(&format!("must lie in [{lo}, {hi}]")));
                }
                Ok(Value::Int(v))
            }
            Kind::Bool => match text {
                "true" | "1" | "yes" | "on" => Ok(Value::Bool(true)),
                "false" | "0" | "no" | "off" => Ok(Value::Bool(false)),
                _ => Err(invalid("expected true or false")),
            },
            Kind::Provenance => Provenance::from_name(text)
                .map(Value::Provenance)
                .ok_or_else(|| invalid("expected a provenance name")),
        }
    }
}

struct Param {
    key: &'static str,
    kind: Kind,
    get: fn(&Config) -> Value,
    set: fn(&mut Config, Value),
}

macro_rules! float_param {
    ($key:literal, $kind:expr, $($field:ident).+) => {
        Param {
            key: $key,
            kind: $kind,
            get: |c| Value::Float(c.$($field).+),
            set: |c, v| if let Value::Float(x) = v { c.$($field).+ = x },
        }
    };
}

macro_rules! int_param {
    ($key:literal, $lo:expr, $hi:expr, $($field:ident).+) => {
        Param {
            key: $key,
            kind: Kind::Int($lo, $hi),
            get: |c| Value::Int(c.$($field).+),
            set: |c, v| if let Value::Int(x) = v { c.$($field).+ = x },
        }
    };
}

macro_rules! bool_param {
    ($key:literal, $($field:ident).+) => {
        Param {
            key: $key,
            kind: Kind::Bool,
            get: |c| Value::Bool(c.$($field).+),
            set: |c, v| if let Value::Bool(x) = v { c.$($field).+ = x },
        }
    };
}

const PROB: Kind = Kind::Float(0.0, 1.0);
const PROB_OPEN: Kind = Kind::FloatOpenLow(0.0, 1.0);
const SPEED: Kind = Kind::FloatOpenLow(0.0, 200.0);
const DIST: Kind = Kind::Float(0.0, 500.0);
const OFFSET: Kind = Kind::Float(-500.0, 500.0);
const RATE: Kind = Kind::Float(0.0, 100.0);

static PARAMS: &[Param] = &[
    float_param!("sim.max_speed_kn", SPEED, max_speed_kn),
    bool_param!("fuel.noise_enabled", fuel.noise.enabled),
    float_param!("fuel.noise_sd", Kind::Float(0.0, 0.5), fuel.noise.sd),
    float_param!("fuel.noise_min", Kind::FloatOpenLow(0.0, 1.0), fuel.noise.min),
    float_param!("fuel.noise_max", Kind::Float(1.0, 3.0), fuel.noise.max),
    float_param!("fuel.rate.transit", RATE, fuel.transit),
    float_param!("fuel.rate.backtrack", RATE, fuel.backtrack),
    float_param!("fuel.rate.search", RATE, fuel.search),
    float_param!("fuel.rate.rescue", RATE, fuel.rescue),
    float_param!("fuel.rate.loiter", RATE, fuel.loiter),
    float_param!("belief.fuel_estimate_sd", Kind::Float(0.0, 50.0), fuel_estimate_sd),
    float_param!("belief.assumed_noise_sd", Kind::Float(0.0, 0.5), assumed_noise_sd),
    float_param!("overboard.alert_nm", Kind::FloatOpenLow(0.0, 500.0), overboard.alert_nm),
    float_param!("overboard.min_behind_nm", DIST, overboard.min_behind_nm),
    float_param!("overboard.max_behind_nm", Kind::FloatOpenLow(0.0, 500.0), overboard.max_behind_nm),
    float_param!("overboard.safe_backtrack_nm", DIST, overboard.safe_backtrack_nm),
    float_param!("overboard.backtrack_speed_kn", SPEED, overboard.backtrack_speed_kn),
    float_param!("overboard.spot_radius_nm", Kind::Float(0.0, 10.0), overboard.spot_radius_nm),
    float_param!("overboard.lateral_sd_nm", Kind::Float(0.0, 10.0), overboard.lateral_sd_nm),
    float_param!("overboard.rescue_p0", PROB_OPEN, overboard.rescue_p0),
    float_param!("overboard.rescue_p_step", PROB, overboard.rescue_p_step),
    int_param!("overboard.horizon_min", 1, 100_000, overboard.horizon_min),
    float_param!("piracy.p_eventual", Kind::Float(0.0, 0.999_999), piracy.p_eventual),
    int_param!("piracy.window_min", 1, 1_000, piracy.window_min),
    float_param!("piracy.lane_length_nm", Kind::FloatOpenLow(0.0, 1_000.0), piracy.lane_length_nm),
    float_param!("piracy.lane_width_nm", DIST, piracy.lane_width_nm),
    float_param!("piracy.ownship_min_offset_nm", OFFSET, piracy.ownship_min_offset_nm),
    float_param!("piracy.ownship_max_offset_nm", OFFSET, piracy.ownship_max_offset_nm),
    float_param!("piracy.ransom_min", Kind::FloatOpenLow(0.0, 1e12), piracy.ransom_min),
    float_param!("piracy.ransom_max", Kind::FloatOpenLow(0.0, 1e12), piracy.ransom_max),
    int_param!("piracy.max_attempts", 1, 10_000_000, piracy.max_attempts),
    bool_param!("cannons.enabled", cannons.enabled),
    int_param!("cannons.defended_count", 0, 4, cannons.defended_count),
    float_param!("cannons.p_eventual_defended", Kind::Float(0.0, 0.999_999), cannons.p_eventual_defended),
    Param {
        key: "memo.provenance",
        kind: Kind::Provenance,
        get: |c| Value::Provenance(c.cannons.memo_provenance),
        set: |c, v| {
            if let Value::Provenance(p) = v {
                c.cannons.memo_provenance = p
            }
        },
    },
    bool_param!("memo.belief_update", cannons.belief_update),
    float_param!("adrift.merchant_min_nm", DIST, adrift.merchant_min_nm),
    float_param!("adrift.merchant_max_nm", DIST, adrift.merchant_max_nm),
    int_param!("adrift.attack_start_min", 0, 10_000, adrift.attack_start_min),
    int_param!("adrift.attack_start_max", 0, 10_000, adrift.attack_start_max),
    float_param!("adrift.flotsam_min_nm", DIST, adrift.flotsam_min_nm),
    float_param!("adrift.flotsam_max_nm", DIST, adrift.flotsam_max_nm),
    float_param!("adrift.drift_min_kn", Kind::Float(0.0, 20.0), adrift.drift_min_kn),
    float_param!("adrift.drift_max_kn", Kind::Float(0.0, 20.0), adrift.drift_max_kn),
    float_param!("adrift.relocate_difficulty", PROB, adrift.relocate_difficulty),
    int_param!("adrift.contact_window_min", 0, 10_000, adrift.contact_window_min),
    int_param!("adrift.inspect_min", 0, 10_000, adrift.inspect_min),
    int_param!("adrift.engagement_min", 0, 10_000, adrift.engagement_min),
    bool_param!("adrift.drone_available", adrift.drone_available),
    float_param!("adrift.drone_speed_kn", SPEED, adrift.drone_speed_kn),
    float_param!("adrift.drone_range_nm", DIST, adrift.drone_range_nm),
    int_param!("adrift.horizon_min", 1, 100_000, adrift.horizon_min),
    float_param!("quality.command_directive", PROB, quality.command_directive),
    float_param!("quality.official_regulation", PROB, quality.official_regulation),
    float_param!("quality.sensor", PROB, quality.sensor),
    float_param!("quality.social_media", PROB, quality.social_media),
    float_param!("quality.unknown", PROB, quality.unknown),
    float_param!("quality.min_quality", PROB, quality.min_quality),
    bool_param!("batch.resample", resample),
];

/// Resolved config as an ordered key → value map.
pub fn to_map(cfg: &Config) -> BTreeMap<String, String> {
    let mut map: BTreeMap<String, String> =
        cfg.entries().into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    map.insert("preset".into(), cfg.preset.clone());
    map
}
