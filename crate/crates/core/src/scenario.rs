//! Scenario files.
//!
//! A scenario is TOML (or JSON with the same structure):
//!
//! ```toml
//! name = "convoy"
//! fixed_point_scale = 100          # optional, default 100
//!
//! [highway]                        # all optional; defaults shown
//! length = 5000.0
//! lanes = 4
//! lane_width = 3.5
//! range = 300.0                    # communication range H, metres
//! dt = 1.0                         # step, seconds
//!
//! [thresholds]
//! psi_h = 0.6                      # used by vehicles that set no psi_h
//! psi_l = 12.0
//! psi_t = 0.5
//!
//! [weights]
//! delta_d = 1.0
//! delta_h = 1.0
//! delta_t = 0.1
//! delta_f = 1.0
//! gamma = 0.8                      # per-hop opinion decay
//!
//! [crypto]
//! key_bits = 1024
//! seed = 1
//!
//! [sim]
//! duration = 30.0
//! seed = 1
//! centrality = "social"            # or "communication"
//! max_routes = 4
//! hop_latency_ms = 10.0
//! t_exp_ms = 1.1                   # modelled cost of one exponentiation
//! trace_bsms = true
//!
//! [[vehicles]]
//! id = 1
//! name = "A"                       # optional
//! entry_time = 0.0
//! x = 1000.0                       # optional; default is the entry end
//! lane = 0
//! speed = 25.0                     # signed, m/s
//! profile = "1110_0000"
//! psi_h = 0.6                      # optional
//!
//! [[queries]]
//! at = 10.0
//! source = "A"                     # name or numeric id
//! target = 4
//!
//! [poisson]                        # optional random arrivals
//! rate = 0.2
//! min_speed = 20.0
//! max_speed = 33.0
//! profile_width = 16
//! psi_h = 0.6
//! first_id = 1000
//! seed = 3                         # optional, defaults to sim.seed
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobility::{Advert, Arrival, HighwayConfig, MobilityError, PoissonArrivals};
use crate::paillier::DEFAULT_SCALE;
use crate::protocol::{ProtocolParams, DEFAULT_GAMMA};
use crate::routing::DEFAULT_MAX_ROUTES;
use crate::seg::{
    CentralityBasis, InterestProfile, SegError, SnapshotParams, Thresholds, TrustWeights,
};
use crate::simnet::DEFAULT_HOP_LATENCY_US;
use crate::VehicleId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown vehicle {0:?}")]
    UnknownVehicle(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn from_seg(section: &str, e: SegError) -> ScenarioError {
    match e {
        SegError::OutOfRange {
            field,
            value,
            low,
            high,
        } => invalid(
            format!("{section}.{field}"),
            format!("{value} outside [{low}, {high}]"),
        ),
        other => invalid(section, other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default = "d_one")]
    pub delta_d: f64,
    #[serde(default = "d_one")]
    pub delta_h: f64,
    #[serde(default = "d_delta_t")]
    pub delta_t: f64,
    #[serde(default = "d_one")]
    pub delta_f: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let w = TrustWeights::default();
        WeightsConfig {
            delta_d: w.delta_d,
            delta_h: w.delta_h,
            delta_t: w.delta_t,
            delta_f: w.delta_f,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl WeightsConfig {
    pub fn trust_weights(&self) -> TrustWeights {
        TrustWeights {
            delta_d: self.delta_d,
            delta_h: self.delta_h,
            delta_t: self.delta_t,
            delta_f: self.delta_f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CryptoConfig {
    #[serde(default = "d_key_bits")]
    pub key_bits: u64,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl Default for CryptoConfig {
    fn default() -> Self {
        CryptoConfig {
            key_bits: d_key_bits(),
            seed: d_seed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "d_duration")]
    pub duration: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default)]
    pub centrality: CentralityBasis,
    #[serde(default = "d_max_routes")]
    pub max_routes: usize,
    #[serde(default = "d_latency_ms")]
    pub hop_latency_ms: f64,
    #[serde(default = "d_t_exp")]
    pub t_exp_ms: f64,
    #[serde(default = "d_true")]
    pub trace_bsms: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: d_duration(),
            seed: d_seed(),
            centrality: CentralityBasis::default(),
            max_routes: d_max_routes(),
            hop_latency_ms: d_latency_ms(),
            t_exp_ms: d_t_exp(),
            trace_bsms: true,
        }
    }
}

impl SimConfig {
    pub fn hop_latency_us(&self) -> u64 {
        (self.hop_latency_ms * 1000.0).round() as u64
    }
}

/// A vehicle reference in a query: numeric id or configured name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VehicleRef {
    Id(u32),
    Name(String),
}

impl fmt::Display for VehicleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleRef::Id(id) => write!(f, "{id}"),
            VehicleRef::Name(name) => f.write_str(name),
        }
    }
}

impl From<&str> for VehicleRef {
    fn from(s: &str) -> Self {
        s.parse().map_or_else(|_| VehicleRef::Name(s.to_string()), VehicleRef::Id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub entry_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default)]
    pub lane: u32,
    pub speed: f64,
    pub profile: InterestProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    pub at: f64,
    pub source: VehicleRef,
    pub target: VehicleRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    pub rate: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub profile_width: usize,
    #[serde(default = "d_psi_h")]
    pub psi_h: f64,
    #[serde(default = "d_first_id")]
    pub first_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "d_scale")]
    pub fixed_point_scale: u64,
    #[serde(default)]
    pub highway: HighwayConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub crypto: CryptoConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub vehicles: Vec<VehicleConfig>,
    #[serde(default)]
    pub queries: Vec<QueryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<PoissonConfig>,
}

fn d_one() -> f64 {
    1.0
}
fn d_delta_t() -> f64 {
    TrustWeights::default().delta_t
}
fn d_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn d_key_bits() -> u64 {
    1024
}
fn d_seed() -> u64 {
    1
}
fn d_duration() -> f64 {
    30.0
}
fn d_max_routes() -> usize {
    DEFAULT_MAX_ROUTES
}
fn d_latency_ms() -> f64 {
    DEFAULT_HOP_LATENCY_US as f64 / 1000.0
}
fn d_t_exp() -> f64 {
    1.1
}
fn d_true() -> bool {
    true
}
fn d_psi_h() -> f64 {
    Thresholds::default().psi_h
}
fn d_first_id() -> u32 {
    1000
}
fn d_scale() -> u64 {
    DEFAULT_SCALE
}

const MIN_KEY_BITS: u64 = 64;
const MAX_KEY_BITS: u64 = 8192;

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the file has a `.json` extension or starts
    /// with `{`.
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e == "json")
            || text.trim_start().starts_with('{');
        if json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.highway.validate().map_err(|e| match e {
            MobilityError::NonPositive { field, value } => {
                invalid(format!("highway.{field}"), format!("must be positive, got {value}"))
            }
            MobilityError::NoLanes => invalid("highway.lanes", "must be at least 1"),
        })?;
        self.thresholds
            .validate()
            .map_err(|e| from_seg("thresholds", e))?;
        self.weights
            .trust_weights()
            .validate()
            .map_err(|e| from_seg("weights", e))?;
        if !(self.weights.gamma > 0.0 && self.weights.gamma <= 1.0) {
            return Err(invalid(
                "weights.gamma",
                format!("{} outside (0, 1]", self.weights.gamma),
            ));
        }
        if self.fixed_point_scale == 0 {
            return Err(invalid("fixed_point_scale", "must be at least 1"));
        }
        if !(MIN_KEY_BITS..=MAX_KEY_BITS).contains(&self.crypto.key_bits) {
            return Err(invalid(
                "crypto.key_bits",
                format!(
                    "{} outside [{MIN_KEY_BITS}, {MAX_KEY_BITS}]",
                    self.crypto.key_bits
                ),
            ));
        }
        let sim = &self.sim;
        if !(sim.duration >= 0.0 && sim.duration.is_finite()) {
            return Err(invalid("sim.duration", "must be finite and non-negative"));
        }
        if sim.max_routes == 0 {
            return Err(invalid("sim.max_routes", "must be at least 1"));
        }
        if !(sim.hop_latency_ms > 0.0 && sim.hop_latency_ms.is_finite()) {
            return Err(invalid("sim.hop_latency_ms", "must be positive"));
        }
        if !(sim.t_exp_ms >= 0.0 && sim.t_exp_ms.is_finite()) {
            return Err(invalid("sim.t_exp_ms", "must be non-negative"));
        }

        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        let mut width = self.poisson.as_ref().map(|p| p.profile_width);
        for (i, v) in self.vehicles.iter().enumerate() {
            let field = |f: &str| format!("vehicles[{i}].{f}");
            if !ids.insert(v.id) {
                return Err(invalid(field("id"), format!("duplicate id {}", v.id)));
            }
            if let Some(name) = &v.name {
                if name.is_empty() || !names.insert(name.clone()) {
                    return Err(invalid(field("name"), format!("empty or duplicate name {name:?}")));
                }
            }
            if !(v.entry_time >= 0.0 && v.entry_time.is_finite()) {
                return Err(invalid(field("entry_time"), "must be finite and non-negative"));
            }
            if let Some(x) = v.x {
                if !self.highway.contains(x) {
                    return Err(invalid(
                        field("x"),
                        format!("{x} outside [0, {}]", self.highway.length),
                    ));
                }
            }
            if v.lane >= self.highway.lanes {
                return Err(invalid(
                    field("lane"),
                    format!("{} but the highway has {} lanes", v.lane, self.highway.lanes),
                ));
            }
            if !v.speed.is_finite() {
                return Err(invalid(field("speed"), "must be finite"));
            }
            if v.profile.is_empty() {
                return Err(invalid(field("profile"), "must not be empty"));
            }
            match width {
                Some(w) if w != v.profile.len() => {
                    return Err(invalid(
                        field("profile"),
                        format!("{} bits, expected {w}", v.profile.len()),
                    ))
                }
                _ => width = Some(v.profile.len()),
            }
            if let Some(psi_h) = v.psi_h {
                if !(0.0..=1.0).contains(&psi_h) {
                    return Err(invalid(field("psi_h"), format!("{psi_h} outside [0, 1]")));
                }
            }
        }

        if let Some(p) = &self.poisson {
            if !(p.rate >= 0.0 && p.rate.is_finite()) {
                return Err(invalid("poisson.rate", "must be finite and non-negative"));
            }
            if !(p.min_speed > 0.0 && p.max_speed >= p.min_speed && p.max_speed.is_finite()) {
                return Err(invalid(
                    "poisson.min_speed",
                    "speeds must satisfy 0 < min_speed <= max_speed",
                ));
            }
            if p.profile_width == 0 {
                return Err(invalid("poisson.profile_width", "must be at least 1"));
            }
            if !(0.0..=1.0).contains(&p.psi_h) {
                return Err(invalid("poisson.psi_h", format!("{} outside [0, 1]", p.psi_h)));
            }
            if ids.iter().any(|&id| id >= p.first_id) {
                return Err(invalid(
                    "poisson.first_id",
                    "must exceed every configured vehicle id",
                ));
            }
        }

        for (i, q) in self.queries.iter().enumerate() {
            let field = |f: &str| format!("queries[{i}].{f}");
            if !(q.at >= 0.0 && q.at <= sim.duration) {
                return Err(invalid(
                    field("at"),
                    format!("{} outside [0, {}]", q.at, sim.duration),
                ));
            }
            let s = self
                .resolve(&q.source)
                .map_err(|e| invalid(field("source"), e.to_string()))?;
            let d = self
                .resolve(&q.target)
                .map_err(|e| invalid(field("target"), e.to_string()))?;
            if s == d {
                return Err(invalid(field("target"), "equals the source"));
            }
        }
        Ok(())
    }

    /// Maps a name or id to a vehicle id. Numeric ids are accepted as is when
    /// Poisson arrivals may supply them.
    pub fn resolve(&self, r: &VehicleRef) -> Result<VehicleId, ScenarioError> {
        match r {
            VehicleRef::Id(id) => {
                if self.vehicles.iter().any(|v| v.id == *id)
                    || self.poisson.as_ref().is_some_and(|p| *id >= p.first_id)
                {
                    Ok(VehicleId(*id))
                } else {
                    Err(ScenarioError::UnknownVehicle(id.to_string()))
                }
            }
            VehicleRef::Name(name) => self
                .vehicles
                .iter()
                .find(|v| v.name.as_deref() == Some(name))
                .map(|v| VehicleId(v.id))
                .ok_or_else(|| ScenarioError::UnknownVehicle(name.clone())),
        }
    }

    /// Display names by id, for configured vehicles that have one.
    pub fn names(&self) -> BTreeMap<VehicleId, String> {
        self.vehicles
            .iter()
            .filter_map(|v| Some((VehicleId(v.id), v.name.clone()?)))
            .collect()
    }

    pub fn arrivals(&self) -> Vec<Arrival> {
        let mut out: Vec<Arrival> = self
            .vehicles
            .iter()
            .map(|v| Arrival {
                id: VehicleId(v.id),
                time: v.entry_time,
                lane: v.lane,
                speed: v.speed,
                x: v.x,
                advert: Advert {
                    profile: v.profile.clone(),
                    psi_h: v.psi_h.unwrap_or(self.thresholds.psi_h),
                },
            })
            .collect();
        if let Some(p) = &self.poisson {
            let gen = PoissonArrivals {
                rate: p.rate,
                min_speed: p.min_speed,
                max_speed: p.max_speed,
                profile_width: p.profile_width,
                psi_h: p.psi_h,
                seed: p.seed.unwrap_or(self.sim.seed),
            };
            out.extend(gen.generate(&self.highway, self.sim.duration, p.first_id));
        }
        out
    }

    pub fn snapshot_params(&self) -> SnapshotParams {
        SnapshotParams {
            thresholds: self.thresholds,
            weights: self.weights.trust_weights(),
            range: self.highway.range,
            basis: self.sim.centrality,
        }
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            weights: self.weights.trust_weights(),
            gamma: self.weights.gamma,
            scale: self.fixed_point_scale,
            psi_l: self.thresholds.psi_l,
            max_routes: self.sim.max_routes,
        }
    }

    /// Number of steps after `t = 0`.
    pub fn step_count(&self) -> u64 {
        (self.sim.duration / self.highway.dt + 1e-9).floor() as u64
    }
}
