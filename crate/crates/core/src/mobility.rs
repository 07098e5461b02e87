//! Highway kinematics: constant-velocity vehicles on parallel lanes, a fixed
//! (or seeded Poisson) arrival schedule, and periodic BSM beacons.
//!
//! Positions are longitudinal `x` along the highway and lateral `y` fixed per
//! lane. Speeds are signed; the sign is the direction of travel.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seg::InterestProfile;
use crate::VehicleId;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("highway {field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("highway needs at least one lane")]
    NoLanes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub lane: u32,
}

impl VehicleState {
    pub fn distance_to(&self, other: &VehicleState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighwayConfig {
    pub length: f64,
    pub lanes: u32,
    pub lane_width: f64,
    /// Communication range H in metres.
    pub range: f64,
    /// Step length in seconds; one BSM round and one snapshot per step.
    pub dt: f64,
}

impl Default for HighwayConfig {
    fn default() -> Self {
        HighwayConfig {
            length: 5000.0,
            lanes: 4,
            lane_width: 3.5,
            range: 300.0,
            dt: 1.0,
        }
    }
}

impl HighwayConfig {
    pub fn validate(&self) -> Result<(), MobilityError> {
        for (field, value) in [
            ("length", self.length),
            ("lane_width", self.lane_width),
            ("range", self.range),
            ("dt", self.dt),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MobilityError::NonPositive { field, value });
            }
        }
        if self.lanes == 0 {
            return Err(MobilityError::NoLanes);
        }
        Ok(())
    }

    pub fn lane_offset(&self, lane: u32) -> f64 {
        lane as f64 * self.lane_width
    }

    pub fn contains(&self, x: f64) -> bool {
        (0.0..=self.length).contains(&x)
    }
}

/// Relative motion of an ordered pair, selecting the `(theta, vartheta)`
/// coefficients of the link-duration estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionCase {
    /// Same direction, gap closing: the rear vehicle will pass the front one.
    Overtaking,
    /// Same direction, gap opening (or constant).
    MovingAhead,
    /// Opposite directions, gap closing.
    TowardEachOther,
    /// Opposite directions, gap opening.
    AwayFromEachOther,
}

impl MotionCase {
    pub fn theta(self) -> f64 {
        match self {
            MotionCase::Overtaking | MotionCase::TowardEachOther => -1.0,
            MotionCase::MovingAhead | MotionCase::AwayFromEachOther => 1.0,
        }
    }

    pub fn vartheta(self) -> f64 {
        match self {
            MotionCase::Overtaking | MotionCase::MovingAhead => 1.0,
            MotionCase::TowardEachOther | MotionCase::AwayFromEachOther => -1.0,
        }
    }
}

/// Classifies the motion of `j` relative to `i`.
///
/// A stopped vehicle counts as travelling in the other's direction. Equal
/// positions and equal velocities fall into the opening cases.
pub fn classify_motion(i: &VehicleState, j: &VehicleState) -> MotionCase {
    let same_direction = i.v * j.v >= 0.0;
    let closing = (i.x - j.x) * (i.v - j.v) < 0.0;
    match (same_direction, closing) {
        (true, true) => MotionCase::Overtaking,
        (true, false) => MotionCase::MovingAhead,
        (false, true) => MotionCase::TowardEachOther,
        (false, false) => MotionCase::AwayFromEachOther,
    }
}

/// Advances every vehicle by one step and drops those that left the highway.
pub fn step(states: &[VehicleState], cfg: &HighwayConfig) -> Vec<VehicleState> {
    states
        .iter()
        .map(|s| VehicleState {
            x: s.x + s.v * cfg.dt,
            ..*s
        })
        .filter(|s| cfg.contains(s.x))
        .collect()
}

/// What a vehicle advertises about itself alongside its kinematic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advert {
    pub profile: InterestProfile,
    pub psi_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub id: VehicleId,
    pub time: f64,
    pub lane: u32,
    /// Signed speed in m/s.
    pub speed: f64,
    /// Entry position; defaults to the highway end the vehicle drives away from.
    pub x: Option<f64>,
    pub advert: Advert,
}

/// Basic safety message: one per vehicle per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsmRecord {
    pub sender: VehicleId,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub lane: u32,
    pub profile: InterestProfile,
    pub psi_h: f64,
}

impl BsmRecord {
    pub fn state(&self) -> VehicleState {
        VehicleState {
            id: self.sender,
            x: self.x,
            y: self.y,
            v: self.v,
            lane: self.lane,
        }
    }
}

pub fn broadcast_bsms(
    states: &[VehicleState],
    adverts: &BTreeMap<VehicleId, Advert>,
    t: f64,
) -> Vec<BsmRecord> {
    states
        .iter()
        .filter_map(|s| {
            let advert = adverts.get(&s.id)?;
            Some(BsmRecord {
                sender: s.id,
                time: t,
                x: s.x,
                y: s.y,
                v: s.v,
                lane: s.lane,
                profile: advert.profile.clone(),
                psi_h: advert.psi_h,
            })
        })
        .collect()
}

/// Live vehicle population: current states plus the pending arrival schedule.
#[derive(Debug, Clone)]
pub struct Traffic {
    cfg: HighwayConfig,
    pending: VecDeque<Arrival>,
    states: Vec<VehicleState>,
    adverts: BTreeMap<VehicleId, Advert>,
    steps: u64,
}

impl Traffic {
    /// Starts at `t = 0`, admitting every arrival scheduled at or before it.
    pub fn new(cfg: HighwayConfig, mut arrivals: Vec<Arrival>) -> Self {
        arrivals.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.id.cmp(&b.id)));
        let mut traffic = Traffic {
            cfg,
            pending: arrivals.into(),
            states: Vec::new(),
            adverts: BTreeMap::new(),
            steps: 0,
        };
        traffic.admit();
        traffic
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn states(&self) -> &[VehicleState] {
        &self.states
    }

    pub fn adverts(&self) -> &BTreeMap<VehicleId, Advert> {
        &self.adverts
    }

    pub fn advance(&mut self) {
        self.states = step(&self.states, &self.cfg);
        let alive: std::collections::BTreeSet<_> = self.states.iter().map(|s| s.id).collect();
        self.adverts.retain(|id, _| alive.contains(id));
        self.steps += 1;
        self.admit();
    }

    fn admit(&mut self) {
        let now = self.time();
        while self
            .pending
            .front()
            .is_some_and(|a| a.time <= now + TIME_EPS)
        {
            let arrival = self.pending.pop_front().expect("front checked");
            let x = arrival
                .x
                .unwrap_or(if arrival.speed >= 0.0 { 0.0 } else { self.cfg.length });
            if !self.cfg.contains(x) || arrival.lane >= self.cfg.lanes {
                log::warn!("arrival {} outside the highway, skipped", arrival.id);
                continue;
            }
            if self.adverts.contains_key(&arrival.id) {
                log::warn!("arrival {} duplicates a live vehicle, skipped", arrival.id);
                continue;
            }
            self.states.push(VehicleState {
                id: arrival.id,
                x,
                y: self.cfg.lane_offset(arrival.lane),
                v: arrival.speed,
                lane: arrival.lane,
            });
            self.adverts.insert(arrival.id, arrival.advert);
        }
        self.states.sort_by_key(|s| s.id);
    }
}

/// Parameters for seeded Poisson arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonArrivals {
    /// Mean arrivals per second over the whole highway.
    pub rate: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub profile_width: usize,
    pub psi_h: f64,
    pub seed: u64,
}

impl PoissonArrivals {
    /// Arrivals in `[0, duration]` with ids starting at `first_id`. Lanes in the
    /// lower half travel towards +x, the upper half towards -x.
    pub fn generate(&self, cfg: &HighwayConfig, duration: f64, first_id: u32) -> Vec<Arrival> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        if self.rate <= 0.0 {
            return out;
        }
        let forward_lanes = cfg.lanes.div_ceil(2);
        let mut t = 0.0;
        let mut id = first_id;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / self.rate;
            if t > duration {
                break;
            }
            let lane = rng.random_range(0..cfg.lanes);
            let magnitude = if self.max_speed > self.min_speed {
                rng.random_range(self.min_speed..self.max_speed)
            } else {
                self.min_speed
            };
            let speed = if lane < forward_lanes { magnitude } else { -magnitude };
            let bits = (0..self.profile_width).map(|_| rng.random::<bool>()).collect();
            out.push(Arrival {
                id: VehicleId(id),
                time: t,
                lane,
                speed,
                x: None,
                advert: Advert {
                    profile: InterestProfile::new(bits),
                    psi_h: self.psi_h,
                },
            });
            id += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(id: u32, x: f64, v: f64) -> VehicleState {
        VehicleState {
            id: VehicleId(id),
            x,
            y: 0.0,
            v,
            lane: 0,
        }
    }

    fn advert() -> Advert {
        Advert {
            profile: "101".parse().unwrap(),
            psi_h: 0.6,
        }
    }

    #[test]
    fn constant_velocity_step() {
        let cfg = HighwayConfig {
            length: 1000.0,
            dt: 1.0,
            ..Default::default()
        };
        let next = step(&[state(1, 100.0, 30.0), state(2, 50.0, 0.0)], &cfg);
        assert_eq!(next[0].x, 130.0);
        assert_eq!(next[1], state(2, 50.0, 0.0));
    }

    #[test]
    fn vehicles_leave_at_either_end() {
        let cfg = HighwayConfig {
            length: 1000.0,
            dt: 1.0,
            ..Default::default()
        };
        let next = step(
            &[state(1, 999.0, 20.0), state(2, 5.0, -10.0), state(3, 500.0, 1.0)],
            &cfg,
        );
        assert_eq!(next.len(), 1);
        assert_eq!(next[0].id, VehicleId(3));
    }

    #[test]
    fn motion_cases_follow_the_enumeration() {
        // j behind and faster, same direction
        assert_eq!(
            classify_motion(&state(1, 100.0, 20.0), &state(2, 0.0, 30.0)),
            MotionCase::Overtaking
        );
        // i ahead and faster
        assert_eq!(
            classify_motion(&state(1, 100.0, 30.0), &state(2, 0.0, 20.0)),
            MotionCase::MovingAhead
        );
        // opposite directions, closing
        assert_eq!(
            classify_motion(&state(1, 0.0, 20.0), &state(2, 100.0, -20.0)),
            MotionCase::TowardEachOther
        );
        // opposite directions, opening
        assert_eq!(
            classify_motion(&state(1, 0.0, -20.0), &state(2, 100.0, 20.0)),
            MotionCase::AwayFromEachOther
        );
        // equal velocity falls into the opening same-direction case
        assert_eq!(
            classify_motion(&state(1, 0.0, 25.0), &state(2, 80.0, 25.0)),
            MotionCase::MovingAhead
        );
        assert_eq!(MotionCase::Overtaking.theta(), -1.0);
        assert_eq!(MotionCase::Overtaking.vartheta(), 1.0);
        assert_eq!(MotionCase::AwayFromEachOther.theta(), 1.0);
        assert_eq!(MotionCase::AwayFromEachOther.vartheta(), -1.0);
    }

    #[test]
    fn classification_is_symmetric() {
        let pairs = [
            (state(1, 100.0, 20.0), state(2, 0.0, 30.0)),
            (state(1, 0.0, 20.0), state(2, 100.0, -20.0)),
            (state(1, 3.0, 0.0), state(2, 100.0, -5.0)),
        ];
        for (a, b) in pairs {
            assert_eq!(classify_motion(&a, &b), classify_motion(&b, &a));
        }
    }

    #[test]
    fn bsm_per_vehicle_mirrors_state() {
        let states: Vec<_> = (0..5).map(|i| state(i, i as f64 * 10.0, 20.0)).collect();
        let adverts = (0..5).map(|i| (VehicleId(i), advert())).collect();
        let bsms = broadcast_bsms(&states, &adverts, 3.0);
        assert_eq!(bsms.len(), 5);
        for (b, s) in bsms.iter().zip(&states) {
            assert_eq!(b.state(), *s);
            assert_eq!(b.time, 3.0);
            assert_eq!(b.psi_h, 0.6);
        }
    }

    #[test]
    fn traffic_admits_on_schedule_and_drops_departures() {
        let cfg = HighwayConfig {
            length: 100.0,
            dt: 1.0,
            ..Default::default()
        };
        let arrivals = vec![
            Arrival {
                id: VehicleId(1),
                time: 0.0,
                lane: 0,
                speed: 60.0,
                x: None,
                advert: advert(),
            },
            Arrival {
                id: VehicleId(2),
                time: 1.0,
                lane: 1,
                speed: -10.0,
                x: None,
                advert: advert(),
            },
        ];
        let mut traffic = Traffic::new(cfg, arrivals);
        assert_eq!(traffic.states().len(), 1);
        traffic.advance();
        assert_eq!(traffic.time(), 1.0);
        assert_eq!(traffic.states().len(), 2);
        assert_eq!(traffic.states()[1].x, 100.0);
        assert_eq!(traffic.states()[1].y, 3.5);
        traffic.advance();
        // vehicle 1 is at 120 m, past the end
        assert_eq!(traffic.states().len(), 1);
        assert_eq!(traffic.adverts().len(), 1);
    }

    #[test]
    fn trajectories_are_deterministic() {
        let cfg = HighwayConfig::default();
        let gen = PoissonArrivals {
            rate: 0.5,
            min_speed: 20.0,
            max_speed: 35.0,
            profile_width: 8,
            psi_h: 0.5,
            seed: 77,
        };
        let run = || {
            let mut traffic = Traffic::new(cfg, gen.generate(&cfg, 1000.0, 1));
            let mut trace = Vec::new();
            for _ in 0..1000 {
                traffic.advance();
                trace.extend(traffic.states().iter().map(|s| (s.id, s.x.to_bits())));
            }
            trace
        };
        let a = run();
        assert!(!a.is_empty());
        assert_eq!(a, run());
    }

    #[test]
    fn config_validation() {
        assert!(HighwayConfig::default().validate().is_ok());
        let bad = HighwayConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert_eq!(
            bad.validate(),
            Err(MobilityError::NonPositive {
                field: "dt",
                value: 0.0
            })
        );
    }
}
