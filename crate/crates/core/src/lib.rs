//! Social evolving graph (SEG) trust model for vehicular social networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`paillier`]: additively homomorphic encryption and signed fixed-point codec
//! - [`mobility`]: highway kinematics, motion classification, BSM beacons
//! - [`seg`]: social metrics, direct trust, snapshot construction, journeys
//! - [`routing`]: SEG-Dijkstra route discovery over established social links
//! - [`simnet`]: deterministic discrete-event message passing with counters
//! - [`protocol`]: encrypted opinion collection and indirect trust
//! - [`scenario`], [`driver`], [`bench`]: configuration, simulation runs, timing
//! - [`synth`]: seeded synthetic snapshots for tests and benchmarks

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod bench;
pub mod driver;
pub mod mobility;
pub mod paillier;
pub mod protocol;
pub mod routing;
pub mod scenario;
pub mod scenarios;
pub mod seg;
pub mod simnet;
pub mod synth;

pub use num_bigint::BigUint;

/// Stable per-run vehicle identifier (a pseudonym; never linked to a real identity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for VehicleId {
    fn from(v: u32) -> Self {
        VehicleId(v)
    }
}
