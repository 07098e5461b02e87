//! The social evolving graph: social metrics, direct trust, and time-indexed
//! snapshots of vehicles with their communication and social links.

mod metrics;
mod profile;
mod snapshot;
mod timeline;

pub use metrics::{
    can_establish, direct_trust, expected_link_duration, link_duration_for_case, LinkDuration,
    Thresholds, TrustWeights,
};
pub use profile::{homophily, InterestProfile};
pub use snapshot::{
    build_snapshot, Centrality, CentralityBasis, SegSnapshot, SnapshotParams, SocialEdge,
    VehicleNode,
};
pub use timeline::SegTimeline;

use thiserror::Error;

use crate::VehicleId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegError {
    #[error("interest profiles differ in length ({left} vs {right})")]
    ProfileLength { left: usize, right: usize },
    #[error("malformed interest profile: {0}")]
    BadProfile(String),
    #[error("vehicles are {distance:.1} m apart, beyond the {range} m range")]
    NotInRange { distance: f64, range: f64 },
    #[error("{field} = {value} outside [{low}, {high}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("no link {from} - {to} at t = {time}")]
    UnknownEdge {
        from: VehicleId,
        to: VehicleId,
        time: f64,
    },
    #[error("no snapshot at t = {0}")]
    NoSnapshotAt(f64),
    #[error("snapshot time {next} does not follow {last}")]
    NonIncreasingTime { last: f64, next: f64 },
    #[error("invalid snapshot: {0}")]
    Invalid(String),
}
