use serde::{Deserialize, Serialize};

use super::snapshot::SegSnapshot;
use super::SegError;
use crate::VehicleId;

const TIME_EPS: f64 = 1e-9;

/// Snapshots in strictly increasing time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegTimeline {
    snapshots: Vec<SegSnapshot>,
}

impl SegTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, snapshot: SegSnapshot) -> Result<(), SegError> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.time() <= last.time() {
                return Err(SegError::NonIncreasingTime {
                    last: last.time(),
                    next: snapshot.time(),
                });
            }
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn latest(&self) -> Option<&SegSnapshot> {
        self.snapshots.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SegSnapshot> {
        self.snapshots.iter()
    }

    pub fn at(&self, time: f64) -> Option<&SegSnapshot> {
        let pos = self
            .snapshots
            .partition_point(|s| s.time() < time - TIME_EPS);
        self.snapshots
            .get(pos)
            .filter(|s| (s.time() - time).abs() <= TIME_EPS)
    }

    /// Whether `hops` is a journey: consecutive hops are linked in the
    /// snapshot at the matching entry of `times`, and those times strictly
    /// increase along the path.
    pub fn is_journey(&self, hops: &[VehicleId], times: &[f64]) -> Result<bool, SegError> {
        if hops.len() < 2 || times.len() != hops.len() - 1 {
            return Err(SegError::Invalid(format!(
                "{} hops need {} edge times, got {}",
                hops.len(),
                hops.len().saturating_sub(1),
                times.len()
            )));
        }
        for (pair, &time) in hops.windows(2).zip(times) {
            let snapshot = self.at(time).ok_or(SegError::NoSnapshotAt(time))?;
            if !snapshot.in_comm_range(pair[0], pair[1]) {
                return Err(SegError::UnknownEdge {
                    from: pair[0],
                    to: pair[1],
                    time,
                });
            }
        }
        Ok(times.windows(2).all(|w| w[0] < w[1]))
    }
}
