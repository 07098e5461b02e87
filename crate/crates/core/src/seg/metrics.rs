//! Link duration, direct trust and the link-establishment predicate.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SegError;
use crate::mobility::{classify_motion, MotionCase, VehicleState};

/// Expected remaining duration of a communication link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkDuration {
    Finite(f64),
    /// Zero relative speed: the link never breaks under constant velocities.
    Unbounded,
}

impl LinkDuration {
    pub fn exceeds(self, threshold: f64) -> bool {
        match self {
            LinkDuration::Finite(t) => t > threshold,
            LinkDuration::Unbounded => true,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            LinkDuration::Finite(t) => t,
            LinkDuration::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, LinkDuration::Unbounded)
    }

    /// Total order with `Unbounded` above every finite value.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (LinkDuration::Finite(a), LinkDuration::Finite(b)) => a.total_cmp(b),
            (LinkDuration::Finite(_), LinkDuration::Unbounded) => Ordering::Less,
            (LinkDuration::Unbounded, LinkDuration::Finite(_)) => Ordering::Greater,
            (LinkDuration::Unbounded, LinkDuration::Unbounded) => Ordering::Equal,
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }
}

impl PartialOrd for LinkDuration {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (LinkDuration::Finite(a), LinkDuration::Finite(b)) => a.partial_cmp(b),
            _ => Some(self.total_cmp(other)),
        }
    }
}

impl fmt::Display for LinkDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkDuration::Finite(t) => write!(f, "{t}"),
            LinkDuration::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for LinkDuration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LinkDuration::Finite(t) => s.serialize_f64(*t),
            LinkDuration::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for LinkDuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(t) => Ok(LinkDuration::Finite(t)),
            Repr::Text(s) if s == "unbounded" => Ok(LinkDuration::Unbounded),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a duration or \"unbounded\", got {s:?}"
            ))),
        }
    }
}

/// `(H - theta * dist) / |v_i - vartheta * v_j|` with speeds taken as magnitudes.
pub fn link_duration_for_case(
    case: MotionCase,
    distance: f64,
    speed_i: f64,
    speed_j: f64,
    range: f64,
) -> LinkDuration {
    let denominator = (speed_i.abs() - case.vartheta() * speed_j.abs()).abs();
    if denominator == 0.0 {
        return LinkDuration::Unbounded;
    }
    LinkDuration::Finite((range - case.theta() * distance) / denominator)
}

/// Expected duration of the link between two vehicles currently in range.
pub fn expected_link_duration(
    i: &VehicleState,
    j: &VehicleState,
    range: f64,
) -> Result<LinkDuration, SegError> {
    let distance = i.distance_to(j);
    if distance > range {
        return Err(SegError::NotInRange { distance, range });
    }
    Ok(link_duration_for_case(
        classify_motion(i, j),
        distance,
        i.v,
        j.v,
        range,
    ))
}

/// Establishment thresholds. `psi_h` here is the fallback for vehicles that do
/// not advertise their own homophily threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub psi_h: f64,
    /// Minimum link duration in seconds.
    pub psi_l: f64,
    pub psi_t: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            psi_h: 0.6,
            psi_l: 12.0,
            psi_t: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), SegError> {
        check_range("psi_h", self.psi_h, 0.0, 1.0)?;
        if self.psi_l.is_nan() || self.psi_l <= 0.0 {
            return Err(SegError::OutOfRange {
                field: "psi_l",
                value: self.psi_l,
                low: 0.0,
                high: f64::INFINITY,
            });
        }
        check_range("psi_t", self.psi_t, -1.0, 1.0)
    }

    pub fn with_psi_h(self, psi_h: f64) -> Self {
        Thresholds { psi_h, ..self }
    }
}

/// Weights for centrality, homophily, prior trust and collected opinions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustWeights {
    pub delta_d: f64,
    pub delta_h: f64,
    pub delta_t: f64,
    pub delta_f: f64,
}

impl Default for TrustWeights {
    fn default() -> Self {
        TrustWeights {
            delta_d: 1.0,
            delta_h: 1.0,
            delta_t: 0.1,
            delta_f: 1.0,
        }
    }
}

impl TrustWeights {
    pub fn validate(&self) -> Result<(), SegError> {
        check_range("delta_d", self.delta_d, 0.0, 1.0)?;
        check_range("delta_h", self.delta_h, 0.0, 1.0)?;
        check_range("delta_t", self.delta_t, -1.0, 0.1)?;
        check_range("delta_f", self.delta_f, 0.0, 1.0)
    }

    /// `(delta_d * C_D) * (delta_h * SHP)`, shared by direct and indirect trust.
    pub fn social_term(&self, centrality: f64, shp: f64) -> f64 {
        (self.delta_d * centrality) * (self.delta_h * shp)
    }
}

fn check_range(field: &'static str, value: f64, low: f64, high: f64) -> Result<(), SegError> {
    if (low..=high).contains(&value) {
        Ok(())
    } else {
        Err(SegError::OutOfRange {
            field,
            value,
            low,
            high,
        })
    }
}

/// Direct trust of a link: centrality of the trusted vehicle times homophily,
/// plus the weighted prior. A missing prior counts as zero; the result is
/// clamped to `[-1, 1]`.
pub fn direct_trust(centrality: f64, shp: f64, prior: Option<f64>, w: &TrustWeights) -> f64 {
    let value = w.social_term(centrality, shp) + w.delta_t * prior.unwrap_or(0.0);
    value.clamp(-1.0, 1.0)
}

/// All three comparisons are strict.
pub fn can_establish(shp: f64, et: LinkDuration, tst: f64, th: &Thresholds) -> bool {
    shp > th.psi_h && et.exceeds(th.psi_l) && tst > th.psi_t
}
