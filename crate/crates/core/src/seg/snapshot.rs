use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::{
    can_establish, direct_trust, expected_link_duration, LinkDuration, Thresholds, TrustWeights,
};
use super::profile::{homophily, InterestProfile};
use super::SegError;
use crate::mobility::{BsmRecord, VehicleState};
use crate::VehicleId;

/// Which incidence counts towards degree centrality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityBasis {
    /// Established social links (either direction).
    #[default]
    Social,
    /// Raw communication links.
    Communication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleNode {
    pub id: VehicleId,
    pub profile: InterestProfile,
    /// Advertised homophily threshold.
    pub psi_h: f64,
    pub state: VehicleState,
}

impl VehicleNode {
    pub fn from_bsm(bsm: &BsmRecord) -> Self {
        VehicleNode {
            id: bsm.sender,
            profile: bsm.profile.clone(),
            psi_h: bsm.psi_h,
            state: bsm.state(),
        }
    }
}

/// Directed link annotation `(t, ET, SHP, TST)` from `from`'s point of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialEdge {
    pub from: VehicleId,
    pub to: VehicleId,
    pub t: f64,
    pub et: LinkDuration,
    pub shp: f64,
    pub tst: f64,
    pub established: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centrality {
    pub value: f64,
    /// False when the snapshot holds a single vehicle and `W - 1 = 0`.
    pub defined: bool,
}

/// Inputs that stay fixed while snapshots are rebuilt step after step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotParams {
    pub thresholds: Thresholds,
    pub weights: TrustWeights,
    pub range: f64,
    pub basis: CentralityBasis,
}

/// One time slice of the social evolving graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SnapshotRepr", into = "SnapshotRepr")]
pub struct SegSnapshot {
    index: usize,
    time: f64,
    basis: CentralityBasis,
    nodes: BTreeMap<VehicleId, VehicleNode>,
    comm_edges: BTreeSet<(VehicleId, VehicleId)>,
    social_edges: BTreeMap<(VehicleId, VehicleId), SocialEdge>,
}

fn ordered(a: VehicleId, b: VehicleId) -> (VehicleId, VehicleId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SegSnapshot {
    /// Assembles a snapshot from explicit parts, checking structural invariants:
    /// communication edges join distinct known vehicles, and every social edge
    /// rides on a communication edge with its trust in `[-1, 1]`.
    pub fn from_parts(
        index: usize,
        time: f64,
        basis: CentralityBasis,
        nodes: impl IntoIterator<Item = VehicleNode>,
        comm_edges: impl IntoIterator<Item = (VehicleId, VehicleId)>,
        social_edges: impl IntoIterator<Item = SocialEdge>,
    ) -> Result<Self, SegError> {
        let mut node_map = BTreeMap::new();
        for node in nodes {
            if node_map.insert(node.id, node).is_some() {
                return Err(SegError::Invalid("duplicate vehicle id".into()));
            }
        }
        let mut comm = BTreeSet::new();
        for (a, b) in comm_edges {
            if a == b {
                return Err(SegError::Invalid(format!("self loop on {a}")));
            }
            for v in [a, b] {
                if !node_map.contains_key(&v) {
                    return Err(SegError::UnknownVehicle(v));
                }
            }
            comm.insert(ordered(a, b));
        }
        let mut social = BTreeMap::new();
        for edge in social_edges {
            if !comm.contains(&ordered(edge.from, edge.to)) {
                return Err(SegError::Invalid(format!(
                    "social edge {} -> {} has no communication link",
                    edge.from, edge.to
                )));
            }
            if !(-1.0..=1.0).contains(&edge.tst) {
                return Err(SegError::Invalid(format!(
                    "trust {} on {} -> {} outside [-1, 1]",
                    edge.tst, edge.from, edge.to
                )));
            }
            social.insert((edge.from, edge.to), edge);
        }
        Ok(SegSnapshot {
            index,
            time,
            basis,
            nodes: node_map,
            comm_edges: comm,
            social_edges: social,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn basis(&self) -> CentralityBasis {
        self.basis
    }

    pub fn vehicle_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &VehicleNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: VehicleId) -> Option<&VehicleNode> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn comm_edges(&self) -> impl Iterator<Item = (VehicleId, VehicleId)> + '_ {
        self.comm_edges.iter().copied()
    }

    pub fn comm_edge_count(&self) -> usize {
        self.comm_edges.len()
    }

    pub fn in_comm_range(&self, a: VehicleId, b: VehicleId) -> bool {
        self.comm_edges.contains(&ordered(a, b))
    }

    /// Every annotated directed pair, established or not.
    pub fn social_edges(&self) -> impl Iterator<Item = &SocialEdge> {
        self.social_edges.values()
    }

    pub fn established_edges(&self) -> impl Iterator<Item = &SocialEdge> {
        self.social_edges.values().filter(|e| e.established)
    }

    pub fn social_edge(&self, from: VehicleId, to: VehicleId) -> Option<&SocialEdge> {
        self.social_edges.get(&(from, to))
    }

    pub fn is_established(&self, from: VehicleId, to: VehicleId) -> bool {
        self.social_edge(from, to).is_some_and(|e| e.established)
    }

    /// Established outgoing links of `from`, in ascending target order.
    pub fn established_from(&self, from: VehicleId) -> impl Iterator<Item = &SocialEdge> {
        self.social_edges
            .range((from, VehicleId(0))..=(from, VehicleId(u32::MAX)))
            .map(|(_, e)| e)
            .filter(|e| e.established)
    }

    /// Normalised degree centrality under the snapshot's counting basis.
    pub fn degree_centrality(&self, v: VehicleId) -> Result<Centrality, SegError> {
        self.degree_centrality_with(v, self.basis)
    }

    pub fn degree_centrality_with(
        &self,
        v: VehicleId,
        basis: CentralityBasis,
    ) -> Result<Centrality, SegError> {
        if !self.contains(v) {
            return Err(SegError::UnknownVehicle(v));
        }
        let w = self.nodes.len();
        if w < 2 {
            return Ok(Centrality {
                value: 0.0,
                defined: false,
            });
        }
        let degree = match basis {
            CentralityBasis::Communication => self
                .comm_edges
                .iter()
                .filter(|(a, b)| *a == v || *b == v)
                .count(),
            CentralityBasis::Social => self
                .established_edges()
                .filter_map(|e| match (e.from == v, e.to == v) {
                    (true, _) => Some(e.to),
                    (_, true) => Some(e.from),
                    _ => None,
                })
                .collect::<BTreeSet<_>>()
                .len(),
        };
        Ok(Centrality {
            value: degree as f64 / (w - 1) as f64,
            defined: true,
        })
    }
}

struct Candidate {
    from: VehicleId,
    to: VehicleId,
    shp: f64,
    et: LinkDuration,
    prior: Option<f64>,
    thresholds: Thresholds,
}

impl Candidate {
    fn potential(&self) -> bool {
        self.shp > self.thresholds.psi_h && self.et.exceeds(self.thresholds.psi_l)
    }
}

/// Normalised centrality for every node from a set of incident pairs.
fn centralities<'a>(
    ids: impl Iterator<Item = VehicleId>,
    links: impl Iterator<Item = (VehicleId, VehicleId)> + 'a,
) -> BTreeMap<VehicleId, f64> {
    let mut neighbours: BTreeMap<VehicleId, BTreeSet<VehicleId>> =
        ids.map(|id| (id, BTreeSet::new())).collect();
    let w = neighbours.len();
    for (a, b) in links {
        neighbours.entry(a).or_default().insert(b);
        neighbours.entry(b).or_default().insert(a);
    }
    neighbours
        .into_iter()
        .map(|(id, set)| {
            let c = if w < 2 {
                0.0
            } else {
                set.len() as f64 / (w - 1) as f64
            };
            (id, c)
        })
        .collect()
}

/// Builds the snapshot at `time` from the vehicles' advertised states.
///
/// Communication links join every pair within `range`. Each directed pair is
/// annotated with homophily, link duration and direct trust; the previous
/// snapshot's trust on the same directed pair serves as the prior. Edge
/// `i -> j` is judged against `i`'s advertised homophily threshold.
///
/// Under social centrality, trust depends on centrality and centrality on
/// which links are established. The established set is therefore the largest
/// set `S` that reproduces itself: start from every pair passing the
/// homophily and duration tests, compute centrality over `S`, keep the pairs
/// whose trust passes, and repeat until nothing changes. Trust only falls as
/// `S` shrinks, so the loop terminates.
pub fn build_snapshot(
    nodes: &[VehicleNode],
    prev: Option<&SegSnapshot>,
    index: usize,
    time: f64,
    params: &SnapshotParams,
) -> Result<SegSnapshot, SegError> {
    let mut sorted: Vec<&VehicleNode> = nodes.iter().collect();
    sorted.sort_by(|a, b| a.state.x.total_cmp(&b.state.x).then(a.id.cmp(&b.id)));

    let mut comm = Vec::new();
    for (k, a) in sorted.iter().enumerate() {
        for b in &sorted[k + 1..] {
            if b.state.x - a.state.x > params.range {
                break;
            }
            if a.state.distance_to(&b.state) <= params.range {
                comm.push(ordered(a.id, b.id));
            }
        }
    }
    comm.sort();

    let by_id: BTreeMap<VehicleId, &VehicleNode> = nodes.iter().map(|n| (n.id, n)).collect();
    if by_id.len() != nodes.len() {
        return Err(SegError::Invalid("duplicate vehicle id".into()));
    }

    let mut candidates = Vec::with_capacity(comm.len() * 2);
    for &(a, b) in &comm {
        let (na, nb) = (by_id[&a], by_id[&b]);
        let shp = homophily(&na.profile, &nb.profile)?;
        let et = expected_link_duration(&na.state, &nb.state, params.range)?;
        for (from, to) in [(na, nb), (nb, na)] {
            candidates.push(Candidate {
                from: from.id,
                to: to.id,
                shp,
                et,
                prior: prev
                    .and_then(|p| p.social_edge(from.id, to.id))
                    .map(|e| e.tst),
                thresholds: params.thresholds.with_psi_h(from.psi_h),
            });
        }
    }

    let trust_under = |centrality: &BTreeMap<VehicleId, f64>, c: &Candidate| {
        direct_trust(centrality[&c.to], c.shp, c.prior, &params.weights)
    };

    let centrality = match params.basis {
        CentralityBasis::Communication => centralities(by_id.keys().copied(), comm.iter().copied()),
        CentralityBasis::Social => {
            let mut established: Vec<bool> = candidates.iter().map(Candidate::potential).collect();
            loop {
                let current = centralities(
                    by_id.keys().copied(),
                    candidates
                        .iter()
                        .zip(&established)
                        .filter(|(_, &e)| e)
                        .map(|(c, _)| (c.from, c.to)),
                );
                let next: Vec<bool> = candidates
                    .iter()
                    .map(|c| {
                        can_establish(c.shp, c.et, trust_under(&current, c), &c.thresholds)
                    })
                    .collect();
                if next == established {
                    break current;
                }
                established = next;
            }
        }
    };

    let social = candidates.iter().map(|c| {
        let tst = trust_under(&centrality, c);
        SocialEdge {
            from: c.from,
            to: c.to,
            t: time,
            et: c.et,
            shp: c.shp,
            tst,
            established: can_establish(c.shp, c.et, tst, &c.thresholds),
        }
    });

    SegSnapshot::from_parts(
        index,
        time,
        params.basis,
        nodes.iter().cloned(),
        comm.iter().copied(),
        social.collect::<Vec<_>>(),
    )
}

#[derive(Serialize, Deserialize)]
struct NodeRepr {
    id: VehicleId,
    x: f64,
    y: f64,
    v: f64,
    lane: u32,
    profile: InterestProfile,
    psi_h: f64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotRepr {
    index: usize,
    time: f64,
    basis: CentralityBasis,
    nodes: Vec<NodeRepr>,
    comm_edges: Vec<[VehicleId; 2]>,
    social_edges: Vec<SocialEdge>,
}

impl From<SegSnapshot> for SnapshotRepr {
    fn from(s: SegSnapshot) -> Self {
        SnapshotRepr {
            index: s.index,
            time: s.time,
            basis: s.basis,
            nodes: s
                .nodes
                .into_values()
                .map(|n| NodeRepr {
                    id: n.id,
                    x: n.state.x,
                    y: n.state.y,
                    v: n.state.v,
                    lane: n.state.lane,
                    profile: n.profile,
                    psi_h: n.psi_h,
                })
                .collect(),
            comm_edges: s.comm_edges.into_iter().map(|(a, b)| [a, b]).collect(),
            social_edges: s.social_edges.into_values().collect(),
        }
    }
}

impl TryFrom<SnapshotRepr> for SegSnapshot {
    type Error = SegError;

    fn try_from(r: SnapshotRepr) -> Result<Self, Self::Error> {
        SegSnapshot::from_parts(
            r.index,
            r.time,
            r.basis,
            r.nodes.into_iter().map(|n| VehicleNode {
                id: n.id,
                profile: n.profile,
                psi_h: n.psi_h,
                state: VehicleState {
                    id: n.id,
                    x: n.x,
                    y: n.y,
                    v: n.v,
                    lane: n.lane,
                },
            }),
            r.comm_edges.into_iter().map(|[a, b]| (a, b)),
            r.social_edges,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u32, x: f64, v: f64, profile: &str) -> VehicleNode {
        VehicleNode {
            id: VehicleId(id),
            profile: profile.parse().unwrap(),
            psi_h: 0.6,
            state: VehicleState {
                id: VehicleId(id),
                x,
                y: 0.0,
                v,
                lane: 0,
            },
        }
    }

    fn params() -> SnapshotParams {
        SnapshotParams {
            thresholds: Thresholds {
                psi_h: 0.6,
                psi_l: 12.0,
                psi_t: 0.1,
            },
            weights: TrustWeights::default(),
            range: 300.0,
            basis: CentralityBasis::Social,
        }
    }

    #[test]
    fn out_of_range_pair_has_no_edges() {
        let snap = build_snapshot(
            &[node(1, 0.0, 20.0, "11"), node(2, 500.0, 20.0, "11")],
            None,
            0,
            0.0,
            &params(),
        )
        .unwrap();
        assert_eq!(snap.comm_edge_count(), 0);
        assert_eq!(snap.social_edges().count(), 0);
    }

    #[test]
    fn centrality_on_a_fixed_five_node_snapshot() {
        let id = VehicleId;
        let nodes: Vec<_> = (1..=5).map(|i| node(i, i as f64, 20.0, "1")).collect();
        let comm = [(id(1), id(2)), (id(1), id(3)), (id(2), id(3)), (id(4), id(5))];
        let edge = |a: u32, b: u32, established| SocialEdge {
            from: id(a),
            to: id(b),
            t: 0.0,
            et: LinkDuration::Unbounded,
            shp: 1.0,
            tst: 0.7,
            established,
        };
        let social = [
            edge(1, 2, true),
            edge(2, 1, true),
            edge(3, 1, true),
            edge(2, 3, false),
            edge(4, 5, false),
        ];
        let snap =
            SegSnapshot::from_parts(0, 0.0, CentralityBasis::Social, nodes, comm, social).unwrap();
        assert_eq!(snap.degree_centrality(id(1)).unwrap().value, 0.5);
        assert_eq!(snap.degree_centrality(id(2)).unwrap().value, 0.25);
        assert_eq!(snap.degree_centrality(id(4)).unwrap().value, 0.0);
        let comm_basis = snap
            .degree_centrality_with(id(4), CentralityBasis::Communication)
            .unwrap();
        assert_eq!(comm_basis.value, 0.25);
        assert!(snap.degree_centrality(id(9)).is_err());
    }

    #[test]
    fn fully_linked_vehicle_has_unit_centrality() {
        let nodes: Vec<_> = (1..=4).map(|i| node(i, i as f64 * 10.0, 25.0, "1")).collect();
        let snap = build_snapshot(&nodes, None, 0, 0.0, &params()).unwrap();
        for n in &nodes {
            assert_eq!(snap.degree_centrality(n.id).unwrap().value, 1.0);
        }
        assert_eq!(snap.established_edges().count(), 12);
    }

    #[test]
    fn single_vehicle_centrality_is_flagged() {
        let snap = build_snapshot(&[node(1, 0.0, 20.0, "1")], None, 0, 0.0, &params()).unwrap();
        let c = snap.degree_centrality(VehicleId(1)).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(!c.defined);
    }

    #[test]
    fn low_homophily_pair_never_links() {
        // 13 interests each, 3 shared: SHP = 3/13 ~ 0.23
        let a = "1111111111111000000000000";
        let d = "1110000000000111111111100";
        let nodes = [node(1, 0.0, 25.0, a), node(2, 50.0, 25.0, d)];
        let snap = build_snapshot(&nodes, None, 0, 0.0, &params()).unwrap();
        let edge = snap.social_edge(VehicleId(1), VehicleId(2)).unwrap();
        assert!((edge.shp - 3.0 / 13.0).abs() < 1e-12);
        assert_eq!((edge.shp * 100.0).round(), 23.0);
        assert!(!edge.established);
    }

    #[test]
    fn trust_grows_with_prior_on_persisting_links() {
        // Identical convoy vehicles with delta_d = 0.5: C_D = 1 and SHP = 1
        // give 0.5 at t = 0.
        let mut p = params();
        p.weights.delta_d = 0.5;
        let nodes: Vec<_> = (1..=3).map(|i| node(i, i as f64 * 20.0, 25.0, "11")).collect();
        let first = build_snapshot(&nodes, None, 0, 0.0, &p).unwrap();
        let e0 = first.social_edge(VehicleId(1), VehicleId(2)).unwrap().tst;
        assert!((e0 - 0.5).abs() < 1e-12);
        let moved: Vec<_> = nodes
            .iter()
            .map(|n| node(n.id.0, n.state.x + 250.0, 25.0, "11"))
            .collect();
        let second = build_snapshot(&moved, Some(&first), 1, 10.0, &p).unwrap();
        let e1 = second.social_edge(VehicleId(1), VehicleId(2)).unwrap().tst;
        // 0.5 + 0.1 * 0.5
        assert!((e1 - 0.55).abs() < 1e-12);
        assert!(e1 > e0);
    }

    #[test]
    fn asymmetric_trust_survives_serde() {
        let id = VehicleId;
        let nodes = [node(1, 0.0, 20.0, "1"), node(2, 10.0, 20.0, "1")];
        let edge = |a: u32, b: u32, tst| SocialEdge {
            from: id(a),
            to: id(b),
            t: 3.0,
            et: LinkDuration::Finite(40.0),
            shp: 1.0,
            tst,
            established: true,
        };
        let snap = SegSnapshot::from_parts(
            3,
            3.0,
            CentralityBasis::Social,
            nodes,
            [(id(1), id(2))],
            [edge(1, 2, 0.9), edge(2, 1, -0.3)],
        )
        .unwrap();
        let json = serde_json::to_string(&snap).unwrap();
        let back: SegSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.social_edge(id(1), id(2)).unwrap().tst, 0.9);
        assert_eq!(back.social_edge(id(2), id(1)).unwrap().tst, -0.3);
    }

    #[test]
    fn from_parts_rejects_dangling_social_edges() {
        let id = VehicleId;
        let nodes = [node(1, 0.0, 20.0, "1"), node(2, 10.0, 20.0, "1")];
        let edge = SocialEdge {
            from: id(1),
            to: id(2),
            t: 0.0,
            et: LinkDuration::Unbounded,
            shp: 1.0,
            tst: 0.5,
            established: true,
        };
        assert!(SegSnapshot::from_parts(
            0,
            0.0,
            CentralityBasis::Social,
            nodes.clone(),
            [],
            [edge.clone()]
        )
        .is_err());
        assert!(SegSnapshot::from_parts(
            0,
            0.0,
            CentralityBasis::Social,
            nodes,
            [(id(1), id(2))],
            [SocialEdge { tst: 1.5, ..edge }]
        )
        .is_err());
    }
}
