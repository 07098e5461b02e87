//! Synthetic snapshots for routing tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::mobility::VehicleState;
use crate::seg::{CentralityBasis, LinkDuration, SegSnapshot, SegError, SocialEdge, VehicleNode};
use crate::VehicleId;

fn placeholder_node(id: VehicleId) -> VehicleNode {
    VehicleNode {
        id,
        profile: "1".parse().expect("literal profile"),
        psi_h: 0.5,
        state: VehicleState {
            id,
            x: id.0 as f64,
            y: 0.0,
            v: 0.0,
            lane: 0,
        },
    }
}

/// A snapshot over vehicles `0..n` whose only social links are the given
/// directed, established ones. Positions and profiles are placeholders.
pub fn snapshot_from_links(
    n: u32,
    links: impl IntoIterator<Item = (VehicleId, VehicleId, LinkDuration)>,
) -> Result<SegSnapshot, SegError> {
    let links: Vec<_> = links.into_iter().collect();
    let edges = links.iter().map(|&(from, to, et)| SocialEdge {
        from,
        to,
        t: 0.0,
        et,
        shp: 1.0,
        tst: 1.0,
        established: true,
    });
    SegSnapshot::from_parts(
        0,
        0.0,
        CentralityBasis::Social,
        (0..n).map(|i| placeholder_node(VehicleId(i))),
        links.iter().map(|&(a, b, _)| (a, b)),
        edges.collect::<Vec<_>>(),
    )
}

/// Undirected random links with symmetric durations, as `(a, b, et)` with
/// `a < b`. Vehicle `b` draws its links to earlier vehicles from its own
/// stream, so the links for `n` are exactly those for any larger `n`
/// restricted to `0..n`. Every vehicle after the first links to at least
/// one earlier vehicle.
pub fn random_links(n: u32, mean_degree: f64, seed: u64) -> Vec<(VehicleId, VehicleId, LinkDuration)> {
    let per_node = (mean_degree / 2.0).max(1.0);
    let mut links = Vec::new();
    for b in 1..n {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let whole = per_node.floor() as u32;
        let extra = u32::from(rng.random_bool(per_node.fract()));
        let want = (whole + extra).clamp(1, b);
        let mut picked: Vec<u32> = Vec::with_capacity(want as usize);
        while picked.len() < want as usize {
            let a = rng.random_range(0..b);
            if !picked.contains(&a) {
                picked.push(a);
            }
        }
        picked.sort_unstable();
        for a in picked {
            let et = if rng.random_bool(0.05) {
                LinkDuration::Unbounded
            } else {
                LinkDuration::Finite(rng.random_range(1.0..120.0))
            };
            links.push((VehicleId(a), VehicleId(b), et));
        }
    }
    links
}

/// Snapshot over `0..n` with both directions of every [`random_links`] link
/// established.
pub fn random_social_snapshot(n: u32, mean_degree: f64, seed: u64) -> Result<SegSnapshot, SegError> {
    let links = random_links(n, mean_degree, seed);
    snapshot_from_links(
        n,
        links
            .into_iter()
            .flat_map(|(a, b, et)| [(a, b, et), (b, a, et)]),
    )
}
