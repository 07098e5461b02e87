//! Route discovery over established social links: traverse by longest
//! expected link duration, then backtrack from the target through the
//! recorded predecessors.

mod heap;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seg::{LinkDuration, SegSnapshot};
use crate::VehicleId;
use heap::KeyedHeap;

/// Most predecessors kept per node.
pub const MAX_PREDECESSORS: usize = 4;
/// Default cap on the number of routes returned.
pub const DEFAULT_MAX_ROUTES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("source and target are the same vehicle ({0})")]
    Degenerate(VehicleId),
    #[error("vehicle {0} is not in the snapshot")]
    UnknownVehicle(VehicleId),
}

/// Operation counts from one traversal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationCounts {
    pub extractions: u64,
    pub relaxations: u64,
    pub comparisons: u64,
    pub insertions: u64,
}

impl OperationCounts {
    /// Extractions, relaxations and heap comparisons together.
    pub fn elementary(&self) -> u64 {
        self.extractions + self.relaxations + self.comparisons
    }
}

/// Predecessors recorded per node, in the order they were closed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredecessorMap {
    entries: BTreeMap<VehicleId, Vec<VehicleId>>,
}

impl PredecessorMap {
    pub fn of(&self, id: VehicleId) -> &[VehicleId] {
        self.entries.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VehicleId, &[VehicleId])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSet {
    pub source: VehicleId,
    pub target: VehicleId,
    pub routes: Vec<Vec<VehicleId>>,
}

impl RouteSet {
    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }
}

/// Full traversal from a source.
#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    pub source: VehicleId,
    /// Nodes in the order they left the heap.
    pub closed_order: Vec<VehicleId>,
    /// Bottleneck link duration on the path that first closed each node.
    pub keys: BTreeMap<VehicleId, LinkDuration>,
    pub predecessors: PredecessorMap,
    pub counts: OperationCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSearch {
    pub routes: RouteSet,
    pub traversal: Traversal,
}

impl RouteSearch {
    pub fn counts(&self) -> OperationCounts {
        self.traversal.counts
    }
}

/// Established links with duration strictly above `psi_l`, as adjacency
/// lists over dense indices. Indices follow ascending vehicle id and each
/// list is sorted by neighbour index.
struct FilteredGraph {
    ids: Vec<VehicleId>,
    index: BTreeMap<VehicleId, usize>,
    adjacency: Vec<Vec<(usize, LinkDuration)>>,
}

impl FilteredGraph {
    fn new(snapshot: &SegSnapshot, psi_l: f64) -> Self {
        let ids: Vec<VehicleId> = snapshot.nodes().map(|n| n.id).collect();
        let index: BTreeMap<_, _> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        for edge in snapshot.established_edges() {
            if edge.et.exceeds(psi_l) {
                adjacency[index[&edge.from]].push((index[&edge.to], edge.et));
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|(to, _)| *to);
        }
        FilteredGraph {
            ids,
            index,
            adjacency,
        }
    }

    fn lookup(&self, id: VehicleId) -> Result<usize, RoutingError> {
        self.index
            .get(&id)
            .copied()
            .ok_or(RoutingError::UnknownVehicle(id))
    }
}

/// Visits every node reachable from `source` in descending bottleneck
/// duration, ties to the smaller id, recording up to four predecessors per
/// node from relaxations made before it is closed.
pub fn traverse(
    snapshot: &SegSnapshot,
    source: VehicleId,
    psi_l: f64,
) -> Result<Traversal, RoutingError> {
    let graph = FilteredGraph::new(snapshot, psi_l);
    let s = graph.lookup(source)?;
    Ok(run_traversal(&graph, s))
}

fn run_traversal(graph: &FilteredGraph, s: usize) -> Traversal {
    let n = graph.ids.len();
    let mut heap = KeyedHeap::with_capacity(n);
    let mut seen = vec![false; n];
    let mut closed = vec![false; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = OperationCounts::default();
    let mut closed_order = Vec::new();
    let mut keys = BTreeMap::new();

    heap.push(s, LinkDuration::Unbounded);
    seen[s] = true;
    counts.insertions += 1;

    while let Some(x) = heap.pop() {
        counts.extractions += 1;
        closed[x] = true;
        let kx = heap.key(x);
        closed_order.push(graph.ids[x]);
        keys.insert(graph.ids[x], kx);
        for &(y, et) in &graph.adjacency[x] {
            if closed[y] {
                continue;
            }
            counts.relaxations += 1;
            if preds[y].len() < MAX_PREDECESSORS {
                preds[y].push(x);
            }
            let candidate = kx.min(et);
            if seen[y] {
                heap.increase(y, candidate);
            } else {
                seen[y] = true;
                heap.push(y, candidate);
                counts.insertions += 1;
            }
        }
    }
    counts.comparisons = heap.comparisons;

    let entries = preds
        .into_iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty())
        .map(|(i, p)| (graph.ids[i], p.into_iter().map(|j| graph.ids[j]).collect()))
        .collect();
    Traversal {
        source: graph.ids[s],
        closed_order,
        keys,
        predecessors: PredecessorMap { entries },
        counts,
    }
}

/// Up to `max_routes` simple paths from the traversal source to `target`,
/// found depth-first from `target` through the predecessor lists.
pub fn extract_routes(
    traversal: &Traversal,
    target: VehicleId,
    max_routes: usize,
) -> Vec<Vec<VehicleId>> {
    let mut routes = Vec::new();
    let mut path = vec![target];
    backtrack(traversal, &mut path, max_routes, &mut routes);
    routes
}

fn backtrack(
    traversal: &Traversal,
    path: &mut Vec<VehicleId>,
    max_routes: usize,
    routes: &mut Vec<Vec<VehicleId>>,
) {
    if routes.len() >= max_routes {
        return;
    }
    let here = *path.last().expect("path starts non-empty");
    if here == traversal.source {
        if path.len() > 1 {
            routes.push(path.iter().rev().copied().collect());
        }
        return;
    }
    for &p in traversal.predecessors.of(here) {
        if path.contains(&p) {
            continue;
        }
        path.push(p);
        backtrack(traversal, path, max_routes, routes);
        path.pop();
        if routes.len() >= max_routes {
            return;
        }
    }
}

/// Routes from `s` to `d` over established links whose expected duration
/// exceeds `psi_l`. An unreachable target yields an empty set.
pub fn seg_dijkstra(
    snapshot: &SegSnapshot,
    s: VehicleId,
    d: VehicleId,
    psi_l: f64,
    max_routes: usize,
) -> Result<RouteSearch, RoutingError> {
    if s == d {
        return Err(RoutingError::Degenerate(s));
    }
    let graph = FilteredGraph::new(snapshot, psi_l);
    let si = graph.lookup(s)?;
    graph.lookup(d)?;
    let traversal = run_traversal(&graph, si);
    let routes = extract_routes(&traversal, d, max_routes);
    Ok(RouteSearch {
        routes: RouteSet {
            source: s,
            target: d,
            routes,
        },
        traversal,
    })
}
