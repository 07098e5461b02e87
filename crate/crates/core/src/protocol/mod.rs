//! Indirect trust via encrypted opinion aggregation.
//!
//! The initiator `s` finds routes to `d`, then sends one request per route to
//! the route node next to `d`. The request walks back toward `s`; each node
//! on the way encrypts its weighted trust in its `d`-ward successor under
//! `s`'s public key and multiplies it into the accumulator. Only `s` holds
//! the private key, so no node sees the opinions gathered before it.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paillier::{
    decode_signed, Ciphertext, Keypair, PaillierError, PublicKey, SignedFixedPoint, DEFAULT_SCALE,
};
use crate::routing::{seg_dijkstra, RouteSet, RoutingError, DEFAULT_MAX_ROUTES};
use crate::seg::{homophily, SegError, SegSnapshot, TrustWeights};
use crate::simnet::{Envelope, Network, Outgoing, Payload, SendOutcome, Topology};
use crate::VehicleId;

pub const DEFAULT_GAMMA: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("no trusted route from {initiator} to {target}")]
    Unreachable {
        initiator: VehicleId,
        target: VehicleId,
    },
    #[error("no route returned an opinion")]
    NoOpinion,
    #[error("request for {expected} delivered to {found}")]
    NotOnRoute { expected: VehicleId, found: VehicleId },
    #[error("cursor {cursor} does not name a relay on a route of {len} nodes")]
    CursorOutOfRoute { cursor: usize, len: usize },
    #[error("reply for query {query} reached {found}, not its initiator")]
    MisroutedReply { query: u64, found: VehicleId },
    #[error(transparent)]
    Crypto(#[from] PaillierError),
    #[error(transparent)]
    Seg(#[from] SegError),
    #[error("invalid protocol parameter: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub weights: TrustWeights,
    /// Per-hop opinion weight decay.
    pub gamma: f64,
    pub scale: u64,
    pub psi_l: f64,
    pub max_routes: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            weights: TrustWeights::default(),
            gamma: DEFAULT_GAMMA,
            scale: DEFAULT_SCALE,
            psi_l: 12.0,
            max_routes: DEFAULT_MAX_ROUTES,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.weights.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ProtocolError::Params(format!(
                "gamma = {} outside (0, 1]",
                self.gamma
            )));
        }
        if self.scale == 0 {
            return Err(ProtocolError::Params("scale must be positive".into()));
        }
        if self.max_routes == 0 {
            return Err(ProtocolError::Params("max_routes must be positive".into()));
        }
        Ok(())
    }
}

/// Opinion weight of the node `h` hops from the initiator: `gamma^(h-1)`.
pub fn hop_weight(h: usize, gamma: f64) -> f64 {
    gamma.powi(h.max(1) as i32 - 1)
}

/// Weights for the relays of a route with `relays` nodes between `s` and `d`.
pub fn hop_weights(relays: usize, gamma: f64) -> Vec<f64> {
    (1..=relays).map(|h| hop_weight(h, gamma)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionRequest {
    pub query: u64,
    pub route_index: usize,
    pub initiator: VehicleId,
    pub target: VehicleId,
    /// Full route, `initiator` first and `target` last.
    pub route: Vec<VehicleId>,
    /// Weight of `route[k]` is `hop_weights[k - 1]`.
    pub hop_weights: Vec<f64>,
    pub accumulator: Ciphertext,
    pub pk: PublicKey,
    /// Index into `route` of the node holding the request.
    pub cursor: usize,
    pub nonce: u64,
    pub scale: u64,
    /// Relays that have added a real opinion so far.
    pub contributors: usize,
    /// Relays that had no link to their successor and added zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<VehicleId>,
}

/// A relay's plaintext contribution, kept only on the relay's side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionContribution {
    pub query: u64,
    pub route_index: usize,
    pub contributor: VehicleId,
    pub op: f64,
    pub encoded: SignedFixedPoint,
    pub missing_link: bool,
}

fn relay_rng(nonce: u64, node: VehicleId) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(nonce);
    rng.set_stream(u64::from(node.0));
    rng
}

/// One relay step: `node` adds `E(w * TST(node, successor))` to the
/// accumulator and moves the cursor one step toward the initiator.
///
/// Needs only the public key carried by the request. A node without an
/// established link to its successor adds `E(0)` and is flagged.
pub fn handle_request(
    node: VehicleId,
    req: &OpinionRequest,
    snapshot: &SegSnapshot,
) -> Result<(OpinionRequest, OpinionContribution), ProtocolError> {
    let len = req.route.len();
    if req.cursor == 0 || req.cursor + 1 >= len || req.hop_weights.len() < req.cursor {
        return Err(ProtocolError::CursorOutOfRoute {
            cursor: req.cursor,
            len,
        });
    }
    let expected = req.route[req.cursor];
    if expected != node {
        return Err(ProtocolError::NotOnRoute {
            expected,
            found: node,
        });
    }
    let successor = req.route[req.cursor + 1];
    let weight = req.hop_weights[req.cursor - 1];
    let trust = snapshot
        .social_edge(node, successor)
        .filter(|e| e.established)
        .map(|e| e.tst);
    let op = trust.map_or(0.0, |t| weight * t);
    let encoded = SignedFixedPoint::encode(op, req.scale, req.pk.n())?;
    let fresh = req.pk.encrypt(&encoded.raw, &mut relay_rng(req.nonce, node))?;

    let mut next = req.clone();
    next.accumulator = req.pk.add(&req.accumulator, &fresh)?;
    next.cursor -= 1;
    match trust {
        Some(_) => next.contributors += 1,
        None => {
            log::warn!(
                "query {}: {node} has no link to {successor}, adding zero",
                req.query
            );
            next.flagged.push(node);
        }
    }
    let contribution = OpinionContribution {
        query: req.query,
        route_index: req.route_index,
        contributor: node,
        op,
        encoded,
        missing_link: trust.is_none(),
    };
    Ok((next, contribution))
}

/// Where a request goes after a relay step.
pub fn forward(req: OpinionRequest) -> Outgoing {
    let from = req.route[req.cursor + 1];
    let to = req.route[req.cursor];
    let query = req.query;
    let payload = if req.cursor == 0 {
        Payload::OpinionReply(req)
    } else {
        Payload::OpinionRequest(req)
    };
    Outgoing::direct(from, to, payload).for_query(query)
}

/// Decrypted opinion sum from one route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteOpinion {
    pub route: Vec<VehicleId>,
    pub op_f: f64,
    pub contributors: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<VehicleId>,
}

/// Mean over routes of each route's mean opinion. Routes without
/// contributors are skipped.
pub fn combine_opinions(per_route: &[RouteOpinion]) -> Result<f64, ProtocolError> {
    let means: Vec<f64> = per_route
        .iter()
        .filter(|r| r.contributors > 0)
        .map(|r| r.op_f / r.contributors as f64)
        .collect();
    if means.is_empty() {
        return Err(ProtocolError::NoOpinion);
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// `(delta_d * C_D(d)) * (delta_h * SHP_sd) + delta_f * opinion`, clamped.
pub fn finalize(
    per_route: &[RouteOpinion],
    centrality_d: f64,
    shp_sd: f64,
    weights: &TrustWeights,
) -> Result<f64, ProtocolError> {
    let opinion = combine_opinions(per_route)?;
    Ok((weights.social_term(centrality_d, shp_sd) + weights.delta_f * opinion).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustMode {
    /// `d` is an established neighbour of `s`; its stored trust is used.
    Direct,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndirectTrustResult {
    pub query: u64,
    pub source: VehicleId,
    pub target: VehicleId,
    pub time: f64,
    pub mode: TrustMode,
    pub tst_sd: f64,
    pub centrality_d: f64,
    pub shp_sd: f64,
    pub weights: TrustWeights,
    pub route_opinions: Vec<RouteOpinion>,
    pub routes_used: RouteSet,
    pub messages_sent: u64,
    pub decryptions: u64,
    /// Wall-clock time spent decrypting, for reporting only.
    #[serde(default, skip_serializing)]
    pub decrypt_wall_us: u64,
    /// Plaintext shadow of every relay contribution, for auditing.
    #[serde(default)]
    pub contributions: Vec<OpinionContribution>,
}

impl IndirectTrustResult {
    /// Re-derives `tst_sd` from the recorded fields.
    pub fn recompute(&self) -> Result<f64, ProtocolError> {
        match self.mode {
            TrustMode::Direct => Ok(self.tst_sd),
            TrustMode::Indirect => finalize(
                &self.route_opinions,
                self.centrality_d,
                self.shp_sd,
                &self.weights,
            ),
        }
    }
}

/// Runs one trust query from `s` about `d` over `net`, whose clock is the
/// query time. `rng` supplies the initial encryptions and the nonces.
#[allow(clippy::too_many_arguments)]
pub fn initiate<T: Topology, R: RngCore>(
    snapshot: &SegSnapshot,
    s: VehicleId,
    d: VehicleId,
    keypair: &Keypair,
    params: &ProtocolParams,
    query: u64,
    net: &mut Network<T>,
    rng: &mut R,
) -> Result<IndirectTrustResult, ProtocolError> {
    params.validate()?;
    if s == d {
        return Err(RoutingError::Degenerate(s).into());
    }
    let node_s = snapshot.node(s).ok_or(RoutingError::UnknownVehicle(s))?;
    let node_d = snapshot.node(d).ok_or(RoutingError::UnknownVehicle(d))?;
    let shp_sd = homophily(&node_s.profile, &node_d.profile)?;
    let centrality_d = snapshot.degree_centrality(d)?.value;
    let mut result = IndirectTrustResult {
        query,
        source: s,
        target: d,
        time: snapshot.time(),
        mode: TrustMode::Direct,
        tst_sd: 0.0,
        centrality_d,
        shp_sd,
        weights: params.weights,
        route_opinions: Vec::new(),
        routes_used: RouteSet {
            source: s,
            target: d,
            routes: Vec::new(),
        },
        messages_sent: 0,
        decryptions: 0,
        decrypt_wall_us: 0,
        contributions: Vec::new(),
    };

    if let Some(edge) = snapshot.social_edge(s, d).filter(|e| e.established) {
        result.tst_sd = edge.tst;
        return Ok(result);
    }
    result.mode = TrustMode::Indirect;

    let routes = seg_dijkstra(snapshot, s, d, params.psi_l, params.max_routes)?.routes;
    if routes.is_empty() {
        return Err(ProtocolError::Unreachable {
            initiator: s,
            target: d,
        });
    }
    let pk = &keypair.public;
    let messages_before = net.metrics().for_query(query);

    for (route_index, route) in routes.routes.iter().enumerate() {
        let relays = route.len() - 2;
        let req = OpinionRequest {
            query,
            route_index,
            initiator: s,
            target: d,
            route: route.clone(),
            hop_weights: hop_weights(relays, params.gamma),
            accumulator: pk.encrypt(&0u32.into(), rng)?,
            pk: pk.clone(),
            cursor: relays,
            nonce: rng.next_u64(),
            scale: params.scale,
            contributors: 0,
            flagged: Vec::new(),
        };
        let outgoing = Outgoing::direct(s, route[relays], Payload::OpinionRequest(req))
            .via(route[1..relays].to_vec())
            .for_query(query);
        if let SendOutcome::Dropped(reason) = net.send(outgoing) {
            log::warn!("query {query}: route {route_index} request dropped: {reason:?}");
        }
    }

    let mut seen = BTreeSet::new();
    let mut replies: Vec<Option<RouteOpinion>> = vec![None; routes.len()];
    let mut contributions = Vec::new();
    let mut decryptions = 0u64;
    let mut decrypt_wall_us = 0u64;
    let outcome = net.run_until_idle(|env: &Envelope| -> Result<Vec<Outgoing>, ProtocolError> {
        match &env.payload {
            Payload::OpinionRequest(req) if req.query == query => {
                if !seen.insert((env.to, req.nonce)) {
                    log::warn!("query {query}: replayed request at {} ignored", env.to);
                    return Ok(vec![]);
                }
                let (next, contribution) = handle_request(env.to, req, snapshot)?;
                contributions.push(contribution);
                Ok(vec![forward(next)])
            }
            Payload::OpinionReply(req) if req.query == query => {
                if env.to != s {
                    return Err(ProtocolError::MisroutedReply {
                        query,
                        found: env.to,
                    });
                }
                if !seen.insert((env.to, req.nonce)) || req.route_index >= replies.len() {
                    return Ok(vec![]);
                }
                let started = Instant::now();
                let raw = keypair.private.decrypt(pk, &req.accumulator)?;
                decrypt_wall_us += started.elapsed().as_micros() as u64;
                decryptions += 1;
                replies[req.route_index] = Some(RouteOpinion {
                    route: req.route.clone(),
                    op_f: decode_signed(&raw, req.scale, pk.n()),
                    contributors: req.contributors,
                    flagged: req.flagged.clone(),
                });
                Ok(vec![])
            }
            _ => Ok(vec![]),
        }
    });
    if let Err(aborted) = outcome {
        return Err(aborted.error);
    }

    result.route_opinions = replies.into_iter().flatten().collect();
    result.tst_sd = finalize(&result.route_opinions, centrality_d, shp_sd, &params.weights)?;
    result.routes_used = routes;
    result.messages_sent = net.metrics().for_query(query) - messages_before;
    result.decryptions = decryptions;
    result.decrypt_wall_us = decrypt_wall_us;
    result.contributions = contributions;
    Ok(result)
}
