//! Deterministic discrete-event message passing.
//!
//! Envelopes are delivered in `(deliver_time, sequence)` order. Reachability
//! is decided once, at send time, by a [`Topology`]; there is no loss model
//! beyond that check. Times are integer microseconds so replays are exact.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::mobility::{BsmRecord, VehicleState};
use crate::protocol::OpinionRequest;
use crate::seg::SegSnapshot;
use crate::VehicleId;

/// Default per-hop latency, 10 ms.
pub const DEFAULT_HOP_LATENCY_US: u64 = 10_000;

pub fn seconds_to_us(t: f64) -> u64 {
    (t * 1e6).round().max(0.0) as u64
}

pub fn us_to_seconds(us: u64) -> f64 {
    us as f64 / 1e6
}

/// Who can hear whom at send time.
pub trait Topology {
    fn knows(&self, id: VehicleId) -> bool;
    fn linked(&self, a: VehicleId, b: VehicleId) -> bool;
}

impl Topology for SegSnapshot {
    fn knows(&self, id: VehicleId) -> bool {
        self.contains(id)
    }

    fn linked(&self, a: VehicleId, b: VehicleId) -> bool {
        self.in_comm_range(a, b)
    }
}

impl<T: Topology + ?Sized> Topology for &T {
    fn knows(&self, id: VehicleId) -> bool {
        (**self).knows(id)
    }

    fn linked(&self, a: VehicleId, b: VehicleId) -> bool {
        (**self).linked(a, b)
    }
}

/// Straight-line range check over current positions.
#[derive(Debug, Clone)]
pub struct RangeTopology {
    positions: BTreeMap<VehicleId, (f64, f64)>,
    range: f64,
}

impl RangeTopology {
    pub fn new<'a>(states: impl IntoIterator<Item = &'a VehicleState>, range: f64) -> Self {
        RangeTopology {
            positions: states.into_iter().map(|s| (s.id, (s.x, s.y))).collect(),
            range,
        }
    }

    pub fn neighbours(&self, id: VehicleId) -> Vec<VehicleId> {
        self.positions
            .keys()
            .copied()
            .filter(|&other| other != id && self.linked(id, other))
            .collect()
    }
}

impl Topology for RangeTopology {
    fn knows(&self, id: VehicleId) -> bool {
        self.positions.contains_key(&id)
    }

    fn linked(&self, a: VehicleId, b: VehicleId) -> bool {
        match (self.positions.get(&a), self.positions.get(&b)) {
            (Some(p), Some(q)) => a != b && (p.0 - q.0).hypot(p.1 - q.1) <= self.range,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Bsm(BsmRecord),
    OpinionRequest(OpinionRequest),
    /// The request as it arrives back at its initiator.
    OpinionReply(OpinionRequest),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Bsm(_) => "bsm",
            Payload::OpinionRequest(_) => "opinion_request",
            Payload::OpinionReply(_) => "opinion_reply",
        }
    }
}

/// A message to send from the current simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub from: VehicleId,
    pub to: VehicleId,
    /// Relays between `from` and `to`, in order; empty for a single hop.
    pub via: Vec<VehicleId>,
    pub payload: Payload,
    pub query: Option<u64>,
}

impl Outgoing {
    pub fn direct(from: VehicleId, to: VehicleId, payload: Payload) -> Self {
        Outgoing {
            from,
            to,
            via: Vec::new(),
            payload,
            query: None,
        }
    }

    pub fn for_query(mut self, query: u64) -> Self {
        self.query = Some(query);
        self
    }

    pub fn via(mut self, relays: Vec<VehicleId>) -> Self {
        self.via = relays;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: VehicleId,
    pub to: VehicleId,
    pub via: Vec<VehicleId>,
    pub payload: Payload,
    pub query: Option<u64>,
    pub send_time_us: u64,
    pub deliver_time_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    UnknownSender,
    UnknownReceiver,
    OutOfRange { from: VehicleId, to: VehicleId },
}

impl DropReason {
    fn key(&self) -> &'static str {
        match self {
            DropReason::UnknownSender => "unknown_sender",
            DropReason::UnknownReceiver => "unknown_receiver",
            DropReason::OutOfRange { .. } => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Accepted { seq: u64, deliver_time_us: u64 },
    Dropped(DropReason),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetMetrics {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub sent_by_type: BTreeMap<String, u64>,
    pub drops_by_reason: BTreeMap<String, u64>,
    pub per_query: BTreeMap<u64, u64>,
}

impl NetMetrics {
    pub fn absorb(&mut self, other: &NetMetrics) {
        self.sent += other.sent;
        self.delivered += other.delivered;
        self.dropped += other.dropped;
        for (k, v) in &other.sent_by_type {
            *self.sent_by_type.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.drops_by_reason {
            *self.drops_by_reason.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.per_query {
            *self.per_query.entry(*k).or_default() += v;
        }
    }

    pub fn for_query(&self, query: u64) -> u64 {
        self.per_query.get(&query).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Send,
    Deliver,
    Drop,
}

/// One line of the JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub event: TraceKind,
    pub time_us: u64,
    pub seq: Option<u64>,
    pub from: VehicleId,
    pub to: VehicleId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub via: Vec<VehicleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop: Option<DropReason>,
    pub payload: Payload,
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Handler failure, with the counters accumulated up to the failing event.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAborted<E> {
    pub error: E,
    pub metrics: NetMetrics,
}

#[derive(Debug)]
pub struct Network<T> {
    topology: T,
    latency_us: u64,
    now_us: u64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    pending: BTreeMap<u64, Envelope>,
    metrics: NetMetrics,
    trace: Vec<TraceRecord>,
    tracing: bool,
}

impl<T: Topology> Network<T> {
    pub fn new(topology: T, start_us: u64, latency_us: u64) -> Self {
        Network {
            topology,
            latency_us,
            now_us: start_us,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            metrics: NetMetrics::default(),
            trace: Vec::new(),
            tracing: true,
        }
    }

    pub fn without_trace(mut self) -> Self {
        self.tracing = false;
        self
    }

    pub fn topology(&self) -> &T {
        &self.topology
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn metrics(&self) -> &NetMetrics {
        &self.metrics
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn check(&self, msg: &Outgoing) -> Result<(), DropReason> {
        if !self.topology.knows(msg.from) {
            return Err(DropReason::UnknownSender);
        }
        if !self.topology.knows(msg.to) || msg.via.iter().any(|v| !self.topology.knows(*v)) {
            return Err(DropReason::UnknownReceiver);
        }
        let mut hop_from = msg.from;
        for &hop_to in msg.via.iter().chain([&msg.to]) {
            if !self.topology.linked(hop_from, hop_to) {
                return Err(DropReason::OutOfRange {
                    from: hop_from,
                    to: hop_to,
                });
            }
            hop_from = hop_to;
        }
        Ok(())
    }

    /// Queues `msg` for delivery after one latency per hop, or drops it.
    pub fn send(&mut self, msg: Outgoing) -> SendOutcome {
        self.metrics.sent += 1;
        *self
            .metrics
            .sent_by_type
            .entry(msg.payload.kind().to_string())
            .or_default() += 1;
        if let Some(q) = msg.query {
            *self.metrics.per_query.entry(q).or_default() += 1;
        }
        let seq = self.next_seq;
        self.next_seq += 1;

        if let Err(reason) = self.check(&msg) {
            self.metrics.dropped += 1;
            *self
                .metrics
                .drops_by_reason
                .entry(reason.key().to_string())
                .or_default() += 1;
            log::debug!("drop {} -> {}: {:?}", msg.from, msg.to, reason);
            if self.tracing {
                self.trace.push(TraceRecord {
                    event: TraceKind::Drop,
                    time_us: self.now_us,
                    seq: Some(seq),
                    from: msg.from,
                    to: msg.to,
                    via: msg.via,
                    query: msg.query,
                    drop: Some(reason),
                    payload: msg.payload,
                });
            }
            return SendOutcome::Dropped(reason);
        }

        let hops = msg.via.len() as u64 + 1;
        let env = Envelope {
            seq,
            from: msg.from,
            to: msg.to,
            via: msg.via,
            payload: msg.payload,
            query: msg.query,
            send_time_us: self.now_us,
            deliver_time_us: self.now_us + hops * self.latency_us,
        };
        if self.tracing {
            self.trace.push(self.record(TraceKind::Send, self.now_us, &env));
        }
        let deliver_time_us = env.deliver_time_us;
        self.queue.push(Reverse((deliver_time_us, seq)));
        self.pending.insert(seq, env);
        SendOutcome::Accepted {
            seq,
            deliver_time_us,
        }
    }

    fn record(&self, event: TraceKind, time_us: u64, env: &Envelope) -> TraceRecord {
        TraceRecord {
            event,
            time_us,
            seq: Some(env.seq),
            from: env.from,
            to: env.to,
            via: env.via.clone(),
            query: env.query,
            drop: None,
            payload: env.payload.clone(),
        }
    }

    /// Delivers queued envelopes in order, handing each to `handler` and
    /// sending whatever it returns. Stops at the first handler error.
    pub fn run_until_idle<E, F>(&mut self, mut handler: F) -> Result<NetMetrics, RunAborted<E>>
    where
        F: FnMut(&Envelope) -> Result<Vec<Outgoing>, E>,
    {
        while let Some(Reverse((time, seq))) = self.queue.pop() {
            let env = self.pending.remove(&seq).expect("queued envelope");
            self.now_us = time;
            self.metrics.delivered += 1;
            if self.tracing {
                self.trace.push(self.record(TraceKind::Deliver, time, &env));
            }
            match handler(&env) {
                Ok(out) => {
                    for msg in out {
                        self.send(msg);
                    }
                }
                Err(error) => {
                    return Err(RunAborted {
                        error,
                        metrics: self.metrics.clone(),
                    })
                }
            }
        }
        Ok(self.metrics.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::VehicleState;

    fn state(id: u32, x: f64) -> VehicleState {
        VehicleState {
            id: VehicleId(id),
            x,
            y: 0.0,
            v: 0.0,
            lane: 0,
        }
    }

    fn bsm(id: u32) -> Payload {
        Payload::Bsm(BsmRecord {
            sender: VehicleId(id),
            time: 0.0,
            x: 0.0,
            y: 0.0,
            v: 0.0,
            lane: 0,
            profile: "1".parse().unwrap(),
            psi_h: 0.5,
        })
    }

    fn net() -> Network<RangeTopology> {
        let states = [state(1, 0.0), state(2, 100.0), state(3, 350.0), state(4, 500.0)];
        Network::new(RangeTopology::new(&states, 300.0), 0, DEFAULT_HOP_LATENCY_US)
    }

    #[test]
    fn empty_queue_gives_zero_metrics() {
        let mut n = net();
        let m = n.run_until_idle(|_| Ok::<_, ()>(vec![])).unwrap();
        assert_eq!(m, NetMetrics::default());
    }

    #[test]
    fn in_range_delivers_after_one_latency() {
        let mut n = net();
        let out = n.send(Outgoing::direct(VehicleId(1), VehicleId(2), bsm(1)));
        assert_eq!(
            out,
            SendOutcome::Accepted {
                seq: 0,
                deliver_time_us: 10_000
            }
        );
        let mut seen = Vec::new();
        n.run_until_idle(|e| {
            seen.push((e.to, e.deliver_time_us));
            Ok::<_, ()>(vec![])
        })
        .unwrap();
        assert_eq!(seen, vec![(VehicleId(2), 10_000)]);
    }

    #[test]
    fn drops_are_counted_by_reason() {
        let mut n = net();
        let far = n.send(Outgoing::direct(VehicleId(1), VehicleId(3), bsm(1)));
        assert_eq!(
            far,
            SendOutcome::Dropped(DropReason::OutOfRange {
                from: VehicleId(1),
                to: VehicleId(3)
            })
        );
        let ghost = n.send(Outgoing::direct(VehicleId(1), VehicleId(9), bsm(1)));
        assert_eq!(ghost, SendOutcome::Dropped(DropReason::UnknownReceiver));
        let m = n.run_until_idle(|_| Ok::<_, ()>(vec![])).unwrap();
        assert_eq!((m.sent, m.delivered, m.dropped), (2, 0, 2));
        assert_eq!(m.drops_by_reason["out_of_range"], 1);
        assert_eq!(m.drops_by_reason["unknown_receiver"], 1);
    }

    #[test]
    fn relayed_send_checks_every_hop() {
        let mut n = net();
        let ok = n.send(
            Outgoing::direct(VehicleId(1), VehicleId(4), bsm(1))
                .via(vec![VehicleId(2), VehicleId(3)]),
        );
        assert_eq!(
            ok,
            SendOutcome::Accepted {
                seq: 0,
                deliver_time_us: 30_000
            }
        );
        let broken = n.send(Outgoing::direct(VehicleId(1), VehicleId(4), bsm(1)).via(vec![VehicleId(3)]));
        assert!(matches!(broken, SendOutcome::Dropped(DropReason::OutOfRange { .. })));
    }

    fn replay() -> (Vec<TraceRecord>, NetMetrics) {
        let mut n = net();
        n.send(Outgoing::direct(VehicleId(2), VehicleId(1), bsm(2)).for_query(7));
        n.send(Outgoing::direct(VehicleId(2), VehicleId(3), bsm(2)).for_query(7));
        let m = n
            .run_until_idle(|e| {
                Ok::<_, ()>(if e.to == VehicleId(3) {
                    vec![Outgoing::direct(VehicleId(3), VehicleId(4), bsm(3)).for_query(7)]
                } else {
                    vec![]
                })
            })
            .unwrap();
        (n.take_trace(), m)
    }

    #[test]
    fn same_tick_sends_deliver_in_send_order_and_replay_identically() {
        let (trace, metrics) = replay();
        let delivered: Vec<_> = trace
            .iter()
            .filter(|r| r.event == TraceKind::Deliver)
            .map(|r| r.to)
            .collect();
        assert_eq!(delivered, vec![VehicleId(1), VehicleId(3), VehicleId(4)]);
        assert_eq!(metrics.for_query(7), 3);
        assert_eq!(metrics.delivered + metrics.dropped, metrics.sent);
        let (trace2, metrics2) = replay();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trace(&mut a, &trace).unwrap();
        write_trace(&mut b, &trace2).unwrap();
        assert_eq!(a, b);
        assert_eq!(metrics, metrics2);
    }

    #[test]
    fn handler_error_returns_partial_metrics() {
        let mut n = net();
        n.send(Outgoing::direct(VehicleId(1), VehicleId(2), bsm(1)));
        n.send(Outgoing::direct(VehicleId(2), VehicleId(1), bsm(2)));
        let err = n.run_until_idle(|_| Err("boom")).unwrap_err();
        assert_eq!(err.error, "boom");
        assert_eq!((err.metrics.sent, err.metrics.delivered), (2, 1));
    }
}
