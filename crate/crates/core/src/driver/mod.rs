//! Scenario runs: mobility steps, BSM rounds, snapshot rebuilds and scheduled
//! trust queries, with their output files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::exponentiation_stats;
use crate::mobility::{broadcast_bsms, BsmRecord, Traffic};
use crate::paillier::{Keypair, PaillierError};
use crate::protocol::{initiate, IndirectTrustResult, ProtocolError};
use crate::routing::RoutingError;
use crate::scenario::{ScenarioConfig, ScenarioError, VehicleRef};
use crate::seg::{build_snapshot, LinkDuration, SegError, SegSnapshot, VehicleNode};
use crate::simnet::{
    seconds_to_us, write_trace, NetMetrics, Network, Outgoing, Payload, RangeTopology,
    TraceRecord,
};
use crate::VehicleId;

pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error(transparent)]
    Seg(#[from] SegError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Crypto(#[from] PaillierError),
    #[error("query time {at} is outside the run [0, {duration}]")]
    QueryTime { at: f64, duration: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed snapshot line {line}: {reason}")]
    BadSnapshot { line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DriverError + '_ {
    move |source| DriverError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One keypair per initiating vehicle, generated on first use from a seed
/// derived from the scenario's crypto seed and the vehicle id.
#[derive(Debug)]
pub struct KeyRing {
    bits: u64,
    seed: u64,
    keys: BTreeMap<VehicleId, Keypair>,
    generation_ms: f64,
}

impl KeyRing {
    pub fn new(bits: u64, seed: u64) -> Self {
        KeyRing {
            bits,
            seed,
            keys: BTreeMap::new(),
            generation_ms: 0.0,
        }
    }

    pub fn get(&mut self, id: VehicleId) -> Result<&Keypair, PaillierError> {
        if !self.keys.contains_key(&id) {
            let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
            rng.set_stream(u64::from(id.0));
            let started = Instant::now();
            let kp = Keypair::generate(self.bits, rng.next_u64())?;
            self.generation_ms += started.elapsed().as_secs_f64() * 1e3;
            log::debug!("generated {}-bit key for {id}", self.bits);
            self.keys.insert(id, kp);
        }
        Ok(&self.keys[&id])
    }

    pub fn any(&self) -> Option<&Keypair> {
        self.keys.values().next()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub index: usize,
    pub time: f64,
    pub vehicles: usize,
    pub comm_edges: usize,
    pub social_edges: usize,
    pub established_edges: usize,
}

impl From<&SegSnapshot> for SnapshotSummary {
    fn from(s: &SegSnapshot) -> Self {
        SnapshotSummary {
            index: s.index(),
            time: s.time(),
            vehicles: s.vehicle_count(),
            comm_edges: s.comm_edge_count(),
            social_edges: s.social_edges().count(),
            established_edges: s.established_edges().count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Ok,
    NoRoute,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: u64,
    pub at: f64,
    pub source: VehicleId,
    pub target: VehicleId,
    pub status: QueryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Modelled decryption cost: decryptions times the configured
    /// exponentiation time.
    pub decrypt_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<IndirectTrustResult>,
}

impl QueryRecord {
    pub fn tst_sd(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.tst_sd)
    }

    pub fn messages(&self) -> u64 {
        self.result.as_ref().map_or(0, |r| r.messages_sent)
    }

    pub fn route_count(&self) -> usize {
        self.result.as_ref().map_or(0, |r| r.routes_used.len())
    }
}

/// Wall-clock measurements; these vary between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub key_generation_ms: f64,
    pub decrypt_wall_ms: f64,
    /// Measured mean of one encryption-sized exponentiation at the run's key
    /// size, comparable with `t_exp_ms_model`.
    pub exponentiation_ms: Option<f64>,
    pub t_exp_ms_model: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub steps: usize,
    pub duration: f64,
    pub key_bits: u64,
    pub names: BTreeMap<VehicleId, String>,
    pub snapshots: Vec<SnapshotSummary>,
    pub queries: Vec<QueryRecord>,
    pub bsm_net: NetMetrics,
    pub protocol_net: NetMetrics,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub snapshots: Vec<SegSnapshot>,
    pub trace: Vec<TraceRecord>,
}

/// Steps a scenario, producing one snapshot per step from that step's BSM
/// round.
pub struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    traffic: Traffic,
    prev: Option<SegSnapshot>,
    next_index: usize,
    bsm_net: NetMetrics,
    trace: Vec<TraceRecord>,
    trace_bsms: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ScenarioConfig) -> Self {
        Simulation {
            cfg,
            traffic: Traffic::new(cfg.highway, cfg.arrivals()),
            prev: None,
            next_index: 0,
            bsm_net: NetMetrics::default(),
            trace: Vec::new(),
            trace_bsms: cfg.sim.trace_bsms,
        }
    }

    pub fn without_bsm_trace(mut self) -> Self {
        self.trace_bsms = false;
        self
    }

    pub fn bsm_metrics(&self) -> &NetMetrics {
        &self.bsm_net
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn push_trace(&mut self, records: Vec<TraceRecord>) {
        self.trace.extend(records);
    }

    /// Snapshot for the next step, or `None` once the run is over.
    pub fn next_snapshot(&mut self) -> Result<Option<SegSnapshot>, DriverError> {
        if self.next_index as u64 > self.cfg.step_count() {
            return Ok(None);
        }
        if self.next_index > 0 {
            self.traffic.advance();
        }
        let time = self.traffic.time();
        let nodes = self.bsm_round(time);
        let snapshot = build_snapshot(
            &nodes,
            self.prev.as_ref(),
            self.next_index,
            time,
            &self.cfg.snapshot_params(),
        )?;
        self.prev = Some(snapshot.clone());
        self.next_index += 1;
        Ok(Some(snapshot))
    }

    /// Every vehicle beacons to each vehicle in range. The snapshot is built
    /// from the union of what was received plus each vehicle's own record.
    fn bsm_round(&mut self, time: f64) -> Vec<VehicleNode> {
        let states = self.traffic.states();
        let records = broadcast_bsms(states, self.traffic.adverts(), time);
        let topology = RangeTopology::new(states, self.cfg.highway.range);
        let mut net = Network::new(topology, seconds_to_us(time), self.cfg.sim.hop_latency_us());
        if !self.trace_bsms {
            net = net.without_trace();
        }
        let mut known: BTreeMap<VehicleId, BsmRecord> =
            records.iter().map(|r| (r.sender, r.clone())).collect();
        for record in &records {
            for to in net.topology().neighbours(record.sender) {
                net.send(Outgoing::direct(
                    record.sender,
                    to,
                    Payload::Bsm(record.clone()),
                ));
            }
        }
        let outcome = net.run_until_idle(|env| {
            if let Payload::Bsm(bsm) = &env.payload {
                known.entry(bsm.sender).or_insert_with(|| bsm.clone());
            }
            Ok::<_, std::convert::Infallible>(vec![])
        });
        let metrics = match outcome {
            Ok(m) => m,
            Err(aborted) => aborted.metrics,
        };
        self.bsm_net.absorb(&metrics);
        self.trace.extend(net.take_trace());
        known.values().map(VehicleNode::from_bsm).collect()
    }
}

fn query_rng(seed: u64, query: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(query);
    rng
}

/// Runs one trust query against `snapshot`, appending its trace to `trace`.
#[allow(clippy::too_many_arguments)]
fn run_query(
    cfg: &ScenarioConfig,
    snapshot: &SegSnapshot,
    keys: &mut KeyRing,
    query: u64,
    s: VehicleId,
    d: VehicleId,
    protocol_net: &mut NetMetrics,
    trace: &mut Vec<TraceRecord>,
) -> Result<IndirectTrustResult, ProtocolError> {
    let params = cfg.protocol_params();
    if !snapshot.contains(s) {
        return Err(RoutingError::UnknownVehicle(s).into());
    }
    let keypair = keys.get(s)?;
    let mut net = Network::new(
        snapshot,
        seconds_to_us(snapshot.time()),
        cfg.sim.hop_latency_us(),
    );
    let mut rng = query_rng(cfg.sim.seed, query);
    let result = initiate(snapshot, s, d, keypair, &params, query, &mut net, &mut rng);
    protocol_net.absorb(net.metrics());
    trace.extend(net.take_trace());
    result
}

fn step_of(at: f64, dt: f64) -> usize {
    (at / dt - 1e-9).ceil().max(0.0) as usize
}

/// Runs a whole scenario in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutput, DriverError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut sim = Simulation::new(cfg);
    let mut keys = KeyRing::new(cfg.crypto.key_bits, cfg.crypto.seed);
    let mut snapshots = Vec::new();
    let mut queries = Vec::new();
    let mut protocol_net = NetMetrics::default();
    let mut trace = Vec::new();
    let mut decrypt_wall_us = 0u64;

    let mut scheduled: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, q) in cfg.queries.iter().enumerate() {
        scheduled.entry(step_of(q.at, cfg.highway.dt)).or_default().push(i);
    }

    while let Some(snapshot) = sim.next_snapshot()? {
        trace.extend(sim.take_trace());
        for &i in scheduled.get(&snapshot.index()).into_iter().flatten() {
            let q = &cfg.queries[i];
            let (s, d) = (cfg.resolve(&q.source)?, cfg.resolve(&q.target)?);
            let id = i as u64;
            let outcome = run_query(cfg, &snapshot, &mut keys, id, s, d, &mut protocol_net, &mut trace);
            let mut record = QueryRecord {
                query_id: id,
                at: q.at,
                source: s,
                target: d,
                status: QueryStatus::Ok,
                error: None,
                decrypt_ms: 0.0,
                result: None,
            };
            match outcome {
                Ok(result) => {
                    record.decrypt_ms = result.decryptions as f64 * cfg.sim.t_exp_ms;
                    decrypt_wall_us += result.decrypt_wall_us;
                    log::info!(
                        "query {id}: {s} -> {d} at t = {}: tst = {:.4} ({:?}, {} routes, {} messages)",
                        snapshot.time(),
                        result.tst_sd,
                        result.mode,
                        result.routes_used.len(),
                        result.messages_sent
                    );
                    record.result = Some(result);
                }
                Err(e @ ProtocolError::Unreachable { .. }) => {
                    log::info!("query {id}: {e}");
                    record.status = QueryStatus::NoRoute;
                    record.error = Some(e.to_string());
                }
                Err(e @ (ProtocolError::Routing(RoutingError::UnknownVehicle(_))
                | ProtocolError::NoOpinion)) => {
                    log::warn!("query {id}: {e}");
                    record.status = QueryStatus::Failed;
                    record.error = Some(e.to_string());
                }
                Err(e) => return Err(e.into()),
            }
            queries.push(record);
        }
        snapshots.push(snapshot);
    }

    let exponentiation_ms = keys
        .any()
        .map(|kp| exponentiation_stats(&kp.public, 5, cfg.crypto.seed).mean_ms);
    let report = RunReport {
        name: cfg.name.clone(),
        steps: snapshots.len(),
        duration: cfg.sim.duration,
        key_bits: cfg.crypto.key_bits,
        names: cfg.names(),
        snapshots: snapshots.iter().map(SnapshotSummary::from).collect(),
        queries,
        bsm_net: sim.bsm_metrics().clone(),
        protocol_net,
        timings: Timings {
            key_generation_ms: keys.generation_ms,
            decrypt_wall_ms: decrypt_wall_us as f64 / 1e3,
            exponentiation_ms,
            t_exp_ms_model: cfg.sim.t_exp_ms,
            total_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    };
    Ok(RunOutput {
        report,
        snapshots,
        trace,
    })
}

/// `query_id,s,d,routes,messages,decrypt_ms,tst_sd`; `tst_sd` is empty for
/// queries that produced no value.
pub fn write_metrics_csv<W: Write>(out: W, queries: &[QueryRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "query_id",
        "s",
        "d",
        "routes",
        "messages",
        "decrypt_ms",
        "tst_sd",
    ])?;
    for q in queries {
        w.write_record([
            q.query_id.to_string(),
            q.source.to_string(),
            q.target.to_string(),
            q.route_count().to_string(),
            q.messages().to_string(),
            q.decrypt_ms.to_string(),
            q.tst_sd().map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> Result<(), DriverError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let path = dir.join(SNAPSHOTS_FILE);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for s in &self.snapshots {
            serde_json::to_writer(&mut w, s).map_err(|e| io_err(&path)(e.into()))?;
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = dir.join(METRICS_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        write_metrics_csv(file, &self.report.queries).map_err(|e| io_err(&path)(e.into()))?;

        let path = dir.join(TRACE_FILE);
        let file = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        write_trace(file, &self.trace).map_err(io_err(&path))?;

        let path = dir.join(REPORT_FILE);
        let file = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        serde_json::to_writer_pretty(file, &self.report).map_err(|e| io_err(&path)(e.into()))?;
        Ok(())
    }
}

/// Runs a scenario and writes its outputs to `out_dir`.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, DriverError> {
    let output = simulate(cfg)?;
    output.write(out_dir)?;
    Ok(output.report)
}

/// Steps the scenario to the first snapshot at or after `at` and runs a
/// single trust query there.
pub fn trust_query(
    cfg: &ScenarioConfig,
    source: &VehicleRef,
    target: &VehicleRef,
    at: f64,
) -> Result<IndirectTrustResult, DriverError> {
    cfg.validate()?;
    if !(0.0..=cfg.sim.duration).contains(&at) {
        return Err(DriverError::QueryTime {
            at,
            duration: cfg.sim.duration,
        });
    }
    let (s, d) = (cfg.resolve(source)?, cfg.resolve(target)?);
    let wanted = step_of(at, cfg.highway.dt);
    let mut sim = Simulation::new(cfg).without_bsm_trace();
    let mut keys = KeyRing::new(cfg.crypto.key_bits, cfg.crypto.seed);
    while let Some(snapshot) = sim.next_snapshot()? {
        if snapshot.index() == wanted {
            let mut metrics = NetMetrics::default();
            let mut trace = Vec::new();
            return Ok(run_query(
                cfg,
                &snapshot,
                &mut keys,
                0,
                s,
                d,
                &mut metrics,
                &mut trace,
            )?);
        }
    }
    Err(DriverError::QueryTime {
        at,
        duration: cfg.sim.duration,
    })
}

/// Which table `export` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportTable {
    Edges,
    Nodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub snapshot: usize,
    pub time: f64,
    pub from: VehicleId,
    pub to: VehicleId,
    /// Seconds; empty (or null) for an unbounded link.
    pub et: Option<f64>,
    pub shp: f64,
    pub tst: f64,
    pub established: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub snapshot: usize,
    pub time: f64,
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub lane: u32,
    pub centrality: f64,
    pub established_out: usize,
}

/// Reads snapshots written one JSON object per line.
pub fn read_snapshots<R: BufRead>(input: R) -> Result<Vec<SegSnapshot>, DriverError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| DriverError::Io {
            path: "<snapshots>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let snap = serde_json::from_str(&line).map_err(|e| DriverError::BadSnapshot {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(snap);
    }
    Ok(out)
}

pub fn edge_rows(snapshots: &[SegSnapshot]) -> Vec<EdgeRow> {
    snapshots
        .iter()
        .flat_map(|s| {
            s.social_edges().map(move |e| EdgeRow {
                snapshot: s.index(),
                time: s.time(),
                from: e.from,
                to: e.to,
                et: match e.et {
                    LinkDuration::Finite(t) => Some(t),
                    LinkDuration::Unbounded => None,
                },
                shp: e.shp,
                tst: e.tst,
                established: e.established,
            })
        })
        .collect()
}

pub fn node_rows(snapshots: &[SegSnapshot]) -> Vec<NodeRow> {
    snapshots
        .iter()
        .flat_map(|s| {
            s.nodes().map(move |n| NodeRow {
                snapshot: s.index(),
                time: s.time(),
                id: n.id,
                x: n.state.x,
                y: n.state.y,
                v: n.state.v,
                lane: n.state.lane,
                centrality: s.degree_centrality(n.id).map_or(0.0, |c| c.value),
                established_out: s.established_from(n.id).count(),
            })
        })
        .collect()
}

/// Converts snapshot lines into a plot-ready table.
pub fn export<R: BufRead, W: Write>(
    input: R,
    out: W,
    table: ExportTable,
    format: ExportFormat,
) -> Result<(), DriverError> {
    let snapshots = read_snapshots(input)?;
    let wrap = |e: std::io::Error| DriverError::Io {
        path: "<export>".into(),
        source: e,
    };
    match (table, format) {
        (ExportTable::Edges, ExportFormat::Csv) => {
            crate::bench::write_csv(out, &edge_rows(&snapshots)).map_err(|e| wrap(e.into()))
        }
        (ExportTable::Nodes, ExportFormat::Csv) => {
            crate::bench::write_csv(out, &node_rows(&snapshots)).map_err(|e| wrap(e.into()))
        }
        (ExportTable::Edges, ExportFormat::Json) => {
            serde_json::to_writer_pretty(out, &edge_rows(&snapshots)).map_err(|e| wrap(e.into()))
        }
        (ExportTable::Nodes, ExportFormat::Json) => {
            serde_json::to_writer_pretty(out, &node_rows(&snapshots)).map_err(|e| wrap(e.into()))
        }
    }
}
