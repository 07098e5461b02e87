use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use segtrust::bench::{crypto_bench, dijkstra_bench, write_csv};
use segtrust::driver::{
    self, export, trust_query, write_metrics_csv, DriverError, ExportFormat, ExportTable,
    QueryRecord, QueryStatus,
};
use segtrust::protocol::{IndirectTrustResult, ProtocolError, TrustMode};
use segtrust::scenario::{ScenarioConfig, ScenarioError, VehicleRef};

/// Trust among vehicles from social links, with encrypted opinion collection.
#[derive(Parser)]
#[command(name = "segtrust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write snapshots, metrics, trace and report.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Compute one vehicle's trust in another at a given time.
    TrustQuery {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Initiator, by name or id.
        source: String,
        /// Vehicle being assessed, by name or id.
        target: String,
        /// Query time in seconds.
        #[arg(long)]
        at: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Time the cryptography or count traversal operations.
    Bench {
        #[arg(value_enum)]
        kind: BenchKind,
        /// Key sizes for the crypto bench.
        #[arg(long, value_delimiter = ',', default_values_t = [512u64, 1024, 2048])]
        key_bits: Vec<u64>,
        /// Samples per operation for the crypto bench.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Graph sizes for the traversal bench.
        #[arg(long, value_delimiter = ',', default_values_t = [100u32, 1000, 10000])]
        sizes: Vec<u32>,
        /// Mean social degree of the random graphs.
        #[arg(long, default_value_t = 4.0)]
        degree: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a snapshots file into a plot-ready table.
    Export {
        /// Snapshots file written by `run`.
        snapshots: PathBuf,
        #[arg(long, value_enum, default_value_t = Table::Edges)]
        table: Table,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the key size.
    #[arg(long)]
    key_bits: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        if let Some(bits) = self.key_bits {
            cfg.crypto.key_bits = bits;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Crypto,
    Dijkstra,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    Edges,
    Nodes,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_query(result: &IndirectTrustResult, format: Format) -> Result<()> {
    let mut out = io::stdout().lock();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, result)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let record = QueryRecord {
                query_id: result.query,
                at: result.time,
                source: result.source,
                target: result.target,
                status: QueryStatus::Ok,
                error: None,
                decrypt_ms: 0.0,
                result: Some(result.clone()),
            };
            write_metrics_csv(&mut out, &[record])?;
        }
        Format::Text => {
            let mode = match result.mode {
                TrustMode::Direct => "direct",
                TrustMode::Indirect => "indirect",
            };
            writeln!(out, "tst_sd {:.6}", result.tst_sd)?;
            writeln!(out, "mode {mode}")?;
            writeln!(out, "routes {}", result.routes_used.len())?;
            for route in &result.routes_used.routes {
                let hops: Vec<String> = route.iter().map(ToString::to_string).collect();
                writeln!(out, "  {}", hops.join(" -> "))?;
            }
            writeln!(out, "messages {}", result.messages_sent)?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            format,
        } => {
            let cfg = scenario.load()?;
            let report = driver::run(&cfg, &out)?;
            let mut stdout = io::stdout().lock();
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut stdout, &report)?;
                    writeln!(stdout)?;
                }
                Format::Csv => write_metrics_csv(&mut stdout, &report.queries)?,
                Format::Text => {
                    writeln!(
                        stdout,
                        "{} steps, {} queries, {} messages; outputs in {}",
                        report.steps,
                        report.queries.len(),
                        report.bsm_net.sent + report.protocol_net.sent,
                        out.display()
                    )?;
                }
            }
        }
        Command::TrustQuery {
            scenario,
            source,
            target,
            at,
            format,
        } => {
            let cfg = scenario.load()?;
            let result = trust_query(
                &cfg,
                &VehicleRef::from(source.as_str()),
                &VehicleRef::from(target.as_str()),
                at,
            )?;
            print_query(&result, format)?;
        }
        Command::Bench {
            kind,
            key_bits,
            samples,
            sizes,
            degree,
            seed,
            format,
            out,
        } => {
            let mut w = output(out.as_deref())?;
            match kind {
                BenchKind::Crypto => {
                    let rows = crypto_bench(&key_bits, samples, seed)?;
                    match format {
                        Format::Json => serde_json::to_writer_pretty(&mut w, &rows)?,
                        _ => write_csv(&mut w, &rows)?,
                    }
                }
                BenchKind::Dijkstra => {
                    let rows = dijkstra_bench(&sizes, degree, seed, 12.0);
                    match format {
                        Format::Json => serde_json::to_writer_pretty(&mut w, &rows)?,
                        _ => write_csv(&mut w, &rows)?,
                    }
                }
            }
            w.flush()?;
        }
        Command::Export {
            snapshots,
            table,
            format,
            out,
        } => {
            let input = BufReader::new(
                File::open(&snapshots)
                    .with_context(|| format!("opening {}", snapshots.display()))?,
            );
            let table = match table {
                Table::Edges => ExportTable::Edges,
                Table::Nodes => ExportTable::Nodes,
            };
            let format = match format {
                Format::Json => ExportFormat::Json,
                _ => ExportFormat::Csv,
            };
            let mut w = output(out.as_deref())?;
            export(input, &mut w, table, format)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// 2 for configuration problems, 3 for protocol failures, 4 when no trusted
/// route exists, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ScenarioError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<DriverError>() {
        Some(DriverError::Config(_)) => 2,
        Some(DriverError::QueryTime { .. }) => 2,
        Some(DriverError::Protocol(ProtocolError::Unreachable { .. })) => 4,
        Some(DriverError::Protocol(_) | DriverError::Seg(_) | DriverError::Crypto(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SEGTRUST_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            if code == 4 {
                eprintln!("no trusted route: {err}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code)
        }
    }
}
