//! Experiment runner: workload, simulation, analysis and table output.

mod analyze;
mod config;
mod records;
mod tables;
mod workload;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::dsr::{DiscoveryError, DsrConfig, DsrEngine};
use crate::keygen::KeygenError;
use crate::netsim::{MobilityState, PlacementMode, Snapshot};

pub use analyze::{
    analyze, Analysis, GainRow, PairRow, PosteriorRow, RunSummary, ScenarioSummary, SecretRow,
    SimCounts, SubsetRow, SUMMARY_SCHEMA_VERSION,
};
pub use config::{parse_digest, parse_eps_list, RunConfig};
pub use records::{read_log, srts_from_log, write_log, DiscoveryRecord, LOG_SCHEMA_VERSION};
pub use tables::{emit_artifacts, emit_tables, read_summary, sci};
pub use workload::{draw_destinations, generate_workload, TrafficEvent};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config{}: {msg}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("log line {line}: {msg}")]
    Log { line: usize, msg: String },
    #[error("discovery log is empty")]
    EmptyLog,
    #[error("summary: {0}")]
    Summary(String),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Keygen(#[from] KeygenError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl ExperimentError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 1 config, 2 I/O or bad input, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 1,
            Self::Io { .. } | Self::Log { .. } | Self::EmptyLog | Self::Summary(_) => 2,
            Self::Adversary(_) | Self::Keygen(_) | Self::Invariant(_) => 3,
        }
    }
}

pub struct Simulation {
    pub records: Vec<DiscoveryRecord>,
    pub counts: SimCounts,
    pub engine: DsrEngine,
}

/// Runs the workload. In snapshot mode every send event gets a fresh
/// placement; in waypoint mode nodes move continuously between events.
/// A send whose initiator holds a route valid in the current topology is
/// skipped. Snapshot rows go to `snapshots` when given.
pub fn simulate(
    cfg: &RunConfig,
    mut snapshots: Option<&mut dyn Write>,
) -> Result<Simulation, ExperimentError> {
    cfg.validate()?;
    let params = &cfg.network;
    let events = generate_workload(cfg);
    let mut engine = DsrEngine::new(
        params.n_nodes,
        DsrConfig {
            radio_range: params.radio_range,
            max_route_len: cfg.max_route_len,
            ..Default::default()
        },
    );
    let mut mobility = match params.placement {
        PlacementMode::Waypoint => Some(MobilityState::new(params)),
        PlacementMode::Snapshot => None,
    };
    let mut clock = 0.0;
    let mut counts = SimCounts {
        events: events.len() as u64,
        ..Default::default()
    };
    let mut records = Vec::new();
    if let Some(out) = snapshots.as_mut() {
        writeln!(out, "node_id,x,y,draw_index").map_err(|e| ExperimentError::io(Path::new("snapshots"), e))?;
    }

    for (draw_index, ev) in events.iter().enumerate() {
        let draw_index = draw_index as u64;
        let snap = match mobility.as_mut() {
            Some(m) => {
                m.step(ev.time - clock);
                clock = ev.time;
                m.snapshot()
            }
            None => Snapshot::draw(params, draw_index),
        };
        if engine.has_usable_route(&snap, ev.initiator, ev.target) {
            counts.skipped += 1;
            continue;
        }
        if let Some(out) = snapshots.as_mut() {
            snap.write_csv(out, draw_index)
                .map_err(|e| ExperimentError::io(Path::new("snapshots"), e))?;
        }
        counts.discoveries += 1;
        match engine.run_discovery(&snap, ev.initiator, ev.target, ev.time) {
            Ok(o) => {
                counts.succeeded += 1;
                records.push(DiscoveryRecord {
                    schema_version: LOG_SCHEMA_VERSION,
                    draw_index,
                    time: ev.time,
                    initiator: ev.initiator,
                    target: ev.target,
                    request_id: o.rid.request_id,
                    reply_sender: o.rid.reply_sender,
                    full_route: o.full_route,
                    recorders: o.recorders,
                    knowers: o.knowers,
                });
            }
            Err(DiscoveryError::NoPath { .. }) => counts.failed += 1,
            Err(e) => return Err(ExperimentError::Invariant(e.to_string())),
        }
    }
    log::info!(
        "{} events, {} discoveries ({} ok, {} no path), {} skipped on cache hits",
        counts.events,
        counts.discoveries,
        counts.succeeded,
        counts.failed,
        counts.skipped
    );
    Ok(Simulation {
        records,
        counts,
        engine,
    })
}

/// Simulation, analysis and every artifact under `cfg.out_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<Analysis, ExperimentError> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let sim = if cfg.dump_snapshots {
        let path = dir.join("snapshots.csv");
        let file = std::fs::File::create(&path).map_err(|e| ExperimentError::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let sim = simulate(cfg, Some(&mut w))?;
        w.flush().map_err(|e| ExperimentError::io(&path, e))?;
        sim
    } else {
        simulate(cfg, None)?
    };
    let path = dir.join("discoveries.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| ExperimentError::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_log(&mut w, &sim.records)
        .and_then(|_| w.flush())
        .map_err(|e| ExperimentError::io(&path, e))?;

    let analysis = analyze(&sim.records, cfg, Some(sim.counts))?;
    emit_artifacts(&analysis, dir)?;
    Ok(analysis)
}
