//! Discovery log: one JSON object per successful route discovery.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::route::{FullRoute, NodeId, Rid, SrtEntry};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub schema_version: u32,
    pub draw_index: u64,
    pub time: f64,
    pub initiator: NodeId,
    pub target: NodeId,
    pub request_id: u64,
    pub reply_sender: NodeId,
    pub full_route: FullRoute,
    /// Nodes that stored the entry in their SRT.
    pub recorders: Vec<NodeId>,
    pub knowers: BTreeSet<NodeId>,
}

impl DiscoveryRecord {
    pub fn rid(&self) -> Rid {
        Rid {
            source: self.initiator,
            destination: self.target,
            request_id: self.request_id,
            reply_sender: self.reply_sender,
        }
    }

    pub fn partial_route(&self) -> &[NodeId] {
        let end = self
            .full_route
            .position(self.reply_sender)
            .expect("reply sender lies on the route");
        &self.full_route.nodes()[..=end]
    }

    fn check(&self) -> Result<(), String> {
        if self.schema_version != LOG_SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.full_route.initiator() != self.initiator
            || self.full_route.destination() != self.target
        {
            return Err("full_route endpoints do not match initiator/target".into());
        }
        if !self.full_route.contains(self.reply_sender) {
            return Err("reply_sender is not on full_route".into());
        }
        let partial = self.partial_route();
        if let Some(r) = self.recorders.iter().find(|r| !partial.contains(r)) {
            return Err(format!("recorder {r} is not on the partial route"));
        }
        Ok(())
    }
}

pub fn write_log<W: Write>(out: &mut W, records: &[DiscoveryRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a JSONL log; errors name the 1-based line.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<DiscoveryRecord>, ExperimentError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ExperimentError::Log {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DiscoveryRecord =
            serde_json::from_str(&line).map_err(|e| ExperimentError::Log {
                line: i + 1,
                msg: e.to_string(),
            })?;
        rec.check().map_err(|msg| ExperimentError::Log { line: i + 1, msg })?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(ExperimentError::EmptyLog);
    }
    Ok(out)
}

/// Per-node SRTs rebuilt from the log, in log order.
pub fn srts_from_log(records: &[DiscoveryRecord], n_nodes: usize) -> Vec<Vec<SrtEntry>> {
    let mut srts: Vec<Vec<SrtEntry>> = vec![Vec::new(); n_nodes];
    for r in records {
        let entry = SrtEntry::new(r.rid(), r.partial_route().to_vec(), r.full_route.clone());
        for rec in &r.recorders {
            if rec.index() < n_nodes {
                srts[rec.index()].push(entry.clone());
            }
        }
    }
    srts
}
