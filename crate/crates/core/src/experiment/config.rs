//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! nodes = 50
//! area_side = 100
//! range = 12
//! mode = snapshot            # or waypoint
//! speed_min = 0.5
//! speed_max = 1.0
//! duration = 600             # seconds
//! destinations_per_node = 4
//! mean_interarrival = 1.0    # seconds
//! max_route_len = 15
//! eps1 = 1e-3, 1e-4          # one scenario per value
//! eps2 = 0.125
//! eps3 = 1e-4
//! seed_len = 128
//! spoil_min_len = 4
//! spoil_accounting = unconditioned
//! pair_threshold = 2
//! digest = hashed:64         # or idealized
//! seed = 1
//! out = out
//! dump_snapshots = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::adversary::SpoilAccounting;
use crate::keygen::{DigestMode, SecurityParams};
use crate::netsim::{NetworkParams, PlacementMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: NetworkParams,
    /// `eps1` here is the first entry of `eps1_values`.
    pub security: SecurityParams,
    pub eps1_values: Vec<f64>,
    pub destinations_per_node: usize,
    pub mean_interarrival: f64,
    pub duration: f64,
    pub max_route_len: usize,
    pub spoil_min_len: usize,
    pub spoil_accounting: SpoilAccounting,
    /// Pairs need at least this many entries naming the peer.
    pub pair_threshold: usize,
    pub digest: DigestMode,
    pub out_dir: PathBuf,
    pub dump_snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NetworkParams::default(),
            security: SecurityParams::default(),
            eps1_values: vec![1e-3, 1e-4],
            destinations_per_node: 4,
            mean_interarrival: 1.0,
            duration: 600.0,
            max_route_len: 15,
            spoil_min_len: 4,
            spoil_accounting: SpoilAccounting::Unconditioned,
            pair_threshold: 2,
            digest: DigestMode::default(),
            out_dir: PathBuf::from("out"),
            dump_snapshots: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

pub fn parse_digest(value: &str) -> Result<DigestMode, String> {
    if value == "idealized" {
        return Ok(DigestMode::Idealized);
    }
    match value.split_once(':') {
        Some(("hashed", bits)) => Ok(DigestMode::Hashed {
            bits: parse_num("digest", bits)?,
        }),
        None if value == "hashed" => Ok(DigestMode::default()),
        _ => Err(format!("digest: expected hashed[:bits] or idealized, got {value:?}")),
    }
}

pub fn parse_eps_list(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| parse_num::<f64>("eps1", v.trim()))
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key.trim() {
            "nodes" => self.network.n_nodes = parse_num(key, value)?,
            "area_side" => self.network.area_side = parse_num(key, value)?,
            "range" => self.network.radio_range = parse_num(key, value)?,
            "mode" => self.network.placement = value.parse::<PlacementMode>()?,
            "speed_min" => self.network.speed_range.0 = parse_num(key, value)?,
            "speed_max" => self.network.speed_range.1 = parse_num(key, value)?,
            "seed" => self.network.seed = parse_num(key, value)?,
            "duration" => self.duration = parse_num(key, value)?,
            "destinations_per_node" => self.destinations_per_node = parse_num(key, value)?,
            "mean_interarrival" => self.mean_interarrival = parse_num(key, value)?,
            "max_route_len" => self.max_route_len = parse_num(key, value)?,
            "eps1" => {
                self.eps1_values = parse_eps_list(value)?;
                if let Some(&first) = self.eps1_values.first() {
                    self.security.eps1 = first;
                }
            }
            "eps2" => self.security.eps2 = parse_num(key, value)?,
            "eps3" => self.security.eps3 = parse_num(key, value)?,
            "seed_len" => self.security.seed_len = parse_num(key, value)?,
            "spoil_min_len" => self.spoil_min_len = parse_num(key, value)?,
            "spoil_accounting" => self.spoil_accounting = value.parse()?,
            "pair_threshold" => self.pair_threshold = parse_num(key, value)?,
            "digest" => self.digest = parse_digest(value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "dump_snapshots" => self.dump_snapshots = parse_num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ExperimentError::Config {
                line: Some(i + 1),
                msg: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k, v).map_err(|msg| ExperimentError::Config {
                line: Some(i + 1),
                msg,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| ExperimentError::Config { line: None, msg };
        self.network.validate().map_err(|e| bad(e.to_string()))?;
        self.security.validate().map_err(|e| bad(e.to_string()))?;
        if self.eps1_values.is_empty() {
            return Err(bad("eps1 needs at least one value".into()));
        }
        for &e in &self.eps1_values {
            if !(e > 0.0 && e < 1.0) {
                return Err(bad(format!("eps1 = {e} not in (0, 1)")));
            }
        }
        if !(self.duration >= 0.0) {
            return Err(bad(format!("duration = {} is negative", self.duration)));
        }
        if !(self.mean_interarrival > 0.0) {
            return Err(bad("mean_interarrival must be positive".into()));
        }
        if self.destinations_per_node == 0 || self.destinations_per_node >= self.network.n_nodes {
            return Err(bad(format!(
                "destinations_per_node = {} must be in [1, {}]",
                self.destinations_per_node,
                self.network.n_nodes - 1
            )));
        }
        if self.max_route_len < 3 {
            return Err(bad("max_route_len must be at least 3".into()));
        }
        if self.spoil_min_len < 3 || self.spoil_min_len > self.max_route_len {
            return Err(bad(format!(
                "spoil_min_len = {} must be in [3, {}]",
                self.spoil_min_len, self.max_route_len
            )));
        }
        if self.pair_threshold == 0 {
            return Err(bad("pair_threshold must be at least 1".into()));
        }
        if let DigestMode::Hashed { bits } = self.digest {
            if bits == 0 || bits % 8 != 0 || bits > 256 {
                return Err(bad(format!("digest width {bits} must be a multiple of 8 in [8, 256]")));
            }
        }
        Ok(())
    }

    /// Security parameters for one scenario.
    pub fn security_for(&self, eps1: f64) -> SecurityParams {
        SecurityParams {
            eps1,
            ..self.security
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.network.n_nodes, 50);
        assert_eq!(c.network.area_side, 100.0);
        assert_eq!(c.network.radio_range, 12.0);
        assert_eq!(c.duration, 600.0);
        assert_eq!(c.destinations_per_node, 4);
        assert_eq!(c.mean_interarrival, 1.0);
        assert_eq!(c.network.speed_range, (0.5, 1.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn parse_file() {
        let c = RunConfig::parse(
            "# test\nnodes = 20\nmode = waypoint # trailing\neps1 = 1e-2, 1e-3\ndigest = idealized\n\n",
        )
        .unwrap();
        assert_eq!(c.network.n_nodes, 20);
        assert_eq!(c.network.placement, PlacementMode::Waypoint);
        assert_eq!(c.eps1_values, vec![1e-2, 1e-3]);
        assert_eq!(c.security.eps1, 1e-2);
        assert_eq!(c.digest, DigestMode::Idealized);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match RunConfig::parse("nodes = 20\nbogus = 1\n") {
            Err(ExperimentError::Config { line: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
        match RunConfig::parse("nodes = x\n") {
            Err(ExperimentError::Config { line: Some(1), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("nodes = 2\n").is_err());
        assert!(RunConfig::parse("spoil_min_len = 2\n").is_err());
        assert!(RunConfig::parse("digest = hashed:12\n").is_err());
    }

    #[test]
    fn digest_values() {
        assert_eq!(parse_digest("hashed:128").unwrap(), DigestMode::Hashed { bits: 128 });
        assert_eq!(parse_digest("hashed").unwrap(), DigestMode::Hashed { bits: 64 });
        assert!(parse_digest("md5").is_err());
    }
}
