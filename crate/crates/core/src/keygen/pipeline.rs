//! One Alice/Bob session end to end, plus network-wide bit accounting.

use std::collections::BTreeMap;

use super::extract::{extract, output_len, Secret};
use super::matrix::{build_selection_matrix, naive_partition, xor_combine, Partition};
use super::reconcile::{reconcile, DigestMode, ReconciliationSession};
use super::KeygenError;
use crate::bits::BitString;
use crate::rng::{stream_rng, Stream};
use crate::route::{FullRoute, NodeId, Rid, RouteSpace, SrtEntry};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairConfig {
    pub space: RouteSpace,
    pub radio_range: f64,
    pub s_total: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Seeds are at least this long, and always long enough for the hash.
    pub min_seed_len: usize,
    /// Shorter shared routes are left out of the matrix.
    pub min_route_len: usize,
    /// Entropy bound handed to the extractor.
    pub extract_k: f64,
    /// Bits credited per subset in the accounting.
    pub bits_per_subset: f64,
    pub digest: DigestMode,
    pub seed: u64,
    /// Keeps seed streams apart across scenarios of one run.
    pub scenario: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOutcome {
    pub alice: NodeId,
    pub bob: NodeId,
    pub session: ReconciliationSession,
    /// Shared routes that made it into the matrix, with their RIDs.
    pub usable_routes: Vec<FullRoute>,
    pub usable_rids: Vec<Rid>,
    pub partition: Partition,
    pub secrets_alice: Vec<Secret>,
    pub secrets_bob: Vec<Secret>,
    pub bits_shared: f64,
}

impl PairOutcome {
    pub fn n_subsets(&self) -> usize {
        self.partition.subsets.len()
    }

    pub fn agreed(&self) -> bool {
        self.session.agreed() && self.secrets_alice == self.secrets_bob
    }

    /// Full routes of subset `k`.
    pub fn subset_routes(&self, k: usize) -> Vec<&FullRoute> {
        self.partition.subsets[k]
            .rows
            .iter()
            .map(|&i| &self.usable_routes[i])
            .collect()
    }
}

fn keeps(route: &FullRoute, cfg: &PairConfig) -> bool {
    route.len() >= cfg.min_route_len && route.len() <= cfg.space.max_full_len()
}

/// What one side computes from its own view of the shared list.
fn side(
    shared: &[FullRoute],
    alice: NodeId,
    bob: NodeId,
    cfg: &PairConfig,
) -> Result<(Vec<FullRoute>, Partition), KeygenError> {
    let routes: Vec<FullRoute> = shared.iter().filter(|r| keeps(r, cfg)).cloned().collect();
    if routes.is_empty() {
        return Ok((routes, Partition::default()));
    }
    let m = build_selection_matrix(
        &routes,
        alice,
        bob,
        cfg.space.n_nodes(),
        cfg.radio_range,
        cfg.s_total,
    )?;
    let partition = naive_partition(&m, cfg.eps1);
    Ok((routes, partition))
}

fn secrets(
    routes: &[FullRoute],
    partition: &Partition,
    seeds: &[BitString],
    alice: NodeId,
    bob: NodeId,
    cfg: &PairConfig,
) -> Result<Vec<Secret>, KeygenError> {
    partition
        .subsets
        .iter()
        .zip(seeds)
        .map(|(s, seed)| {
            let members: Vec<&FullRoute> = s.rows.iter().map(|&i| &routes[i]).collect();
            let x = xor_combine(&members, &cfg.space, alice, bob)?;
            extract(&x, cfg.extract_k, cfg.eps2, seed)
        })
        .collect()
}

fn seed_stream_index(alice: NodeId, bob: NodeId, scenario: u64) -> u64 {
    (scenario << 48) ^ ((alice.0 as u64) << 24) ^ bob.0 as u64
}

pub fn pair_pipeline(
    alice_srt: &[SrtEntry],
    bob_srt: &[SrtEntry],
    alice: NodeId,
    bob: NodeId,
    cfg: &PairConfig,
) -> Result<PairOutcome, KeygenError> {
    let mut session = reconcile(alice_srt, bob_srt, alice, bob, cfg.digest)?;

    // Bob partitions first so his response can carry the seeds.
    let (bob_routes, bob_partition) = side(&session.shared_bob, alice, bob, cfg)?;
    let width = cfg.space.bit_width();
    let seeds: Vec<BitString> = match output_len(cfg.extract_k, cfg.eps2) {
        Ok(s) => {
            let len = cfg.min_seed_len.max(width + s - 1);
            let mut rng = stream_rng(
                cfg.seed,
                Stream::ExtractorSeed,
                seed_stream_index(alice, bob, cfg.scenario),
            );
            (0..bob_partition.subsets.len())
                .map(|_| BitString::random(len, &mut rng))
                .collect()
        }
        Err(KeygenError::EntropyBudget { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    session.response.seeds = seeds.clone();
    let secrets_bob = secrets(&bob_routes, &bob_partition, &seeds, alice, bob, cfg)?;

    let (alice_routes, alice_partition) = side(&session.shared_alice, alice, bob, cfg)?;
    let secrets_alice = secrets(
        &alice_routes,
        &alice_partition,
        &session.response.seeds,
        alice,
        bob,
        cfg,
    )?;
    if alice_partition != bob_partition {
        log::error!("pair ({alice}, {bob}): partitions differ");
    }

    let usable_rids = session
        .shared_rids
        .iter()
        .zip(&session.shared_alice)
        .filter(|(_, r)| keeps(r, cfg))
        .map(|(rid, _)| *rid)
        .collect();
    let bits_shared = alice_partition.subsets.len() as f64 * cfg.bits_per_subset;
    Ok(PairOutcome {
        alice,
        bob,
        session,
        usable_routes: alice_routes,
        usable_rids,
        partition: alice_partition,
        secrets_alice,
        secrets_bob,
        bits_shared,
    })
}

/// Network-wide shared bits: `h_min` times the total subset count, given a
/// histogram of subsets-per-pair to number of pairs.
pub fn b_total(h_min: f64, histogram: &BTreeMap<usize, u64>) -> f64 {
    let subsets: u64 = histogram.iter().map(|(&k, &n)| k as u64 * n).sum();
    h_min * subsets as f64
}
