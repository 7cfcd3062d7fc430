//! From a discovery log to priors, entropies, partitions and bit counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DiscoveryRecord, ExperimentError, RunConfig};
use crate::adversary::{AdversaryError, LengthPrior, RoutePosterior, SpoilAccounting};
use crate::bits::BitString;
use crate::keygen::{b_total, output_len, pair_pipeline, PairConfig, ReconOffer, ReconResponse};
use crate::netsim::PlacementMode;
use crate::route::{NodeId, Rid, RouteSpace, SrtEntry};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCounts {
    /// Send events in the workload.
    pub events: u64,
    /// Route discoveries started (events minus cache hits).
    pub discoveries: u64,
    pub succeeded: u64,
    /// Discoveries with no path in the topology.
    pub failed: u64,
    /// Sends served from a still-valid cached route.
    pub skipped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub length: usize,
    pub count: u64,
    pub prior: f64,
    pub posterior: f64,
    pub route_prob: f64,
    pub class_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub index: usize,
    pub eps1: f64,
    /// `None` when every route of length 3 or more is used.
    pub spoil_min_len: Option<usize>,
    /// Bits credited per subset.
    pub h_min: f64,
    /// Entropy bound handed to the extractor.
    pub extract_k: f64,
    /// Extracted secret length per subset; 0 when the budget is too small.
    pub secret_len: usize,
    pub pairs_examined: usize,
    pub pairs_with_subsets: usize,
    pub total_subsets: u64,
    /// Subsets per pair to number of pairs, for pairs with at least one.
    pub subset_histogram: BTreeMap<usize, u64>,
    pub b_total: f64,
    /// Subsets whose routes were all known to one other node.
    pub compromised_subsets: u64,
    pub compromised_fraction: f64,
    /// `eps1` plus three binomial standard deviations.
    pub compromise_bound: f64,
    pub agreed_subsets: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub scenario: usize,
    pub alice: NodeId,
    pub bob: NodeId,
    pub shared_routes: usize,
    pub usable_routes: usize,
    pub subsets: usize,
    pub remainder: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub eps1: f64,
    pub b_total: f64,
    pub b_total_spoiled: f64,
    pub gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub n_nodes: usize,
    pub area_side: f64,
    pub radio_range: f64,
    pub mode: PlacementMode,
    pub duration: f64,
    pub seed: u64,
    pub max_route_len: usize,
    pub eps2: f64,
    pub eps3: f64,
    pub spoil_min_len: usize,
    pub spoil_accounting: SpoilAccounting,
    /// Absent when the summary came from a log rather than a simulation.
    pub simulation: Option<SimCounts>,
    pub records: u64,
    pub candidate_pairs: usize,
    pub length_histogram: BTreeMap<usize, u64>,
    pub posterior: Vec<PosteriorRow>,
    pub h_min: Option<f64>,
    pub h_min_smooth: Option<f64>,
    /// Under the configured accounting.
    pub h_min_spoiled: Option<f64>,
    pub h_min_spoiled_unconditioned: Option<f64>,
    pub h_min_spoiled_conditioned: Option<f64>,
    pub scenarios: Vec<ScenarioSummary>,
    pub pairs: Vec<PairRow>,
    pub gains: Vec<GainRow>,
    /// Gain for the first `eps1` value.
    pub spoil_gain: Option<f64>,
    /// `B_total` of the first scenario.
    pub b_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub scenario: usize,
    pub alice: NodeId,
    pub bob: NodeId,
    pub subset_index: usize,
    pub size: usize,
    pub min_column_slack: f64,
    pub compromised: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecretRow {
    pub scenario: usize,
    pub alice: NodeId,
    pub bob: NodeId,
    pub subset_index: usize,
    pub seed: BitString,
    pub bits: BitString,
    pub length: usize,
    pub agreed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconLine {
    pub scenario: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offer: Option<ReconOffer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<ReconResponse>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub summary: RunSummary,
    pub subsets: Vec<SubsetRow>,
    pub secrets: Vec<SecretRow>,
    pub reconciliation: Vec<ReconLine>,
}

struct Entropies {
    posterior: RoutePosterior,
    h_min: f64,
    h_min_smooth: f64,
    extract_k: f64,
    spoiled: Option<(f64, f64)>,
    spoiled_unconditioned: Option<f64>,
    spoiled_conditioned: Option<f64>,
}

fn entropies(
    prior: &LengthPrior,
    space: RouteSpace,
    cfg: &RunConfig,
) -> Result<Entropies, ExperimentError> {
    let posterior = RoutePosterior::from_prior(
        space,
        prior,
        cfg.network.radio_range,
        cfg.network.s_total(),
    )?;
    let report = posterior.report(cfg.security.eps3)?;
    let spoiled_with = |acc| -> Result<Option<(f64, f64)>, ExperimentError> {
        match posterior.spoil(cfg.spoil_min_len, acc) {
            Ok(p) => {
                let r = p.report(cfg.security.eps3)?;
                Ok(Some((r.h_min, r.extractable())))
            }
            Err(AdversaryError::EmptySpoil(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    let unconditioned = spoiled_with(SpoilAccounting::Unconditioned)?;
    let conditioned = spoiled_with(SpoilAccounting::Conditioned)?;
    let spoiled = match cfg.spoil_accounting {
        SpoilAccounting::Unconditioned => unconditioned,
        SpoilAccounting::Conditioned => conditioned,
    };
    Ok(Entropies {
        h_min: report.h_min,
        h_min_smooth: report.h_min_smooth,
        extract_k: report.extractable(),
        posterior,
        spoiled,
        spoiled_unconditioned: unconditioned.map(|x| x.0),
        spoiled_conditioned: conditioned.map(|x| x.0),
    })
}

/// Unordered pairs `(a, b)`, `a < b`, where `a` holds at least `threshold`
/// entries whose partial route contains `b`.
fn candidate_pairs(srts: &[Vec<SrtEntry>], threshold: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (a, srt) in srts.iter().enumerate() {
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        for e in srt {
            for &n in &e.partial_route {
                if n.index() > a {
                    *counts.entry(n).or_default() += 1;
                }
            }
        }
        out.extend(
            counts
                .into_iter()
                .filter(|&(_, c)| c >= threshold)
                .map(|(b, _)| (NodeId(a as u32), b)),
        );
    }
    out
}

fn compromise_bound(eps1: f64, n: u64) -> f64 {
    if n == 0 {
        return eps1;
    }
    eps1 + 3.0 * (eps1 * (1.0 - eps1) / n as f64).sqrt()
}

/// Runs the full analysis over `records`. `sim` carries simulation counts
/// when the records came from a fresh run.
pub fn analyze(
    records: &[DiscoveryRecord],
    cfg: &RunConfig,
    sim: Option<SimCounts>,
) -> Result<Analysis, ExperimentError> {
    cfg.validate()?;
    if records.is_empty() && sim.is_none() {
        return Err(ExperimentError::EmptyLog);
    }
    let n = cfg.network.n_nodes;
    if let Some(bad) = records
        .iter()
        .flat_map(|r| r.full_route.nodes())
        .find(|node| node.index() >= n)
    {
        return Err(ExperimentError::Config {
            line: None,
            msg: format!("log mentions node {bad} but nodes = {n}"),
        });
    }
    let space = RouteSpace::new(n, cfg.max_route_len)
        .map_err(|e| ExperimentError::Config { line: None, msg: e.to_string() })?;

    let mut histogram: BTreeMap<usize, u64> = BTreeMap::new();
    for r in records {
        *histogram.entry(r.full_route.len()).or_default() += 1;
    }
    let usable_counts: BTreeMap<usize, u64> = histogram
        .iter()
        .filter(|(&l, _)| l <= space.max_full_len())
        .map(|(&l, &c)| (l, c))
        .collect();
    let ent = match LengthPrior::from_counts(&usable_counts) {
        Ok(prior) => Some((prior.clone(), entropies(&prior, space, cfg)?)),
        Err(AdversaryError::EmptyLog) => None,
        Err(e) => return Err(e.into()),
    };

    let posterior_rows = match &ent {
        Some((prior, e)) => e
            .posterior
            .classes()
            .iter()
            .map(|c| PosteriorRow {
                length: c.length,
                count: histogram.get(&c.length).copied().unwrap_or(0),
                prior: prior.get(c.length),
                posterior: c.length_prob,
                route_prob: c.route_prob,
                class_size: c.class_size,
            })
            .collect(),
        None => Vec::new(),
    };

    let srts = super::srts_from_log(records, n);
    let pairs = candidate_pairs(&srts, cfg.pair_threshold);
    let knowers: BTreeMap<Rid, &BTreeSet<NodeId>> =
        records.iter().map(|r| (r.rid(), &r.knowers)).collect();

    let mut scenarios = Vec::new();
    let mut pair_rows = Vec::new();
    let mut subset_rows = Vec::new();
    let mut secret_rows = Vec::new();
    let mut recon = Vec::new();

    for &eps1 in &cfg.eps1_values {
        for spoil in [None, Some(cfg.spoil_min_len)] {
            let index = scenarios.len();
            let budget = ent.as_ref().and_then(|(_, e)| match spoil {
                None => Some((e.h_min, e.extract_k)),
                Some(_) => e.spoiled,
            });
            let mut sc = ScenarioSummary {
                index,
                eps1,
                spoil_min_len: spoil,
                h_min: budget.map_or(0.0, |b| b.0),
                extract_k: budget.map_or(0.0, |b| b.1),
                secret_len: 0,
                pairs_examined: 0,
                pairs_with_subsets: 0,
                total_subsets: 0,
                subset_histogram: BTreeMap::new(),
                b_total: 0.0,
                compromised_subsets: 0,
                compromised_fraction: 0.0,
                compromise_bound: eps1,
                agreed_subsets: 0,
            };
            let Some((h_min, extract_k)) = budget else {
                scenarios.push(sc);
                continue;
            };
            sc.secret_len = output_len(extract_k, cfg.security.eps2).unwrap_or(0);
            let pc = PairConfig {
                space,
                radio_range: cfg.network.radio_range,
                s_total: cfg.network.s_total(),
                eps1,
                eps2: cfg.security.eps2,
                min_seed_len: cfg.security.seed_len,
                min_route_len: spoil.unwrap_or(crate::route::MIN_KEY_ROUTE_LEN),
                extract_k,
                bits_per_subset: h_min,
                digest: cfg.digest,
                seed: cfg.network.seed,
                scenario: index as u64,
            };
            for &(alice, bob) in &pairs {
                let out = pair_pipeline(
                    &srts[alice.index()],
                    &srts[bob.index()],
                    alice,
                    bob,
                    &pc,
                )?;
                sc.pairs_examined += 1;
                recon.push(ReconLine {
                    scenario: index,
                    offer: Some(out.session.offer.clone()),
                    response: None,
                });
                recon.push(ReconLine {
                    scenario: index,
                    offer: None,
                    response: Some(out.session.response.clone()),
                });
                let k = out.n_subsets();
                pair_rows.push(PairRow {
                    scenario: index,
                    alice,
                    bob,
                    shared_routes: out.session.shared_alice.len(),
                    usable_routes: out.usable_routes.len(),
                    subsets: k,
                    remainder: out.partition.remainder.len(),
                });
                if k == 0 {
                    continue;
                }
                sc.pairs_with_subsets += 1;
                sc.total_subsets += k as u64;
                *sc.subset_histogram.entry(k).or_default() += 1;
                for (si, subset) in out.partition.subsets.iter().enumerate() {
                    let mut common: Option<BTreeSet<NodeId>> = None;
                    for &row in &subset.rows {
                        let rid = out.usable_rids[row];
                        let known = knowers.get(&rid).copied().cloned().unwrap_or_default();
                        common = Some(match common {
                            None => known,
                            Some(c) => c.intersection(&known).copied().collect(),
                        });
                    }
                    let compromised = common
                        .unwrap_or_default()
                        .iter()
                        .any(|&v| v != alice && v != bob);
                    if compromised {
                        sc.compromised_subsets += 1;
                    }
                    let a = out.secrets_alice.get(si);
                    let b = out.secrets_bob.get(si);
                    let agreed = out.session.agreed() && a == b;
                    if agreed {
                        sc.agreed_subsets += 1;
                    }
                    subset_rows.push(SubsetRow {
                        scenario: index,
                        alice,
                        bob,
                        subset_index: si,
                        size: subset.size(),
                        min_column_slack: subset.min_column_slack(eps1),
                        compromised,
                    });
                    if let Some(s) = a {
                        secret_rows.push(SecretRow {
                            scenario: index,
                            alice,
                            bob,
                            subset_index: si,
                            seed: s.seed.clone(),
                            bits: s.bits.clone(),
                            length: s.len(),
                            agreed,
                        });
                    }
                }
            }
            sc.b_total = b_total(h_min, &sc.subset_histogram);
            if sc.total_subsets > 0 {
                sc.compromised_fraction = sc.compromised_subsets as f64 / sc.total_subsets as f64;
            }
            sc.compromise_bound = compromise_bound(eps1, sc.total_subsets);
            scenarios.push(sc);
        }
    }

    let gains: Vec<GainRow> = scenarios
        .chunks(2)
        .map(|pair| {
            let (plain, spoiled) = (&pair[0], &pair[1]);
            GainRow {
                eps1: plain.eps1,
                b_total: plain.b_total,
                b_total_spoiled: spoiled.b_total,
                gain: (plain.b_total > 0.0).then(|| spoiled.b_total / plain.b_total - 1.0),
            }
        })
        .collect();

    let e = ent.as_ref().map(|(_, e)| e);
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        n_nodes: n,
        area_side: cfg.network.area_side,
        radio_range: cfg.network.radio_range,
        mode: cfg.network.placement,
        duration: cfg.duration,
        seed: cfg.network.seed,
        max_route_len: cfg.max_route_len,
        eps2: cfg.security.eps2,
        eps3: cfg.security.eps3,
        spoil_min_len: cfg.spoil_min_len,
        spoil_accounting: cfg.spoil_accounting,
        simulation: sim,
        records: records.len() as u64,
        candidate_pairs: pairs.len(),
        length_histogram: histogram,
        posterior: posterior_rows,
        h_min: e.map(|e| e.h_min),
        h_min_smooth: e.map(|e| e.h_min_smooth),
        h_min_spoiled: e.and_then(|e| e.spoiled.map(|s| s.0)),
        h_min_spoiled_unconditioned: e.and_then(|e| e.spoiled_unconditioned),
        h_min_spoiled_conditioned: e.and_then(|e| e.spoiled_conditioned),
        spoil_gain: gains.first().and_then(|g| g.gain),
        b_total: scenarios.first().map_or(0.0, |s| s.b_total),
        scenarios,
        pairs: pair_rows,
        gains,
    };
    Ok(Analysis {
        summary,
        subsets: subset_rows,
        secrets: secret_rows,
        reconciliation: recon,
    })
}
