//! RID-digest reconciliation.
//!
//! Alice offers digests of the SRT entries whose partial route contains Bob.
//! Bob answers with the digests he cannot find among his entries whose
//! partial route contains Alice. The shared list is Alice's offer minus the
//! missing digests, in Alice's SRT order.
//!
//! Digests are truncated SHA-256 of the canonical RID bytes. If two of Bob's
//! candidates collide at the offered width he asks Alice to double it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KeygenError;
use crate::route::{FullRoute, NodeId, Rid, SrtEntry};

pub const DEFAULT_DIGEST_BITS: usize = 64;
pub const MAX_DIGEST_BITS: usize = 256;
pub const MESSAGE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestMode {
    /// Truncated hash of the RID, starting at this many bits.
    Hashed { bits: usize },
    /// Nothing about the RID leaks; modelled by exchanging it verbatim.
    Idealized,
}

impl Default for DigestMode {
    fn default() -> Self {
        DigestMode::Hashed {
            bits: DEFAULT_DIGEST_BITS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RidDigest(Vec<u8>);

impl RidDigest {
    pub fn hashed(rid: &Rid, bits: usize) -> Result<Self, KeygenError> {
        if bits == 0 || bits % 8 != 0 || bits > MAX_DIGEST_BITS {
            return Err(KeygenError::BadDigestWidth(bits));
        }
        let full = Sha256::digest(rid.to_bytes());
        Ok(Self(full[..bits / 8].to_vec()))
    }

    pub fn plain(rid: &Rid) -> Self {
        Self(rid.to_bytes().to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl Serialize for RidDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for RidDigest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(RidDigest).map_err(serde::de::Error::custom)
    }
}

fn digest_of(rid: &Rid, mode: DigestMode, bits: usize) -> Result<RidDigest, KeygenError> {
    match mode {
        DigestMode::Hashed { .. } => RidDigest::hashed(rid, bits),
        DigestMode::Idealized => Ok(RidDigest::plain(rid)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconOffer {
    pub schema_version: u32,
    pub alice: NodeId,
    pub bob: NodeId,
    pub digest_bits: usize,
    pub digests: Vec<RidDigest>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconResponse {
    pub schema_version: u32,
    pub alice: NodeId,
    pub bob: NodeId,
    pub missing_digests: Vec<RidDigest>,
    /// Set when Bob's candidates collide and Alice must re-offer wider digests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalate_to: Option<usize>,
    /// Public extractor seeds, one per subset, MSB-first bit strings.
    #[serde(default)]
    pub seeds: Vec<crate::bits::BitString>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconciliationSession {
    pub alice: NodeId,
    pub bob: NodeId,
    pub offer: ReconOffer,
    pub response: ReconResponse,
    /// Number of offer/response round trips, including escalations.
    pub rounds: usize,
    /// RIDs of the shared entries, in Alice's SRT order.
    pub shared_rids: Vec<Rid>,
    /// Alice's view of the shared routes.
    pub shared_alice: Vec<FullRoute>,
    /// Bob's view, in the same order.
    pub shared_bob: Vec<FullRoute>,
    /// Offers dropped because of unresolvable digest collisions.
    pub dropped: usize,
}

impl ReconciliationSession {
    pub fn agreed(&self) -> bool {
        self.shared_alice == self.shared_bob
    }
}

fn relevant<'a>(srt: &'a [SrtEntry], other: NodeId) -> Vec<&'a SrtEntry> {
    srt.iter()
        .filter(|e| e.partial_route.contains(&other))
        .collect()
}

/// Digest table with colliding digests removed; the second value counts the
/// removed entries.
fn index_entries<'a>(
    entries: &[&'a SrtEntry],
    mode: DigestMode,
    bits: usize,
) -> Result<(Vec<(RidDigest, &'a SrtEntry)>, usize), KeygenError> {
    let mut counts: HashMap<RidDigest, usize> = HashMap::new();
    let mut all = Vec::with_capacity(entries.len());
    for &e in entries {
        let d = digest_of(&e.rid, mode, bits)?;
        *counts.entry(d.clone()).or_default() += 1;
        all.push((d, e));
    }
    let before = all.len();
    all.retain(|(d, _)| counts[d] == 1);
    Ok((all.clone(), before - all.len()))
}

pub fn reconcile(
    alice_srt: &[SrtEntry],
    bob_srt: &[SrtEntry],
    alice: NodeId,
    bob: NodeId,
    mode: DigestMode,
) -> Result<ReconciliationSession, KeygenError> {
    let alice_entries = relevant(alice_srt, bob);
    let bob_entries = relevant(bob_srt, alice);
    let mut bits = match mode {
        DigestMode::Hashed { bits } => bits,
        DigestMode::Idealized => 160,
    };
    let mut rounds = 0;
    loop {
        rounds += 1;
        let at_max = matches!(mode, DigestMode::Idealized) || bits >= MAX_DIGEST_BITS;

        // Alice widens her own digests first if they collide.
        let (offered, alice_dropped) = index_entries(&alice_entries, mode, bits)?;
        if alice_dropped > 0 && !at_max {
            bits = (bits * 2).min(MAX_DIGEST_BITS);
            continue;
        }
        let offer = ReconOffer {
            schema_version: MESSAGE_SCHEMA_VERSION,
            alice,
            bob,
            digest_bits: bits,
            digests: offered.iter().map(|(d, _)| d.clone()).collect(),
        };

        let (candidates, bob_dropped) = index_entries(&bob_entries, mode, bits)?;
        if bob_dropped > 0 && !at_max {
            let response = ReconResponse {
                schema_version: MESSAGE_SCHEMA_VERSION,
                alice,
                bob,
                missing_digests: Vec::new(),
                escalate_to: Some((bits * 2).min(MAX_DIGEST_BITS)),
                seeds: Vec::new(),
            };
            bits = response.escalate_to.expect("just set");
            continue;
        }
        if alice_dropped + bob_dropped > 0 {
            log::warn!(
                "pair ({alice}, {bob}): dropped {} entries on digest collisions at {bits} bits",
                alice_dropped + bob_dropped
            );
        }

        let lookup: HashMap<&RidDigest, &SrtEntry> =
            candidates.iter().map(|(d, e)| (d, *e)).collect();
        let mut missing = Vec::new();
        let mut shared_bob = Vec::new();
        for d in &offer.digests {
            match lookup.get(d) {
                Some(e) => shared_bob.push(e.full_route.clone()),
                None => missing.push(d.clone()),
            }
        }
        let response = ReconResponse {
            schema_version: MESSAGE_SCHEMA_VERSION,
            alice,
            bob,
            missing_digests: missing,
            escalate_to: None,
            seeds: Vec::new(),
        };

        let missing_set: std::collections::HashSet<&RidDigest> =
            response.missing_digests.iter().collect();
        let (shared_rids, shared_alice) = offered
            .iter()
            .filter(|(d, _)| !missing_set.contains(d))
            .map(|(_, e)| (e.rid, e.full_route.clone()))
            .unzip();

        return Ok(ReconciliationSession {
            alice,
            bob,
            offer,
            response,
            rounds,
            shared_rids,
            shared_alice,
            shared_bob,
            dropped: alice_dropped + bob_dropped,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(src: u32, dst: u32, req: u64, route: &[u32], sender: u32) -> SrtEntry {
        let full = FullRoute::from_ids(route).unwrap();
        let end = full.position(NodeId(sender)).unwrap();
        SrtEntry::new(
            Rid {
                source: NodeId(src),
                destination: NodeId(dst),
                request_id: req,
                reply_sender: NodeId(sender),
            },
            full.nodes()[..=end].to_vec(),
            full,
        )
    }

    #[test]
    fn set_intersection_semantics() {
        // Alice = 1, Bob = 2; all routes pass through both.
        let r1 = entry(1, 9, 1, &[1, 2, 9], 9);
        let r2 = entry(1, 8, 1, &[1, 3, 2, 8], 8);
        let r3 = entry(5, 2, 4, &[5, 1, 2], 2);
        let r4 = entry(2, 7, 2, &[2, 4, 1, 7], 7);
        let alice = vec![r1.clone(), r2.clone(), r3.clone()];
        let bob = vec![r2.clone(), r3.clone(), r4];
        let s = reconcile(&alice, &bob, NodeId(1), NodeId(2), DigestMode::default()).unwrap();
        assert_eq!(s.shared_alice, vec![r2.full_route.clone(), r3.full_route.clone()]);
        assert!(s.agreed());
        assert_eq!(
            s.response.missing_digests,
            vec![RidDigest::hashed(&r1.rid, 64).unwrap()]
        );
        assert_eq!(s.offer.digests.len(), 3);
        assert_eq!(s.rounds, 1);
    }

    #[test]
    fn only_entries_naming_the_peer_are_offered() {
        let with_bob = entry(1, 9, 1, &[1, 2, 9], 9);
        let without = entry(1, 9, 2, &[1, 3, 9], 9);
        let s = reconcile(
            &[with_bob, without],
            &[],
            NodeId(1),
            NodeId(2),
            DigestMode::default(),
        )
        .unwrap();
        assert_eq!(s.offer.digests.len(), 1);
        assert!(s.shared_alice.is_empty());
    }

    #[test]
    fn disjoint_tables_share_nothing() {
        let a = vec![entry(1, 9, 1, &[1, 2, 9], 9)];
        let b = vec![entry(1, 9, 2, &[1, 2, 9], 9)];
        let s = reconcile(&a, &b, NodeId(1), NodeId(2), DigestMode::Idealized).unwrap();
        assert!(s.shared_alice.is_empty() && s.shared_bob.is_empty());
        assert_eq!(s.response.missing_digests.len(), 1);
    }

    #[test]
    fn narrow_digests_escalate() {
        // 8-bit digests over 600 entries are certain to collide.
        let entries: Vec<SrtEntry> = (0..600)
            .map(|i| entry(1, 9, i, &[1, 2, 9], 9))
            .collect();
        let s = reconcile(
            &entries,
            &entries,
            NodeId(1),
            NodeId(2),
            DigestMode::Hashed { bits: 8 },
        )
        .unwrap();
        assert!(s.rounds > 1);
        assert!(s.offer.digest_bits > 8);
        assert_eq!(s.shared_alice.len(), 600);
        assert!(s.agreed());
        assert_eq!(s.dropped, 0);
    }

    #[test]
    fn bad_width_is_rejected() {
        let rid = entry(1, 9, 1, &[1, 2, 9], 9).rid;
        assert!(RidDigest::hashed(&rid, 12).is_err());
        assert!(RidDigest::hashed(&rid, 512).is_err());
    }

    #[test]
    fn messages_serialize_as_json() {
        let offer = ReconOffer {
            schema_version: 1,
            alice: NodeId(1),
            bob: NodeId(2),
            digest_bits: 16,
            digests: vec![RidDigest(vec![0xab, 0x01])],
        };
        let json = serde_json::to_string(&offer).unwrap();
        assert_eq!(
            json,
            r#"{"schema_version":1,"alice":1,"bob":2,"digest_bits":16,"digests":["ab01"]}"#
        );
        let back: ReconOffer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, offer);
    }
}
