//! Node and route types, route-space combinatorics and the canonical
//! fixed-width route encoding.
//!
//! A route space is the set of all loop-free full routes of length
//! `3..=max_full_len` over `n_nodes` nodes that contain two fixed nodes
//! (the key-agreeing pair). For a pair `(a, b)` the number of such routes of
//! length `l` is `C(n - 2, l - 2) * l!`: choose the `l - 2` other nodes, then
//! order all `l` of them.
//!
//! [`RouteCodec`] ranks every route of the space into a dense index, ordered
//! first by length and then lexicographically by node sequence, and writes
//! the index as a big-endian bit string of [`RouteSpace::bit_width`] bits.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;

/// Shortest full route that carries key material: the pair plus one unknown
/// node.
pub const MIN_KEY_ROUTE_LEN: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("route must have at least 2 nodes, got {0}")]
    TooShort(usize),
    #[error("node {0} appears more than once in route")]
    Loop(NodeId),
    #[error("node {0} is not on the route")]
    NotOnRoute(NodeId),
    #[error("route length {len} outside [{min}, {max}]")]
    LengthOutOfRange { len: usize, min: usize, max: usize },
    #[error("node {node} out of range for a {n_nodes}-node network")]
    NodeOutOfRange { node: NodeId, n_nodes: usize },
    #[error("route space needs at least 3 nodes and max length >= 3 (n={n_nodes}, max={max_len})")]
    BadSpace { n_nodes: usize, max_len: usize },
    #[error("route does not contain both endpoints {0} and {1}")]
    MissingEndpoint(NodeId, NodeId),
    #[error("code {0} is outside the route space")]
    BadCode(String),
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

fn check_distinct(nodes: &[NodeId]) -> Result<(), RouteError> {
    let mut seen = HashSet::with_capacity(nodes.len());
    for &n in nodes {
        if !seen.insert(n) {
            return Err(RouteError::Loop(n));
        }
    }
    Ok(())
}

/// An ordered, loop-free source route from initiator to final destination.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<NodeId>", into = "Vec<NodeId>")]
pub struct FullRoute(Vec<NodeId>);

impl FullRoute {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self, RouteError> {
        if nodes.len() < 2 {
            return Err(RouteError::TooShort(nodes.len()));
        }
        check_distinct(&nodes)?;
        Ok(Self(nodes))
    }

    pub fn from_ids(ids: &[u32]) -> Result<Self, RouteError> {
        Self::new(ids.iter().copied().map(NodeId).collect())
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn initiator(&self) -> NodeId {
        self.0[0]
    }

    pub fn destination(&self) -> NodeId {
        self.0[self.0.len() - 1]
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains(&node)
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.0.iter().position(|&n| n == node)
    }
}

impl TryFrom<Vec<NodeId>> for FullRoute {
    type Error = RouteError;
    fn try_from(v: Vec<NodeId>) -> Result<Self, Self::Error> {
        FullRoute::new(v)
    }
}

impl From<FullRoute> for Vec<NodeId> {
    fn from(r: FullRoute) -> Self {
        r.0
    }
}

impl fmt::Display for FullRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// A full route with the two key-agreeing nodes removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrimmedRoute {
    nodes: Vec<NodeId>,
    full: FullRoute,
}

impl TrimmedRoute {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn full(&self) -> &FullRoute {
        &self.full
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn trim_route(route: &FullRoute, a: NodeId, b: NodeId) -> Result<TrimmedRoute, RouteError> {
    for n in [a, b] {
        if !route.contains(n) {
            return Err(RouteError::NotOnRoute(n));
        }
    }
    let nodes = route
        .nodes()
        .iter()
        .copied()
        .filter(|&n| n != a && n != b)
        .collect();
    Ok(TrimmedRoute {
        nodes,
        full: route.clone(),
    })
}

/// Identity of one route-discovery instance: `(source, destination,
/// request id, reply sender)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rid {
    pub source: NodeId,
    pub destination: NodeId,
    pub request_id: u64,
    pub reply_sender: NodeId,
}

impl Rid {
    /// Canonical 20-byte big-endian serialization, used as hash preimage.
    pub fn to_bytes(&self) -> [u8; 20] {
        let mut out = [0u8; 20];
        out[0..4].copy_from_slice(&self.source.0.to_be_bytes());
        out[4..8].copy_from_slice(&self.destination.0.to_be_bytes());
        out[8..16].copy_from_slice(&self.request_id.to_be_bytes());
        out[16..20].copy_from_slice(&self.reply_sender.0.to_be_bytes());
        out
    }
}

impl fmt::Display for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}-{}",
            self.source, self.destination, self.request_id, self.reply_sender
        )
    }
}

/// One row of a Selected Route Table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrtEntry {
    pub rid: Rid,
    pub partial_route: Vec<NodeId>,
    pub full_route: FullRoute,
}

impl SrtEntry {
    pub fn new(rid: Rid, partial_route: Vec<NodeId>, full_route: FullRoute) -> Self {
        debug_assert!(full_route.nodes().starts_with(&partial_route));
        debug_assert_eq!(partial_route.last(), Some(&rid.reply_sender));
        Self {
            rid,
            partial_route,
            full_route,
        }
    }
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * i)
}

/// Number of ways to fill `slots` ordered positions with distinct nodes from
/// `available` candidates such that `required` specific candidates all
/// appear.
fn completions(available: usize, slots: usize, required: usize) -> BigUint {
    if slots < required || available < slots {
        return BigUint::zero();
    }
    binomial(available - required, slots - required) * factorial(slots)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSpace {
    n_nodes: usize,
    max_full_len: usize,
}

impl RouteSpace {
    pub fn new(n_nodes: usize, max_full_len: usize) -> Result<Self, RouteError> {
        if n_nodes < 3 || max_full_len < MIN_KEY_ROUTE_LEN {
            return Err(RouteError::BadSpace {
                n_nodes,
                max_len: max_full_len,
            });
        }
        Ok(Self {
            n_nodes,
            max_full_len: max_full_len.min(n_nodes),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn max_full_len(&self) -> usize {
        self.max_full_len
    }

    pub fn lengths(&self) -> std::ops::RangeInclusive<usize> {
        MIN_KEY_ROUTE_LEN..=self.max_full_len
    }

    /// Number of full routes of length `l` through a fixed pair.
    pub fn class_size(&self, l: usize) -> Result<BigUint, RouteError> {
        if !self.lengths().contains(&l) {
            return Err(RouteError::LengthOutOfRange {
                len: l,
                min: MIN_KEY_ROUTE_LEN,
                max: self.max_full_len,
            });
        }
        Ok(completions(self.n_nodes, l, 2))
    }

    pub fn class_size_f64(&self, l: usize) -> Result<f64, RouteError> {
        Ok(self
            .class_size(l)?
            .to_f64()
            .expect("class sizes are finite"))
    }

    pub fn total(&self) -> BigUint {
        self.lengths()
            .map(|l| completions(self.n_nodes, l, 2))
            .sum()
    }

    /// `ceil(log2(total))`.
    pub fn bit_width(&self) -> usize {
        let total = self.total();
        let max_index = total - 1u8;
        (max_index.bits() as usize).max(1)
    }
}

pub fn route_class_size(space: &RouteSpace, l: usize) -> Result<BigUint, RouteError> {
    space.class_size(l)
}

pub fn route_bit_width(space: &RouteSpace) -> usize {
    space.bit_width()
}

/// Dense ranking of the routes that contain a fixed pair of nodes.
#[derive(Clone, Debug)]
pub struct RouteCodec {
    space: RouteSpace,
    a: NodeId,
    b: NodeId,
    width: usize,
    // offsets[l] = number of routes shorter than l
    offsets: Vec<BigUint>,
}

impl RouteCodec {
    pub fn new(space: RouteSpace, a: NodeId, b: NodeId) -> Result<Self, RouteError> {
        for n in [a, b] {
            if n.index() >= space.n_nodes {
                return Err(RouteError::NodeOutOfRange {
                    node: n,
                    n_nodes: space.n_nodes,
                });
            }
        }
        if a == b {
            return Err(RouteError::Loop(a));
        }
        let mut offsets = vec![BigUint::zero(); space.max_full_len + 2];
        for l in space.lengths() {
            offsets[l + 1] = &offsets[l] + completions(space.n_nodes, l, 2);
        }
        Ok(Self {
            space,
            a,
            b,
            width: space.bit_width(),
            offsets,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn space(&self) -> &RouteSpace {
        &self.space
    }

    fn check(&self, route: &FullRoute) -> Result<(), RouteError> {
        let l = route.len();
        if !self.space.lengths().contains(&l) {
            return Err(RouteError::LengthOutOfRange {
                len: l,
                min: MIN_KEY_ROUTE_LEN,
                max: self.space.max_full_len,
            });
        }
        if let Some(&node) = route.nodes().iter().find(|n| n.index() >= self.space.n_nodes) {
            return Err(RouteError::NodeOutOfRange {
                node,
                n_nodes: self.space.n_nodes,
            });
        }
        if !route.contains(self.a) || !route.contains(self.b) {
            return Err(RouteError::MissingEndpoint(self.a, self.b));
        }
        Ok(())
    }

    pub fn rank(&self, route: &FullRoute) -> Result<BigUint, RouteError> {
        self.check(route)?;
        let n = self.space.n_nodes;
        let l = route.len();
        let mut used = vec![false; n];
        let mut required = 2usize;
        let mut rank = self.offsets[l].clone();
        for (pos, &node) in route.nodes().iter().enumerate() {
            let slots_after = l - pos - 1;
            let available_after = n - pos - 1;
            // Count completions for every unused candidate smaller than `node`.
            let mut smaller_required = 0usize;
            let mut smaller_other = 0usize;
            for cand in 0..node.index() {
                if used[cand] {
                    continue;
                }
                if self.is_endpoint(cand) {
                    smaller_required += 1;
                } else {
                    smaller_other += 1;
                }
            }
            if smaller_other > 0 {
                rank += completions(available_after, slots_after, required) * smaller_other;
            }
            if smaller_required > 0 {
                rank +=
                    completions(available_after, slots_after, required - 1) * smaller_required;
            }
            used[node.index()] = true;
            if self.is_endpoint(node.index()) {
                required -= 1;
            }
        }
        Ok(rank)
    }

    pub fn unrank(&self, index: &BigUint) -> Result<FullRoute, RouteError> {
        let bad = || RouteError::BadCode(index.to_string());
        let l = self
            .space
            .lengths()
            .find(|&l| index < &self.offsets[l + 1])
            .ok_or_else(bad)?;
        let n = self.space.n_nodes;
        let mut rem = index - &self.offsets[l];
        let mut used = vec![false; n];
        let mut required = 2usize;
        let mut nodes = Vec::with_capacity(l);
        for pos in 0..l {
            let slots_after = l - pos - 1;
            let available_after = n - pos - 1;
            let mut chosen = None;
            for cand in 0..n {
                if used[cand] {
                    continue;
                }
                let req_after = if self.is_endpoint(cand) {
                    required - 1
                } else {
                    required
                };
                let count = completions(available_after, slots_after, req_after);
                if rem < count {
                    chosen = Some((cand, req_after));
                    break;
                }
                rem -= count;
            }
            let (cand, req_after) = chosen.ok_or_else(bad)?;
            used[cand] = true;
            required = req_after;
            nodes.push(NodeId(cand as u32));
        }
        FullRoute::new(nodes)
    }

    pub fn encode(&self, route: &FullRoute) -> Result<BitString, RouteError> {
        let rank = self.rank(route)?;
        Ok(BitString::from_biguint(&rank, self.width).expect("rank fits the space width"))
    }

    pub fn decode(&self, code: &BitString) -> Result<FullRoute, RouteError> {
        if code.len() != self.width {
            return Err(RouteError::BadCode(code.to_string()));
        }
        self.unrank(&code.to_biguint())
    }

    fn is_endpoint(&self, idx: usize) -> bool {
        idx == self.a.index() || idx == self.b.index()
    }
}

/// Encodes `route` in the space of routes through `(a, b)`.
pub fn encode_full_route(
    space: &RouteSpace,
    a: NodeId,
    b: NodeId,
    route: &FullRoute,
) -> Result<BitString, RouteError> {
    RouteCodec::new(*space, a, b)?.encode(route)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(n: usize, l: usize) -> RouteSpace {
        RouteSpace::new(n, l).unwrap()
    }

    #[test]
    fn class_sizes() {
        assert_eq!(space(50, 15).class_size(3).unwrap(), BigUint::from(288u32));
        assert_eq!(space(3, 3).class_size(3).unwrap(), BigUint::from(6u32));
        // C(48,3) = 17296, times 5! = 120.
        assert_eq!(
            space(50, 15).class_size(5).unwrap(),
            BigUint::from(2_075_520u32)
        );
        assert!(space(50, 15).class_size(2).is_err());
        assert!(space(50, 15).class_size(16).is_err());
    }

    #[test]
    fn class_size_exceeds_u64_at_full_length() {
        let c = space(50, 15).class_size(15).unwrap();
        assert!(c.bits() > 64);
    }

    #[test]
    fn bit_widths() {
        assert_eq!(space(50, 15).bit_width(), 78);
        assert_eq!(space(3, 3).bit_width(), 3);
        assert_eq!(space(10, 5).total(), BigUint::from(7440u32));
        assert_eq!(space(10, 5).bit_width(), 13);
    }

    #[test]
    fn max_len_capped_by_node_count() {
        let s = space(4, 10);
        assert_eq!(s.max_full_len(), 4);
    }

    #[test]
    fn trims_fig3_route() {
        let r = FullRoute::from_ids(&[1, 2, 3, 4, 5, 6]).unwrap();
        let t = trim_route(&r, NodeId(1), NodeId(5)).unwrap();
        let ids: Vec<u32> = t.nodes().iter().map(|n| n.0).collect();
        assert_eq!(ids, vec![2, 3, 4, 6]);
        assert_eq!(t.full(), &r);

        let two = FullRoute::from_ids(&[7, 9]).unwrap();
        assert!(trim_route(&two, NodeId(7), NodeId(9)).unwrap().is_empty());

        let three = FullRoute::from_ids(&[1, 2, 3]).unwrap();
        assert_eq!(
            trim_route(&three, NodeId(1), NodeId(3)).unwrap().nodes(),
            &[NodeId(2)]
        );
        assert_eq!(
            trim_route(&three, NodeId(1), NodeId(8)),
            Err(RouteError::NotOnRoute(NodeId(8)))
        );
    }

    #[test]
    fn route_rejects_loops() {
        assert_eq!(
            FullRoute::from_ids(&[1, 2, 1]),
            Err(RouteError::Loop(NodeId(1)))
        );
        assert_eq!(FullRoute::from_ids(&[1]), Err(RouteError::TooShort(1)));
    }

    #[test]
    fn order_matters_for_encoding() {
        let codec = RouteCodec::new(space(10, 5), NodeId(0), NodeId(1)).unwrap();
        let r1 = FullRoute::from_ids(&[0, 4, 1]).unwrap();
        let r2 = FullRoute::from_ids(&[4, 0, 1]).unwrap();
        assert_ne!(codec.encode(&r1).unwrap(), codec.encode(&r2).unwrap());
    }

    #[test]
    fn encoding_errors() {
        let codec = RouteCodec::new(space(10, 5), NodeId(0), NodeId(1)).unwrap();
        let too_long = FullRoute::from_ids(&[0, 2, 3, 4, 5, 1]).unwrap();
        assert!(matches!(
            codec.encode(&too_long),
            Err(RouteError::LengthOutOfRange { .. })
        ));
        let out_of_range = FullRoute::from_ids(&[0, 12, 1]).unwrap();
        assert!(matches!(
            codec.encode(&out_of_range),
            Err(RouteError::NodeOutOfRange { .. })
        ));
        let missing = FullRoute::from_ids(&[0, 2, 3]).unwrap();
        assert!(matches!(
            codec.encode(&missing),
            Err(RouteError::MissingEndpoint(..))
        ));
    }

    #[test]
    fn first_and_last_codes() {
        let s = space(10, 5);
        let codec = RouteCodec::new(s, NodeId(3), NodeId(7)).unwrap();
        let first = codec.unrank(&BigUint::zero()).unwrap();
        assert_eq!(first, FullRoute::from_ids(&[0, 3, 7]).unwrap());
        let last = codec.unrank(&(s.total() - 1u8)).unwrap();
        assert_eq!(last, FullRoute::from_ids(&[9, 8, 7, 6, 3]).unwrap());
        assert!(codec.unrank(&s.total()).is_err());
    }

    proptest! {
        #[test]
        fn full_scale_round_trip(
            others in proptest::sample::subsequence((2u32..50).collect::<Vec<_>>(), 1..=13),
            shuffle_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut nodes: Vec<u32> = others;
            nodes.push(0);
            nodes.push(1);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed);
            nodes.shuffle(&mut rng);
            let route = FullRoute::from_ids(&nodes).unwrap();
            let codec = RouteCodec::new(space(50, 15), NodeId(0), NodeId(1)).unwrap();
            let code = codec.encode(&route).unwrap();
            prop_assert_eq!(code.len(), 78);
            prop_assert_eq!(codec.decode(&code).unwrap(), route);
        }
    }
}
