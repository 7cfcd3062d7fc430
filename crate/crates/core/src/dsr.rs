//! DSR route discovery with Selected Route Table maintenance.
//!
//! Discovery floods a route request hop-synchronously over one snapshot. Every
//! node handles a request copy in a fixed order: the route request table and
//! the own-address check come first, so a node answers at most one copy of a
//! request no matter how many paths deliver it. Only then does the node reply
//! (as target, or from its route cache) or append itself and rebroadcast.
//!
//! The reply travels back along the reverse of the discovered prefix. Each node
//! on that path that still holds the matching pending request stores an
//! [`SrtEntry`] keyed by the RID `(initiator, target, request id, reply
//! sender)`.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{ground_truth_knowers, Snapshot};
use crate::rng::{stream_rng, Stream};
use crate::route::{FullRoute, NodeId, Rid, SrtEntry};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiscoveryError {
    #[error("initiator and target are both {0}")]
    SameEndpoints(NodeId),
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error("no route from {initiator} to {target} (request {request_id})")]
    NoPath {
        initiator: NodeId,
        target: NodeId,
        request_id: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MatchWindow {
    /// A pending request matches any reply in the same discovery episode.
    Episode,
    /// A pending request matches replies arriving within this many seconds.
    Seconds(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplyPolicy {
    /// The flood stops at the first reply.
    FirstWins,
    /// The flood runs to exhaustion and every reply travels back.
    AllReplies,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// Copies arriving in one round are handled by ascending receiver, then
    /// sender id.
    Deterministic,
    /// Copies arriving in one round are handled in a seeded random order.
    Randomized { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsrConfig {
    pub radio_range: f64,
    pub max_route_len: usize,
    /// Per-hop latency, seconds.
    pub hop_delay: f64,
    pub match_window: MatchWindow,
    pub reply_policy: ReplyPolicy,
    pub schedule: Schedule,
}

impl Default for DsrConfig {
    fn default() -> Self {
        Self {
            radio_range: 12.0,
            max_route_len: 15,
            hop_delay: 0.001,
            match_window: MatchWindow::Episode,
            reply_policy: ReplyPolicy::FirstWins,
            schedule: Schedule::Deterministic,
        }
    }
}

type RequestKey = (NodeId, NodeId, u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteRequest {
    pub initiator: NodeId,
    pub target: NodeId,
    pub request_id: u64,
    /// Starts with the initiator; grows by one node per hop.
    pub route_record: Vec<NodeId>,
}

impl RouteRequest {
    fn key(&self) -> RequestKey {
        (self.initiator, self.target, self.request_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteReply {
    pub reply_sender: NodeId,
    pub initiator: NodeId,
    pub target: NodeId,
    pub request_id: u64,
    /// First hop after the initiator through the target.
    pub route_record: Vec<NodeId>,
}

impl RouteReply {
    pub fn rid(&self) -> Rid {
        Rid {
            source: self.initiator,
            destination: self.target,
            request_id: self.request_id,
            reply_sender: self.reply_sender,
        }
    }

    pub fn source_route(&self) -> FullRoute {
        let mut nodes = Vec::with_capacity(self.route_record.len() + 1);
        nodes.push(self.initiator);
        nodes.extend_from_slice(&self.route_record);
        FullRoute::new(nodes).expect("replies carry loop-free routes")
    }

    /// Initiator through reply sender: the path the reply travels, reversed.
    pub fn partial_route(&self) -> Vec<NodeId> {
        let full = self.source_route();
        let end = full
            .position(self.reply_sender)
            .expect("reply sender is on its own route");
        full.nodes()[..=end].to_vec()
    }
}

/// Known paths, each starting at the owning node, indexed by their last node.
#[derive(Clone, Debug, Default)]
pub struct RouteCache {
    by_target: HashMap<NodeId, Vec<Vec<NodeId>>>,
}

impl RouteCache {
    pub fn insert(&mut self, path: Vec<NodeId>) {
        let Some(&last) = path.last() else { return };
        if path.len() < 2 {
            return;
        }
        let list = self.by_target.entry(last).or_default();
        if !list.contains(&path) {
            list.push(path);
        }
    }

    /// Shortest cached path to `target` accepted by `usable`, ties broken
    /// lexicographically. Paths rejected by `is_valid` are evicted.
    pub fn lookup(
        &mut self,
        target: NodeId,
        is_valid: &dyn Fn(&[NodeId]) -> bool,
        usable: &dyn Fn(&[NodeId]) -> bool,
    ) -> Option<Vec<NodeId>> {
        let list = self.by_target.get_mut(&target)?;
        list.retain(|p| is_valid(p));
        list.iter()
            .filter(|p| usable(p))
            .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.by_target.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Learns every sub-path of `route` that starts at `owner`, in both
    /// directions.
    pub fn learn(&mut self, owner: NodeId, route: &[NodeId]) {
        let Some(p) = route.iter().position(|&n| n == owner) else {
            return;
        };
        for q in (p + 1)..route.len() {
            self.insert(route[p..=q].to_vec());
        }
        for q in 0..p {
            self.insert(route[q..=p].iter().rev().copied().collect());
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RouteRequestTable {
    seen: HashSet<RequestKey>,
}

impl RouteRequestTable {
    pub fn contains(&self, initiator: NodeId, target: NodeId, request_id: u64) -> bool {
        self.seen.contains(&(initiator, target, request_id))
    }

    fn insert(&mut self, key: RequestKey) {
        self.seen.insert(key);
    }
}

/// Long-term SRT entries plus the short-lived map of requests awaiting a
/// reply.
#[derive(Clone, Debug, Default)]
pub struct SelectedRouteTable {
    entries: Vec<SrtEntry>,
    pending: HashMap<RequestKey, f64>,
}

impl SelectedRouteTable {
    pub fn entries(&self) -> &[SrtEntry] {
        &self.entries
    }

    pub fn note_request(&mut self, initiator: NodeId, target: NodeId, request_id: u64, at: f64) {
        self.pending.insert((initiator, target, request_id), at);
    }

    pub fn push(&mut self, entry: SrtEntry) {
        if !self.entries.iter().any(|e| e.rid == entry.rid) {
            self.entries.push(entry);
        }
    }

    fn clear_pending(&mut self) {
        self.pending.clear();
    }

    fn expire_pending(&mut self, before: f64) {
        self.pending.retain(|_, &mut t| t >= before);
    }
}

#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub cache: RouteCache,
    pub request_table: RouteRequestTable,
    pub srt: SelectedRouteTable,
}

impl NodeState {
    pub fn new(id: NodeId) -> Self {
        Self {
            id,
            cache: RouteCache::default(),
            request_table: RouteRequestTable::default(),
            srt: SelectedRouteTable::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RequestAction {
    Discard,
    ReplyAsTarget(RouteReply),
    ReplyFromCache(RouteReply),
    Forward(RouteRequest),
}

pub struct RequestContext<'a> {
    pub now: f64,
    pub max_route_len: usize,
    /// Whether a cached path is still usable hop by hop.
    pub cache_valid: &'a dyn Fn(&[NodeId]) -> bool,
}

pub fn process_route_request(
    node: &mut NodeState,
    req: &RouteRequest,
    ctx: &RequestContext<'_>,
) -> RequestAction {
    let key = req.key();
    if node.request_table.seen.contains(&key) || req.route_record.contains(&node.id) {
        return RequestAction::Discard;
    }
    node.request_table.insert(key);
    node.srt.note_request(req.initiator, req.target, req.request_id, ctx.now);

    let mut record = req.route_record.clone();
    if node.id == req.target {
        record.push(node.id);
        node.cache
            .insert(record.iter().rev().copied().collect::<Vec<_>>());
        return RequestAction::ReplyAsTarget(RouteReply {
            reply_sender: node.id,
            initiator: req.initiator,
            target: req.target,
            request_id: req.request_id,
            route_record: record[1..].to_vec(),
        });
    }

    let prefix_len = record.len();
    let fits = |suffix: &[NodeId]| {
        prefix_len + suffix.len() <= ctx.max_route_len
            && suffix.iter().all(|n| !req.route_record.contains(n))
    };
    if let Some(suffix) = node.cache.lookup(req.target, ctx.cache_valid, &fits) {
        record.extend_from_slice(&suffix);
        return RequestAction::ReplyFromCache(RouteReply {
            reply_sender: node.id,
            initiator: req.initiator,
            target: req.target,
            request_id: req.request_id,
            route_record: record[1..].to_vec(),
        });
    }

    // Appending ourselves must leave room for at least the target.
    if prefix_len + 2 > ctx.max_route_len {
        return RequestAction::Discard;
    }
    record.push(node.id);
    RequestAction::Forward(RouteRequest {
        route_record: record,
        ..req.clone()
    })
}

/// Stores the SRT entry for `reply` if this node is on its reverse path and
/// saw the matching request within the window.
pub fn record_srt_entry(
    node: &mut NodeState,
    reply: &RouteReply,
    now: f64,
    window: MatchWindow,
) -> Option<SrtEntry> {
    let key = (reply.initiator, reply.target, reply.request_id);
    let seen_at = *node.srt.pending.get(&key)?;
    if let MatchWindow::Seconds(w) = window {
        if now - seen_at > w {
            return None;
        }
    }
    let partial = reply.partial_route();
    if !partial.contains(&node.id) {
        return None;
    }
    let entry = SrtEntry::new(reply.rid(), partial, reply.source_route());
    node.srt.push(entry.clone());
    Some(entry)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscoveryOutcome {
    pub rid: Rid,
    pub full_route: FullRoute,
    pub partial_route: Vec<NodeId>,
    /// Nodes that stored the chosen RID in their SRT.
    pub recorders: Vec<NodeId>,
    /// Ground-truth knowers of the chosen route in this session.
    pub knowers: BTreeSet<NodeId>,
    /// Every reply generated, the chosen one first.
    pub replies: Vec<Rid>,
}

pub struct DsrEngine {
    config: DsrConfig,
    nodes: Vec<NodeState>,
    next_request_id: HashMap<(NodeId, NodeId), u64>,
    episodes: u64,
}

impl DsrEngine {
    pub fn new(n_nodes: usize, config: DsrConfig) -> Self {
        Self {
            config,
            nodes: (0..n_nodes as u32).map(|i| NodeState::new(NodeId(i))).collect(),
            next_request_id: HashMap::new(),
            episodes: 0,
        }
    }

    pub fn config(&self) -> &DsrConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.index()]
    }

    /// Forces the next request id used by `initiator` for `target`.
    pub fn set_next_request_id(&mut self, initiator: NodeId, target: NodeId, id: u64) {
        self.next_request_id.insert((initiator, target), id);
    }

    /// Whether `initiator` already holds a route to `target` that is valid in
    /// `snapshot`; stale routes are evicted.
    pub fn has_usable_route(
        &mut self,
        snapshot: &Snapshot,
        initiator: NodeId,
        target: NodeId,
    ) -> bool {
        let range = self.config.radio_range;
        let valid = |p: &[NodeId]| snapshot.is_valid_path(p, range);
        let max = self.config.max_route_len;
        self.nodes[initiator.index()]
            .cache
            .lookup(target, &valid, &|p| p.len() <= max)
            .is_some()
    }

    /// All SRT entries in the network with their holders.
    pub fn srt_entries(&self) -> impl Iterator<Item = (NodeId, &SrtEntry)> {
        self.nodes
            .iter()
            .flat_map(|n| n.srt.entries().iter().map(move |e| (n.id, e)))
    }

    pub fn run_discovery(
        &mut self,
        snapshot: &Snapshot,
        initiator: NodeId,
        target: NodeId,
        now: f64,
    ) -> Result<DiscoveryOutcome, DiscoveryError> {
        if initiator == target {
            return Err(DiscoveryError::SameEndpoints(initiator));
        }
        for n in [initiator, target] {
            if n.index() >= self.nodes.len() || n.index() >= snapshot.len() {
                return Err(DiscoveryError::UnknownNode(n));
            }
        }
        let episode = self.episodes;
        self.episodes += 1;
        if let MatchWindow::Seconds(w) = self.config.match_window {
            for n in &mut self.nodes {
                n.srt.expire_pending(now - w);
            }
        }

        let counter = self.next_request_id.entry((initiator, target)).or_insert(1);
        let request_id = *counter;
        *counter += 1;

        let result = self.flood(snapshot, initiator, target, request_id, now, episode);
        if self.config.match_window == MatchWindow::Episode {
            for n in &mut self.nodes {
                n.srt.clear_pending();
            }
        }
        result
    }

    fn flood(
        &mut self,
        snapshot: &Snapshot,
        initiator: NodeId,
        target: NodeId,
        request_id: u64,
        now: f64,
        episode: u64,
    ) -> Result<DiscoveryOutcome, DiscoveryError> {
        let cfg = self.config.clone();
        let range = cfg.radio_range;
        let adjacency = snapshot.adjacency(range);
        let valid = |p: &[NodeId]| snapshot.is_valid_path(p, range);
        let mut schedule_rng = match cfg.schedule {
            Schedule::Deterministic => None,
            Schedule::Randomized { seed } => Some(stream_rng(seed, Stream::Schedule, episode)),
        };

        let request = RouteRequest {
            initiator,
            target,
            request_id,
            route_record: vec![initiator],
        };
        {
            let origin = &mut self.nodes[initiator.index()];
            origin.request_table.insert(request.key());
            origin.srt.note_request(initiator, target, request_id, now);
        }

        // (reply, generation time)
        let mut replies: Vec<(RouteReply, f64)> = Vec::new();
        let mut frontier: Vec<(NodeId, RouteRequest)> = vec![(initiator, request)];
        let mut round = 0u32;
        'flood: while !frontier.is_empty() {
            round += 1;
            let t = now + f64::from(round) * cfg.hop_delay;
            let mut deliveries: Vec<(NodeId, NodeId, usize)> = Vec::new();
            for (i, (sender, _)) in frontier.iter().enumerate() {
                for &v in &adjacency[sender.index()] {
                    deliveries.push((v, *sender, i));
                }
            }
            match schedule_rng.as_mut() {
                None => deliveries.sort_unstable_by_key(|&(v, s, _)| (v, s)),
                Some(rng) => deliveries.shuffle(rng),
            }
            let ctx = RequestContext {
                now: t,
                max_route_len: cfg.max_route_len,
                cache_valid: &valid,
            };
            let mut next = Vec::new();
            for (v, _, i) in deliveries {
                match process_route_request(&mut self.nodes[v.index()], &frontier[i].1, &ctx) {
                    RequestAction::Discard => {}
                    RequestAction::Forward(r) => next.push((v, r)),
                    RequestAction::ReplyAsTarget(rep) | RequestAction::ReplyFromCache(rep) => {
                        replies.push((rep, t));
                        if cfg.reply_policy == ReplyPolicy::FirstWins {
                            break 'flood;
                        }
                    }
                }
            }
            frontier = next;
        }

        if replies.is_empty() {
            return Err(DiscoveryError::NoPath {
                initiator,
                target,
                request_id,
            });
        }

        // The initiator uses the reply that reaches it first.
        let arrival = |(rep, t): &(RouteReply, f64)| {
            t + (rep.partial_route().len() - 1) as f64 * cfg.hop_delay
        };
        let chosen = (0..replies.len())
            .min_by(|&a, &b| arrival(&replies[a]).total_cmp(&arrival(&replies[b])).then(a.cmp(&b)))
            .expect("at least one reply");

        let mut recorders = Vec::new();
        for (k, (rep, t)) in replies.iter().enumerate() {
            let partial = rep.partial_route();
            let full = rep.source_route();
            let hops = partial.len() - 1;
            for (i, &node) in partial.iter().enumerate() {
                let at = t + (hops - i) as f64 * cfg.hop_delay;
                let state = &mut self.nodes[node.index()];
                if record_srt_entry(state, rep, at, cfg.match_window).is_some() && k == chosen {
                    recorders.push(node);
                }
                state.cache.learn(node, full.nodes());
            }
        }
        let (rep, _) = &replies[chosen];
        let full_route = rep.source_route();
        // Data packets follow the chosen route, so every node on it learns it.
        for &node in full_route.nodes() {
            self.nodes[node.index()].cache.learn(node, full_route.nodes());
        }
        recorders.sort_unstable();

        let mut rids: Vec<Rid> = vec![rep.rid()];
        rids.extend(
            replies
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != chosen)
                .map(|(_, (r, _))| r.rid()),
        );
        Ok(DiscoveryOutcome {
            rid: rep.rid(),
            partial_route: rep.partial_route(),
            knowers: ground_truth_knowers(snapshot, &full_route, range).knowers,
            full_route,
            recorders,
            replies: rids,
        })
    }
}
