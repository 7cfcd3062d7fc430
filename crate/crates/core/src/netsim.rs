//! Node placement, unit-disk reachability and ground-truth overhearing.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};
use crate::route::{FullRoute, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum NetsimError {
    #[error("need at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("speed range [{0}, {1}] is invalid")]
    BadSpeedRange(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlacementMode {
    /// A fresh uniform placement for every route discovery.
    #[default]
    Snapshot,
    /// Continuous random-waypoint mobility.
    Waypoint,
}

impl std::str::FromStr for PlacementMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "snapshot" => Ok(Self::Snapshot),
            "waypoint" => Ok(Self::Waypoint),
            other => Err(format!("unknown placement mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n_nodes: usize,
    /// Side of the square playground, meters.
    pub area_side: f64,
    /// Radio (and eavesdropping) range, meters.
    pub radio_range: f64,
    pub placement: PlacementMode,
    /// Waypoint speeds are drawn uniformly from this range, m/s.
    pub speed_range: (f64, f64),
    pub seed: u64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            n_nodes: 50,
            area_side: 100.0,
            radio_range: 12.0,
            placement: PlacementMode::Snapshot,
            speed_range: (0.5, 1.0),
            seed: 1,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), NetsimError> {
        if self.n_nodes < 3 {
            return Err(NetsimError::TooFewNodes(self.n_nodes));
        }
        if !(self.area_side > 0.0) {
            return Err(NetsimError::NonPositive("area_side", self.area_side));
        }
        if !(self.radio_range > 0.0) {
            return Err(NetsimError::NonPositive("radio_range", self.radio_range));
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(NetsimError::BadSpeedRange(lo, hi));
        }
        Ok(())
    }

    pub fn s_total(&self) -> f64 {
        self.area_side * self.area_side
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Node positions for one route-discovery session.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    positions: Vec<Position>,
}

impl Snapshot {
    pub fn new(positions: Vec<Position>) -> Self {
        Self { positions }
    }

    /// Uniform i.i.d. placement addressed by `draw_index`.
    pub fn draw(params: &NetworkParams, draw_index: u64) -> Self {
        let mut rng = stream_rng(params.seed, Stream::Placement, draw_index);
        Self::draw_with(&mut rng, params.n_nodes, params.area_side)
    }

    pub fn draw_with<R: Rng + ?Sized>(rng: &mut R, n_nodes: usize, side: f64) -> Self {
        let positions = (0..n_nodes)
            .map(|_| Position {
                x: rng.random_range(0.0..=side),
                y: rng.random_range(0.0..=side),
            })
            .collect();
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, node: NodeId) -> Position {
        self.positions[node.index()]
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    /// Unit-disk reachability; the boundary counts as in range.
    pub fn in_range(&self, a: NodeId, b: NodeId, range: f64) -> bool {
        self.position(a).distance(&self.position(b)) <= range
    }

    /// Neighbours of every node, each list in ascending id order.
    pub fn adjacency(&self, range: f64) -> Vec<Vec<NodeId>> {
        let n = self.positions.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if self.positions[i].distance(&self.positions[j]) <= range {
                    adj[i].push(NodeId(j as u32));
                    adj[j].push(NodeId(i as u32));
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// True when every consecutive hop of `path` is in range.
    pub fn is_valid_path(&self, path: &[NodeId], range: f64) -> bool {
        path.windows(2).all(|w| self.in_range(w[0], w[1], range))
    }

    /// Appends this snapshot as `node_id,x,y,draw_index` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W, draw_index: u64) -> std::io::Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            writeln!(out, "{i},{},{},{draw_index}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Who actually knows a route in a given session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverhearRecord {
    pub route: FullRoute,
    pub knowers: BTreeSet<NodeId>,
}

/// Route nodes plus every node within `range` of some route node.
pub fn ground_truth_knowers(snapshot: &Snapshot, route: &FullRoute, range: f64) -> OverhearRecord {
    let mut knowers: BTreeSet<NodeId> = route.nodes().iter().copied().collect();
    for v in 0..snapshot.len() {
        let v = NodeId(v as u32);
        if knowers.contains(&v) {
            continue;
        }
        if route.nodes().iter().any(|&u| snapshot.in_range(v, u, range)) {
            knowers.insert(v);
        }
    }
    OverhearRecord {
        route: route.clone(),
        knowers,
    }
}

/// Random-waypoint mobility: each node walks straight to a uniform target at
/// a uniform speed, then draws a new target and speed. No pause time.
#[derive(Clone, Debug)]
pub struct MobilityState {
    positions: Vec<Position>,
    targets: Vec<Position>,
    speeds: Vec<f64>,
    side: f64,
    speed_range: (f64, f64),
    rng: ChaCha8Rng,
}

impl MobilityState {
    pub fn new(params: &NetworkParams) -> Self {
        let mut rng = stream_rng(params.seed, Stream::Mobility, 0);
        let side = params.area_side;
        let start = Snapshot::draw_with(&mut rng, params.n_nodes, side).positions;
        let targets = Snapshot::draw_with(&mut rng, params.n_nodes, side).positions;
        let (lo, hi) = params.speed_range;
        let speeds = (0..params.n_nodes)
            .map(|_| rng.random_range(lo..=hi))
            .collect();
        Self {
            positions: start,
            targets,
            speeds,
            side,
            speed_range: params.speed_range,
            rng,
        }
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::new(self.positions.clone())
    }

    /// Advances every node by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        for i in 0..self.positions.len() {
            let mut left = dt;
            while left > 0.0 {
                let p = self.positions[i];
                let t = self.targets[i];
                let dist = p.distance(&t);
                let reach = self.speeds[i] * left;
                if reach < dist {
                    let f = reach / dist;
                    self.positions[i] = Position {
                        x: p.x + (t.x - p.x) * f,
                        y: p.y + (t.y - p.y) * f,
                    };
                    left = 0.0;
                } else {
                    self.positions[i] = t;
                    left -= dist / self.speeds[i];
                    self.targets[i] = Position {
                        x: self.rng.random_range(0.0..=self.side),
                        y: self.rng.random_range(0.0..=self.side),
                    };
                    let (lo, hi) = self.speed_range;
                    self.speeds[i] = self.rng.random_range(lo..=hi);
                }
            }
        }
    }
}

pub fn waypoint_step(state: &mut MobilityState, dt: f64) {
    state.step(dt);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::p_overhear;
    use proptest::prelude::*;
    use rand::Rng;

    fn default_params() -> NetworkParams {
        NetworkParams::default()
    }

    #[test]
    fn draws_are_deterministic_and_in_area() {
        let p = default_params();
        let a = Snapshot::draw(&p, 17);
        assert_eq!(a, Snapshot::draw(&p, 17));
        assert_ne!(a, Snapshot::draw(&p, 18));
        assert_eq!(a.len(), 50);
        assert!(a
            .positions()
            .iter()
            .all(|q| (0.0..=100.0).contains(&q.x) && (0.0..=100.0).contains(&q.y)));
    }

    #[test]
    fn uniform_placement_moments() {
        // Sample mean of U(0, 100) has sd 100 / sqrt(12 n).
        let p = NetworkParams {
            n_nodes: 10,
            ..default_params()
        };
        let draws = 10_000u64;
        let mut sum_x = 0.0;
        let mut sum_y = 0.0;
        for d in 0..draws {
            let s = Snapshot::draw(&p, d);
            sum_x += s.positions().iter().map(|q| q.x).sum::<f64>();
            sum_y += s.positions().iter().map(|q| q.y).sum::<f64>();
        }
        let n = (draws * 10) as f64;
        let sigma = 100.0 / (12.0 * n).sqrt();
        assert!((sum_x / n - 50.0).abs() < 3.0 * sigma);
        assert!((sum_y / n - 50.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn draws_are_uncorrelated_across_indices() {
        let p = default_params();
        let n = 10_000;
        let xs: Vec<(f64, f64)> = (0..n)
            .map(|d| {
                (
                    Snapshot::draw(&p, d).position(NodeId(0)).x,
                    Snapshot::draw(&p, d + 1).position(NodeId(0)).x,
                )
            })
            .collect();
        let mean_a = xs.iter().map(|v| v.0).sum::<f64>() / n as f64;
        let mean_b = xs.iter().map(|v| v.1).sum::<f64>() / n as f64;
        let cov = xs
            .iter()
            .map(|v| (v.0 - mean_a) * (v.1 - mean_b))
            .sum::<f64>()
            / n as f64;
        let corr = cov / (100.0 * 100.0 / 12.0);
        // 4 sigma for a correlation estimate over 10^4 pairs.
        assert!(corr.abs() < 0.04, "corr = {corr}");
    }

    #[test]
    fn range_boundary_and_coincidence() {
        let s = Snapshot::new(vec![
            Position { x: 0.0, y: 0.0 },
            Position { x: 12.0, y: 0.0 },
            Position { x: 0.0, y: 0.0 },
            Position { x: 12.0, y: 0.1 },
        ]);
        assert!(s.in_range(NodeId(0), NodeId(1), 12.0));
        assert!(s.in_range(NodeId(0), NodeId(2), 12.0));
        assert!(!s.in_range(NodeId(0), NodeId(3), 12.0));
    }

    #[test]
    fn far_node_is_not_a_knower() {
        let s = Snapshot::new(vec![
            Position { x: 0.0, y: 0.0 },
            Position { x: 10.0, y: 0.0 },
            Position { x: 20.0, y: 0.0 },
            Position { x: 50.0, y: 50.0 },
            Position { x: 25.0, y: 5.0 },
        ]);
        let r = FullRoute::from_ids(&[0, 1, 2]).unwrap();
        let rec = ground_truth_knowers(&s, &r, 12.0);
        let ids: Vec<u32> = rec.knowers.iter().map(|n| n.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 4]);
    }

    #[test]
    fn collinear_coverage_matches_overhearing_formula() {
        // Route nodes spaced exactly d_e apart on a line, centred in a square
        // that contains every disk; an off-route node lands uniformly.
        let d_e = 12.0;
        let side = 120.0;
        let samples = 200_000;
        let mut rng = stream_rng(3, Stream::Test, 0);
        for l in 2..=8usize {
            let span = (l - 1) as f64 * d_e;
            let mut pos: Vec<Position> = (0..l)
                .map(|i| Position {
                    x: (side - span) / 2.0 + i as f64 * d_e,
                    y: side / 2.0,
                })
                .collect();
            pos.push(Position { x: 0.0, y: 0.0 });
            let route = FullRoute::new((0..l as u32).map(NodeId).collect()).unwrap();
            let eve = NodeId(l as u32);
            let mut hits = 0usize;
            let mut snap = Snapshot::new(pos);
            for _ in 0..samples {
                snap.positions[l] = Position {
                    x: rng.random_range(0.0..side),
                    y: rng.random_range(0.0..side),
                };
                if ground_truth_knowers(&snap, &route, d_e).knowers.contains(&eve) {
                    hits += 1;
                }
            }
            let mc = hits as f64 / samples as f64;
            let formula = p_overhear(l, d_e, side * side).unwrap();
            assert!(
                (mc - formula).abs() / formula < 0.04,
                "l={l}: mc={mc} formula={formula}"
            );
        }
    }

    #[test]
    fn zero_dt_is_identity() {
        let p = NetworkParams {
            placement: PlacementMode::Waypoint,
            ..default_params()
        };
        let mut m = MobilityState::new(&p);
        let before = m.positions().to_vec();
        m.step(0.0);
        assert_eq!(before, m.positions());
    }

    #[test]
    fn waypoint_stays_in_area_with_valid_speeds() {
        let p = default_params();
        let mut m = MobilityState::new(&p);
        for _ in 0..2000 {
            m.step(1.0);
            assert!(m
                .positions()
                .iter()
                .all(|q| (0.0..=100.0).contains(&q.x) && (0.0..=100.0).contains(&q.y)));
            assert!(m.speeds().iter().all(|v| (0.5..=1.0).contains(v)));
        }
    }

    #[test]
    fn waypoint_stationary_distribution_is_center_biased() {
        let p = NetworkParams {
            seed: 11,
            ..default_params()
        };
        let mut m = MobilityState::new(&p);
        m.step(2000.0);
        let mut bins = [0usize; 5];
        for _ in 0..4000 {
            m.step(5.0);
            for q in m.positions() {
                bins[((q.x / 20.0) as usize).min(4)] += 1;
            }
        }
        assert!(bins[2] > bins[0] && bins[2] > bins[4], "{bins:?}");
        assert!(bins[1] > bins[0] && bins[3] > bins[4], "{bins:?}");
    }

    #[test]
    fn validation() {
        assert!(default_params().validate().is_ok());
        let bad = NetworkParams {
            n_nodes: 2,
            ..default_params()
        };
        assert_eq!(bad.validate(), Err(NetsimError::TooFewNodes(2)));
        let bad = NetworkParams {
            radio_range: 0.0,
            ..default_params()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn in_range_is_symmetric_and_matches_distance(
            ax in 0.0f64..100.0, ay in 0.0f64..100.0,
            bx in 0.0f64..100.0, by in 0.0f64..100.0,
            range in 0.1f64..50.0,
        ) {
            let s = Snapshot::new(vec![Position { x: ax, y: ay }, Position { x: bx, y: by }]);
            let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            prop_assert_eq!(s.in_range(NodeId(0), NodeId(1), range), s.in_range(NodeId(1), NodeId(0), range));
            prop_assert_eq!(s.in_range(NodeId(0), NodeId(1), range), d <= range);
        }

        #[test]
        fn knowers_monotone_in_range(seed in any::<u64>(), r1 in 1.0f64..30.0, extra in 0.0f64..20.0) {
            let mut rng = stream_rng(seed, Stream::Test, 1);
            let s = Snapshot::draw_with(&mut rng, 20, 100.0);
            let route = FullRoute::from_ids(&[0, 1, 2]).unwrap();
            let small = ground_truth_knowers(&s, &route, r1).knowers;
            let large = ground_truth_knowers(&s, &route, r1 + extra).knowers;
            prop_assert!(small.is_subset(&large));
            prop_assert!(route.nodes().iter().all(|n| small.contains(n)));
        }
    }
}
