//! Traffic: each node talks to a few fixed destinations at Poisson epochs.

use rand::seq::index::sample;
use rand_distr::{Distribution, Exp};

use super::RunConfig;
use crate::rng::{stream_rng, Stream};
use crate::route::NodeId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficEvent {
    pub time: f64,
    pub initiator: NodeId,
    pub target: NodeId,
}

/// `destinations_per_node` distinct uniform destinations for every node.
pub fn draw_destinations(cfg: &RunConfig) -> Vec<Vec<NodeId>> {
    let n = cfg.network.n_nodes;
    let mut rng = stream_rng(cfg.network.seed, Stream::Workload, 0);
    (0..n)
        .map(|i| {
            sample(&mut rng, n - 1, cfg.destinations_per_node)
                .into_iter()
                .map(|j| NodeId(if j >= i { j + 1 } else { j } as u32))
                .collect()
        })
        .collect()
}

/// All send events in `[0, duration)`, ordered by time then initiator.
pub fn generate_workload(cfg: &RunConfig) -> Vec<TrafficEvent> {
    let destinations = draw_destinations(cfg);
    let exp = Exp::new(1.0 / cfg.mean_interarrival).expect("validated rate");
    let mut events = Vec::new();
    for (i, dests) in destinations.iter().enumerate() {
        let mut rng = stream_rng(cfg.network.seed, Stream::Workload, 1 + i as u64);
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= cfg.duration {
                break;
            }
            let k = rand::Rng::random_range(&mut rng, 0..dests.len());
            events.push(TrafficEvent {
                time: t,
                initiator: NodeId(i as u32),
                target: dests[k],
            });
        }
    }
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.initiator.cmp(&b.initiator))
    });
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn destinations_are_distinct_and_foreign() {
        let cfg = RunConfig::default();
        let d = draw_destinations(&cfg);
        assert_eq!(d.len(), 50);
        for (i, ds) in d.iter().enumerate() {
            assert_eq!(ds.len(), 4);
            let mut s = ds.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
            assert!(ds.iter().all(|n| n.index() != i && n.index() < 50));
        }
    }

    #[test]
    fn event_rate_matches_poisson() {
        let cfg = RunConfig::default();
        let ev = generate_workload(&cfg);
        // 50 nodes x 600 s at rate 1: mean 30000, sd ~173
        let n = ev.len() as f64;
        assert!((n - 30000.0).abs() < 5.0 * 173.2, "{n}");
        assert!(ev.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(ev.iter().all(|e| e.time < 600.0 && e.initiator != e.target));
        assert_eq!(ev, generate_workload(&cfg));
    }

    #[test]
    fn zero_duration_is_empty() {
        let cfg = RunConfig {
            duration: 0.0,
            ..Default::default()
        };
        assert!(generate_workload(&cfg).is_empty());
    }
}
