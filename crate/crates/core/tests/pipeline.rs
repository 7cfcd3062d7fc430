use std::collections::BTreeSet;
use std::path::Path;

use routekey::experiment::{
    analyze, emit_tables, read_log, read_summary, run_experiment, simulate, srts_from_log,
    RunConfig,
};
use routekey::keygen::{reconcile, DigestMode};
use routekey::netsim::PlacementMode;
use routekey::route::{NodeId, Rid, SrtEntry};

fn fixture() -> Vec<routekey::experiment::DiscoveryRecord> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference_discoveries.jsonl");
    read_log(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

fn short(duration: f64) -> RunConfig {
    RunConfig {
        duration,
        ..Default::default()
    }
}

#[test]
fn fixture_reproduces_reference_entropy() {
    let a = analyze(&fixture(), &RunConfig::default(), None).unwrap();
    let s = &a.summary;
    assert!((s.h_min.unwrap() - 10.66).abs() < 0.01);
    assert!((s.h_min_spoiled.unwrap() - 16.76).abs() < 0.01);
    assert!(s.h_min_spoiled_conditioned.unwrap() < s.h_min_spoiled_unconditioned.unwrap());

    let dir = tempfile::tempdir().unwrap();
    emit_tables(s, dir.path()).unwrap();
    let posterior = std::fs::read_to_string(dir.path().join("posterior.csv")).unwrap();
    let row = posterior.lines().find(|l| l.starts_with("3,")).unwrap();
    let route_prob: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(format!("{route_prob:.1E}"), "6.2E-4");
}

#[test]
fn engine_tables_match_the_log() {
    let cfg = short(120.0);
    let sim = simulate(&cfg, None).unwrap();
    let from_log = srts_from_log(&sim.records, cfg.network.n_nodes);
    for node in sim.engine.nodes() {
        assert_eq!(node.srt.entries(), from_log[node.id.index()].as_slice(), "node {}", node.id);
    }
}

fn relevant_rids(srt: &[SrtEntry], peer: NodeId) -> BTreeSet<Rid> {
    srt.iter()
        .filter(|e| e.partial_route.contains(&peer))
        .map(|e| e.rid)
        .collect()
}

#[test]
fn reconciliation_matches_plaintext_intersection() {
    let cfg = RunConfig::default();
    let sim = simulate(&cfg, None).unwrap();
    let srts = srts_from_log(&sim.records, cfg.network.n_nodes);
    let mut pairs = 0;
    let mut nonempty = 0;
    for a in 0..cfg.network.n_nodes {
        for b in a + 1..cfg.network.n_nodes {
            let (na, nb) = (NodeId(a as u32), NodeId(b as u32));
            let want: BTreeSet<Rid> = relevant_rids(&srts[a], nb)
                .intersection(&relevant_rids(&srts[b], na))
                .copied()
                .collect();
            for mode in [DigestMode::default(), DigestMode::Idealized] {
                let s = reconcile(&srts[a], &srts[b], na, nb, mode).unwrap();
                let got: BTreeSet<Rid> = s.shared_rids.iter().copied().collect();
                assert_eq!(got, want, "pair {a}-{b}");
                assert_eq!(s.shared_alice, s.shared_bob);
            }
            pairs += 1;
            nonempty += usize::from(!want.is_empty());
        }
    }
    assert!(pairs >= 1000);
    assert!(nonempty > 100, "only {nonempty} pairs share routes");
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = short(90.0);
        cfg.out_dir = dir.path().to_path_buf();
        cfg.dump_snapshots = true;
        run_experiment(&cfg).unwrap();
    }
    let fa = read_all(a.path());
    assert!(fa.iter().any(|(n, _)| n == "snapshots.csv"));
    assert_eq!(fa, read_all(b.path()));
}

#[test]
fn other_seed_other_run() {
    let a = simulate(&short(60.0), None).unwrap();
    let mut cfg = short(60.0);
    cfg.network.seed ^= 1;
    let b = simulate(&cfg, None).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn tables_rerun_is_stable_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(300.0);
    cfg.out_dir = dir.path().to_path_buf();
    let a = run_experiment(&cfg).unwrap();

    let summary = read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.b_total, a.summary.b_total);
    let again = tempfile::tempdir().unwrap();
    emit_tables(&summary, again.path()).unwrap();
    for name in [
        "prior.csv",
        "posterior.csv",
        "subsets_by_pair.csv",
        "subset_histogram.csv",
        "summary.json",
    ] {
        assert_eq!(
            std::fs::read_to_string(dir.path().join(name)).unwrap(),
            std::fs::read_to_string(again.path().join(name)).unwrap(),
            "{name}"
        );
    }

    // Scenario 0 of the per-pair table adds up to the headline figure.
    let csv = std::fs::read_to_string(dir.path().join("subsets_by_pair.csv")).unwrap();
    let subsets: u64 = csv
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("0,"))
        .map(|l| l.split(',').nth(7).unwrap().parse::<u64>().unwrap())
        .sum();
    let sc = &summary.scenarios[0];
    assert_eq!(subsets, sc.total_subsets);
    assert!((summary.b_total - sc.h_min * subsets as f64).abs() < 1e-6 * summary.b_total.max(1.0));
}

#[test]
fn zero_duration_shares_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(0.0);
    cfg.out_dir = dir.path().to_path_buf();
    let a = run_experiment(&cfg).unwrap();
    assert_eq!(a.summary.b_total, 0.0);
    assert_eq!(a.summary.records, 0);
    assert!(a.summary.h_min.is_none());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn waypoint_mode_runs() {
    let mut cfg = short(120.0);
    cfg.network.placement = PlacementMode::Waypoint;
    let sim = simulate(&cfg, None).unwrap();
    assert!(sim.counts.succeeded > 0);
    let a = analyze(&sim.records, &cfg, Some(sim.counts)).unwrap();
    for sc in &a.summary.scenarios {
        assert_eq!(sc.agreed_subsets, sc.total_subsets);
    }
}

#[test]
fn spoiling_trades_subsets_for_entropy() {
    let cfg = RunConfig::default();
    let sim = simulate(&cfg, None).unwrap();
    let a = analyze(&sim.records, &cfg, Some(sim.counts)).unwrap();
    for pair in a.summary.scenarios.chunks(2) {
        let (plain, spoiled) = (&pair[0], &pair[1]);
        assert_eq!(plain.eps1, spoiled.eps1);
        assert!(spoiled.h_min > plain.h_min);
        assert!(spoiled.total_subsets < plain.total_subsets);
    }
}
