use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use routekey::experiment::{
    analyze, emit_artifacts, emit_tables, parse_digest, parse_eps_list, read_log, read_summary,
    run_experiment, sci, ExperimentError, RunConfig, RunSummary,
};

/// Route-metadata key agreement experiments.
#[derive(Parser)]
#[command(name = "routekey", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a network, then analyze it and write all artifacts.
    Simulate(Overrides),
    /// Analyze an existing discovery log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Rewrite the CSV tables from a summary.json.
    Tables {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    area_side: Option<f64>,
    #[arg(long)]
    range: Option<f64>,
    /// Seconds of traffic.
    #[arg(long)]
    duration: Option<f64>,
    /// snapshot or waypoint
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated list; one scenario per value.
    #[arg(long)]
    eps1: Option<String>,
    #[arg(long)]
    eps2: Option<f64>,
    #[arg(long)]
    eps3: Option<f64>,
    #[arg(long)]
    spoil_min_len: Option<usize>,
    /// hashed[:bits] or idealized
    #[arg(long)]
    digest: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write snapshots.csv.
    #[arg(long)]
    dump_snapshots: bool,
}

fn config_error(msg: String) -> ExperimentError {
    ExperimentError::Config { line: None, msg }
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.nodes {
            cfg.network.n_nodes = v;
        }
        if let Some(v) = self.area_side {
            cfg.network.area_side = v;
        }
        if let Some(v) = self.range {
            cfg.network.radio_range = v;
        }
        if let Some(v) = self.duration {
            cfg.duration = v;
        }
        if let Some(v) = &self.mode {
            cfg.network.placement = v.parse().map_err(config_error)?;
        }
        if let Some(v) = &self.eps1 {
            cfg.eps1_values = parse_eps_list(v).map_err(config_error)?;
            if let Some(&first) = cfg.eps1_values.first() {
                cfg.security.eps1 = first;
            }
        }
        if let Some(v) = self.eps2 {
            cfg.security.eps2 = v;
        }
        if let Some(v) = self.eps3 {
            cfg.security.eps3 = v;
        }
        if let Some(v) = self.spoil_min_len {
            cfg.spoil_min_len = v;
        }
        if let Some(v) = &self.digest {
            cfg.digest = parse_digest(v).map_err(config_error)?;
        }
        if let Some(v) = self.seed {
            cfg.network.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        cfg.dump_snapshots |= self.dump_snapshots;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

fn report(s: &RunSummary) {
    if let Some(c) = &s.simulation {
        println!(
            "events {}  discoveries {}  ok {}  no-path {}  cache-hit {}",
            c.events, c.discoveries, c.succeeded, c.failed, c.skipped
        );
    }
    println!("records {}  candidate pairs {}", s.records, s.candidate_pairs);
    println!(
        "h_min {}  spoiled {} (unconditioned {}, conditioned {})",
        opt(s.h_min),
        opt(s.h_min_spoiled),
        opt(s.h_min_spoiled_unconditioned),
        opt(s.h_min_spoiled_conditioned)
    );
    for sc in &s.scenarios {
        println!(
            "eps1 {}  min_len {}  subsets {}  B_total {}  compromised {}/{}  agreed {}",
            sci(sc.eps1),
            sc.spoil_min_len.unwrap_or(3),
            sc.total_subsets,
            sci(sc.b_total),
            sc.compromised_subsets,
            sc.total_subsets,
            sc.agreed_subsets
        );
    }
    for g in &s.gains {
        match g.gain {
            Some(x) => println!("eps1 {}  spoiling gain {:+.1}%", sci(g.eps1), 100.0 * x),
            None => println!("eps1 {}  spoiling gain n/a", sci(g.eps1)),
        }
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Simulate(o) => {
            let cfg = o.resolve()?;
            let a = run_experiment(&cfg)?;
            report(&a.summary);
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Analyze { log, overrides } => {
            let cfg = overrides.resolve()?;
            let file = File::open(&log).map_err(|e| ExperimentError::io(&log, e))?;
            let records = read_log(BufReader::new(file))?;
            let a = analyze(&records, &cfg, None)?;
            emit_artifacts(&a, &cfg.out_dir)?;
            report(&a.summary);
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Tables { summary, out } => {
            let s = read_summary(&summary)?;
            emit_tables(&s, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
