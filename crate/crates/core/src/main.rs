use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trajrank::harness::store::{read_jsonl, write_json, write_jsonl, write_text};
use trajrank::harness::{
    build_report, effective_runs, evaluate, load_splits, run_cluster, run_propose, run_rank, run_train,
    ExperimentConfig, OutDir, RankedSample, SampleProposals, Timing,
};
use trajrank::ingest::{synth_trajectories, to_trajnet_text, ScenarioSpec};
use trajrank::{Error, Result};

#[derive(Parser)]
#[command(name = "trajrank", version, about = "Trajectory clustering, conditioned proposals and proposal ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of seeded runs.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    TwoRegime,
    ThreeRegime,
    ConstantVelocity,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the training split and write cluster.json and dbi.csv.
    Cluster(Common),
    /// Train the forecaster (and ranking classifier) for every run.
    Train(Common),
    /// Generate proposal sets for the test split.
    Propose(Common),
    /// Rank proposal sets and score every proposal.
    Rank(Common),
    /// Aggregate ranked proposals into report.json and report.csv.
    Report(Common),
    /// Run every stage end to end.
    Evaluate(Common),
    /// Write a synthetic corpus as a TrajNet text file.
    Synth {
        #[arg(long, value_enum, default_value = "two-regime")]
        scenario: Scenario,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, OutDir)> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output = o.clone();
    }
    if let Some(r) = c.runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    let out = OutDir::new(cfg.output.clone());
    write_text(&out.config(), &cfg.to_json())?;
    Ok((cfg, out))
}

fn cluster_if_needed(cfg: &ExperimentConfig, out: &OutDir) -> Result<Option<trajrank::harness::ClusterArtifact>> {
    if cfg.forecaster.kind.is_conditioned() {
        Ok(Some(out.load_cluster(cfg)?))
    } else {
        Ok(None)
    }
}

fn check_ids(expected: &[String], found: impl Iterator<Item = String>) -> Result<()> {
    let found: Vec<String> = found.collect();
    if found != expected {
        return Err(Error::Lineage {
            expected: format!("{} test samples", expected.len()),
            found: format!("{} samples with different ids", found.len()),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster(c) => {
            let (cfg, out) = load(&c)?;
            let splits = load_splits(&cfg)?;
            let art = run_cluster(&cfg, &splits.train)?;
            out.save_cluster(&art)?;
            println!("k={} method={} space={}", art.k, art.method, art.space.id);
        }
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            let splits = load_splits(&cfg)?;
            let cluster = cluster_if_needed(&cfg, &out)?;
            for r in 0..effective_runs(&cfg) {
                let m = run_train(&cfg, &splits.train, cluster.as_ref(), r)?;
                write_json(&out.model(r), &m)?;
                println!("run {r}: {}", out.model(r).display());
            }
        }
        Command::Propose(c) => {
            let (cfg, out) = load(&c)?;
            let splits = load_splits(&cfg)?;
            let cluster = cluster_if_needed(&cfg, &out)?;
            for r in 0..effective_runs(&cfg) {
                let m = out.load_model(&cfg, r, cluster.as_ref())?;
                let props = run_propose(&cfg, &m, cluster.as_ref(), &splits.test)?;
                write_jsonl(&out.proposals(r), &props)?;
            }
        }
        Command::Rank(c) => {
            let (cfg, out) = load(&c)?;
            let splits = load_splits(&cfg)?;
            let cluster = cluster_if_needed(&cfg, &out)?;
            for r in 0..effective_runs(&cfg) {
                let m = out.load_model(&cfg, r, cluster.as_ref())?;
                let props: Vec<SampleProposals> = read_jsonl(&out.proposals(r))?;
                check_ids(&splits.test.ids, props.iter().map(|p| p.id.clone()))?;
                let ranked = run_rank(&cfg, &m, cluster.as_ref(), &splits.train, &splits.test, &props)?;
                out.save_ranked(r, &ranked)?;
            }
        }
        Command::Report(c) => {
            let (cfg, out) = load(&c)?;
            let splits = load_splits(&cfg)?;
            let cluster = cluster_if_needed(&cfg, &out)?;
            let mut ranked = Vec::new();
            for r in 0..effective_runs(&cfg) {
                out.load_model(&cfg, r, cluster.as_ref())?;
                let rs: Vec<RankedSample> = read_jsonl(&out.ranked(r))?;
                check_ids(&splits.test.ids, rs.iter().map(|p| p.id.clone()))?;
                ranked.push(rs);
            }
            let report = build_report(&cfg, cluster.as_ref(), &splits.source, &ranked)?;
            write_json(&out.report_json(), &report)?;
            write_text(&out.report_csv(), &report.to_csv())?;
            print!("{}", report.to_csv());
        }
        Command::Evaluate(c) => {
            let (cfg, out) = load(&c)?;
            let start = Instant::now();
            let ev = evaluate(&cfg)?;
            let mut timing = Timing::default();
            timing.record("evaluate", start);
            out.save_evaluation(&cfg, &ev)?;
            write_json(&out.timing(), &timing)?;
            print!("{}", ev.report.to_csv());
        }
        Command::Synth { scenario, n, seed, out } => {
            let spec = match scenario {
                Scenario::TwoRegime => ScenarioSpec::two_regime(),
                Scenario::ThreeRegime => ScenarioSpec::three_regime(),
                Scenario::ConstantVelocity => ScenarioSpec::constant_velocity(),
            };
            let (trajs, _) = synth_trajectories(&spec, n, seed)?;
            write_text(&out, &to_trajnet_text(&trajs, 10))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
