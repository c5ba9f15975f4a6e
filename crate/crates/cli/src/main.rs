//! `agentspace`: train, verify, and query local distances and oracles.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a check reported
//! violations, 3 internal error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use agentspace::config::load_config;
use agentspace::distances::{local_distance, ActionMetric, DistanceConfig};
use agentspace::io::{load_agent, load_process};
use agentspace::metrics::run_to_dir;
use agentspace::oracle::{enumerate_paths, enumerate_prime_paths, exact_expected_reward, occupancy, optimal_q, q_table};
use agentspace::verify::{run_suite, SuiteReport, SuiteSize, CHECKS};
use agentspace::{DecisionProcess, Error, RewardSpec, StochasticAgent};

const EXIT_USAGE: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "agentspace", version, about = "Local distances between agents, exact oracles, and agent-space novelty search")]
struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true, env = "AGENTSPACE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the novelty-augmented ES optimizer from a config file.
    Train(TrainArgs),
    /// Run the seeded check suite.
    Verify(VerifyArgs),
    /// Evaluate a local distance d_v(b, c).
    Distance(DistanceArgs),
    /// List every path of a fixed horizon with its probability.
    Enumerate(EnumerateArgs),
    /// Exact expected reward, action values, or occupancy.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Run config (TOML, or JSON by `.json` extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write metrics.csv.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run only the named check; repeatable.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(CHECKS))]
    only: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Small instance counts, for smoke runs.
    #[arg(long)]
    quick: bool,
    /// Write the full JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    TotalVariation,
    Discrete01,
    EuclideanOnSimplex,
}

impl From<Metric> for ActionMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::TotalVariation => ActionMetric::TotalVariation,
            Metric::Discrete01 => ActionMetric::Discrete01,
            Metric::EuclideanOnSimplex => ActionMetric::EuclideanOnSimplex,
        }
    }
}

#[derive(Args, Debug)]
struct DistanceArgs {
    /// Process file (JSON).
    #[arg(long)]
    process: PathBuf,
    /// Vantage agent v.
    #[arg(long)]
    vantage: PathBuf,
    /// Left compared agent b.
    #[arg(long)]
    left: PathBuf,
    /// Right compared agent c.
    #[arg(long)]
    right: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Discounted tail tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Metric::TotalVariation)]
    metric: Metric,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[arg(long)]
    process: PathBuf,
    #[arg(long)]
    agent: PathBuf,
    /// Last time index t of the paths.
    #[arg(long)]
    horizon: usize,
    /// Prime paths φ'_t (ending in a state) instead of truncated paths.
    #[arg(long)]
    prime: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    process: PathBuf,
    #[arg(long)]
    agent: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Subcommand, Debug)]
enum OracleQuery {
    /// Expected discounted reward J(a).
    J(OracleArgs),
    /// Action values Q^a.
    Q(OracleArgs),
    /// Optimal action values Q*.
    QStar {
        #[arg(long)]
        process: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Normalized discounted occupancy ℙ(s|a).
    Occupancy(OracleArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}

/// Input problems exit 1; anything else is internal.
fn classify(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Rollout { .. }) => EXIT_INTERNAL,
        Some(_) => EXIT_USAGE,
        None if e.chain().any(|c| c.is::<std::io::Error>() || c.is::<serde_json::Error>()) => EXIT_USAGE,
        None => EXIT_INTERNAL,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Train(args) => train(args),
        Command::Verify(args) => verify(args),
        Command::Distance(args) => distance(args),
        Command::Enumerate(args) => enumerate(args),
        Command::Oracle { query } => oracle(query),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<(DecisionProcess, RewardSpec)> {
    load_process(path).with_context(|| format!("reading process {}", path.display()))
}

fn agent(path: &Path) -> anyhow::Result<StochasticAgent> {
    load_agent(path).with_context(|| format!("reading agent {}", path.display()))
}

fn train(args: TrainArgs) -> anyhow::Result<u8> {
    let config = load_config(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let out = match (&args.out, &config.output) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => bail!(Error::InvalidArgument("no output directory: pass --out or set `output`".into())),
    };
    let run = config.resolve(base)?;
    let (report, files) = run_to_dir(&run, &out, args.csv)?;
    eprintln!(
        "trained {} epochs: J {:.6} -> {:.6} (best {:.6} at epoch {}); metrics in {}",
        report.epochs,
        report.initial_j,
        report.final_j,
        report.best_j,
        report.best_epoch,
        files.metrics.display()
    );
    if config.verify.is_empty() {
        return Ok(0);
    }
    let suite = run_suite(config.seed, &config.verify, &SuiteSize::default())?;
    print_table(&suite);
    Ok(if suite.passed { 0 } else { EXIT_VIOLATION })
}

fn print_table(suite: &SuiteReport) {
    println!("{:<22} {:>9} {:>10} {:>7} {:>12} {:>9}  verdict", "check", "instances", "violations", "skipped", "worst slack", "time");
    for c in &suite.checks {
        println!(
            "{:<22} {:>9} {:>10} {:>7} {:>12.3e} {:>7.0}ms  {}",
            c.check,
            c.instances,
            c.violations,
            c.skipped,
            c.worst_slack,
            c.elapsed_ms,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    for c in &suite.checks {
        println!("  {}: {}", c.check, c.anchor);
        for n in &c.notes {
            println!("      {n}");
        }
    }
    if !suite.uncovered.is_empty() {
        println!("operations no check exercised: {}", suite.uncovered.join(", "));
    }
    println!("suite seed {}: {}", suite.seed, if suite.passed { "all checks passed" } else { "VIOLATIONS" });
}

fn verify(args: VerifyArgs) -> anyhow::Result<u8> {
    let size = if args.quick { SuiteSize::quick() } else { SuiteSize::default() };
    let suite = run_suite(args.seed, &args.only, &size)?;
    if args.json {
        print_json(&suite)?;
    } else {
        print_table(&suite);
    }
    if let Some(path) = &args.report {
        agentspace::io::save_json(path, &suite)?;
    }
    Ok(if suite.passed { 0 } else { EXIT_VIOLATION })
}

fn distance(args: DistanceArgs) -> anyhow::Result<u8> {
    let (process, spec) = load(&args.process)?;
    let (v, b, c) = (agent(&args.vantage)?, agent(&args.left)?, agent(&args.right)?);
    let config = match args.method {
        Method::Exact => DistanceConfig::Exact { tol: args.tol },
        Method::Mc => DistanceConfig::MonteCarlo {
            samples: args.samples,
            tol: args.tol,
            seed: args.seed,
        },
    };
    let est = local_distance(&v, &b, &c, &process, &spec, args.metric.into(), config)?;
    print_json(&est)?;
    Ok(0)
}

fn enumerate(args: EnumerateArgs) -> anyhow::Result<u8> {
    let (process, _) = load(&args.process)?;
    let a = agent(&args.agent)?;
    let list: Vec<serde_json::Value> = if args.prime {
        enumerate_prime_paths(&process, &a, args.horizon)?
            .entries
            .into_iter()
            .map(|(p, prob)| json!({"path": {"pairs": p.pairs, "state": p.terminal}, "probability": prob}))
            .collect()
    } else {
        enumerate_paths(&process, &a, args.horizon)?
            .entries
            .into_iter()
            .map(|(p, prob)| json!({"path": p.pairs(), "probability": prob}))
            .collect()
    };
    print_json(&list)?;
    Ok(0)
}

fn oracle(query: OracleQuery) -> anyhow::Result<u8> {
    match query {
        OracleQuery::J(o) => {
            let (process, spec) = load(&o.process)?;
            let j = exact_expected_reward(&process, &agent(&o.agent)?, &spec, o.tol)?;
            print_json(&json!({ "J": j, "gamma": spec.gamma }))?;
        }
        OracleQuery::Q(o) => {
            let (process, spec) = load(&o.process)?;
            print_json(&q_table(&process, &agent(&o.agent)?, &spec, o.tol)?)?;
        }
        OracleQuery::QStar { process, tol } => {
            let (process, spec) = load(&process)?;
            print_json(&optimal_q(&process, &spec, tol)?)?;
        }
        OracleQuery::Occupancy(o) => {
            let (process, spec) = load(&o.process)?;
            print_json(&occupancy(&process, &agent(&o.agent)?, &spec, o.tol)?)?;
        }
    }
    Ok(0)
}
