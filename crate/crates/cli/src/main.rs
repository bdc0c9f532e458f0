use std::path::PathBuf;
use std::process::ExitCode;

use beepcount::emulation::{choose_r, RPolicy};
use beepcount::harness::{
    read_summary_csv, run_batch, run_seed, summarize, write_results_csv, write_summary_csv,
    BatchConfig, BatchSummary, RoundsSetting,
};
use beepcount::oracle::{
    chernoff_tail, default_k_cap, expected_phases_exact, phase_probs, DEFAULT_TOLERANCE,
};
use beepcount::{harness, run_protocol, Error, Protocol, RunConfig};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used when `--seed` is not given, so bare invocations repeat.
const DEFAULT_SEED: u64 = 42;

mod exit {
    pub const LAS_VEGAS_VIOLATION: u8 = 2;
    pub const SINGLE_NODE: u8 = 3;
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const SOFTWARE: u8 = 70;
    pub const IO: u8 = 74;
}

/// Simulate counting protocols in beeping networks.
#[derive(Debug, Parser)]
#[command(name = "beepcount", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a batch of simulations and write CSV results.
    Simulate(SimulateArgs),
    /// Query exact analytic values.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
    /// Fit mean phases against n from a summary CSV.
    Regress {
        /// Summary CSV written by `simulate --summary-out`.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Protocol to run.
    #[arg(long, value_parser = parse_protocol)]
    protocol: Protocol,
    /// Network sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    n: Vec<usize>,
    /// Runs per network size.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Master seed, or `random` to draw one from the OS.
    #[arg(long, default_value_t = DEFAULT_SEED.to_string())]
    seed: String,
    /// bl-mc: target failure probability, converted to emulation rounds.
    #[arg(long, conflicts_with = "r")]
    epsilon: Option<f64>,
    /// bl-mc: known upper bound on n, used with --epsilon.
    #[arg(long, requires = "epsilon")]
    upper_bound: Option<u64>,
    /// bl-mc: emulation rounds, given directly.
    #[arg(long)]
    r: Option<u32>,
    /// Phases before a run is aborted [default: 10000 * n].
    #[arg(long)]
    phase_cap: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-run results CSV.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-size summary CSV.
    #[arg(long, value_name = "FILE")]
    summary_out: Option<PathBuf>,
    /// Print every phase of every run.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyKind {
    PerNode,
    Global,
    Whp,
}

#[derive(Debug, Subcommand)]
enum OracleQuery {
    /// Probabilities of silence, a single beeper and a collision.
    PhaseProbs {
        #[arg(long)]
        k: u32,
        /// Uncounted nodes.
        #[arg(long)]
        n_prime: u32,
    },
    /// Exact expected number of phases of bcdl.
    ExpectedPhases {
        #[arg(long)]
        n: u32,
        /// Truncation of the contention parameter [default: 64 * n].
        #[arg(long)]
        k_cap: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Tail bound on running past 55n phases.
    Chernoff {
        #[arg(long)]
        n: u64,
    },
    /// Emulation rounds for a failure policy.
    ChooseR {
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        upper_bound: Option<u64>,
    },
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::SingleNodeUndecidable => exit::SINGLE_NODE,
            Error::InvalidInput(_) | Error::VariantMismatch { .. } | Error::Config(_) => {
                exit::USAGE
            }
            Error::MalformedCsv { .. } => exit::DATA,
            Error::Io { .. } => exit::IO,
            Error::Invariant { .. } | Error::Numerical(_) => exit::SOFTWARE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn rounds(args: &SimulateArgs) -> Result<Option<RoundsSetting>, Failure> {
    let is_mc = args.protocol == Protocol::BlMc;
    if args.upper_bound.is_some() && args.epsilon.is_none() {
        return Err(Failure::usage("--upper-bound needs --epsilon"));
    }
    match (args.epsilon, args.r) {
        (None, None) if is_mc => Err(Failure::usage(
            "bl-mc needs exactly one of --epsilon or --r",
        )),
        (None, None) => Ok(None),
        _ if !is_mc => Err(Failure::usage(format!(
            "--epsilon, --upper-bound and --r only apply to bl-mc, not {}",
            args.protocol
        ))),
        (Some(epsilon), _) => Ok(Some(RoundsSetting::Policy(match args.upper_bound {
            Some(upper_bound) => RPolicy::Global {
                epsilon,
                upper_bound,
            },
            None => RPolicy::PerNode { epsilon },
        }))),
        (None, Some(r)) => Ok(Some(RoundsSetting::Fixed(r))),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let seed = match args.seed.as_str() {
        "random" => rand::random(),
        s => s.parse().map_err(|_| {
            Failure::usage(format!("--seed must be an integer or `random`, got {s:?}"))
        })?,
    };
    if args.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let mut config = BatchConfig::new(args.protocol, args.n.clone(), args.runs, seed);
    config.rounds = rounds(&args)?;
    config.phase_cap = args.phase_cap;
    config.jobs = args.jobs;
    config.validate()?;
    let r = config.r()?;

    let results = run_batch(&config)?;
    let summary = summarize(&results)?;
    if let Some(path) = &args.out {
        write_results_csv(&results, path)?;
    }
    if let Some(path) = &args.summary_out {
        write_summary_csv(&summary, path)?;
    }
    if args.trace {
        print_trace(&config, r, &results)?;
    }
    println!("{}", digest(&summary, seed, r));
    summary.check_las_vegas().map_err(|e| Failure {
        code: exit::LAS_VEGAS_VIOLATION,
        message: e.to_string(),
    })
}

fn print_trace(
    config: &BatchConfig,
    r: Option<u32>,
    results: &[harness::RunRecord],
) -> Result<(), Failure> {
    let run_config = RunConfig {
        r,
        phase_cap: config.phase_cap,
        trace: true,
    };
    for rec in results {
        let n = rec.result.n;
        let seed = run_seed(config.master_seed, n, rec.run_id);
        let traced = run_protocol(config.protocol, n, config.variant, seed, &run_config)?;
        for p in traced.phase_records.iter().flatten() {
            let k_after = p.k_after.map_or("-".to_string(), |k| k.to_string());
            println!(
                "trace n={n} run={} phase={} beepers={:?} contenders={} k={}->{k_after} counted={}",
                rec.run_id,
                p.phase_index,
                p.slot_beepers,
                p.contenders,
                p.k_before,
                p.counted_this_phase
            );
        }
    }
    Ok(())
}

fn digest(summary: &BatchSummary, seed: u64, r: Option<u32>) -> String {
    let means: Vec<String> = summary
        .rows
        .iter()
        .map(|row| format!("{}:{:.3}", row.n, row.mean_phases))
        .collect();
    format!(
        "protocol={} variant={} seed={seed} r={} runs={} mean_phases={} incorrect={} aborted={} failure_rate={:.4}",
        summary.protocol,
        summary.variant,
        r.map_or("-".to_string(), |r| r.to_string()),
        summary.total_runs(),
        means.join(","),
        summary.total_incorrect(),
        summary.total_aborted(),
        summary.failure_rate(),
    )
}

fn oracle(query: OracleQuery) -> Result<(), Failure> {
    match query {
        OracleQuery::PhaseProbs { k, n_prime } => {
            let p = phase_probs(k, n_prime)?;
            println!("{:?},{:?},{:?}", p.p_none, p.p_single, p.p_collision);
        }
        OracleQuery::ExpectedPhases {
            n,
            k_cap,
            tolerance,
        } => {
            let k_cap = k_cap.unwrap_or_else(|| default_k_cap(n));
            println!("{:?}", expected_phases_exact(n, k_cap, tolerance)?.value);
        }
        OracleQuery::Chernoff { n } => println!("{:?}", chernoff_tail(n)?),
        OracleQuery::ChooseR {
            policy,
            epsilon,
            upper_bound,
        } => {
            let need = |name: &str| Failure::usage(format!("--policy {name} needs more flags"));
            let policy = match policy {
                PolicyKind::PerNode if upper_bound.is_none() => RPolicy::PerNode {
                    epsilon: epsilon.ok_or_else(|| need("per-node (--epsilon)"))?,
                },
                PolicyKind::PerNode => {
                    return Err(Failure::usage("--upper-bound does not apply to per-node"))
                }
                PolicyKind::Global => RPolicy::Global {
                    epsilon: epsilon.ok_or_else(|| need("global (--epsilon)"))?,
                    upper_bound: upper_bound.ok_or_else(|| need("global (--upper-bound)"))?,
                },
                PolicyKind::Whp if epsilon.is_none() => RPolicy::WithHighProbability {
                    upper_bound: upper_bound.ok_or_else(|| need("whp (--upper-bound)"))?,
                },
                PolicyKind::Whp => return Err(Failure::usage("--epsilon does not apply to whp")),
            };
            println!("{}", choose_r(policy)?);
        }
    }
    Ok(())
}

fn regress(input: PathBuf) -> Result<(), Failure> {
    let points = read_summary_csv(&input)?;
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mean_phases)).collect();
    let fit = harness::linear_regression(&xy)?;
    println!("slope: {:?}", fit.slope);
    println!("intercept: {:?}", fit.intercept);
    println!("relative_error: {:?}", fit.relative_error);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(exit::USAGE),
            };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Oracle { query } => oracle(query),
        Command::Regress { input } => regress(input),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
