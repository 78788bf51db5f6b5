use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zakai_harness::config::{load_config, parse_seed_list, ExperimentSpec, OutputFormat};
use zakai_harness::experiment::{run_correctors, run_ladder, run_solve, LadderOutcome, RunError};
use zakai_harness::output::{emit_outputs, emit_solve};
use zakai_harness::{selfcheck, Status};

/// Convergence and Richardson-extrapolation experiments for implicit
/// finite-difference schemes of degenerate stochastic parabolic equations.
#[derive(Parser)]
#[command(name = "zakai", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme on the coarsest ladder grid and export trajectories.
    Solve(RunArgs),
    /// Measure the unaccelerated convergence order over the ladder.
    Converge(RunArgs),
    /// Measure the order of the Richardson-extrapolated approximation.
    Accelerate(RunArgs),
    /// Compute correctors and the decay of the expansion residual.
    Correctors(RunArgs),
    /// Weight identities, summation by parts and the dense and spectral oracles.
    Selfcheck {
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `run.output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds replacing `run.seeds`.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Trajectory file format, replacing `run.format`.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

enum Outcome {
    Solve(Vec<zakai_core::Trajectory>),
    Ladder(Box<LadderOutcome>),
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| format!("cannot start worker threads: {e}"))
}

fn prepare(args: &RunArgs) -> Result<(ExperimentSpec, PathBuf, OutputFormat), String> {
    let mut spec = load_config(&args.config).map_err(|e| e.to_string())?;
    if let Some(s) = &args.seeds {
        spec = spec.with_seeds(parse_seed_list(s).map_err(|e| format!("--seeds: {e}"))?);
    }
    let dir = args
        .out
        .clone()
        .or_else(|| spec.run.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let format = args.format.unwrap_or(spec.run.format);
    Ok((spec, dir, format))
}

fn print_outcome(out: &LadderOutcome) {
    let name = out.pipeline.name();
    for r in &out.rungs {
        println!("{name}: h = {:e}  sup error {:e}  l2h error {:e}", r.h, r.sup_error, r.l2h_error);
    }
    let b = out.band;
    match out.order() {
        Some(o) => println!(
            "{name}: least-squares order {o:.4} (expected {} in [{}, {}])",
            b.expected, b.min, b.max
        ),
        None if out.report.as_ref().is_some_and(|r| r.estimate.exact) => {
            println!("{name}: every error is at round-off; exact convergence")
        }
        None => println!("{name}: no order (fewer than two usable rungs)"),
    }
    if let Some(c) = &out.correctors {
        for r in &c.rows {
            println!("{name}: v^({}) max sup {:e}  ratio to v^(0) {:e}", r.p, r.max_sup, r.ratio_to_v0);
        }
        if c.under_resolved {
            println!("{name}: warning: reference grid below the recommended resolution");
        }
    }
    if let Some(f) = &out.failure {
        println!("{name}: FAILED: {f}");
    }
    println!("{name}: {}", if out.passed() { "PASS" } else { "FAIL" });
}

fn run(cli: Cli) -> Status {
    let args = match cli.command {
        Command::Selfcheck { threads } => {
            let pool = match pool(threads) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Status::ConfigError;
                }
            };
            let results = pool.install(selfcheck::run_all);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return if results.iter().all(|r| r.passed) { Status::Pass } else { Status::Fail };
        }
        Command::Solve(ref a) | Command::Converge(ref a) | Command::Accelerate(ref a) | Command::Correctors(ref a) => a,
    };
    let (spec, dir, format) = match prepare(args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::ConfigError;
        }
    };
    let pool = match pool(args.threads) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::ConfigError;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Solve(_) => run_solve(&spec).map(Outcome::Solve),
        Command::Converge(_) => run_ladder(&spec, false).map(|o| Outcome::Ladder(Box::new(o))),
        Command::Accelerate(_) => run_ladder(&spec, true).map(|o| Outcome::Ladder(Box::new(o))),
        Command::Correctors(_) => run_correctors(&spec).map(|o| Outcome::Ladder(Box::new(o))),
        Command::Selfcheck { .. } => unreachable!(),
    });
    match result {
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            Status::ConfigError
        }
        Err(e @ RunError::Solver(_)) => {
            eprintln!("error: {e}");
            Status::SolverFailure
        }
        Ok(Outcome::Solve(trajs)) => match emit_solve(&trajs, &dir, format) {
            Ok(files) => {
                println!("solve: wrote {} files to {}", files.len(), dir.display());
                Status::Pass
            }
            Err(e) => {
                eprintln!("error: {e}");
                Status::SolverFailure
            }
        },
        Ok(Outcome::Ladder(outcome)) => {
            print_outcome(&outcome);
            if let Err(e) = emit_outputs(&outcome, &dir, format) {
                eprintln!("error: {e}");
                return Status::SolverFailure;
            }
            if outcome.failure.is_some() {
                Status::SolverFailure
            } else if outcome.passed() {
                Status::Pass
            } else {
                Status::Fail
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::ConfigError.code() as u8 } else { 0 });
        }
    };
    ExitCode::from(run(cli).code() as u8)
}
