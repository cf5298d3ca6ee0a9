use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isindy_cli::commands;
use isindy_cli::config::Flags;

#[derive(Parser)]
#[command(
    name = "isindy",
    about = "Sparse nonlinear ODE identification from noisy time series",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct SharedArgs {
    /// Flat JSON config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named benchmark system: logistic | lotka_volterra | lorenz | sine
    #[arg(long)]
    system: Option<String>,
    /// Input CSV dataset (or model JSON for `simulate`)
    #[arg(long)]
    input: Option<String>,
    /// Output directory (default: current directory)
    #[arg(long)]
    output_dir: Option<String>,
    /// Feature library spec, e.g. poly:3, trig:2, poly:3+trig:2 (repeatable)
    #[arg(long)]
    library: Vec<String>,
    /// Sparsity threshold
    #[arg(long)]
    lambda: Option<f64>,
    /// Noise levels, comma separated, e.g. 0.0,0.1,0.3,0.5
    #[arg(long)]
    nvr: Option<String>,
    /// Single noise seed (simulate / identify metadata)
    #[arg(long)]
    seed: Option<u64>,
    /// Seed list for benchmarks: a range `1..20` or comma separated
    #[arg(long)]
    seeds: Option<String>,
    /// Spline segment counts: one value, or one per time window (default
    /// scales with the sample count)
    #[arg(long)]
    segments: Option<String>,
    /// Identification method: isindy | sindy | insindy (repeatable)
    #[arg(long)]
    method: Vec<String>,
    /// Time window `start:end` (repeatable for benchmark window studies)
    #[arg(long)]
    time_range: Vec<String>,
    /// Integration step for simulating stored models
    #[arg(long)]
    step: Option<f64>,
    /// Concurrency bound: 1 forces sequential execution
    #[arg(long)]
    jobs: Option<usize>,
    /// Relative singular-value cutoff for rank checks
    #[arg(long)]
    rank_tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a named system or a stored model; write truth (and noisy) CSV
    Simulate(SharedArgs),
    /// Penalized-spline smoothing of an input CSV
    Smooth(SharedArgs),
    /// Identify a sparse model from an input CSV
    Identify(SharedArgs),
    /// Monte Carlo benchmark sweep with CSV tables and SVG plots
    Benchmark(SharedArgs),
}

fn to_flags(args: SharedArgs) -> Flags {
    Flags {
        config: args.config,
        system: args.system,
        input: args.input,
        output_dir: args.output_dir,
        library: args.library,
        lambda: args.lambda,
        nvr: args.nvr,
        seed: args.seed,
        seeds: args.seeds,
        segments: args.segments,
        method: args.method,
        time_range: args.time_range,
        step: args.step,
        jobs: args.jobs,
        rank_tolerance: args.rank_tolerance,
    }
}

type CommandFn =
    fn(&isindy_cli::config::Resolved) -> Result<isindy_cli::Outcome, isindy_cli::CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, args): (CommandFn, SharedArgs) = match cli.command {
        Command::Simulate(args) => (commands::cmd_simulate, args),
        Command::Smooth(args) => (commands::cmd_smooth, args),
        Command::Identify(args) => (commands::cmd_identify, args),
        Command::Benchmark(args) => (commands::cmd_benchmark, args),
    };
    let jobs = args.jobs;
    let result = to_flags(args).resolve().and_then(|config| {
        install_pool(jobs);
        run(&config)
    });
    match result {
        Ok(outcome) => ExitCode::from(outcome.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(feature = "parallel")]
fn install_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        if n > 1 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn install_pool(_jobs: Option<usize>) {}
