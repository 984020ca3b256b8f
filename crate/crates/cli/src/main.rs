#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
mod commands;

#[derive(Parser)]
#[command(name = "pathldp", version, about = "Path large deviations for lattice Markov chains")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "PATHLDP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate density L*(s, u, v*) with its dual maximizer.
    Rate(RateArgs),
    /// Action of a path read from CSV.
    Action(ActionArgs),
    /// Minimize the action between two points.
    Minpath(MinpathArgs),
    /// Simulate the chain and estimate a tube probability.
    Simulate(SimulateArgs),
    /// Compare -eps log P(tube) with the ball infimum over an eps sweep.
    LdpCheck(LdpCheckArgs),
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    /// Time and position as `s,u1,...,ud`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    at: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    vstar: Vec<f64>,
    /// `limit`, `finite` or `leading`.
    #[arg(long, default_value = "limit")]
    mode: String,
}

#[derive(Args)]
struct ActionArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    #[arg(long)]
    path: std::path::PathBuf,
    #[arg(long, default_value = "limit")]
    mode: String,
    /// Bisect segments until successive sums agree to `--quad-tol`.
    #[arg(long)]
    refine: bool,
    #[arg(long, default_value_t = 1e-8)]
    quad_tol: f64,
}

#[derive(Args)]
struct MinpathArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    from: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    to: Vec<f64>,
    #[arg(long)]
    segments: usize,
    /// Where to write the minimizing path.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tube center path (CSV); without it only endpoint statistics are reported.
    #[arg(long)]
    tube: Option<std::path::PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    /// Reference path for exponential tilting.
    #[arg(long)]
    tilt: Option<std::path::PathBuf>,
    /// Exact probability by enumeration instead of sampling.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 1 << 20)]
    cap: u128,
    /// Write replica 0's trajectory as `k,x1,...,xd`.
    #[arg(long)]
    dump_trajectory: Option<std::path::PathBuf>,
    /// Append a wall-time column (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct LdpCheckArgs {
    #[arg(long)]
    model: std::path::PathBuf,
    #[arg(long)]
    center: std::path::PathBuf,
    #[arg(long)]
    rho: f64,
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Samples per row.
    #[arg(long)]
    budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// TSV with columns epsilon, -eps log p, I_ball.
    #[arg(long)]
    plot_data: Option<std::path::PathBuf>,
    /// Add a column with the covering entropy subtracted.
    #[arg(long)]
    corrected: bool,
    /// Covering scale for `--corrected`; defaults to rho/4.
    #[arg(long)]
    eta: Option<f64>,
    /// Segments per center segment for the ball minimizer.
    #[arg(long, default_value_t = 1)]
    subdivide: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error,2,invalid,\"thread pool: {e}\"");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Rate(a) => commands::rate(a),
        Command::Action(a) => commands::action(a),
        Command::Minpath(a) => commands::minpath(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::LdpCheck(a) => commands::ldp_check(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error,{},{},\"{}\"", e.code, e.kind, e.message.replace('"', "'"));
            ExitCode::from(e.code)
        }
    }
}
