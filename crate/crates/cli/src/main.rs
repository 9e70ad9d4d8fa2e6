use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod report;

use commands::Failure;
use config::JobConfig;

/// Pressure, dimension and recurrence computations for self-affine iterated
/// function systems.
#[derive(Parser)]
#[command(name = "affine-recur", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the hypotheses, search for an invariant cone, estimate D.
    Check(Args),
    /// Enclose the affinity dimension.
    Dim(Args),
    /// Enclose the dimension of the recurring set of the target.
    Starget(Args),
    /// Write a pressure staircase over the s-grid.
    Pressure(Args),
    /// Simulate recurrence to the shrinking targets.
    Simulate(Args),
    /// Project words or a chaos-game orbit to a point cloud and image.
    Render(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(command: Command) -> Result<u8, Failure> {
    let (args, f): (Args, fn(&JobConfig, &std::path::Path) -> commands::Outcome) = match command {
        Command::Check(a) => (a, commands::check),
        Command::Dim(a) => (a, commands::dim),
        Command::Starget(a) => (a, commands::starget),
        Command::Pressure(a) => (a, commands::pressure),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Render(a) => (a, commands::render),
    };
    let mut cfg = JobConfig::load(&args.config)?;
    cfg.override_with(args.depth, args.tol, args.seed);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    pool.install(|| f(&cfg, &args.out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
