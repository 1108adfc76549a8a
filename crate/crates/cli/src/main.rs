use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hessianlab::app::{run, Command, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "hessianlab", version, about = "Complex m-Hessian equation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a Dirichlet problem on a ball or ellipsoid.
    Solve(Args),
    /// Smooth a periodic function on the flat torus by local solves and a regularized maximum.
    Glue(Args),
    /// Run the discrete cone test on a saved field.
    Check(Args),
    /// Evaluate the wedge normalization by exterior-algebra expansion.
    Oracle(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized property sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Glue(a) => (Command::Glue, a),
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
    };
    let start = Instant::now();
    let outcome = RunConfig::load(&args.config).and_then(|cfg| {
        run(
            command,
            &cfg,
            &RunOptions {
                out: args.out.clone(),
                seed: args.seed,
            },
        )
    });
    match outcome {
        Ok(outcome) => {
            if !args.quiet {
                print!("{}", outcome.summary);
                println!("wall time: {:.2} s", start.elapsed().as_secs_f64());
                println!("artifacts: {}", outcome.out_dir.display());
            }
            ExitCode::from(outcome.status as u8)
        }
        Err(e) => {
            eprintln!("hessianlab {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
