use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfgstop::runner;

#[derive(Parser)]
#[command(
    name = "mfgstop",
    version,
    about = "Mean-field games of optimal stopping: solve, verify, reproduce scenarios"
)]
struct Cli {
    /// Worker threads for independent multi-start solves.
    #[arg(long, global = true, default_value_t = 1)]
    parallel_starts: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a TOML config and write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-verify externally produced u and m fields.
    Verify {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        m: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a registered scenario's evidence procedure.
    Scenario {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let threads = cli.parallel_starts.max(1);
    let outcome = match &cli.command {
        Command::Run { config } => runner::run(config, threads),
        Command::Verify { u, m, config } => runner::verify(u, m, config),
        Command::Scenario { name, out } => runner::scenario(name, out.as_deref(), threads),
    };
    for line in &outcome.lines {
        if outcome.status == runner::Status::Ok {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    ExitCode::from(outcome.status.code() as u8)
}
