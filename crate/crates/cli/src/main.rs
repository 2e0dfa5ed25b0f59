use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stresslab_cli::{cmd_analyze, cmd_serve, cmd_synth_session, CliError, EXIT_USAGE};
use stresslab_core::Strategy;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "stresslab", version, about = "Mental arithmetic stress sessions and heart-rate analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-phase heart-rate report from stored sessions.
    Analyze {
        #[arg(long)]
        out: PathBuf,
        /// Analyse one session at a time.
        #[arg(long)]
        sequential: bool,
        #[arg(value_name = "SESSION_DIR")]
        sessions: Vec<PathBuf>,
    },
    /// Write a synthetic session from a profile.
    Synth {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze { out, sequential, sessions } => {
            let strategy = if sequential { Strategy::Sequential } else { Strategy::default() };
            let outcome = cmd_analyze(&sessions, &out, strategy)?;
            for (dir, reason) in &outcome.skipped {
                eprintln!("skipped {}: {reason}", dir.display());
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Synth { profile, seed, out } => {
            let dir = cmd_synth_session(&profile, seed, &out)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Serve { config } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(vec![e.to_string()]))?;
            runtime.block_on(cmd_serve(config.as_deref(), stresslab_service::shutdown_signal()))
        }
    }
}
