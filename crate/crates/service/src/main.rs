use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use tnet_core::optimizer::OptLevel;
use tnet_service::cli::{self, CliError, CompileOptions};
use tnet_service::session::SessionStore;

const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Parser)]
#[command(name = "tnet", version, about = "Compile tensor-network action scripts to NumPy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn level(s: &str) -> Result<OptLevel, String> {
    let v: u8 = s.parse().map_err(|_| format!("`{s}` is not 0, 1 or 2"))?;
    OptLevel::try_from(v)
}

#[derive(Subcommand)]
enum Command {
    /// Compile an action script to a Python module.
    Compile {
        script: PathBuf,
        #[arg(long, default_value = "0", value_parser = level)]
        opt: OptLevel,
        #[arg(long, default_value = "numpy")]
        target: String,
        /// Write the module here instead of stdout.
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        /// Write the optimized dag and pass reports as JSON.
        #[arg(long)]
        emit_ir: Option<PathBuf>,
        /// Write the topological levels of the optimized dag as JSON.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Evaluate a script on random inputs at level 0 and at --opt.
    Run {
        script: PathBuf,
        /// JSON object mapping input tensors ("T0") to shapes.
        #[arg(long)]
        shapes: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "2", value_parser = level)]
        opt: OptLevel,
    },
    /// Serve the session HTTP API. GUITENET_ADDR overrides --addr.
    Serve {
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
    },
    /// Replay a script and print state, dag and code as JSON.
    Replay {
        script: PathBuf,
        #[arg(long, default_value = "0", value_parser = level)]
        opt: OptLevel,
    },
}

fn serve(addr: String) -> Result<(), CliError> {
    let addr = std::env::var("GUITENET_ADDR").unwrap_or(addr);
    let io = |source| CliError::Io {
        path: PathBuf::from(&addr),
        source,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(io)?;
        eprintln!("listening on {}", listener.local_addr().map_err(io)?);
        tnet_service::http::serve(listener, Arc::new(SessionStore::default()))
            .await
            .map_err(io)
    })
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Compile {
            script,
            opt,
            target,
            output,
            emit_ir,
            schedule,
        } => {
            let to_stdout = output.is_none();
            let options = CompileOptions {
                opt_level: opt,
                target,
                output,
                emit_ir,
                schedule,
            };
            let text = cli::compile(&script, &options)?;
            if to_stdout {
                print!("{text}");
            }
        }
        Command::Run {
            script,
            shapes,
            seed,
            opt,
        } => print!("{}", cli::run(&script, &shapes, seed, opt)?),
        Command::Serve { addr } => serve(addr)?,
        Command::Replay { script, opt } => print!("{}", cli::replay(&script, opt)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
