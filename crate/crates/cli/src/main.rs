//! `tdguard`: simulate, replay, oracle and serve.

mod oracle;
mod replay;
mod serve;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes shared by the subcommands.
pub mod exit {
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const MALFORMED: u8 = 3;
    pub const ORACLE_CAP: u8 = 4;
    pub const PORT_BUSY: u8 = 5;
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(exit::FAILURE, e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "tdguard", version, about = "Online true discovery guarantees with e-values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Gaussian simulation grid and write CSV plus a run manifest.
    Simulate(SimulateArgs),
    /// Stream a JSONL evidence file through a guard, printing the bound trace.
    Replay(ReplayArgs),
    /// Brute-force closed-testing bound for a subset (at most 20 e-values).
    Oracle(OracleArgs),
    /// Serve the session API (and optionally static files) over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated alternative means.
    #[arg(long = "mu-a", value_delimiter = ',')]
    mu_a: Option<Vec<f64>>,
    /// Comma-separated alternative probabilities.
    #[arg(long = "pi-a", value_delimiter = ',')]
    pi_a: Option<Vec<f64>>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Full scale: n = 1000 and 1000 trials (flags still win).
    #[arg(long)]
    full: bool,
    /// JSON config (a SimConfig, or a manifest from an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GuardMethod {
    SeqEGuard,
    ExeGuard,
    ArbeGuard,
    MOnlineSimple,
    MOnlineFreedman,
}

#[derive(Args)]
pub struct ReplayArgs {
    /// Evidence file, or `-` for stdin.
    file: PathBuf,
    #[arg(long, value_enum, default_value = "seq-e-guard")]
    method: GuardMethod,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Boost log-normal evidence (seq-e-guard).
    #[arg(long)]
    boosting: bool,
    /// Prefix every row with this method label.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Family {
    Product,
    Average,
    Weighted,
}

#[derive(Args)]
pub struct OracleArgs {
    /// Evidence file (one e-value per line, bare or as JSON), or `-`.
    file: PathBuf,
    #[arg(long, value_enum, default_value = "product")]
    family: Family,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Comma-separated 1-based indices (`""` is the empty set); defaults to every index.
    #[arg(long)]
    subset: Option<String>,
    /// Also print a subset attaining the bound.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "tdguard-data")]
    data_dir: PathBuf,
    /// Directory of static assets served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Replay(a) => replay::run(a),
        Command::Oracle(a) => oracle::run(a),
        Command::Serve(a) => serve::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tdguard: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
