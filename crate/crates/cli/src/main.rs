//! `frd`: build, verify and sample finite range decompositions.
//!
//! Exit codes: 0 success, 1 an asserted check failed, 2 usage or configuration
//! error, 3 archive integrity error, 4 any other runtime failure. Errors are
//! printed to stderr as one JSON object.

mod commands;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frd_core::FrdError;

#[derive(Parser, Debug)]
#[command(name = "frd", version, about = "Finite range decompositions of lattice Green operators")]
struct Cli {
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a decomposition from a config and write its archive.
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Solver tolerance, overriding the config.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a check suite on an archive: range, positivity, reconstruction, decay, regularity or all.
    Verify {
        archive: PathBuf,
        #[arg(long, default_value = "all")]
        suite: String,
        /// Report directory; `<archive>/reports` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        probes: usize,
        /// Positivity and reconstruction tolerance.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// Summarize the JSON-lines reports in a directory as CSV.
    Report { dir: PathBuf },
    /// Draw Gaussian fields with the archived covariance.
    Sample {
        archive: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Directional derivative probe along the `[probe]` direction of a config.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn exit_code(e: &FrdError) -> u8 {
    match e {
        FrdError::Integrity(_) => 3,
        FrdError::Config(_)
        | FrdError::InvalidTorus(_)
        | FrdError::InvalidPlan(_)
        | FrdError::InvalidParameter(_)
        | FrdError::LengthMismatch { .. }
        | FrdError::BudgetExceeded { .. }
        | FrdError::NotElliptic { .. }
        | FrdError::NotSymmetric { .. }
        | FrdError::LevelOutOfRange { .. } => 2,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return fail(&FrdError::Config(format!("threads: {e}")));
        }
    }
    let res = match cli.cmd {
        Command::Decompose { config, out, tol } => commands::decompose(&config, &out, tol),
        Command::Verify { archive, suite, out, seed, probes, tol } => {
            commands::verify(&archive, &suite, out.as_deref(), seed, probes, tol)
        }
        Command::Report { dir } => commands::report(&dir),
        Command::Sample { archive, count, seed, out } => commands::sample(&archive, count, seed, &out),
        Command::Probe { config, out, tol } => commands::probe(&config, &out, tol),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => fail(&e),
    }
}

fn fail(e: &FrdError) -> ExitCode {
    let rec = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{rec}");
    ExitCode::from(exit_code(e))
}
