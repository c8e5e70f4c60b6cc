//! Command-line front end: corpus ingestion and synthesis, sparse/dense
//! indexing, margin-triple harvesting, dimension sweeps, retrieval, metric
//! evaluation, hybrid tuning, and the analytic-bound verification suite.
//!
//! Conventions shared by every subcommand:
//! - Artifact names embed a prefix of the SHA-256 of the effective
//!   configuration, and the same configuration is echoed into a
//!   `.meta.json` sidecar, so equal configurations map to identical names
//!   and identical bytes.
//! - All randomness flows from an explicit `--seed`; experiment subcommands
//!   refuse to run without one.
//! - `--threads` resizes the worker pool without changing any output byte.
//! - Exit codes: 0 success, 1 runtime failure (single-line stderr), 2 bad
//!   arguments or invalid configuration.

mod artifacts;
mod commands;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::resolve::{FileCfg, Usage};

#[derive(Parser)]
#[command(
    name = "marginlab",
    version,
    about = "Sparse/dense retrieval scoring and projection-fidelity experiments"
)]
struct Cli {
    /// Worker threads for parallel sections; outputs never depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory artifacts are written into.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// JSON object supplying defaults for this subcommand's flags
    /// (snake_case keys); explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tokenize a JSONL corpus (and optional queries) into a collection artifact.
    Ingest(commands::IngestArgs),
    /// Synthesize a passage/query corpus with near-duplicate distractors.
    SynthIct(commands::SynthIctArgs),
    /// Build a postings index over a collection.
    IndexSparse(commands::IndexSparseArgs),
    /// Project a collection into a dense index.
    IndexDense(commands::IndexDenseArgs),
    /// Harvest (query, argmax, runner-up) margin triples from a collection.
    Triples(commands::TriplesArgs),
    /// Sweep projection dimensions for the per-bin minimum that preserves the argmax.
    MinK(commands::MinKArgs),
    /// Margin quantiles across document-length bins.
    MarginsByLength(commands::MarginsArgs),
    /// Minimum dimension for target retention across document-length bins.
    RecallMinK(commands::RecallArgs),
    /// Rank queries against sparse, dense, or hybrid indexes.
    Retrieve(commands::RetrieveArgs),
    /// Score a rankings file against gold labels.
    Eval(commands::EvalArgs),
    /// Grid-search the hybrid interpolation weight on a development set.
    TuneHybrid(commands::TuneArgs),
    /// Run the analytic-bound verification suite and print its table.
    VerifyBounds(commands::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("marginlab: error: {}", one_line(&err));
            if err.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Full error chain on one line, so stderr stays machine-parsable.
fn one_line(err: &anyhow::Error) -> String {
    format!("{err:#}").replace('\n', "; ")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    let file = FileCfg::load(cli.config.as_deref())?;
    let out = cli.out_dir.as_path();
    match cli.cmd {
        Cmd::Ingest(a) => commands::ingest(a, &file, out),
        Cmd::SynthIct(a) => commands::synth_ict(a, &file, out),
        Cmd::IndexSparse(a) => commands::index_sparse(a, &file, out),
        Cmd::IndexDense(a) => commands::index_dense(a, &file, out),
        Cmd::Triples(a) => commands::triples(a, &file, out),
        Cmd::MinK(a) => commands::min_k(a, &file, out),
        Cmd::MarginsByLength(a) => commands::margins_by_length(a, &file, out),
        Cmd::RecallMinK(a) => commands::recall_min_k(a, &file, out),
        Cmd::Retrieve(a) => commands::retrieve(a, &file, out),
        Cmd::Eval(a) => commands::eval(a, &file, out),
        Cmd::TuneHybrid(a) => commands::tune_hybrid(a, &file, out),
        Cmd::VerifyBounds(a) => commands::verify_bounds(a, &file),
    }
}
