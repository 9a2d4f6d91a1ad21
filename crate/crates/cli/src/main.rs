//! `suasion`: corpus preparation, pair mining, benchmark building and
//! scoring, arena tournaments, and the HTTP service, as one binary.
//!
//! Failures print a machine-readable JSON object on stderr and exit
//! nonzero; usage errors exit 2.

mod arena_cmd;
mod bench_cmd;
mod pipeline_cmd;
mod serve;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "suasion", version, about = "Mine engagement pairs, build benchmarks, run arenas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, filter, and percentile a post corpus
    Corpus {
        #[command(subcommand)]
        command: pipeline_cmd::CorpusCommand,
    },
    /// Mine same-account transsuasion pairs
    Pairminer {
        #[command(subcommand)]
        command: pipeline_cmd::PairminerCommand,
    },
    /// Group sibling accounts and mine cross-account pairs
    Transcreate {
        #[command(subcommand)]
        command: pipeline_cmd::TranscreateCommand,
    },
    /// Build benchmark instances, score submissions, emit instructions
    Bench {
        #[command(subcommand)]
        command: bench_cmd::BenchCommand,
    },
    /// Run tournaments, replay logs, fit ratings, iterate generations
    Arena {
        #[command(subcommand)]
        command: arena_cmd::ArenaCommand,
    },
    /// Serve the submission/leaderboard HTTP API
    Serve(serve::ServeArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Corpus { command } => pipeline_cmd::run_corpus(command),
        Command::Pairminer { command } => pipeline_cmd::run_pairminer(command),
        Command::Transcreate { command } => pipeline_cmd::run_transcreate(command),
        Command::Bench { command } => bench_cmd::run(command),
        Command::Arena { command } => arena_cmd::run(command),
        Command::Serve(args) => serve::run(args),
    };
    if let Err(e) = result {
        let payload = serde_json::json!({
            "error": e.to_string(),
            "chain": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
