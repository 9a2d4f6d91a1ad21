//! Data-plane subcommands: corpus, pairminer, transcreate.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Subcommand};

use suasion_core::corpus::{self, io as corpus_io, AccountRecord, PercentileGrouping};
use suasion_core::gateway::build_provider;
use suasion_core::pairminer::{self, ContextStore, GateThresholds};
use suasion_core::providers::{Embedder, Provider, ProviderConfig, Role};
use suasion_core::transcreate;

pub fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

pub fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn load_posts(path: &Path) -> Result<Vec<suasion_core::PostRecord>> {
    Ok(corpus_io::read_posts(open_reader(path)?)?)
}

pub fn load_accounts(path: Option<&PathBuf>) -> Result<Vec<AccountRecord>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for line in std::io::BufRead::lines(open_reader(path)?) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn load_contexts(path: Option<&PathBuf>) -> Result<ContextStore> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(ContextStore::from_json(&text)?)
        }
        None => Ok(ContextStore::default()),
    }
}

/// Build a provider from a `mock://` or `http(s)://` endpoint string, with
/// `PROVIDER_<ROLE>_URL`/`_KEY` overrides applied.
pub fn provider_for(role: Role, endpoint: &str, cache_dir: Option<&PathBuf>) -> Result<Box<dyn Provider>> {
    let mut config = ProviderConfig::new(role, endpoint).with_env_overrides();
    config.cache_dir = cache_dir.cloned();
    Ok(build_provider(config)?)
}

#[derive(Subcommand)]
pub enum CorpusCommand {
    /// Parse raw NDJSON posts, derive hashtags/mentions/link domains
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply reply/date/word/like filters, normalize survivors
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "2015-01-01")]
        cutoff: NaiveDate,
        #[arg(long, default_value_t = 5)]
        min_words: usize,
        #[arg(long, default_value_t = 4)]
        min_likes: u64,
        /// Where to write the per-stage filter report (JSON)
        #[arg(long)]
        report: Option<PathBuf>,
        /// Leave text unnormalized in the output
        #[arg(long)]
        keep_raw: bool,
    },
    /// Compute like percentiles per group
    Percentiles {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "account-month")]
        group: PercentileGrouping,
    },
}

pub fn run_corpus(command: CorpusCommand) -> Result<()> {
    match command {
        CorpusCommand::Ingest { input, out } => {
            let outcome = corpus_io::ingest_posts(open_reader(&input)?)?;
            let mut writer = create_writer(&out)?;
            corpus_io::write_posts(&mut writer, &outcome.posts)?;
            writer.flush()?;
            for e in &outcome.errors {
                eprintln!(
                    "{}",
                    serde_json::json!({"warning": "record skipped", "line": e.line, "reason": e.reason})
                );
            }
            println!(
                "{}",
                serde_json::json!({"ingested": outcome.posts.len(), "skipped": outcome.errors.len()})
            );
            Ok(())
        }
        CorpusCommand::Filter {
            input,
            out,
            cutoff,
            min_words,
            min_likes,
            report,
            keep_raw,
        } => {
            let posts = load_posts(&input)?;
            let (mut kept, filter_report) = corpus::filter_posts(posts, cutoff, min_words, min_likes);
            if !keep_raw {
                for p in &mut kept {
                    p.normalize_in_place();
                }
            }
            let mut writer = create_writer(&out)?;
            corpus_io::write_posts(&mut writer, &kept)?;
            writer.flush()?;
            if let Some(report_path) = report {
                let mut w = create_writer(&report_path)?;
                corpus_io::write_report(&mut w, &filter_report)?;
                w.flush()?;
            }
            println!(
                "{}",
                serde_json::json!({"kept": kept.len(), "stages": filter_report.stages.len()})
            );
            Ok(())
        }
        CorpusCommand::Percentiles { input, out, group } => {
            let posts = load_posts(&input)?;
            let posts = corpus::compute_percentiles(posts, group);
            let mut writer = create_writer(&out)?;
            corpus_io::write_posts(&mut writer, &posts)?;
            writer.flush()?;
            println!("{}", serde_json::json!({"percentiled": posts.len()}));
            Ok(())
        }
    }
}

#[derive(Subcommand)]
pub enum PairminerCommand {
    /// Generate candidates, gate them, and cap per-post multiplicity
    Mine(MineArgs),
}

#[derive(Args)]
pub struct MineArgs {
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Gate thresholds JSON file (defaults baked in)
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Where deferred (uncaptioned-media) candidates go
    #[arg(long)]
    pub retry_queue: Option<PathBuf>,
    /// Webpage excerpt side-file (JSON map of normalized link -> excerpt)
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    #[arg(long, default_value = "mock://seed/0")]
    pub embedder: String,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Where to write per-type and reject counts (JSON)
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

pub fn run_pairminer(command: PairminerCommand) -> Result<()> {
    let PairminerCommand::Mine(args) = command;
    let thresholds: GateThresholds = match &args.thresholds {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing thresholds {}", path.display()))?,
        None => GateThresholds::default(),
    };
    let provider = provider_for(Role::Embedder, &args.embedder, args.cache_dir.as_ref())?;
    let embedder = Embedder::new(provider.as_ref());
    let contexts = load_contexts(args.contexts.as_ref())?;
    let posts = load_posts(&args.posts)?;

    let outcome = pairminer::mine_pairs(&posts, &thresholds, &embedder, &contexts)?;
    let mut writer = create_writer(&args.out)?;
    pairminer::write_pairs(&mut writer, &outcome.pairs)?;
    writer.flush()?;

    if let Some(path) = &args.retry_queue {
        let mut w = create_writer(path)?;
        for d in &outcome.deferred {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let stats = serde_json::json!({
        "pairs": outcome.pairs.len(),
        "per_type": outcome
            .per_type
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), *v))
            .collect::<std::collections::BTreeMap<_, _>>(),
        "rejects": outcome.rejects,
        "deferred": outcome.deferred.len(),
    });
    if let Some(path) = &args.stats {
        std::fs::write(path, serde_json::to_vec_pretty(&stats)?)?;
    }
    println!("{stats}");
    Ok(())
}

#[derive(Subcommand)]
pub enum TranscreateCommand {
    /// Group sibling accounts and mine cross-account pairs
    Mine(TranscreateMineArgs),
}

#[derive(Args)]
pub struct TranscreateMineArgs {
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Account records NDJSON
    #[arg(long)]
    pub accounts: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    pub jaccard_min: f64,
    #[arg(long, default_value_t = 0.8)]
    pub cosine_min: f64,
    /// Where to write the account grouping (JSON)
    #[arg(long)]
    pub groups_out: Option<PathBuf>,
    #[arg(long, default_value = "mock://seed/0")]
    pub embedder: String,
    /// Optional grouping assistant (classifier role endpoint)
    #[arg(long)]
    pub assistant: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Minimum required percentile gap, as in same-account mining
    #[arg(long, default_value_t = 40.0)]
    pub delta_min: f64,
}

pub fn run_transcreate(command: TranscreateCommand) -> Result<()> {
    let TranscreateCommand::Mine(args) = command;
    let posts = load_posts(&args.posts)?;
    let accounts = load_accounts(args.accounts.as_ref())?;
    let signatures = transcreate::build_signatures(&posts, &accounts);

    let assistant = match &args.assistant {
        Some(endpoint) => Some(provider_for(Role::Classifier, endpoint, args.cache_dir.as_ref())?),
        None => None,
    };
    let grouping =
        transcreate::group_accounts(&signatures, args.jaccard_min, assistant.as_deref());
    for (account, error) in &grouping.assistant_errors {
        eprintln!(
            "{}",
            serde_json::json!({"warning": "assistant failure", "account": account, "reason": error.to_string()})
        );
    }
    if let Some(path) = &args.groups_out {
        std::fs::write(
            path,
            serde_json::to_vec_pretty(&transcreate::groups_to_json(&grouping.groups))?,
        )?;
    }

    let provider = provider_for(Role::Embedder, &args.embedder, args.cache_dir.as_ref())?;
    let embedder = Embedder::new(provider.as_ref());
    let thresholds = GateThresholds {
        delta_percentile_min: args.delta_min,
        ..GateThresholds::default()
    };
    let pairs = transcreate::mine_transcreation_pairs(
        &posts,
        &grouping.groups,
        &embedder,
        &thresholds,
        args.cosine_min,
    )?;
    let mut writer = create_writer(&args.out)?;
    transcreate::write_tc_pairs(&mut writer, &pairs)?;
    writer.flush()?;

    let accounts_grouped: BTreeSet<&str> = grouping
        .groups
        .iter()
        .flat_map(|g| g.accounts.iter().map(String::as_str))
        .collect();
    println!(
        "{}",
        serde_json::json!({
            "groups": grouping.groups.len(),
            "accounts": accounts_grouped.len(),
            "pairs": pairs.len(),
        })
    );
    Ok(())
}
