//! Arena subcommands: run a tournament from files, replay a log, fit the
//! Bradley-Terry view, and drive the iterative improvement loop.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde::Deserialize;

use suasion_core::arena::bradley_terry::{fit_bradley_terry, BtOptions};
use suasion_core::arena::tournament::{
    leaderboard_rows, read_log, roster_from_log, with_anchor_generations, ArenaInstance,
    BASELINE_PLAYER, TOPLINE_PLAYER,
};
use suasion_core::arena::{
    iterate_transsuasion, replay_log, run_tournament, schedule_matches, Generations, LoopConfig,
    PlayerKind, TournamentConfig,
};
use suasion_core::benchkit;
use suasion_core::providers::Role;

use crate::pipeline_cmd::{create_writer, open_reader, provider_for};

#[derive(Subcommand)]
pub enum ArenaCommand {
    /// Schedule and judge a tournament over built instances
    Run(RunArgs),
    /// Recompute ratings from a match log and verify integrity
    Replay(ReplayArgs),
    /// Order-free Bradley-Terry leaderboard from a match log
    Bt(BtArgs),
    /// Iteratively improve a text until K successive judge rejections
    Loop(LoopArgs),
}

pub fn run(command: ArenaCommand) -> Result<()> {
    match command {
        ArenaCommand::Run(args) => run_cmd(args),
        ArenaCommand::Replay(args) => replay_cmd(args),
        ArenaCommand::Bt(args) => bt_cmd(args),
        ArenaCommand::Loop(args) => loop_cmd(args),
    }
}

/// One entry in the players file: inline generations or a submission file.
#[derive(Debug, Deserialize)]
struct PlayerSpec {
    player_id: String,
    #[serde(default)]
    generations: BTreeMap<String, String>,
    #[serde(default)]
    submission_file: Option<PathBuf>,
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON array of {player_id, generations | submission_file}
    #[arg(long)]
    pub players: PathBuf,
    /// Task instances NDJSON (from `bench build`)
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub rounds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4.0)]
    pub k_factor: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub initial_rating: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub both_orders: bool,
    #[arg(long, default_value = "mock://longer")]
    pub judge: String,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Append-only match log output
    #[arg(long)]
    pub log: PathBuf,
    /// Leaderboard JSON output
    #[arg(long)]
    pub leaderboard: Option<PathBuf>,
}

fn arena_instances(path: &std::path::Path) -> Result<Vec<ArenaInstance>> {
    let instances = benchkit::read_instances(open_reader(path)?)?;
    let out: Vec<ArenaInstance> = instances
        .into_iter()
        .filter_map(|i| {
            let baseline = i.baseline_text.clone()?;
            let topline = i.references.first().cloned()?;
            Some(ArenaInstance {
                instance_id: i.instance_id,
                judge_prompt: i.prompt,
                baseline_text: baseline,
                topline_text: topline,
            })
        })
        .collect();
    if out.is_empty() {
        bail!("no arena-ready instances (need baseline_text and references)");
    }
    Ok(out)
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let specs: Vec<PlayerSpec> = serde_json::from_slice(
        &std::fs::read(&args.players).with_context(|| format!("reading {}", args.players.display()))?,
    )?;
    let instances = arena_instances(&args.instances)?;

    let mut generations = Generations::new();
    let mut players: Vec<(String, PlayerKind)> = vec![
        (BASELINE_PLAYER.to_string(), PlayerKind::BaselineT1),
        (TOPLINE_PLAYER.to_string(), PlayerKind::ToplineT2),
    ];
    for spec in specs {
        let mut gens = spec.generations;
        if let Some(path) = spec.submission_file {
            let bundle: suasion_core::gateway::SubmissionBundle =
                serde_json::from_slice(&std::fs::read(&path)?)?;
            gens.extend(bundle.generations);
        }
        players.push((spec.player_id.clone(), PlayerKind::Model));
        generations.insert(spec.player_id, gens);
    }
    let generations = with_anchor_generations(generations, &instances);

    let cfg = TournamentConfig {
        k_factor: args.k_factor,
        initial_rating: args.initial_rating,
        rounds: args.rounds,
        seed: args.seed,
        both_orders: args.both_orders,
    };
    let player_ids: Vec<String> = players.iter().map(|(id, _)| id.clone()).collect();
    let instance_ids: Vec<String> = instances.iter().map(|i| i.instance_id.clone()).collect();
    let (plan, skipped) = schedule_matches(&player_ids, &instance_ids, &generations, &cfg);
    for s in skipped.iter().take(20) {
        eprintln!(
            "{}",
            serde_json::json!({"warning": "pairing skipped", "instance": s.instance_id, "player": s.player})
        );
    }

    let judge = provider_for(Role::Judge, &args.judge, args.cache_dir.as_ref())?;
    let mut log = create_writer(&args.log)?;
    let outcome = run_tournament(
        &plan,
        &players,
        &instances,
        &generations,
        judge.as_ref(),
        &cfg,
        &mut log,
    )?;
    log.flush()?;

    let rows = leaderboard_rows(&outcome.table);
    if let Some(path) = &args.leaderboard {
        std::fs::write(path, serde_json::to_vec_pretty(&rows)?)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "matches": outcome.records.len(),
            "abandoned": outcome.abandoned,
            "leaderboard": rows,
        })
    );
    Ok(())
}

#[derive(Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    pub k_factor: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub initial_rating: f64,
}

fn replay_cmd(args: ReplayArgs) -> Result<()> {
    let records = read_log(open_reader(&args.log)?)?;
    let roster = roster_from_log(&records);
    let cfg = TournamentConfig {
        k_factor: args.k_factor,
        initial_rating: args.initial_rating,
        ..TournamentConfig::default()
    };
    let table = replay_log(&records, &roster, &cfg)?;
    println!(
        "{}",
        serde_json::json!({
            "matches": records.len(),
            "leaderboard": leaderboard_rows(&table),
        })
    );
    Ok(())
}

#[derive(Args)]
pub struct BtArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 1000.0)]
    pub center: f64,
}

fn bt_cmd(args: BtArgs) -> Result<()> {
    let records = read_log(open_reader(&args.log)?)?;
    let ratings = fit_bradley_terry(
        &records,
        &BtOptions {
            elo_center: args.center,
            ..BtOptions::default()
        },
    );
    println!("{}", serde_json::to_string_pretty(&ratings)?);
    Ok(())
}

#[derive(Args)]
pub struct LoopArgs {
    /// Starting text (or --in FILE)
    #[arg(long, conflicts_with = "input")]
    pub seed_text: Option<String>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub k_failures: u32,
    #[arg(long, default_value_t = 10)]
    pub max_turns: u32,
    #[arg(long, default_value = "mock://seed/0")]
    pub generator: String,
    #[arg(long, default_value = "mock://longer")]
    pub judge: String,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Improvement prompt; `{current}` is replaced each turn
    #[arg(
        long,
        default_value = "Paraphrase and refine the following draft post to get higher engagement while keeping its meaning.\nDraft post:\n\"{current}\"\nGive me the improved post only."
    )]
    pub prompt: String,
}

fn loop_cmd(args: LoopArgs) -> Result<()> {
    let seed_text = match (&args.seed_text, &args.input) {
        (Some(text), _) => text.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)?,
        (None, None) => bail!("provide --seed-text or --in"),
    };
    let generator = provider_for(Role::Generator, &args.generator, args.cache_dir.as_ref())?;
    let judge = provider_for(Role::Judge, &args.judge, args.cache_dir.as_ref())?;
    let result = iterate_transsuasion(
        &seed_text,
        &args.prompt,
        generator.as_ref(),
        judge.as_ref(),
        &LoopConfig {
            k_failures: args.k_failures,
            max_turns: args.max_turns,
        },
    );
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
