//! Benchmark subcommands: build instances, score submissions, emit
//! instruction datasets, export templates, score human-study transfer.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Subcommand};

use suasion_core::benchkit::{
    self, human,
    instances::{account_map, read_blog_records, BlogMetric, CsVariant},
    instructions::{self, InstructionTask},
    metrics, splits, templates::TemplateRegistry, SplitSide, TaskInstance,
};
use suasion_core::providers::{Embedder, Role};

use crate::pipeline_cmd::{
    create_writer, load_accounts, load_contexts, load_posts, open_reader, provider_for,
};

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Build task instances for one task family
    Build(BuildArgs),
    /// Score a submission file against built instances
    Score(ScoreArgs),
    /// Emit the instruction dataset from the train split
    Emit(EmitArgs),
    /// Score human-study transfer tasks with a generator/scorer under test
    HumanTransfer(HumanArgs),
    /// Export the builtin prompt templates to a directory
    Templates {
        #[arg(long)]
        export: PathBuf,
    },
}

#[derive(Args)]
pub struct BuildArgs {
    /// ts-ct | bs | cs-key | cs-web | cs-img | ts-gt | tc | blog-views | blog-dwell | he
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub posts: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub tc_pairs: Option<PathBuf>,
    #[arg(long)]
    pub blogs: Option<PathBuf>,
    #[arg(long)]
    pub study: Option<PathBuf>,
    #[arg(long)]
    pub accounts: Option<PathBuf>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    /// Template directory overriding the builtin registry
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// random | brand | time
    #[arg(long)]
    pub split: Option<splits::Regime>,
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<String>,
    #[arg(long)]
    pub cutoff: Option<NaiveDate>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Keep only instances on this side of the split (train | test)
    #[arg(long)]
    pub side: Option<String>,
}

fn registry_for(path: Option<&PathBuf>) -> Result<TemplateRegistry> {
    Ok(match path {
        Some(dir) => TemplateRegistry::load_dir(dir)?,
        None => TemplateRegistry::builtin(),
    })
}

fn load_pairs(path: Option<&PathBuf>) -> Result<Vec<suasion_core::TranssuasionPair>> {
    match path {
        Some(path) => Ok(suasion_core::pairminer::read_pairs(open_reader(path)?)?),
        None => Ok(Vec::new()),
    }
}

fn side_filter(instances: Vec<TaskInstance>, side: Option<&str>) -> Result<Vec<TaskInstance>> {
    let Some(side) = side else {
        return Ok(instances);
    };
    let want = match side {
        "train" => SplitSide::Train,
        "test" => SplitSide::Test,
        other => bail!("unknown split side: {other}"),
    };
    Ok(instances
        .into_iter()
        .filter(|i| i.split.map(|s| s.side == want).unwrap_or(false))
        .collect())
}

pub fn run(command: BenchCommand) -> Result<()> {
    match command {
        BenchCommand::Build(args) => build(args),
        BenchCommand::Score(args) => score(args),
        BenchCommand::Emit(args) => emit(args),
        BenchCommand::HumanTransfer(args) => human_transfer(args),
        BenchCommand::Templates { export } => {
            TemplateRegistry::builtin().export_dir(&export)?;
            println!("{}", serde_json::json!({"exported_to": export}));
            Ok(())
        }
    }
}

fn build(args: BuildArgs) -> Result<()> {
    let registry = registry_for(args.templates.as_ref())?;
    let posts = match &args.posts {
        Some(path) => load_posts(path)?,
        None => Vec::new(),
    };
    let pairs = load_pairs(args.pairs.as_ref())?;
    let accounts = account_map(&load_accounts(args.accounts.as_ref())?);
    let contexts = load_contexts(args.contexts.as_ref())?;

    let assignment = match args.split {
        Some(regime) => {
            let spec = splits::SplitSpec {
                regime,
                holdout_accounts: args.holdout.iter().cloned().collect(),
                cutoff_date: args.cutoff,
                seed: args.seed,
                test_fraction: args.test_fraction,
            };
            let assignment = splits::make_splits(&pairs, &posts, &spec)?;
            splits::assert_no_leakage(&assignment, &pairs, &posts, &spec)?;
            Some(assignment)
        }
        None => None,
    };
    let assignment_ref = assignment.as_ref();

    let mut skipped: Vec<(String, String)> = Vec::new();
    let instances = match args.task.as_str() {
        "ts-ct" => benchkit::build_ct_instances(&pairs, &accounts, &registry, assignment_ref)?,
        "bs" => benchkit::build_bs_instances(&posts, &accounts, &registry, assignment_ref)?,
        "cs-key" | "cs-web" | "cs-img" => {
            let variant: CsVariant = args.task.trim_start_matches("cs-").parse().map_err(anyhow::Error::msg)?;
            let (instances, s) = benchkit::build_cs_instances(
                &posts,
                variant,
                &accounts,
                &registry,
                &contexts,
                assignment_ref,
            )?;
            skipped = s;
            instances
        }
        "ts-gt" => {
            let (instances, s) =
                benchkit::build_gt_instances(&pairs, &accounts, &registry, assignment_ref)?;
            skipped = s;
            instances
        }
        "tc" => {
            let tc_pairs = match &args.tc_pairs {
                Some(path) => suasion_core::transcreate::read_tc_pairs(open_reader(path)?)?,
                None => bail!("--tc-pairs is required for task tc"),
            };
            benchkit::build_tc_instances(&tc_pairs, &accounts, &registry, assignment_ref)?
        }
        "blog-views" | "blog-dwell" => {
            let records = match &args.blogs {
                Some(path) => read_blog_records(open_reader(path)?)?,
                None => bail!("--blogs is required for blog tasks"),
            };
            let metric = if args.task == "blog-views" {
                BlogMetric::Views
            } else {
                BlogMetric::Dwell
            };
            let (instances, flagged) = benchkit::build_blog_instances(&records, metric, &registry)?;
            skipped = flagged.into_iter().map(|id| (id, "short_icl".to_string())).collect();
            instances
        }
        "he" => {
            let records = match &args.study {
                Some(path) => human::read_study_records(open_reader(path)?)?,
                None => bail!("--study is required for task he"),
            };
            human::build_he_instances(&records, &registry)?
        }
        other => bail!("unknown task: {other}"),
    };

    let instances = side_filter(instances, args.side.as_deref())?;
    let mut writer = create_writer(&args.out)?;
    benchkit::write_instances(&mut writer, &instances)?;
    writer.flush()?;
    println!(
        "{}",
        serde_json::json!({"instances": instances.len(), "skipped": skipped.len()})
    );
    for (id, reason) in skipped.iter().take(20) {
        eprintln!("{}", serde_json::json!({"skipped": id, "reason": reason}));
    }
    Ok(())
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub task: String,
    /// bleu1 | bleu2 | rouge1 | rougel | embed-f | accuracy
    #[arg(long)]
    pub metric: String,
    /// Submission bundle JSON ({player_id, task, generations})
    #[arg(long)]
    pub submission: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "mock://seed/0")]
    pub embedder: String,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn score(args: ScoreArgs) -> Result<()> {
    let instances = benchkit::read_instances(open_reader(&args.instances)?)?;
    let bundle: suasion_core::gateway::SubmissionBundle =
        serde_json::from_slice(&std::fs::read(&args.submission)?)
            .with_context(|| format!("parsing {}", args.submission.display()))?;

    // "ts-gt" selects every TS-GT-* family member; exact tags still work
    let wanted = args.task.to_ascii_lowercase();
    let task_instances: Vec<&TaskInstance> = instances
        .iter()
        .filter(|i| {
            let tag = i.task.tag().to_ascii_lowercase();
            wanted == "all" || tag == wanted || tag.starts_with(&format!("{wanted}-"))
        })
        .collect();
    if task_instances.is_empty() {
        bail!("no instances for task {}", args.task);
    }

    let mut sentence_scores = Vec::new();
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    let mut missing = 0usize;

    let provider;
    let embedder = if args.metric == "embed-f" {
        provider = provider_for(Role::Embedder, &args.embedder, args.cache_dir.as_ref())?;
        Some(Embedder::new(provider.as_ref()))
    } else {
        None
    };

    for instance in &task_instances {
        let Some(candidate) = bundle.generations.get(&instance.instance_id) else {
            missing += 1;
            continue;
        };
        match args.metric.as_str() {
            "bleu1" => sentence_scores.push(metrics::bleu(candidate, &instance.references, 1)),
            "bleu2" => sentence_scores.push(metrics::bleu(candidate, &instance.references, 2)),
            "rouge1" => sentence_scores.push(metrics::rouge(
                candidate,
                &instance.references,
                metrics::RougeVariant::One,
            )),
            "rougel" => sentence_scores.push(metrics::rouge(
                candidate,
                &instance.references,
                metrics::RougeVariant::L,
            )),
            "embed-f" => {
                let reference = instance.references.first().map(String::as_str).unwrap_or("");
                sentence_scores.push(metrics::embed_fscore(
                    candidate,
                    reference,
                    embedder.as_ref().expect("embedder built for embed-f"),
                )?);
            }
            "accuracy" => {
                predictions.push(candidate.clone());
                labels.push(instance.label.clone().unwrap_or_default());
            }
            other => bail!("unknown metric: {other}"),
        }
    }

    let report = if args.metric == "accuracy" {
        serde_json::json!({
            "task": args.task,
            "metric": args.metric,
            "score": 100.0 * metrics::accuracy(&predictions, &labels)?,
            "scored": predictions.len(),
            "missing": missing,
        })
    } else {
        serde_json::json!({
            "task": args.task,
            "metric": args.metric,
            "score": metrics::corpus_score(&sentence_scores),
            "scored": sentence_scores.len(),
            "missing": missing,
        })
    };
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_vec_pretty(&report)?)?;
    }
    println!("{report}");
    Ok(())
}

#[derive(Args)]
pub struct EmitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub accounts: Option<PathBuf>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    /// Comma-separated: bs,cs,ts-gt,ts-ct
    #[arg(long, value_delimiter = ',', default_value = "bs,cs,ts-gt,ts-ct")]
    pub tasks: Vec<String>,
    #[arg(long)]
    pub split: splits::Regime,
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<String>,
    #[arg(long)]
    pub cutoff: Option<NaiveDate>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Augment this many pairs with generated explanations
    #[arg(long, default_value_t = 0)]
    pub explain_k: usize,
    #[arg(long, default_value = "mock://seed/0")]
    pub generator: String,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

fn emit(args: EmitArgs) -> Result<()> {
    let registry = TemplateRegistry::builtin();
    let posts = load_posts(&args.posts)?;
    let pairs = load_pairs(Some(&args.pairs))?;
    let accounts = account_map(&load_accounts(args.accounts.as_ref())?);
    let contexts = load_contexts(args.contexts.as_ref())?;
    let spec = splits::SplitSpec {
        regime: args.split,
        holdout_accounts: args.holdout.iter().cloned().collect(),
        cutoff_date: args.cutoff,
        seed: args.seed,
        test_fraction: args.test_fraction,
    };
    let assignment = splits::make_splits(&pairs, &posts, &spec)?;
    splits::assert_no_leakage(&assignment, &pairs, &posts, &spec)?;

    let tasks: BTreeSet<InstructionTask> = args
        .tasks
        .iter()
        .map(|t| t.parse().map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;

    let mut report = instructions::emit_instructions(
        &pairs,
        &posts,
        &accounts,
        &tasks,
        &registry,
        &contexts,
        &assignment,
    )?;

    if args.explain_k > 0 {
        let generator = provider_for(Role::Generator, &args.generator, args.cache_dir.as_ref())?;
        let train_pairs: Vec<suasion_core::TranssuasionPair> = pairs
            .iter()
            .filter(|p| {
                matches!(
                    assignment.pair_side(&p.key()),
                    Some(SplitSide::Train)
                )
            })
            .cloned()
            .collect();
        let augmented = instructions::synthesize_explanations(
            &train_pairs,
            &accounts,
            &registry,
            generator.as_ref(),
            args.explain_k,
            args.seed,
        )?;
        // replace plain TS examples with the augmented emission
        report.examples.retain(|e| !e.task.starts_with("TS-"));
        report.examples.extend(augmented.examples);
        report
            .examples
            .sort_by(|a, b| (&a.task, &a.input).cmp(&(&b.task, &b.input)));
        report.per_task.clear();
        let examples = std::mem::take(&mut report.examples);
        for e in &examples {
            *report.per_task.entry(e.task.clone()).or_default() += 1;
        }
        report.examples = examples;
        eprintln!(
            "{}",
            serde_json::json!({
                "augmented_pairs": augmented.augmented_pairs,
                "failed_generations": augmented.failed_generations,
            })
        );
    }

    let mut writer = create_writer(&args.out)?;
    instructions::write_instructions(&mut writer, &report.examples)?;
    writer.flush()?;
    let counts: BTreeMap<&str, u64> = report
        .per_task
        .iter()
        .map(|(k, v)| (k.as_str(), *v))
        .collect();
    println!(
        "{}",
        serde_json::json!({"examples": report.examples.len(), "per_task": counts})
    );
    Ok(())
}

#[derive(Args)]
pub struct HumanArgs {
    /// Instances built with `bench build --task he`
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "mock://seed/0")]
    pub generator: String,
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

fn human_transfer(args: HumanArgs) -> Result<()> {
    let instances = benchkit::read_instances(open_reader(&args.instances)?)?;
    let generator = provider_for(Role::Generator, &args.generator, args.cache_dir.as_ref())?;
    let scorer = match &args.scorer {
        Some(endpoint) => Some(provider_for(Role::Scorer, endpoint, args.cache_dir.as_ref())?),
        None => None,
    };
    let report = human::score_human_transfer(&instances, generator.as_ref(), scorer.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
