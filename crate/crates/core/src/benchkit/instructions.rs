//! Instruction-dataset emission from the train split, plus synthetic
//! explanation augmentation.
//!
//! Emission is deterministic for a given input and seed, and hard-fails if
//! any emitted example touches a test-split post: leakage is a bug, not a
//! warning.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instances::{self, AccountMap, CsVariant};
use super::splits::SplitAssignment;
use super::templates::TemplateRegistry;
use super::{BenchError, SplitSide};
use crate::corpus::PostRecord;
use crate::pairminer::{ContextStore, TranssuasionPair};
use crate::providers::{self, Provider};
use crate::template_vars;

/// Which instruction families to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstructionTask {
    Bs,
    Cs,
    TsGt,
    TsCt,
}

impl std::str::FromStr for InstructionTask {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bs" => Ok(InstructionTask::Bs),
            "cs" => Ok(InstructionTask::Cs),
            "ts-gt" | "tsgt" => Ok(InstructionTask::TsGt),
            "ts-ct" | "tsct" => Ok(InstructionTask::TsCt),
            other => Err(format!("unknown instruction task: {other}")),
        }
    }
}

/// One instruction-tuning example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionExample {
    pub input: String,
    pub output: String,
    pub task: String,
    /// Present only on augmentation-selected examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Default)]
pub struct EmissionReport {
    pub examples: Vec<InstructionExample>,
    pub per_task: BTreeMap<String, u64>,
}

fn is_train_post(assignment: &SplitAssignment, post: &PostRecord) -> bool {
    matches!(assignment.post_side(&post.post_id), Some(SplitSide::Train))
}

fn is_train_pair(assignment: &SplitAssignment, pair: &TranssuasionPair) -> bool {
    matches!(assignment.pair_side(&pair.key()), Some(SplitSide::Train))
}

fn check_no_test_post(
    assignment: &SplitAssignment,
    post_ids: &[&str],
    what: &str,
) -> Result<(), BenchError> {
    for id in post_ids {
        if assignment.test_posts.contains(*id) {
            return Err(BenchError::Leakage(format!(
                "{what} would emit test-split post {id}"
            )));
        }
    }
    Ok(())
}

fn gt_examples_for_pair(
    pair: &TranssuasionPair,
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    explanation: Option<&str>,
) -> Result<Vec<InstructionExample>, BenchError> {
    let (gt_instances, _skipped) = instances::build_gt_instances(
        std::slice::from_ref(pair),
        accounts,
        registry,
        None,
    )?;
    Ok(gt_instances
        .into_iter()
        .map(|inst| {
            let mut input = inst.prompt;
            if let Some(expl) = explanation {
                input.push_str("\nSuggestions:\n");
                input.push_str(expl);
            }
            InstructionExample {
                input,
                output: inst.references.first().cloned().unwrap_or_default(),
                task: inst.task.tag(),
                explanation: explanation.map(str::to_string),
            }
        })
        .collect())
}

fn ct_examples_for_pair(
    pair: &TranssuasionPair,
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    explanation: Option<&str>,
) -> Result<Vec<InstructionExample>, BenchError> {
    let ct_instances =
        instances::build_ct_instances(std::slice::from_ref(pair), accounts, registry, None)?;
    Ok(ct_instances
        .into_iter()
        .map(|inst| {
            let mut input = inst.prompt;
            if let Some(expl) = explanation {
                input.push_str("\nSuggestions:\n");
                input.push_str(expl);
            }
            InstructionExample {
                input,
                output: inst.label.unwrap_or_default(),
                task: inst.task.tag(),
                explanation: explanation.map(str::to_string),
            }
        })
        .collect())
}

/// Emit instruction examples from the train split only. Any emitted example
/// touching a test-split post aborts with a leakage error.
pub fn emit_instructions(
    pairs: &[TranssuasionPair],
    posts: &[PostRecord],
    accounts: &AccountMap,
    tasks: &BTreeSet<InstructionTask>,
    registry: &TemplateRegistry,
    contexts: &ContextStore,
    assignment: &SplitAssignment,
) -> Result<EmissionReport, BenchError> {
    let mut report = EmissionReport::default();

    let train_posts: Vec<PostRecord> = posts
        .iter()
        .filter(|p| is_train_post(assignment, p))
        .cloned()
        .collect();

    if tasks.contains(&InstructionTask::Bs) {
        let bs = instances::build_bs_instances(&train_posts, accounts, registry, None)?;
        for inst in bs {
            let post_id = inst.instance_id.trim_start_matches("bs:");
            check_no_test_post(assignment, &[post_id], "BS instruction")?;
            report.examples.push(InstructionExample {
                input: inst.prompt,
                output: inst.label.unwrap_or_default(),
                task: inst.task.tag(),
                explanation: None,
            });
        }
    }

    if tasks.contains(&InstructionTask::Cs) {
        let (cs, _skipped) = instances::build_cs_instances(
            &train_posts,
            CsVariant::Key,
            accounts,
            registry,
            contexts,
            None,
        )?;
        for inst in cs {
            let post_id = inst.instance_id.trim_start_matches("cs-key:");
            check_no_test_post(assignment, &[post_id], "CS instruction")?;
            report.examples.push(InstructionExample {
                input: inst.prompt,
                output: inst.references.first().cloned().unwrap_or_default(),
                task: inst.task.tag(),
                explanation: None,
            });
        }
    }

    let train_pairs: Vec<&TranssuasionPair> = pairs
        .iter()
        .filter(|p| is_train_pair(assignment, p))
        .collect();
    for pair in &train_pairs {
        check_no_test_post(
            assignment,
            &[pair.t1.post_id.as_str(), pair.t2.post_id.as_str()],
            "pair instruction",
        )?;
        if tasks.contains(&InstructionTask::TsGt) {
            report
                .examples
                .extend(gt_examples_for_pair(pair, accounts, registry, None)?);
        }
        if tasks.contains(&InstructionTask::TsCt) {
            report
                .examples
                .extend(ct_examples_for_pair(pair, accounts, registry, None)?);
        }
    }

    report
        .examples
        .sort_by(|a, b| (&a.task, &a.input).cmp(&(&b.task, &b.input)));
    for e in &report.examples {
        *report.per_task.entry(e.task.clone()).or_default() += 1;
    }
    Ok(report)
}

#[derive(Debug, Default)]
pub struct AugmentationReport {
    pub examples: Vec<InstructionExample>,
    pub augmented_pairs: usize,
    pub failed_generations: usize,
}

/// Emit TS examples for the given pair sample, attaching a generated
/// explanation of why the better side wins to `k` seeded-sampled pairs.
/// Generation failures leave those pairs unaugmented and are counted.
/// Explanations ride the provider cache, so reruns are free.
pub fn synthesize_explanations(
    pairs: &[TranssuasionPair],
    accounts: &AccountMap,
    registry: &TemplateRegistry,
    generator: &dyn Provider,
    k: usize,
    seed: u64,
) -> Result<AugmentationReport, BenchError> {
    let mut report = AugmentationReport::default();

    let mut keys: Vec<String> = pairs.iter().map(TranssuasionPair::key).collect();
    keys.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);
    let selected: BTreeSet<&str> = keys.iter().take(k.min(keys.len())).map(String::as_str).collect();

    let template = registry.get("explain")?;
    let mut ordered: Vec<&TranssuasionPair> = pairs.iter().collect();
    ordered.sort_by_key(|p| p.key());

    for pair in ordered {
        let key = pair.key();
        let explanation = if selected.contains(key.as_str()) {
            let prompt = template.render(&template_vars! {
                "tweet_a" => pair.t1.normalized_text(),
                "tweet_b" => pair.t2.normalized_text(),
            })?;
            match providers::generate_text(generator, &prompt) {
                Ok(text) => {
                    report.augmented_pairs += 1;
                    Some(text)
                }
                Err(_) => {
                    report.failed_generations += 1;
                    None
                }
            }
        } else {
            None
        };
        report.examples.extend(gt_examples_for_pair(
            pair,
            accounts,
            registry,
            explanation.as_deref(),
        )?);
        report.examples.extend(ct_examples_for_pair(
            pair,
            accounts,
            registry,
            explanation.as_deref(),
        )?);
    }
    Ok(report)
}

/// Write instruction examples as NDJSON; byte-identical across runs for the
/// same inputs.
pub fn write_instructions<W: std::io::Write>(
    writer: &mut W,
    examples: &[InstructionExample],
) -> Result<(), BenchError> {
    for example in examples {
        serde_json::to_writer(&mut *writer, example)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
