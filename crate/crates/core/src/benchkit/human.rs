//! Human-study transfer tasks: instances are built from study export files
//! and scored against the predictions of a generator/scorer under test.

use serde::{Deserialize, Serialize};

use super::metrics;
use super::templates::TemplateRegistry;
use super::{BenchError, TaskInstance, TaskKind};
use crate::providers::{self, Provider, ProviderError};
use crate::template_vars;

/// One record of a human study export (NDJSON, one per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanStudyRecord {
    /// The participant up- or down-voted a shown text.
    Vote {
        record_id: String,
        text: String,
        /// "upvoted" or "downvoted"
        vote: String,
    },
    /// The participant picked one reason from listed options.
    Reason {
        record_id: String,
        text: String,
        /// "upvote" or "downvote"
        direction: String,
        options: Vec<String>,
        /// option letter, e.g. "B"
        label: String,
    },
    /// The participant left free-text feedback.
    Feedback {
        record_id: String,
        text: String,
        feedback: String,
    },
    /// Opinion shift on a 1-7 scale after reading an argument.
    Opinion {
        record_id: String,
        claim: String,
        initial_rating: u8,
        argument: String,
        final_rating: u8,
    },
}

pub fn read_study_records<R: std::io::BufRead>(
    reader: R,
) -> Result<Vec<HumanStudyRecord>, BenchError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn option_block(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("({}) {}", (b'A' + i as u8) as char, o))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Build task instances from study records.
pub fn build_he_instances(
    records: &[HumanStudyRecord],
    registry: &TemplateRegistry,
) -> Result<Vec<TaskInstance>, BenchError> {
    let mut out = Vec::new();
    for record in records {
        let instance = match record {
            HumanStudyRecord::Vote { record_id, text, vote } => TaskInstance {
                instance_id: format!("he-vote:{record_id}"),
                task: TaskKind::HeVote,
                prompt: registry
                    .get("he-vote")?
                    .render(&template_vars! { "tweet" => text })?,
                references: vec![],
                label: Some(vote.clone()),
                split: None,
                order_variant: None,
                baseline_text: None,
                account_id: None,
            },
            HumanStudyRecord::Reason {
                record_id,
                text,
                direction,
                options,
                label,
            } => {
                let template = if direction == "downvote" {
                    "he-reason-downvote"
                } else {
                    "he-reason-upvote"
                };
                TaskInstance {
                    instance_id: format!("he-reason:{record_id}"),
                    task: TaskKind::HeReason,
                    prompt: registry.get(template)?.render(&template_vars! {
                        "tweet" => text,
                        "options" => option_block(options),
                    })?,
                    references: options.clone(),
                    label: Some(label.clone()),
                    split: None,
                    order_variant: None,
                    baseline_text: None,
                    account_id: None,
                }
            }
            HumanStudyRecord::Feedback {
                record_id,
                text,
                feedback,
            } => TaskInstance {
                instance_id: format!("he-feedback:{record_id}"),
                task: TaskKind::HeFeedback,
                prompt: registry
                    .get("he-feedback")?
                    .render(&template_vars! { "tweet" => text })?,
                references: vec![feedback.clone()],
                label: None,
                split: None,
                order_variant: None,
                baseline_text: None,
                account_id: None,
            },
            HumanStudyRecord::Opinion {
                record_id,
                claim,
                initial_rating,
                argument,
                final_rating,
            } => TaskInstance {
                instance_id: format!("he-opinion:{record_id}"),
                task: TaskKind::HeOpinion,
                prompt: registry.get("he-opinion")?.render(&template_vars! {
                    "claim" => claim,
                    "initial_rating" => initial_rating,
                    "argument" => argument,
                })?,
                references: vec![],
                label: Some(final_rating.to_string()),
                split: None,
                order_variant: None,
                baseline_text: None,
                account_id: None,
            },
        };
        out.push(instance);
    }
    out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(out)
}

/// Transfer-task report. Unavailable sections record why they were skipped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HumanTransferReport {
    pub vote_accuracy: Option<f64>,
    pub reason_accuracy: Option<f64>,
    pub feedback_mean_logprob: Option<f64>,
    pub opinion_spearman: Option<f64>,
    pub counts: std::collections::BTreeMap<String, usize>,
    pub skipped: Vec<String>,
}

fn parse_vote(response: &str) -> String {
    let lower = response.to_lowercase();
    if lower.contains("down") {
        "downvoted".to_string()
    } else {
        "upvoted".to_string()
    }
}

fn parse_option_letter(response: &str) -> String {
    response
        .chars()
        .find(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_uppercase().to_string())
        .unwrap_or_default()
}

fn parse_rating(response: &str) -> Option<f64> {
    response
        .chars()
        .find(|c| ('1'..='7').contains(c))
        .and_then(|c| c.to_digit(10))
        .map(|d| d as f64)
}

/// Score human-study instances: 2-way vote accuracy, reason option
/// accuracy, mean log-likelihood of the true feedback, and Spearman
/// correlation of predicted vs. true opinion ratings. A missing scorer (or
/// one without log-probability support) skips the feedback section.
pub fn score_human_transfer(
    instances: &[TaskInstance],
    generator: &dyn Provider,
    scorer: Option<&dyn Provider>,
) -> Result<HumanTransferReport, BenchError> {
    let mut report = HumanTransferReport::default();
    let mut vote_pred = Vec::new();
    let mut vote_true = Vec::new();
    let mut reason_pred = Vec::new();
    let mut reason_true = Vec::new();
    let mut feedback_scores = Vec::new();
    let mut opinion_pred = Vec::new();
    let mut opinion_true = Vec::new();

    for instance in instances {
        match instance.task {
            TaskKind::HeVote => {
                let response = providers::generate_text(generator, &instance.prompt)?;
                vote_pred.push(parse_vote(&response));
                vote_true.push(instance.label.clone().unwrap_or_default());
            }
            TaskKind::HeReason => {
                let response = providers::generate_text(generator, &instance.prompt)?;
                reason_pred.push(parse_option_letter(&response));
                reason_true.push(instance.label.clone().unwrap_or_default());
            }
            TaskKind::HeFeedback => match scorer {
                Some(scorer) => {
                    let target = instance.references.first().map(String::as_str).unwrap_or("");
                    match providers::score_completion(scorer, &instance.prompt, target) {
                        Ok(score) => feedback_scores.push(score.mean_logprob()),
                        Err(ProviderError::Capability(reason)) => {
                            report.skipped.push(format!(
                                "{}: feedback scoring unavailable: {reason}",
                                instance.instance_id
                            ));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                None => report.skipped.push(format!(
                    "{}: feedback scoring unavailable: no scorer configured",
                    instance.instance_id
                )),
            },
            TaskKind::HeOpinion => {
                let response = providers::generate_text(generator, &instance.prompt)?;
                let true_rating: f64 = instance
                    .label
                    .as_deref()
                    .and_then(|l| l.parse().ok())
                    .unwrap_or(0.0);
                if let Some(pred) = parse_rating(&response) {
                    opinion_pred.push(pred);
                    opinion_true.push(true_rating);
                }
            }
            _ => {}
        }
    }

    report.counts.insert("vote".to_string(), vote_pred.len());
    report.counts.insert("reason".to_string(), reason_pred.len());
    report
        .counts
        .insert("feedback".to_string(), feedback_scores.len());
    report.counts.insert("opinion".to_string(), opinion_pred.len());

    if !vote_pred.is_empty() {
        report.vote_accuracy = Some(metrics::accuracy(&vote_pred, &vote_true)?);
    }
    if !reason_pred.is_empty() {
        report.reason_accuracy = Some(metrics::accuracy(&reason_pred, &reason_true)?);
    }
    if !feedback_scores.is_empty() {
        report.feedback_mean_logprob = Some(metrics::compensated_mean(&feedback_scores));
    }
    if opinion_pred.len() >= 2 {
        match metrics::spearman(&opinion_pred, &opinion_true) {
            Ok(rho) => report.opinion_spearman = Some(rho),
            Err(BenchError::UndefinedCorrelation(reason)) => {
                report.skipped.push(format!("opinion correlation undefined: {reason}"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{FnGenerator, MockScorer};

    fn study_fixture() -> Vec<HumanStudyRecord> {
        vec![
            HumanStudyRecord::Vote {
                record_id: "v1".into(),
                text: "great new feature".into(),
                vote: "upvoted".into(),
            },
            HumanStudyRecord::Vote {
                record_id: "v2".into(),
                text: "irrelevant output".into(),
                vote: "downvoted".into(),
            },
            HumanStudyRecord::Reason {
                record_id: "r1".into(),
                text: "nice caption".into(),
                direction: "upvote".into(),
                options: vec![
                    "Prompt accurately interpreted".into(),
                    "High quality".into(),
                    "Great for inspiration".into(),
                    "Production ready".into(),
                    "Exceeds expectation".into(),
                ],
                label: "B".into(),
            },
            HumanStudyRecord::Feedback {
                record_id: "f1".into(),
                text: "caption text".into(),
                feedback: "too generic for my brand".into(),
            },
            HumanStudyRecord::Opinion {
                record_id: "o1".into(),
                claim: "claim one".into(),
                initial_rating: 3,
                argument: "argument".into(),
                final_rating: 5,
            },
            HumanStudyRecord::Opinion {
                record_id: "o2".into(),
                claim: "claim two".into(),
                initial_rating: 4,
                argument: "argument".into(),
                final_rating: 2,
            },
            HumanStudyRecord::Opinion {
                record_id: "o3".into(),
                claim: "claim three".into(),
                initial_rating: 2,
                argument: "argument".into(),
                final_rating: 7,
            },
        ]
    }

    #[test]
    fn instances_render_from_records() {
        let registry = TemplateRegistry::builtin();
        let instances = build_he_instances(&study_fixture(), &registry).unwrap();
        assert_eq!(instances.len(), 7);
        let reason = instances.iter().find(|i| i.task == TaskKind::HeReason).unwrap();
        assert!(reason.prompt.contains("(A) Prompt accurately interpreted"));
        assert!(reason.prompt.contains("(E) Exceeds expectation"));
        let opinion = instances.iter().find(|i| i.instance_id == "he-opinion:o1").unwrap();
        assert!(opinion.prompt.contains("Initial Rating: 3"));
        assert_eq!(opinion.label.as_deref(), Some("5"));
    }

    #[test]
    fn perfect_predictor_scores_perfectly() {
        let registry = TemplateRegistry::builtin();
        let instances = build_he_instances(&study_fixture(), &registry).unwrap();
        // oracle generator: reads the needed answer out of the prompt fixture
        let generator = FnGenerator::new(|prompt: &str| {
            Ok(if prompt.contains("irrelevant output") {
                "downvoted".to_string()
            } else if prompt.contains("nice caption") {
                "B".to_string()
            } else if prompt.contains("claim one") {
                "5".to_string()
            } else if prompt.contains("claim two") {
                "2".to_string()
            } else if prompt.contains("claim three") {
                "7".to_string()
            } else {
                "upvoted".to_string()
            })
        });
        let scorer = MockScorer::uniform(-1.5);
        let report = score_human_transfer(&instances, &generator, Some(&scorer)).unwrap();
        assert_eq!(report.vote_accuracy, Some(1.0));
        assert_eq!(report.reason_accuracy, Some(1.0));
        assert!((report.opinion_spearman.unwrap() - 1.0).abs() < 1e-12);
        assert!((report.feedback_mean_logprob.unwrap() + 1.5).abs() < 1e-12);
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn missing_scorer_skips_feedback_only() {
        let registry = TemplateRegistry::builtin();
        let instances = build_he_instances(&study_fixture(), &registry).unwrap();
        let generator = FnGenerator::new(|_: &str| Ok("upvoted".to_string()));
        let report = score_human_transfer(&instances, &generator, None).unwrap();
        assert!(report.feedback_mean_logprob.is_none());
        assert!(!report.skipped.is_empty());
        assert!(report.vote_accuracy.is_some());
    }

    #[test]
    fn records_roundtrip_ndjson() {
        let records = study_fixture();
        let mut buf = Vec::new();
        for r in &records {
            serde_json::to_writer(&mut buf, r).unwrap();
            buf.push(b'\n');
        }
        let back = read_study_records(&buf[..]).unwrap();
        assert_eq!(back, records);
    }
}
