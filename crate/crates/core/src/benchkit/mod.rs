//! Benchmark construction and scoring: stratified splits, task instances
//! for every task family, the prompt-template registry, text-generation
//! metrics, and the instruction-dataset emitter.

pub mod human;
pub mod instances;
pub mod instructions;
pub mod metrics;
pub mod splits;
pub mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pairminer::PairType;

pub use instances::{
    build_blog_instances, build_bs_instances, build_cs_instances, build_ct_instances,
    build_gt_instances, build_tc_instances, BlogRecord, CsVariant,
};
pub use instructions::{emit_instructions, synthesize_explanations, InstructionExample};
pub use splits::{make_splits, Regime, SplitAssignment, SplitSpec};
pub use templates::{PromptTemplate, TemplateRegistry};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("template {template} is missing variable {name}")]
    MissingVariable { template: String, name: String },
    #[error("template {template} left placeholder {{{name}}} unresolved")]
    UnresolvedPlaceholder { template: String, name: String },
    #[error("template source {origin}: {reason}")]
    TemplateFormat { origin: String, reason: String },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("split configuration: {0}")]
    SplitConfig(String),
    #[error("post {0} has no like percentile")]
    Unpercentiled(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("train/test leakage: {0}")]
    Leakage(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Provider(#[from] crate::providers::ProviderError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Every task family an instance can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "BS")]
    Bs,
    #[serde(rename = "CS-Key")]
    CsKey,
    #[serde(rename = "CS-Web")]
    CsWeb,
    #[serde(rename = "CS-Img")]
    CsImg,
    #[serde(rename = "TS-CT")]
    TsCt,
    #[serde(rename = "TS-GT")]
    TsGt(PairType),
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "Blog-Views")]
    BlogViews,
    #[serde(rename = "Blog-Dwell")]
    BlogDwell,
    #[serde(rename = "HE-Vote")]
    HeVote,
    #[serde(rename = "HE-Reason")]
    HeReason,
    #[serde(rename = "HE-Feedback")]
    HeFeedback,
    #[serde(rename = "HE-Opinion")]
    HeOpinion,
}

impl TaskKind {
    pub fn tag(&self) -> String {
        match self {
            TaskKind::Bs => "BS".to_string(),
            TaskKind::CsKey => "CS-Key".to_string(),
            TaskKind::CsWeb => "CS-Web".to_string(),
            TaskKind::CsImg => "CS-Img".to_string(),
            TaskKind::TsCt => "TS-CT".to_string(),
            TaskKind::TsGt(t) => format!("TS-GT-{}", t.as_str()),
            TaskKind::Tc => "TC".to_string(),
            TaskKind::BlogViews => "Blog-Views".to_string(),
            TaskKind::BlogDwell => "Blog-Dwell".to_string(),
            TaskKind::HeVote => "HE-Vote".to_string(),
            TaskKind::HeReason => "HE-Reason".to_string(),
            TaskKind::HeFeedback => "HE-Feedback".to_string(),
            TaskKind::HeOpinion => "HE-Opinion".to_string(),
        }
    }
}

/// Train/test side of a split, tagged with its regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSide {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTag {
    pub regime: splits::Regime,
    pub side: SplitSide,
}

/// Which of the two presented orders a comparative instance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderVariant {
    Ab,
    Ba,
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: String,
    pub task: TaskKind,
    pub prompt: String,
    #[serde(default)]
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_variant: Option<OrderVariant>,
    /// The low-engagement dataset text; the arena's baseline anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account_id: Option<String>,
}

/// Read task instances from NDJSON.
pub fn read_instances<R: std::io::BufRead>(reader: R) -> Result<Vec<TaskInstance>, BenchError> {
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

/// Write task instances as NDJSON, ordered by instance id.
pub fn write_instances<W: std::io::Write>(
    writer: &mut W,
    instances: &[TaskInstance],
) -> Result<(), BenchError> {
    let mut sorted: Vec<&TaskInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    for instance in sorted {
        serde_json::to_writer(&mut *writer, instance)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
