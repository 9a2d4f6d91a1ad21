//! Same-account pair mining: candidate generation with time-window
//! blocking, gate checks, transsuasion type assignment, and per-post
//! multiplicity capping.
//!
//! Type assignment applies a fixed most-specific-first precedence, since the
//! per-type predicates overlap: Hilight, VisOnly, TextOnly, AddImg, Ref,
//! Parap, FFRef, FFPara. Identical evidence always yields the same type.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PostRecord;
use crate::providers::Embedder;
use crate::simtext::{self, SimError};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Provider(#[from] crate::providers::ProviderError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// The eight same-account transsuasion types, in assignment precedence
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairType {
    Hilight,
    VisOnly,
    TextOnly,
    AddImg,
    Ref,
    Parap,
    FFRef,
    FFPara,
}

impl PairType {
    pub const ALL: [PairType; 8] = [
        PairType::Hilight,
        PairType::VisOnly,
        PairType::TextOnly,
        PairType::AddImg,
        PairType::Ref,
        PairType::Parap,
        PairType::FFRef,
        PairType::FFPara,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairType::Hilight => "Hilight",
            PairType::VisOnly => "VisOnly",
            PairType::TextOnly => "TextOnly",
            PairType::AddImg => "AddImg",
            PairType::Ref => "Ref",
            PairType::Parap => "Parap",
            PairType::FFRef => "FFRef",
            PairType::FFPara => "FFPara",
        }
    }
}

impl std::fmt::Display for PairType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PairType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PairType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown pair type: {s}"))
    }
}

/// Which engagement-gap measure gates a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMetric {
    /// Gap in within-group like percentile points.
    Percentile,
    /// Raw relative like lift, in percent of the lower side's likes.
    RelativeLift,
}

/// Whether the edit threshold applies to edit similarity or to normalized
/// edit distance (`1 - similarity`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditMetric {
    Similarity,
    Distance,
}

/// Per-type similarity gates. `None` means the type does not gate on that
/// measure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeGate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_sim_min: Option<f64>,
}

/// All gate thresholds for mining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    /// Maximum days between pair members.
    pub max_day_gap: f64,
    /// Minimum insert+delete character difference between the texts.
    pub min_char_diff: usize,
    /// Maximum number of pairs any single post may appear in.
    pub max_pairs_per_post: usize,
    /// Minimum engagement gap (percentile points, or percent lift under
    /// [`DeltaMetric::RelativeLift`]).
    pub delta_percentile_min: f64,
    pub delta_metric: DeltaMetric,
    pub edit_metric: EditMetric,
    pub type_gates: BTreeMap<PairType, TypeGate>,
}

impl Default for GateThresholds {
    fn default() -> Self {
        let strong = TypeGate {
            cosine_min: Some(0.8),
            edit_min: None,
            media_sim_min: None,
        };
        let loose = TypeGate {
            cosine_min: Some(0.6),
            edit_min: Some(0.6),
            media_sim_min: None,
        };
        let mut type_gates = BTreeMap::new();
        type_gates.insert(PairType::Hilight, loose);
        type_gates.insert(
            PairType::VisOnly,
            TypeGate {
                cosine_min: None,
                edit_min: None,
                media_sim_min: Some(0.7),
            },
        );
        type_gates.insert(PairType::TextOnly, strong);
        type_gates.insert(PairType::AddImg, loose);
        type_gates.insert(PairType::Ref, strong);
        type_gates.insert(PairType::Parap, loose);
        type_gates.insert(PairType::FFRef, strong);
        type_gates.insert(PairType::FFPara, loose);
        GateThresholds {
            max_day_gap: 45.0,
            min_char_diff: 5,
            max_pairs_per_post: 20,
            delta_percentile_min: 40.0,
            delta_metric: DeltaMetric::Percentile,
            edit_metric: EditMetric::Similarity,
            type_gates,
        }
    }
}

/// An ordered pair: `t1` underperformed, `t2` outperformed, same account,
/// close in time, with the gate evidence that admitted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranssuasionPair {
    pub t1: PostRecord,
    pub t2: PostRecord,
    pub pair_type: PairType,
    pub cosine: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_sim: Option<f64>,
    pub day_gap: f64,
    pub percentile_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl TranssuasionPair {
    /// Stable identity for a pair within one corpus.
    pub fn key(&self) -> String {
        format!("{}~{}", self.t1.post_id, self.t2.post_id)
    }
}

pub const CONTEXT_WORD_LIMIT: usize = 150;

/// Webpage excerpts keyed by normalized link (`domain/path`), supplied as an
/// ingestion side-file. Excerpts are truncated to 150 words at load.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContextStore {
    map: BTreeMap<String, String>,
}

impl ContextStore {
    pub fn insert(&mut self, normalized_link: &str, excerpt: &str) {
        self.map.insert(
            normalized_link.to_string(),
            truncate_words(excerpt, CONTEXT_WORD_LIMIT),
        );
    }

    pub fn get(&self, normalized_link: &str) -> Option<&str> {
        self.map.get(normalized_link).map(String::as_str)
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
        let mut store = ContextStore::default();
        for (k, v) in raw {
            store.insert(&k, &v);
        }
        Ok(store)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn truncate_words(text: &str, limit: usize) -> String {
    text.split_whitespace().take(limit).collect::<Vec<_>>().join(" ")
}

fn percentile_of(post: &PostRecord) -> f64 {
    post.like_percentile.unwrap_or(50.0)
}

/// All unordered same-account candidate pairs within the day-gap window,
/// each exactly once, lower-percentile post first. Posts are blocked by
/// account and sorted by time, so cost is the sum of per-account window
/// sizes rather than a global cross product.
pub fn generate_candidates<'a>(
    posts: &'a [PostRecord],
    thresholds: &GateThresholds,
) -> impl Iterator<Item = (&'a PostRecord, &'a PostRecord)> + 'a {
    let mut by_account: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in posts.iter().enumerate() {
        by_account.entry(p.account_id.as_str()).or_default().push(i);
    }
    let mut blocks: Vec<Vec<usize>> = by_account.into_values().collect();
    for block in &mut blocks {
        block.sort_by(|&a, &b| {
            (posts[a].created_at, &posts[a].post_id).cmp(&(posts[b].created_at, &posts[b].post_id))
        });
    }
    CandidateIter {
        posts,
        blocks,
        block: 0,
        i: 0,
        j: 1,
        max_gap_secs: (thresholds.max_day_gap * 86_400.0) as i64,
    }
}

struct CandidateIter<'a> {
    posts: &'a [PostRecord],
    blocks: Vec<Vec<usize>>,
    block: usize,
    i: usize,
    j: usize,
    max_gap_secs: i64,
}

impl<'a> Iterator for CandidateIter<'a> {
    type Item = (&'a PostRecord, &'a PostRecord);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let block = self.blocks.get(self.block)?;
            if self.i + 1 >= block.len() {
                self.block += 1;
                self.i = 0;
                self.j = 1;
                continue;
            }
            if self.j >= block.len() {
                self.i += 1;
                self.j = self.i + 1;
                continue;
            }
            let a = &self.posts[block[self.i]];
            let b = &self.posts[block[self.j]];
            if (b.created_at - a.created_at).num_seconds() > self.max_gap_secs {
                // time-sorted block: every later j is also out of window
                self.i += 1;
                self.j = self.i + 1;
                continue;
            }
            self.j += 1;
            let (t1, t2) = if percentile_of(a) < percentile_of(b)
                || (percentile_of(a) == percentile_of(b)
                    && (a.created_at, &a.post_id) < (b.created_at, &b.post_id))
            {
                (a, b)
            } else {
                (b, a)
            };
            return Some((t1, t2));
        }
    }
}

/// The measurements a typing decision is made from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateEvidence {
    pub media_t1: bool,
    pub media_t2: bool,
    pub link_match: bool,
    pub cosine: f64,
    pub edit_sim: f64,
    pub media_sim: Option<f64>,
}

fn edit_measure(edit_sim: f64, metric: EditMetric) -> f64 {
    match metric {
        EditMetric::Similarity => edit_sim,
        EditMetric::Distance => 1.0 - edit_sim,
    }
}

fn gate_matches(gate: &TypeGate, evidence: &GateEvidence, edit_metric: EditMetric) -> bool {
    if let Some(min) = gate.cosine_min {
        if evidence.cosine <= min {
            return false;
        }
    }
    if let Some(min) = gate.edit_min {
        if edit_measure(evidence.edit_sim, edit_metric) <= min {
            return false;
        }
    }
    if let Some(min) = gate.media_sim_min {
        match evidence.media_sim {
            Some(sim) if sim > min => {}
            _ => return false,
        }
    }
    true
}

/// Assign the transsuasion type for complete gate evidence according to the
/// frozen precedence order. `None` means no type's gate matched.
pub fn assign_type(evidence: &GateEvidence, thresholds: &GateThresholds) -> Option<PairType> {
    let matches = |ty: PairType| {
        thresholds
            .type_gates
            .get(&ty)
            .map(|g| gate_matches(g, evidence, thresholds.edit_metric))
            .unwrap_or(false)
    };
    let no_media = !evidence.media_t1 && !evidence.media_t2;
    let any_media = evidence.media_t1 || evidence.media_t2;

    if evidence.link_match && matches(PairType::Hilight) {
        return Some(PairType::Hilight);
    }
    if evidence.media_t1 && evidence.media_t2 && matches(PairType::VisOnly) {
        return Some(PairType::VisOnly);
    }
    if evidence.media_t2 && matches(PairType::TextOnly) {
        return Some(PairType::TextOnly);
    }
    if evidence.media_t2 && !evidence.media_t1 && matches(PairType::AddImg) {
        return Some(PairType::AddImg);
    }
    if no_media && matches(PairType::Ref) {
        return Some(PairType::Ref);
    }
    if no_media && matches(PairType::Parap) {
        return Some(PairType::Parap);
    }
    if any_media && matches(PairType::FFRef) {
        return Some(PairType::FFRef);
    }
    if any_media && matches(PairType::FFPara) {
        return Some(PairType::FFPara);
    }
    None
}

/// Outcome of gating one candidate.
#[derive(Debug)]
pub enum GateOutcome {
    Accepted(Box<TranssuasionPair>),
    Rejected { reason: &'static str },
    /// A media-bearing side is missing its caption; queue for captioning.
    Deferred { reason: String },
}

/// Smallest normalized link shared by both posts, if any.
pub fn shared_link(t1: &PostRecord, t2: &PostRecord) -> Option<String> {
    t1.link_domains
        .iter()
        .filter(|d| t2.link_domains.contains(d))
        .min()
        .cloned()
}

/// Apply every gate to one candidate and assign its type.
pub fn gate_pair(
    t1: &PostRecord,
    t2: &PostRecord,
    thresholds: &GateThresholds,
    embedder: &Embedder<'_>,
    contexts: &ContextStore,
) -> Result<GateOutcome, MinerError> {
    let percentile_gap = percentile_of(t2) - percentile_of(t1);
    let delta = match thresholds.delta_metric {
        DeltaMetric::Percentile => percentile_gap,
        DeltaMetric::RelativeLift => {
            100.0 * (t2.like_count as f64 - t1.like_count as f64) / (t1.like_count.max(1) as f64)
        }
    };
    if delta < thresholds.delta_percentile_min {
        return Ok(GateOutcome::Rejected {
            reason: "engagement_gap",
        });
    }

    let text1 = t1.normalized_text();
    let text2 = t2.normalized_text();
    if simtext::edit_char_diff(&text1, &text2) < thresholds.min_char_diff {
        return Ok(GateOutcome::Rejected { reason: "char_diff" });
    }

    for post in [t1, t2] {
        if let Some(asset) = post.primary_media() {
            if asset.caption.is_none() {
                return Ok(GateOutcome::Deferred {
                    reason: format!("asset {} uncaptioned", asset.asset_id),
                });
            }
        }
    }

    let e1 = embedder.embed(&text1)?;
    let e2 = embedder.embed(&text2)?;
    let cosine = simtext::cosine_similarity(&e1.values, &e2.values)?.value;
    let edit_sim = simtext::edit_similarity(&text1, &text2).value;
    let media_sim = match (t1.primary_media(), t2.primary_media()) {
        (Some(m1), Some(m2)) => Some(simtext::media_similarity(m1, m2, embedder.provider())?.value),
        _ => None,
    };
    let link = shared_link(t1, t2);

    let evidence = GateEvidence {
        media_t1: t1.has_media(),
        media_t2: t2.has_media(),
        link_match: link.is_some(),
        cosine,
        edit_sim,
        media_sim,
    };
    let Some(pair_type) = assign_type(&evidence, thresholds) else {
        return Ok(GateOutcome::Rejected { reason: "untyped" });
    };

    let context = if pair_type == PairType::Hilight {
        link.as_deref().and_then(|l| contexts.get(l)).map(str::to_string)
    } else {
        None
    };
    let day_gap = (t2.created_at - t1.created_at).num_seconds().abs() as f64 / 86_400.0;

    Ok(GateOutcome::Accepted(Box::new(TranssuasionPair {
        t1: t1.clone(),
        t2: t2.clone(),
        pair_type,
        cosine,
        edit_sim: Some(edit_sim),
        media_sim,
        day_gap,
        percentile_gap,
        context,
    })))
}

/// Keep pairs greedily in descending engagement-gap order, skipping any pair
/// that would push either member past `max_pairs_per_post` occurrences.
/// Ties break on the (t1, t2) post id pair.
pub fn cap_multiplicity(
    mut pairs: Vec<TranssuasionPair>,
    max_pairs_per_post: usize,
) -> Vec<TranssuasionPair> {
    pairs.sort_by(|a, b| {
        b.percentile_gap
            .partial_cmp(&a.percentile_gap)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (&a.t1.post_id, &a.t2.post_id).cmp(&(&b.t1.post_id, &b.t2.post_id)))
    });
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut keep = vec![false; pairs.len()];
    for (i, pair) in pairs.iter().enumerate() {
        let c1 = counts.get(pair.t1.post_id.as_str()).copied().unwrap_or(0);
        let c2 = counts.get(pair.t2.post_id.as_str()).copied().unwrap_or(0);
        if c1 < max_pairs_per_post && c2 < max_pairs_per_post {
            keep[i] = true;
            *counts.entry(pair.t1.post_id.as_str()).or_default() += 1;
            *counts.entry(pair.t2.post_id.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<TranssuasionPair> = pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    sort_pairs_canonical(&mut kept);
    kept
}

/// Canonical pair ordering, independent of mining schedule.
pub fn sort_pairs_canonical(pairs: &mut [TranssuasionPair]) {
    pairs.sort_by(|a, b| {
        (&a.t1.account_id, a.t1.created_at, &a.t1.post_id, &a.t2.post_id).cmp(&(
            &b.t1.account_id,
            b.t1.created_at,
            &b.t1.post_id,
            &b.t2.post_id,
        ))
    });
}

/// A candidate that could not be gated yet, queued for retry after
/// captioning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeferredCandidate {
    pub t1_post_id: String,
    pub t2_post_id: String,
    pub reason: String,
}

/// Full mining result with per-type counts and the retry queue.
#[derive(Debug, Default)]
pub struct MineOutcome {
    pub pairs: Vec<TranssuasionPair>,
    pub per_type: BTreeMap<PairType, u64>,
    pub rejects: BTreeMap<String, u64>,
    pub deferred: Vec<DeferredCandidate>,
}

/// Candidate generation, gating, and capping, composed.
pub fn mine_pairs(
    posts: &[PostRecord],
    thresholds: &GateThresholds,
    embedder: &Embedder<'_>,
    contexts: &ContextStore,
) -> Result<MineOutcome, MinerError> {
    let mut outcome = MineOutcome::default();
    let mut accepted = Vec::new();
    for (t1, t2) in generate_candidates(posts, thresholds) {
        match gate_pair(t1, t2, thresholds, embedder, contexts)? {
            GateOutcome::Accepted(pair) => accepted.push(*pair),
            GateOutcome::Rejected { reason } => {
                *outcome.rejects.entry(reason.to_string()).or_default() += 1;
            }
            GateOutcome::Deferred { reason } => outcome.deferred.push(DeferredCandidate {
                t1_post_id: t1.post_id.clone(),
                t2_post_id: t2.post_id.clone(),
                reason,
            }),
        }
    }
    outcome.pairs = cap_multiplicity(accepted, thresholds.max_pairs_per_post);
    for pair in &outcome.pairs {
        *outcome.per_type.entry(pair.pair_type).or_default() += 1;
    }
    outcome
        .deferred
        .sort_by(|a, b| (&a.t1_post_id, &a.t2_post_id).cmp(&(&b.t1_post_id, &b.t2_post_id)));
    Ok(outcome)
}

/// Read pairs from NDJSON.
pub fn read_pairs<R: std::io::BufRead>(reader: R) -> Result<Vec<TranssuasionPair>, MinerError> {
    let mut pairs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line)?);
    }
    Ok(pairs)
}

/// Write pairs as NDJSON with full gate evidence, canonically ordered.
pub fn write_pairs<W: std::io::Write>(
    writer: &mut W,
    pairs: &[TranssuasionPair],
) -> Result<(), MinerError> {
    let mut sorted = pairs.to_vec();
    sort_pairs_canonical(&mut sorted);
    for pair in &sorted {
        serde_json::to_writer(&mut *writer, pair)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
