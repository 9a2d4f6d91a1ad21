//! Uniform contract for external model services: embedder, captioner,
//! judge, generator, classifier, and log-probability scorer.
//!
//! Every service speaks the same HTTP+JSON shape (`{role, task, payload}` in,
//! `{payload}` out), so one client, one disk cache, and one family of mocks
//! cover all six roles. Role checks happen before any network activity.

pub mod cache;
pub mod http;
pub mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::MediaAsset;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("role mismatch: operation requires {expected}, provider is {actual}")]
    RoleMismatch { expected: Role, actual: Role },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider lacks capability: {0}")]
    Capability(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// The six service roles the pipeline can call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Embedder,
    Captioner,
    Judge,
    Generator,
    Classifier,
    Scorer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Embedder => "embedder",
            Role::Captioner => "captioner",
            Role::Judge => "judge",
            Role::Generator => "generator",
            Role::Classifier => "classifier",
            Role::Scorer => "scorer",
        }
    }

    pub const ALL: [Role; 6] = [
        Role::Embedder,
        Role::Captioner,
        Role::Judge,
        Role::Generator,
        Role::Classifier,
        Role::Scorer,
    ];
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role: {s}"))
    }
}

/// Connection settings for one provider endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub role: Role,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    2
}

impl ProviderConfig {
    pub fn new(role: Role, endpoint: impl Into<String>) -> Self {
        ProviderConfig {
            endpoint: endpoint.into(),
            role,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            cache_dir: None,
            api_key: None,
        }
    }

    /// Apply `PROVIDER_<ROLE>_URL` / `PROVIDER_<ROLE>_KEY` overrides.
    pub fn with_env_overrides(mut self) -> Self {
        let tag = self.role.as_str().to_uppercase();
        if let Ok(url) = std::env::var(format!("PROVIDER_{tag}_URL")) {
            self.endpoint = url;
        }
        if let Ok(key) = std::env::var(format!("PROVIDER_{tag}_KEY")) {
            self.api_key = Some(key);
        }
        self
    }
}

/// One request on the wire: which role, which task, and an opaque payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub role: Role,
    pub task: String,
    pub payload: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub payload: Value,
}

/// A callable model service. Implementations must be safe to call from
/// multiple worker threads.
pub trait Provider: Send + Sync {
    fn role(&self) -> Role;
    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

fn check_role(provider: &dyn Provider, expected: Role) -> Result<(), ProviderError> {
    let actual = provider.role();
    if actual != expected {
        return Err(ProviderError::RoleMismatch { expected, actual });
    }
    Ok(())
}

/// A fixed-length real vector from an embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
}

/// Outcome of a pairwise judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
    Tie,
}

/// A judge's verdict with the raw response retained for audit. `Tie` only
/// occurs when the response matched neither option token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub winner: Winner,
    pub raw_response: String,
}

impl JudgeVerdict {
    /// True when the verdict came from the unparseable-response fallback.
    pub fn is_parse_fallback(&self) -> bool {
        self.winner == Winner::Tie
    }
}

/// Per-token log probabilities for a scored completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

impl TokenScore {
    /// Mean log-likelihood: `sum(logprobs) / token_count`.
    pub fn mean_logprob(&self) -> f64 {
        if self.logprobs.is_empty() {
            return 0.0;
        }
        self.logprobs.iter().sum::<f64>() / self.logprobs.len() as f64
    }
}

/// Embed one text. Deterministic for identical input when the provider is
/// wrapped in a cache.
pub fn embed_text(provider: &dyn Provider, text: &str) -> Result<EmbeddingVector, ProviderError> {
    check_role(provider, Role::Embedder)?;
    let response = provider.call(&ProviderRequest {
        role: Role::Embedder,
        task: "embed".to_string(),
        payload: json!({ "text": text }),
    })?;
    let values: Vec<f64> = serde_json::from_value(
        response
            .payload
            .get("vector")
            .cloned()
            .ok_or_else(|| ProviderError::Contract("embed response missing 'vector'".into()))?,
    )
    .map_err(|e| ProviderError::Contract(format!("embed vector malformed: {e}")))?;
    if values.is_empty() {
        return Err(ProviderError::Contract("embedder returned empty vector".into()));
    }
    Ok(EmbeddingVector {
        dim: values.len(),
        values,
    })
}

/// An embedder handle that enforces one dimension across calls.
pub struct Embedder<'a> {
    provider: &'a dyn Provider,
    dim: AtomicUsize,
}

impl<'a> Embedder<'a> {
    pub fn new(provider: &'a dyn Provider) -> Self {
        Embedder {
            provider,
            dim: AtomicUsize::new(0),
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let v = embed_text(self.provider, text)?;
        let prev = self.dim.swap(v.dim, Ordering::SeqCst);
        if prev != 0 && prev != v.dim {
            self.dim.store(prev, Ordering::SeqCst);
            return Err(ProviderError::Contract(format!(
                "embedding dimension changed from {prev} to {}",
                v.dim
            )));
        }
        Ok(v)
    }

    pub fn provider(&self) -> &'a dyn Provider {
        self.provider
    }
}

/// Caption a media asset. Set-once: an already-captioned asset is returned
/// unchanged. Failures return the unchanged asset plus the error.
pub fn caption_media(
    provider: &dyn Provider,
    asset: MediaAsset,
) -> (MediaAsset, Option<ProviderError>) {
    if asset.caption.is_some() {
        return (asset, None);
    }
    if let Err(e) = check_role(provider, Role::Captioner) {
        return (asset, Some(e));
    }
    let request = ProviderRequest {
        role: Role::Captioner,
        task: "caption".to_string(),
        payload: json!({ "asset_id": asset.asset_id }),
    };
    match provider.call(&request) {
        Ok(response) => {
            let caption = response
                .payload
                .get("caption")
                .and_then(Value::as_str)
                .map(str::to_string);
            let keywords: Vec<String> = response
                .payload
                .get("keywords")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .unwrap_or_default();
            match caption {
                Some(caption) => (
                    MediaAsset {
                        caption: Some(caption),
                        keywords,
                        ..asset
                    },
                    None,
                ),
                None => (
                    asset,
                    Some(ProviderError::Contract("caption response missing 'caption'".into())),
                ),
            }
        }
        Err(e) => (asset, Some(e)),
    }
}

/// Parse a judge response into a winner. Accepts the option letter with or
/// without parentheses/punctuation, or the words "first"/"second". Anything
/// else is the tie fallback.
pub fn parse_judge_response(raw: &str) -> Winner {
    let cleaned: String = raw
        .trim()
        .trim_start_matches(['(', '[', '"', '\''])
        .chars()
        .take_while(|c| !c.is_whitespace())
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_uppercase();
    match cleaned.as_str() {
        "A" | "FIRST" | "1" => Winner::First,
        "B" | "SECOND" | "2" => Winner::Second,
        _ => Winner::Tie,
    }
}

/// Ask the judge to compare two options under a prompt.
pub fn judge_pair(
    provider: &dyn Provider,
    prompt: &str,
    option_a: &str,
    option_b: &str,
) -> Result<JudgeVerdict, ProviderError> {
    check_role(provider, Role::Judge)?;
    let response = provider.call(&ProviderRequest {
        role: Role::Judge,
        task: "judge".to_string(),
        payload: json!({ "prompt": prompt, "option_a": option_a, "option_b": option_b }),
    })?;
    let raw = response
        .payload
        .get("choice")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok(JudgeVerdict {
        winner: parse_judge_response(&raw),
        raw_response: raw,
    })
}

/// Generate text for a prompt.
pub fn generate_text(provider: &dyn Provider, prompt: &str) -> Result<String, ProviderError> {
    check_role(provider, Role::Generator)?;
    let response = provider.call(&ProviderRequest {
        role: Role::Generator,
        task: "generate".to_string(),
        payload: json!({ "prompt": prompt }),
    })?;
    response
        .payload
        .get("text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Contract("generate response missing 'text'".into()))
}

/// Classify text into one of the given labels.
pub fn classify_text(
    provider: &dyn Provider,
    text: &str,
    labels: &[&str],
) -> Result<String, ProviderError> {
    check_role(provider, Role::Classifier)?;
    let response = provider.call(&ProviderRequest {
        role: Role::Classifier,
        task: "classify".to_string(),
        payload: json!({ "text": text, "labels": labels }),
    })?;
    response
        .payload
        .get("label")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Contract("classify response missing 'label'".into()))
}

/// Score a target continuation under a prompt: the provider returns the
/// target tokenization and per-token log probabilities.
pub fn score_completion(
    provider: &dyn Provider,
    prompt: &str,
    target: &str,
) -> Result<TokenScore, ProviderError> {
    check_role(provider, Role::Scorer)?;
    if target.is_empty() {
        return Err(ProviderError::Capability("cannot score an empty target".into()));
    }
    let response = provider.call(&ProviderRequest {
        role: Role::Scorer,
        task: "score".to_string(),
        payload: json!({ "prompt": prompt, "target": target }),
    })?;
    let tokens: Vec<String> = serde_json::from_value(
        response
            .payload
            .get("tokens")
            .cloned()
            .ok_or_else(|| ProviderError::Capability("scorer did not return tokens".into()))?,
    )
    .map_err(|e| ProviderError::Contract(format!("score tokens malformed: {e}")))?;
    let logprobs: Vec<f64> = serde_json::from_value(
        response
            .payload
            .get("logprobs")
            .cloned()
            .ok_or_else(|| ProviderError::Capability("scorer did not return logprobs".into()))?,
    )
    .map_err(|e| ProviderError::Contract(format!("score logprobs malformed: {e}")))?;
    if tokens.len() != logprobs.len() {
        return Err(ProviderError::Contract(format!(
            "token/logprob length mismatch: {} vs {}",
            tokens.len(),
            logprobs.len()
        )));
    }
    if logprobs.iter().any(|lp| *lp > 0.0) {
        return Err(ProviderError::Contract("log probabilities must be <= 0".into()));
    }
    Ok(TokenScore { tokens, logprobs })
}

#[cfg(test)]
mod tests {
    use super::mock::{MockClassifier, MockEmbedder, MockScorer, ScriptedJudge};
    use super::*;

    #[test]
    fn role_mismatch_fails_before_any_call() {
        let embedder = MockEmbedder::new(1);
        let err = judge_pair(&embedder, "p", "a", "b").unwrap_err();
        assert!(matches!(
            err,
            ProviderError::RoleMismatch {
                expected: Role::Judge,
                actual: Role::Embedder
            }
        ));
        assert_eq!(embedder.call_count(), 0);
    }

    #[test]
    fn embed_same_text_identical() {
        let embedder = MockEmbedder::new(3);
        let a = embed_text(&embedder, "hello world").unwrap();
        let b = embed_text(&embedder, "hello world").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim, a.values.len());
    }

    #[test]
    fn embed_empty_string_is_total() {
        let embedder = MockEmbedder::new(3);
        let v = embed_text(&embedder, "").unwrap();
        assert!(v.dim > 0);
    }

    #[test]
    fn embedder_handle_rejects_dim_change() {
        let embedder = MockEmbedder::new(3).with_vector("short", vec![1.0, 0.0]);
        let handle = Embedder::new(&embedder);
        handle.embed("short").unwrap();
        let err = handle.embed("anything else").unwrap_err();
        assert!(matches!(err, ProviderError::Contract(_)));
    }

    #[test]
    fn judge_parses_option_letters() {
        for (raw, expected) in [
            ("A", Winner::First),
            ("B", Winner::Second),
            ("(A)", Winner::First),
            ("b.", Winner::Second),
            ("first", Winner::First),
            ("maybe", Winner::Tie),
            ("", Winner::Tie),
        ] {
            assert_eq!(parse_judge_response(raw), expected, "raw {raw:?}");
        }
    }

    #[test]
    fn scripted_judge_verdicts() {
        let judge = ScriptedJudge::new(["A", "B", "maybe"]);
        let v1 = judge_pair(&judge, "p", "x", "y").unwrap();
        assert_eq!(v1.winner, Winner::First);
        let v2 = judge_pair(&judge, "p", "x", "y").unwrap();
        assert_eq!(v2.winner, Winner::Second);
        let v3 = judge_pair(&judge, "p", "x", "y").unwrap();
        assert_eq!(v3.winner, Winner::Tie);
        assert!(v3.is_parse_fallback());
        assert_eq!(v3.raw_response, "maybe");
    }

    #[test]
    fn caption_is_set_once() {
        let captioner = mock::MockCaptioner::default();
        let already = MediaAsset {
            asset_id: "a".into(),
            caption: Some("existing".into()),
            keywords: vec![],
        };
        let (out, err) = caption_media(&captioner, already.clone());
        assert_eq!(out, already);
        assert!(err.is_none());
        assert_eq!(captioner.call_count(), 0);
    }

    #[test]
    fn caption_failure_returns_unchanged() {
        let failing = mock::FailingProvider::new(Role::Captioner);
        let bare = MediaAsset {
            asset_id: "a".into(),
            caption: None,
            keywords: vec![],
        };
        let (out, err) = caption_media(&failing, bare.clone());
        assert_eq!(out, bare);
        assert!(matches!(err, Some(ProviderError::Transport { .. })));
    }

    #[test]
    fn scorer_mean_logprob() {
        let scorer = MockScorer::uniform(-1.0);
        let score = score_completion(&scorer, "prompt", "a b c d").unwrap();
        assert_eq!(score.tokens.len(), 4);
        assert!((score.mean_logprob() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn scorer_rejects_empty_target() {
        let scorer = MockScorer::uniform(-1.0);
        assert!(matches!(
            score_completion(&scorer, "p", ""),
            Err(ProviderError::Capability(_))
        ));
    }

    #[test]
    fn prefix_scores_at_least_longer_target() {
        let mut scorer = MockScorer::uniform(-1.0);
        scorer.script_token("rare", -3.0);
        let short = score_completion(&scorer, "p", "a b").unwrap();
        let long = score_completion(&scorer, "p", "a b rare").unwrap();
        assert!(short.mean_logprob() >= long.mean_logprob());
    }

    #[test]
    fn classifier_uses_script() {
        let mut classifier = MockClassifier::default();
        classifier.script("breaking story", "news");
        let label = classify_text(&classifier, "breaking story", &["news", "not_news"]).unwrap();
        assert_eq!(label, "news");
        let fallback = classify_text(&classifier, "unseen", &["news", "not_news"]).unwrap();
        assert_eq!(fallback, "news");
    }
}
