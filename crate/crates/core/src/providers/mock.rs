//! Deterministic in-process providers for tests and offline runs.
//!
//! Seeded identically, the mocks reproduce entire pipeline outputs
//! bit-for-bit. The embedder hashes token bags so that texts sharing most
//! tokens land close in cosine space, which is what the pair gates need.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{Provider, ProviderError, ProviderRequest, ProviderResponse, Role};

fn hash64(parts: &[&str]) -> u64 {
    let mut h = DefaultHasher::new();
    for p in parts {
        p.hash(&mut h);
    }
    h.finish()
}

/// Bag-of-token-hash embedder. Scripted vectors take precedence over the
/// hash path so tests can force exact geometries.
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
    scripted: HashMap<String, Vec<f64>>,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        MockEmbedder {
            seed,
            dim: 32,
            scripted: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Pin the exact vector returned for a text.
    pub fn with_vector(mut self, text: &str, vector: Vec<f64>) -> Self {
        self.scripted.insert(text.to_string(), vector);
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ hash64(&[token]));
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        if let Some(v) = self.scripted.get(text) {
            return v.clone();
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut acc = vec![0.0f64; self.dim];
        if tokens.is_empty() {
            acc = self.token_vector("\u{0}empty");
        } else {
            for t in tokens {
                for (a, b) in acc.iter_mut().zip(self.token_vector(t)) {
                    *a += b;
                }
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            acc = self.token_vector(text);
        }
        acc
    }
}

impl Provider for MockEmbedder {
    fn role(&self) -> Role {
        Role::Embedder
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = request
            .payload
            .get("text")
            .and_then(Value::as_str)
            .unwrap_or_default();
        Ok(ProviderResponse {
            payload: json!({ "vector": self.embed(text) }),
        })
    }
}

/// Captioner with per-asset scripts and a deterministic fallback caption.
#[derive(Default)]
pub struct MockCaptioner {
    scripted: HashMap<String, (String, Vec<String>)>,
    calls: AtomicUsize,
}

impl MockCaptioner {
    pub fn script(&mut self, asset_id: &str, caption: &str, keywords: &[&str]) {
        self.scripted.insert(
            asset_id.to_string(),
            (
                caption.to_string(),
                keywords.iter().map(|k| k.to_string()).collect(),
            ),
        );
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for MockCaptioner {
    fn role(&self) -> Role {
        Role::Captioner
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let asset_id = request
            .payload
            .get("asset_id")
            .and_then(Value::as_str)
            .unwrap_or_default();
        let (caption, keywords) = self
            .scripted
            .get(asset_id)
            .cloned()
            .unwrap_or_else(|| (format!("image {asset_id}"), vec![asset_id.to_string()]));
        Ok(ProviderResponse {
            payload: json!({ "caption": caption, "keywords": keywords }),
        })
    }
}

/// Judge that replays a fixed response sequence, then a fallback.
pub struct ScriptedJudge {
    responses: Mutex<VecDeque<String>>,
    fallback: String,
}

impl ScriptedJudge {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedJudge {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            fallback: "A".to_string(),
        }
    }

    pub fn with_fallback(mut self, fallback: &str) -> Self {
        self.fallback = fallback.to_string();
        self
    }
}

impl Provider for ScriptedJudge {
    fn role(&self) -> Role {
        Role::Judge
    }

    fn call(&self, _request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let raw = self
            .responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| self.fallback.clone());
        Ok(ProviderResponse {
            payload: json!({ "choice": raw }),
        })
    }
}

/// Judge driven by a closure over (prompt, option_a, option_b).
pub struct FnJudge<F>
where
    F: Fn(&str, &str, &str) -> String + Send + Sync,
{
    decide: F,
}

impl<F> FnJudge<F>
where
    F: Fn(&str, &str, &str) -> String + Send + Sync,
{
    pub fn new(decide: F) -> Self {
        FnJudge { decide }
    }
}

impl<F> Provider for FnJudge<F>
where
    F: Fn(&str, &str, &str) -> String + Send + Sync,
{
    fn role(&self) -> Role {
        Role::Judge
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let prompt = request.payload.get("prompt").and_then(Value::as_str).unwrap_or("");
        let a = request.payload.get("option_a").and_then(Value::as_str).unwrap_or("");
        let b = request.payload.get("option_b").and_then(Value::as_str).unwrap_or("");
        Ok(ProviderResponse {
            payload: json!({ "choice": (self.decide)(prompt, a, b) }),
        })
    }
}

/// Judge that always prefers the first-listed option; the canonical
/// positional-bias fixture.
pub fn position_biased_judge() -> FnJudge<impl Fn(&str, &str, &str) -> String + Send + Sync> {
    FnJudge::new(|_, _, _| "A".to_string())
}

/// Generator with a scripted queue and a deterministic hash fallback.
pub struct MockGenerator {
    scripted: Mutex<VecDeque<String>>,
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        MockGenerator {
            scripted: Mutex::new(VecDeque::new()),
            seed,
        }
    }

    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockGenerator {
            scripted: Mutex::new(responses.into_iter().map(Into::into).collect()),
            seed: 0,
        }
    }

    pub fn push(&self, response: &str) {
        self.scripted.lock().unwrap().push_back(response.to_string());
    }
}

impl Provider for MockGenerator {
    fn role(&self) -> Role {
        Role::Generator
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        if let Some(text) = self.scripted.lock().unwrap().pop_front() {
            return Ok(ProviderResponse {
                payload: json!({ "text": text }),
            });
        }
        let prompt = request.payload.get("prompt").and_then(Value::as_str).unwrap_or("");
        let text = format!("gen-{:016x}", hash64(&[prompt]) ^ self.seed);
        Ok(ProviderResponse {
            payload: json!({ "text": text }),
        })
    }
}

/// Generator driven by a closure over the prompt.
pub struct FnGenerator<F>
where
    F: Fn(&str) -> Result<String, ProviderError> + Send + Sync,
{
    generate: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(&str) -> Result<String, ProviderError> + Send + Sync,
{
    pub fn new(generate: F) -> Self {
        FnGenerator { generate }
    }
}

impl<F> Provider for FnGenerator<F>
where
    F: Fn(&str) -> Result<String, ProviderError> + Send + Sync,
{
    fn role(&self) -> Role {
        Role::Generator
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let prompt = request.payload.get("prompt").and_then(Value::as_str).unwrap_or("");
        Ok(ProviderResponse {
            payload: json!({ "text": (self.generate)(prompt)? }),
        })
    }
}

/// Classifier with scripted text -> label pairs; falls back to the first
/// label offered in the request.
#[derive(Default)]
pub struct MockClassifier {
    scripted: HashMap<String, String>,
}

impl MockClassifier {
    pub fn script(&mut self, text: &str, label: &str) {
        self.scripted.insert(text.to_string(), label.to_string());
    }
}

impl Provider for MockClassifier {
    fn role(&self) -> Role {
        Role::Classifier
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let text = request.payload.get("text").and_then(Value::as_str).unwrap_or("");
        let label = match self.scripted.get(text) {
            Some(label) => label.clone(),
            None => request
                .payload
                .get("labels")
                .and_then(Value::as_array)
                .and_then(|a| a.first())
                .and_then(Value::as_str)
                .unwrap_or("unknown")
                .to_string(),
        };
        Ok(ProviderResponse {
            payload: json!({ "label": label }),
        })
    }
}

/// Scorer assigning each whitespace token a constant log probability unless
/// overridden per token.
pub struct MockScorer {
    default_logprob: f64,
    per_token: HashMap<String, f64>,
}

impl MockScorer {
    pub fn uniform(logprob: f64) -> Self {
        MockScorer {
            default_logprob: logprob,
            per_token: HashMap::new(),
        }
    }

    pub fn script_token(&mut self, token: &str, logprob: f64) {
        self.per_token.insert(token.to_string(), logprob);
    }
}

impl Provider for MockScorer {
    fn role(&self) -> Role {
        Role::Scorer
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let target = request.payload.get("target").and_then(Value::as_str).unwrap_or("");
        let tokens: Vec<String> = target.split_whitespace().map(str::to_string).collect();
        let logprobs: Vec<f64> = tokens
            .iter()
            .map(|t| self.per_token.get(t).copied().unwrap_or(self.default_logprob))
            .collect();
        Ok(ProviderResponse {
            payload: json!({ "tokens": tokens, "logprobs": logprobs }),
        })
    }
}

/// Provider that fails every call with a transport error, for error paths.
pub struct FailingProvider {
    role: Role,
}

impl FailingProvider {
    pub fn new(role: Role) -> Self {
        FailingProvider { role }
    }
}

impl Provider for FailingProvider {
    fn role(&self) -> Role {
        self.role
    }

    fn call(&self, _request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        Err(ProviderError::Transport {
            attempts: 1,
            message: "scripted failure".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simtext::cosine_similarity;

    #[test]
    fn embedder_is_seed_deterministic() {
        let a = MockEmbedder::new(11).embed("a b c");
        let b = MockEmbedder::new(11).embed("a b c");
        assert_eq!(a, b);
        let c = MockEmbedder::new(12).embed("a b c");
        assert_ne!(a, c);
    }

    #[test]
    fn near_duplicate_texts_have_high_cosine() {
        let e = MockEmbedder::new(5);
        let a = e.embed("save big on laptops this friday only online");
        let b = e.embed("save big on laptops this friday only in store");
        let sim = cosine_similarity(&a, &b).unwrap().value;
        assert!(sim > 0.8, "near-duplicates should be close, got {sim}");
        let unrelated = e.embed("quarterly earnings call transcript posted");
        let far = cosine_similarity(&a, &unrelated).unwrap().value;
        assert!(far < 0.5, "unrelated texts should be far, got {far}");
    }

    #[test]
    fn generator_fallback_is_deterministic() {
        let g = MockGenerator::new(9);
        let r = ProviderRequest {
            role: Role::Generator,
            task: "generate".into(),
            payload: json!({"prompt": "p"}),
        };
        let a = g.call(&r).unwrap().payload;
        let b = g.call(&r).unwrap().payload;
        assert_eq!(a, b);
    }
}
