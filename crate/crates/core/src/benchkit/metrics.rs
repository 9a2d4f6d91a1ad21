//! Text-generation and agreement metrics: sentence-level BLEU with add-one
//! smoothing, ROUGE-1/L, greedy embedding F-score, accuracy, and rank
//! correlations.
//!
//! Sentence scores are averaged with compensated summation so results do not
//! depend on accumulation order; corpus scores are reported x100.

use std::collections::HashMap;

use crate::corpus::normalize_text;
use crate::providers::Embedder;
use crate::simtext;

use super::BenchError;

/// Whitespace tokens of normalized text.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_text(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map: HashMap<&[String], usize> = HashMap::new();
    if n == 0 || tokens.len() < n {
        return map;
    }
    for window in tokens.windows(n) {
        *map.entry(window).or_default() += 1;
    }
    map
}

/// Sentence-level BLEU with brevity penalty over `1..=max_n` gram orders.
/// Zero counts at n >= 2 get add-one smoothing; a zero unigram numerator
/// scores 0. Multi-reference clipping takes the max reference count per
/// n-gram, and the brevity penalty uses the closest reference length.
pub fn bleu(candidate: &str, references: &[String], max_n: usize) -> f64 {
    assert!((1..=2).contains(&max_n), "max_n must be 1 or 2");
    let cand = tokenize(candidate);
    if cand.is_empty() || references.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_ngrams = ngram_counts(&cand, n);
        let total: usize = cand_ngrams.values().sum();
        if total == 0 {
            if n == 1 {
                return 0.0;
            }
            // candidate shorter than n: add-one smoothing gives 1/1, log 0
            continue;
        }
        let mut clipped = 0usize;
        for (gram, &count) in &cand_ngrams {
            let best_ref = refs
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(best_ref);
        }
        let precision = if clipped == 0 {
            if n == 1 {
                return 0.0;
            }
            (clipped as f64 + 1.0) / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln() / max_n as f64;
    }

    let c = cand.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| ((len as i64 - cand.len() as i64).abs(), len))
        .unwrap_or(0) as f64;
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RougeVariant {
    One,
    L,
}

/// ROUGE F1; multi-reference scores take the max over references.
pub fn rouge(candidate: &str, references: &[String], variant: RougeVariant) -> f64 {
    let cand = tokenize(candidate);
    references
        .iter()
        .map(|r| {
            let reference = tokenize(r);
            match variant {
                RougeVariant::One => rouge1_f1(&cand, &reference),
                RougeVariant::L => rouge_l_f1(&cand, &reference),
            }
        })
        .fold(0.0, f64::max)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn rouge1_f1(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let cand_counts = ngram_counts(cand, 1);
    let ref_counts = ngram_counts(reference, 1);
    let matches: usize = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    f1(
        matches as f64 / cand.len() as f64,
        matches as f64 / reference.len() as f64,
    )
}

fn rouge_l_f1(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = token_lcs(cand, reference) as f64;
    f1(lcs / cand.len() as f64, lcs / reference.len() as f64)
}

fn token_lcs(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for ta in a {
        let mut prev_diag = 0;
        for (j, tb) in b.iter().enumerate() {
            let cur = row[j + 1];
            row[j + 1] = if ta == tb {
                prev_diag + 1
            } else {
                row[j + 1].max(row[j])
            };
            prev_diag = cur;
        }
    }
    row[b.len()]
}

/// Greedy token-embedding match F1 (no baseline rescaling): precision is the
/// mean over candidate tokens of the best cosine against reference tokens,
/// recall symmetric.
pub fn embed_fscore(
    candidate: &str,
    reference: &str,
    embedder: &Embedder<'_>,
) -> Result<f64, BenchError> {
    let cand = tokenize(candidate);
    let reference = tokenize(reference);
    if cand.is_empty() || reference.is_empty() {
        return Ok(0.0);
    }
    let embed_all = |tokens: &[String]| -> Result<Vec<Vec<f64>>, BenchError> {
        tokens
            .iter()
            .map(|t| Ok(embedder.embed(t)?.values))
            .collect()
    };
    let cand_vecs = embed_all(&cand)?;
    let ref_vecs = embed_all(&reference)?;

    let best = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        let sims: Vec<f64> = from
            .iter()
            .map(|v| {
                to.iter()
                    .map(|w| simtext::cosine_similarity(v, w).map(|s| s.value).unwrap_or(0.0))
                    .fold(0.0, f64::max)
            })
            .collect();
        compensated_mean(&sims)
    };
    let precision = best(&cand_vecs, &ref_vecs);
    let recall = best(&ref_vecs, &cand_vecs);
    Ok(f1(precision, recall))
}

/// Kahan-compensated mean; deterministic regardless of how the inputs were
/// produced in parallel, as long as their order is fixed.
pub fn compensated_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / values.len() as f64
}

/// Mean sentence score reported x100, the benchmark's headline convention.
pub fn corpus_score(sentence_scores: &[f64]) -> f64 {
    100.0 * compensated_mean(sentence_scores)
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[String], labels: &[String]) -> Result<f64, BenchError> {
    if predictions.len() != labels.len() {
        return Err(BenchError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(BenchError::UndefinedCorrelation("empty input".to_string()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p.trim().eq_ignore_ascii_case(l.trim()))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, BenchError> {
    if xs.len() != ys.len() {
        return Err(BenchError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(BenchError::UndefinedCorrelation(
            "need at least two points".to_string(),
        ));
    }
    let mx = compensated_mean(xs);
    let my = compensated_mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(BenchError::UndefinedCorrelation("zero variance".to_string()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Midranks (average rank for ties), 1-based.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mean = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = mean;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, BenchError> {
    if xs.len() != ys.len() {
        return Err(BenchError::LengthMismatch(xs.len(), ys.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}
