//! Similarity measures used by the pair gates: cosine over embedding
//! vectors, character-level edit similarity, Jaccard over token sets, and
//! caption-mediated media similarity.
//!
//! Edit similarity counts insertions and deletions only (no substitutions),
//! i.e. the LCS-based distance: `edits = len(a) + len(b) - 2*LCS(a, b)`,
//! normalized by the summed lengths and flipped so that identical strings
//! score 1.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MediaAsset;
use crate::providers::{self, Provider, ProviderError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("media asset {0} has no caption")]
    Uncaptioned(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Which measure produced a [`SimilarityScore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Cosine,
    Edit,
    Jaccard,
    Media,
}

/// A similarity value in `[0, 1]` tagged with the measure that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub kind: SimilarityKind,
}

/// Cosine similarity of two embedding vectors, clamped to `[0, 1]`.
///
/// Negative cosines are clamped to 0: every gate threshold is positive, so
/// the sign carries no information downstream.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<SimilarityScore, SimError> {
    if a.len() != b.len() {
        return Err(SimError::DimMismatch(a.len(), b.len()));
    }
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(SimError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let value = (dot / (norm_a * norm_b)).clamp(0.0, 1.0);
    Ok(SimilarityScore {
        value,
        kind: SimilarityKind::Cosine,
    })
}

/// Length of the longest common subsequence of two char slices.
///
/// Rolling single-row DP; O(len(a) * len(b)) time, O(min) space.
pub fn lcs_len(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; short.len() + 1];
    for &lc in long {
        let mut prev_diag = 0;
        for (j, &sc) in short.iter().enumerate() {
            let cur = row[j + 1];
            row[j + 1] = if lc == sc {
                prev_diag + 1
            } else {
                row[j + 1].max(row[j])
            };
            prev_diag = cur;
        }
    }
    row[short.len()]
}

/// Character-level edit similarity: `1 - edits / (len(a) + len(b))` where
/// edits are insertions + deletions. Two empty strings are identical (1).
pub fn edit_similarity(a: &str, b: &str) -> SimilarityScore {
    let ac: Vec<char> = a.chars().collect();
    let bc: Vec<char> = b.chars().collect();
    let total = ac.len() + bc.len();
    let value = if total == 0 {
        1.0
    } else {
        let edits = total - 2 * lcs_len(&ac, &bc);
        1.0 - edits as f64 / total as f64
    };
    SimilarityScore {
        value,
        kind: SimilarityKind::Edit,
    }
}

/// Insertion+deletion count between two strings; the "character difference"
/// used by the minimum-change gate.
pub fn edit_char_diff(a: &str, b: &str) -> usize {
    let ac: Vec<char> = a.chars().collect();
    let bc: Vec<char> = b.chars().collect();
    ac.len() + bc.len() - 2 * lcs_len(&ac, &bc)
}

/// Jaccard similarity of two token sets. Two empty sets score 0.
pub fn jaccard_similarity(a: &BTreeSet<String>, b: &BTreeSet<String>) -> SimilarityScore {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    let value = if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    };
    SimilarityScore {
        value,
        kind: SimilarityKind::Jaccard,
    }
}

/// Similarity of two media assets via the cosine of their caption embeddings.
///
/// Both assets must already carry captions; captioning is a separate,
/// set-once step.
pub fn media_similarity(
    m1: &MediaAsset,
    m2: &MediaAsset,
    embedder: &dyn Provider,
) -> Result<SimilarityScore, SimError> {
    let c1 = m1
        .caption
        .as_deref()
        .ok_or_else(|| SimError::Uncaptioned(m1.asset_id.clone()))?;
    let c2 = m2
        .caption
        .as_deref()
        .ok_or_else(|| SimError::Uncaptioned(m2.asset_id.clone()))?;
    let e1 = providers::embed_text(embedder, c1)?;
    let e2 = providers::embed_text(embedder, c2)?;
    let score = cosine_similarity(&e1.values, &e2.values)?;
    Ok(SimilarityScore {
        value: score.value,
        kind: SimilarityKind::Media,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::MockEmbedder;
    use proptest::prelude::*;

    fn toks(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cosine_identity_is_one() {
        let v = vec![0.3, -0.2, 0.9];
        let s = cosine_similarity(&v, &v).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        let s = cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn cosine_closed_form() {
        // (1,0) vs (1,1) is 1/sqrt(2)
        let s = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s.value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn cosine_negative_clamps_to_zero() {
        let s = cosine_similarity(&[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(SimError::DimMismatch(1, 2))
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]),
            Err(SimError::ZeroVector)
        ));
    }

    #[test]
    fn edit_identity_is_one() {
        assert_eq!(edit_similarity("hello", "hello").value, 1.0);
        assert_eq!(edit_similarity("", "").value, 1.0);
    }

    #[test]
    fn edit_kitten_sitting() {
        // LCS("kitten", "sitting") = 4, edits = 13 - 8 = 5, sim = 8/13.
        let s = edit_similarity("kitten", "sitting");
        assert!((s.value - 8.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn edit_disjoint_is_zero() {
        assert_eq!(edit_similarity("abc", "xyz").value, 0.0);
    }

    #[test]
    fn char_diff_counts_insert_delete() {
        assert_eq!(edit_char_diff("abc", "abc"), 0);
        assert_eq!(edit_char_diff("abc", "abcd"), 1);
        assert_eq!(edit_char_diff("kitten", "sitting"), 5);
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard_similarity(&toks(&["a", "b"]), &toks(&["a", "b"])).value, 1.0);
        assert_eq!(jaccard_similarity(&toks(&["a"]), &toks(&["b"])).value, 0.0);
        let s = jaccard_similarity(&toks(&["a", "b"]), &toks(&["b", "c"]));
        assert!((s.value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard_similarity(&toks(&[]), &toks(&[])).value, 0.0);
    }

    #[test]
    fn media_similarity_self_is_one() {
        let embedder = MockEmbedder::new(7);
        let m = MediaAsset {
            asset_id: "a1".into(),
            caption: Some("a red bicycle by the sea".into()),
            keywords: vec![],
        };
        let s = media_similarity(&m, &m, &embedder).unwrap();
        assert!((s.value - 1.0).abs() < 1e-9);
        assert_eq!(s.kind, SimilarityKind::Media);
    }

    #[test]
    fn media_similarity_orthogonal_captions() {
        let embedder = MockEmbedder::new(7)
            .with_vector("left", vec![1.0, 0.0])
            .with_vector("right", vec![0.0, 1.0]);
        let m1 = MediaAsset {
            asset_id: "a".into(),
            caption: Some("left".into()),
            keywords: vec![],
        };
        let m2 = MediaAsset {
            asset_id: "b".into(),
            caption: Some("right".into()),
            keywords: vec![],
        };
        assert_eq!(media_similarity(&m1, &m2, &embedder).unwrap().value, 0.0);
    }

    #[test]
    fn media_similarity_uncaptioned_errors() {
        let embedder = MockEmbedder::new(7);
        let m1 = MediaAsset {
            asset_id: "bare".into(),
            caption: None,
            keywords: vec![],
        };
        let m2 = MediaAsset {
            asset_id: "b".into(),
            caption: Some("x".into()),
            keywords: vec![],
        };
        match media_similarity(&m1, &m2, &embedder) {
            Err(SimError::Uncaptioned(id)) => assert_eq!(id, "bare"),
            other => panic!("expected Uncaptioned, got {other:?}"),
        }
    }

    /// Plain recursive LCS, memoized, as an independent oracle.
    fn lcs_oracle(a: &[char], b: &[char]) -> usize {
        fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if i == a.len() || j == b.len() {
                return 0;
            }
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if a[i] == b[j] {
                1 + go(a, b, i + 1, j + 1, memo)
            } else {
                go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len()]; a.len()];
        go(a, b, 0, 0, &mut memo)
    }

    fn enumerate_strings(alphabet: &[char], max_len: usize) -> Vec<Vec<char>> {
        let mut out: Vec<Vec<char>> = vec![vec![]];
        let mut frontier: Vec<Vec<char>> = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for &c in alphabet {
                    let mut t = s.clone();
                    t.push(c);
                    next.push(t);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn lcs_matches_oracle_exhaustive_short() {
        let strings = enumerate_strings(&['a', 'b', 'c'], 4);
        for sa in &strings {
            for sb in &strings {
                assert_eq!(lcs_len(sa, sb), lcs_oracle(sa, sb), "{sa:?} vs {sb:?}");
            }
        }
    }

    /// Full exhaustive sweep up to length 8; slow, run explicitly with
    /// `cargo test -p suasion-core --release -- --ignored`.
    #[test]
    #[ignore]
    fn lcs_matches_oracle_exhaustive_len8() {
        let strings = enumerate_strings(&['a', 'b', 'c'], 8);
        for (i, sa) in strings.iter().enumerate() {
            for sb in &strings[i..] {
                assert_eq!(lcs_len(sa, sb), lcs_oracle(sa, sb));
            }
        }
    }

    proptest! {
        #[test]
        fn edit_symmetric_and_bounded(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            let ab = edit_similarity(&a, &b).value;
            let ba = edit_similarity(&b, &a).value;
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn edit_matches_lcs_oracle(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            let total = ac.len() + bc.len();
            let expected = if total == 0 {
                1.0
            } else {
                1.0 - (total - 2 * lcs_oracle(&ac, &bc)) as f64 / total as f64
            };
            prop_assert_eq!(edit_similarity(&a, &b).value, expected);
        }

        #[test]
        fn edit_invariant_under_joint_reversal(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            let ra: String = a.chars().rev().collect();
            let rb: String = b.chars().rev().collect();
            prop_assert_eq!(edit_similarity(&a, &b).value, edit_similarity(&ra, &rb).value);
        }

        #[test]
        fn jaccard_one_iff_equal(a in proptest::collection::btree_set("[a-d]{1,3}", 1..5),
                                 b in proptest::collection::btree_set("[a-d]{1,3}", 1..5)) {
            let s = jaccard_similarity(&a, &b).value;
            prop_assert_eq!(s == 1.0, a == b);
        }
    }
}
