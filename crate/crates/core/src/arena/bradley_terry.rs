//! Batch Bradley-Terry fit over a match log.
//!
//! Online Elo is order-dependent; this gives an order-free leaderboard view
//! from the same records. Strengths are fit by minorization-maximization
//! (Hunter 2004) with a small virtual-tie smoothing so isolated or unbeaten
//! players stay finite, then mapped onto the Elo scale around the initial
//! rating. Standard errors come from the diagonal of the observed Fisher
//! information.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MatchOrder, MatchOutcome, MatchRecord};
use crate::providers::Winner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtRating {
    pub player_id: String,
    /// Strength on the Elo scale (initial rating + 400 log10 w).
    pub rating: f64,
    /// Standard error on the same scale.
    pub std_error: f64,
    pub games: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct BtOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Virtual tie weight added between every player pair.
    pub smoothing: f64,
    pub elo_center: f64,
}

impl Default for BtOptions {
    fn default() -> Self {
        BtOptions {
            max_iterations: 2000,
            tolerance: 1e-10,
            smoothing: 0.1,
            elo_center: 1000.0,
        }
    }
}

/// Fit Bradley-Terry strengths from decided matches. Ties (and the
/// smoothing prior) count half a win for each side.
pub fn fit_bradley_terry(records: &[MatchRecord], options: &BtOptions) -> Vec<BtRating> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let next = index.len();
        index.entry(&r.player_a).or_insert(next);
        let next = index.len();
        index.entry(&r.player_b).or_insert(next);
    }
    let n = index.len();
    if n == 0 {
        return Vec::new();
    }

    // wins[i][j] = (possibly fractional) wins of i over j
    let mut wins = vec![vec![0.0f64; n]; n];
    let mut games = vec![0u64; n];
    for r in records {
        let MatchOutcome::Decided { verdict } = &r.outcome else {
            continue;
        };
        let ia = index[r.player_a.as_str()];
        let ib = index[r.player_b.as_str()];
        games[ia] += 1;
        games[ib] += 1;
        let score_a = match (r.order, verdict.winner) {
            (_, Winner::Tie) => 0.5,
            (MatchOrder::Ab, Winner::First) | (MatchOrder::Ba, Winner::Second) => 1.0,
            _ => 0.0,
        };
        wins[ia][ib] += score_a;
        wins[ib][ia] += 1.0 - score_a;
    }
    for (i, row) in wins.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            if i != j {
                *w += options.smoothing / 2.0;
            }
        }
    }

    let mut w = vec![1.0f64; n];
    #[allow(clippy::needless_range_loop)]
    for _ in 0..options.max_iterations {
        let mut next = vec![0.0f64; n];
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let total_wins: f64 = (0..n).filter(|&j| j != i).map(|j| wins[i][j]).sum();
            let denom: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (wins[i][j] + wins[j][i]) / (w[i] + w[j]))
                .sum();
            next[i] = if denom > 0.0 { total_wins / denom } else { w[i] };
        }
        // normalize to geometric mean 1 for identifiability
        let log_mean = next.iter().map(|x| x.max(1e-300).ln()).sum::<f64>() / n as f64;
        let scale = log_mean.exp();
        for x in &mut next {
            *x /= scale;
        }
        for i in 0..n {
            max_change = max_change.max((next[i] - w[i]).abs());
        }
        w = next;
        if max_change < options.tolerance {
            break;
        }
    }

    // observed information for theta_i = ln w_i:
    // I_ii = sum_j n_ij p_ij p_ji
    let elo_per_nat = 400.0 / std::f64::consts::LN_10;
    let mut ratings: Vec<BtRating> = index
        .iter()
        .map(|(id, &i)| {
            let info: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let n_ij = wins[i][j] + wins[j][i];
                    let p_ij = w[i] / (w[i] + w[j]);
                    n_ij * p_ij * (1.0 - p_ij)
                })
                .sum();
            let se_nat = if info > 0.0 { info.sqrt().recip() } else { f64::INFINITY };
            BtRating {
                player_id: (*id).to_string(),
                rating: options.elo_center + elo_per_nat * w[i].max(1e-300).ln(),
                std_error: elo_per_nat * se_nat,
                games: games[i],
            }
        })
        .collect();
    ratings.sort_by(|a, b| {
        b.rating
            .partial_cmp(&a.rating)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.player_id.cmp(&b.player_id))
    });
    ratings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::JudgeVerdict;

    fn record(id: u64, a: &str, b: &str, a_wins: bool) -> MatchRecord {
        MatchRecord {
            match_id: id,
            instance_id: "i".into(),
            player_a: a.into(),
            player_b: b.into(),
            order: MatchOrder::Ab,
            outcome: MatchOutcome::Decided {
                verdict: JudgeVerdict {
                    winner: if a_wins { Winner::First } else { Winner::Second },
                    raw_response: String::new(),
                },
            },
            pre_ratings: (1000.0, 1000.0),
            post_ratings: (1000.0, 1000.0),
        }
    }

    #[test]
    fn empty_log_empty_fit() {
        assert!(fit_bradley_terry(&[], &BtOptions::default()).is_empty());
    }

    #[test]
    fn dominant_player_ranks_first() {
        let mut records = Vec::new();
        let mut id = 0;
        for _ in 0..20 {
            id += 1;
            records.push(record(id, "strong", "weak", true));
            id += 1;
            records.push(record(id, "strong", "mid", true));
            id += 1;
            records.push(record(id, "mid", "weak", true));
        }
        // a few upsets
        records.push(record(id + 1, "weak", "strong", true));
        let ratings = fit_bradley_terry(&records, &BtOptions::default());
        assert_eq!(ratings[0].player_id, "strong");
        assert_eq!(ratings[2].player_id, "weak");
        assert!(ratings[0].rating > ratings[1].rating);
        assert!(ratings[0].std_error.is_finite());
    }

    #[test]
    fn balanced_record_is_near_center() {
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(record(i + 1, "x", "y", i % 2 == 0));
        }
        let ratings = fit_bradley_terry(&records, &BtOptions::default());
        for r in &ratings {
            assert!((r.rating - 1000.0).abs() < 5.0, "{r:?}");
        }
    }

    #[test]
    fn order_field_is_respected() {
        // player_b wins every match, but listed first (order Ba, winner First)
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(MatchRecord {
                match_id: i + 1,
                instance_id: "i".into(),
                player_a: "a".into(),
                player_b: "b".into(),
                order: MatchOrder::Ba,
                outcome: MatchOutcome::Decided {
                    verdict: JudgeVerdict {
                        winner: Winner::First,
                        raw_response: String::new(),
                    },
                },
                pre_ratings: (1000.0, 1000.0),
                post_ratings: (1000.0, 1000.0),
            });
        }
        let ratings = fit_bradley_terry(&records, &BtOptions::default());
        assert_eq!(ratings[0].player_id, "b");
    }
}
