//! Train/test partitioning in three regimes: random (seeded shuffle),
//! brand (held-out accounts), and time (held-out future dates).
//!
//! A pair is dated by its outcome side (`t2.created_at`), so a time split
//! never trains on an outcome that postdates the cutoff; posts are dated
//! directly. Partitions are deterministic for a given seed.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::corpus::PostRecord;
use crate::pairminer::TranssuasionPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Random,
    Brand,
    Time,
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Regime::Random),
            "brand" => Ok(Regime::Brand),
            "time" => Ok(Regime::Time),
            other => Err(format!("unknown split regime: {other}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub regime: Regime,
    /// Accounts whose items all go to test (brand regime).
    #[serde(default)]
    pub holdout_accounts: BTreeSet<String>,
    /// Items dated on/after this go to test (time regime).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_date: Option<NaiveDate>,
    pub seed: u64,
    /// Test share under the random regime.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Post ids and pair keys on each side of the partition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub regime: Option<Regime>,
    pub train_posts: BTreeSet<String>,
    pub test_posts: BTreeSet<String>,
    pub train_pairs: BTreeSet<String>,
    pub test_pairs: BTreeSet<String>,
}

impl SplitAssignment {
    pub fn pair_side(&self, key: &str) -> Option<super::SplitSide> {
        if self.test_pairs.contains(key) {
            Some(super::SplitSide::Test)
        } else if self.train_pairs.contains(key) {
            Some(super::SplitSide::Train)
        } else {
            None
        }
    }

    pub fn post_side(&self, post_id: &str) -> Option<super::SplitSide> {
        if self.test_posts.contains(post_id) {
            Some(super::SplitSide::Test)
        } else if self.train_posts.contains(post_id) {
            Some(super::SplitSide::Train)
        } else {
            None
        }
    }
}

/// Partition pairs and posts under a [`SplitSpec`]. Brand and time regimes
/// derive membership from account ids and dates; the random regime shuffles
/// ids under the seed.
pub fn make_splits(
    pairs: &[TranssuasionPair],
    posts: &[PostRecord],
    spec: &SplitSpec,
) -> Result<SplitAssignment, BenchError> {
    let mut assignment = SplitAssignment {
        regime: Some(spec.regime),
        ..SplitAssignment::default()
    };

    match spec.regime {
        Regime::Brand => {
            if spec.holdout_accounts.is_empty() {
                return Err(BenchError::SplitConfig(
                    "brand regime requires holdout_accounts".to_string(),
                ));
            }
            for post in posts {
                if spec.holdout_accounts.contains(&post.account_id) {
                    assignment.test_posts.insert(post.post_id.clone());
                } else {
                    assignment.train_posts.insert(post.post_id.clone());
                }
            }
            for pair in pairs {
                if spec.holdout_accounts.contains(&pair.t1.account_id) {
                    assignment.test_pairs.insert(pair.key());
                } else {
                    assignment.train_pairs.insert(pair.key());
                }
            }
            if assignment.train_posts.is_empty() && assignment.train_pairs.is_empty() {
                return Err(BenchError::SplitConfig(
                    "holdout set empties the train side".to_string(),
                ));
            }
        }
        Regime::Time => {
            let cutoff = spec.cutoff_date.ok_or_else(|| {
                BenchError::SplitConfig("time regime requires cutoff_date".to_string())
            })?;
            for post in posts {
                if post.created_at.date_naive() >= cutoff {
                    assignment.test_posts.insert(post.post_id.clone());
                } else {
                    assignment.train_posts.insert(post.post_id.clone());
                }
            }
            for pair in pairs {
                // the outcome side dates the pair
                if pair.t2.created_at.date_naive() >= cutoff {
                    assignment.test_pairs.insert(pair.key());
                } else {
                    assignment.train_pairs.insert(pair.key());
                }
            }
            if assignment.train_posts.is_empty() && assignment.train_pairs.is_empty() {
                return Err(BenchError::SplitConfig(
                    "cutoff empties the train side".to_string(),
                ));
            }
        }
        Regime::Random => {
            let mut post_ids: Vec<String> = posts.iter().map(|p| p.post_id.clone()).collect();
            post_ids.sort();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            post_ids.shuffle(&mut rng);
            let test_count = (post_ids.len() as f64 * spec.test_fraction).round() as usize;
            for (i, id) in post_ids.into_iter().enumerate() {
                if i < test_count {
                    assignment.test_posts.insert(id);
                } else {
                    assignment.train_posts.insert(id);
                }
            }
            let mut pair_keys: Vec<String> = pairs.iter().map(TranssuasionPair::key).collect();
            pair_keys.sort();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
            pair_keys.shuffle(&mut rng);
            let test_count = (pair_keys.len() as f64 * spec.test_fraction).round() as usize;
            for (i, key) in pair_keys.into_iter().enumerate() {
                if i < test_count {
                    assignment.test_pairs.insert(key);
                } else {
                    assignment.train_pairs.insert(key);
                }
            }
        }
    }
    Ok(assignment)
}

/// Programmatic leakage check: brand regimes share no account between
/// sides, time regimes share no overlapping date ranges.
pub fn assert_no_leakage(
    assignment: &SplitAssignment,
    pairs: &[TranssuasionPair],
    posts: &[PostRecord],
    spec: &SplitSpec,
) -> Result<(), BenchError> {
    match spec.regime {
        Regime::Brand => {
            let mut train_accounts = BTreeSet::new();
            let mut test_accounts = BTreeSet::new();
            for post in posts {
                if assignment.train_posts.contains(&post.post_id) {
                    train_accounts.insert(&post.account_id);
                } else if assignment.test_posts.contains(&post.post_id) {
                    test_accounts.insert(&post.account_id);
                }
            }
            for pair in pairs {
                let key = pair.key();
                if assignment.train_pairs.contains(&key) {
                    train_accounts.insert(&pair.t1.account_id);
                } else if assignment.test_pairs.contains(&key) {
                    test_accounts.insert(&pair.t1.account_id);
                }
            }
            if let Some(shared) = train_accounts.intersection(&test_accounts).next() {
                return Err(BenchError::Leakage(format!(
                    "account {shared} appears in both sides of a brand split"
                )));
            }
        }
        Regime::Time => {
            let cutoff = spec.cutoff_date.ok_or_else(|| {
                BenchError::SplitConfig("time regime requires cutoff_date".to_string())
            })?;
            for post in posts {
                let test = assignment.test_posts.contains(&post.post_id);
                let after = post.created_at.date_naive() >= cutoff;
                if test != after && assignment.post_side(&post.post_id).is_some() {
                    return Err(BenchError::Leakage(format!(
                        "post {} is on the wrong side of the time cutoff",
                        post.post_id
                    )));
                }
            }
            for pair in pairs {
                let key = pair.key();
                let test = assignment.test_pairs.contains(&key);
                let after = pair.t2.created_at.date_naive() >= cutoff;
                if test != after && assignment.pair_side(&key).is_some() {
                    return Err(BenchError::Leakage(format!(
                        "pair {key} is on the wrong side of the time cutoff"
                    )));
                }
            }
        }
        Regime::Random => {}
    }
    Ok(())
}
