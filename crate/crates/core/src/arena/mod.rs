//! Arena engine: players, oracle-judged pairwise matches with both-order
//! evaluation, Elo rating maintenance with dataset anchors, deterministic
//! scheduling, replayable logs, and the iterative improvement loop.

pub mod bradley_terry;
pub mod iterate;
pub mod tournament;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{JudgeVerdict, Winner};

pub use iterate::{iterate_transsuasion, IterationResult, LoopConfig};
pub use tournament::{replay_log, run_tournament, ArenaInstance, TournamentOutcome};

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("match log integrity failure at match_id {match_id}: {reason}")]
    Integrity { match_id: u64, reason: String },
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// What kind of competitor a player is. Anchor generations come from the
/// dataset itself (the low and high sides of each pair), never a provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    Model,
    BaselineT1,
    ToplineT2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub player_id: String,
    pub kind: PlayerKind,
    pub rating: f64,
    pub games: u64,
}

impl Player {
    pub fn new(player_id: impl Into<String>, kind: PlayerKind, rating: f64) -> Self {
        Player {
            player_id: player_id.into(),
            kind,
            rating,
            games: 0,
        }
    }
}

/// Elo state per player, reconstructible by replaying the match log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTable {
    pub initial_rating: f64,
    players: BTreeMap<String, Player>,
}

impl RatingTable {
    pub fn new(players: impl IntoIterator<Item = (String, PlayerKind)>, initial_rating: f64) -> Self {
        RatingTable {
            initial_rating,
            players: players
                .into_iter()
                .map(|(id, kind)| (id.clone(), Player::new(id, kind, initial_rating)))
                .collect(),
        }
    }

    pub fn get(&self, player_id: &str) -> Option<&Player> {
        self.players.get(player_id)
    }

    pub fn rating(&self, player_id: &str) -> Option<f64> {
        self.players.get(player_id).map(|p| p.rating)
    }

    pub fn players(&self) -> impl Iterator<Item = &Player> {
        self.players.values()
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    /// Sum of all ratings; conserved by every decided or abandoned match.
    pub fn rating_sum(&self) -> f64 {
        self.players.values().map(|p| p.rating).sum()
    }

    fn apply(&mut self, a: &str, b: &str, post: (f64, f64)) -> Result<(), ArenaError> {
        {
            let pa = self
                .players
                .get_mut(a)
                .ok_or_else(|| ArenaError::UnknownPlayer(a.to_string()))?;
            pa.rating = post.0;
            pa.games += 1;
        }
        let pb = self
            .players
            .get_mut(b)
            .ok_or_else(|| ArenaError::UnknownPlayer(b.to_string()))?;
        pb.rating = post.1;
        pb.games += 1;
        Ok(())
    }

    /// Players sorted by descending rating, ties by id.
    pub fn leaderboard(&self) -> Vec<&Player> {
        let mut rows: Vec<&Player> = self.players.values().collect();
        rows.sort_by(|a, b| {
            b.rating
                .partial_cmp(&a.rating)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.player_id.cmp(&b.player_id))
        });
        rows
    }
}

/// Which player's generation the judge saw first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    /// player_a's text is option A.
    Ab,
    /// player_b's text is option A.
    Ba,
}

/// Terminal state of one match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatchOutcome {
    Decided { verdict: JudgeVerdict },
    /// Judge unreachable after retry; ratings unchanged.
    Abandoned { error: String },
}

/// One arena comparison, persisted before its rating update is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: u64,
    pub instance_id: String,
    pub player_a: String,
    pub player_b: String,
    pub order: MatchOrder,
    pub outcome: MatchOutcome,
    pub pre_ratings: (f64, f64),
    pub post_ratings: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub k_factor: f64,
    pub initial_rating: f64,
    pub rounds: u64,
    pub seed: u64,
    pub both_orders: bool,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            k_factor: 4.0,
            initial_rating: 1000.0,
            rounds: 1,
            seed: 0,
            both_orders: true,
        }
    }
}

/// Win expectancy for the first player on the base-10, 400-point logistic
/// curve: a 100-point edge is about a 64% chance of winning.
pub fn expected_score(r_a: f64, r_b: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_b - r_a) / 400.0))
}

/// Score earned by player_a given the judged position outcome.
pub fn score_for_a(order: MatchOrder, winner: Winner) -> f64 {
    match (order, winner) {
        (_, Winner::Tie) => 0.5,
        (MatchOrder::Ab, Winner::First) | (MatchOrder::Ba, Winner::Second) => 1.0,
        (MatchOrder::Ab, Winner::Second) | (MatchOrder::Ba, Winner::First) => 0.0,
    }
}

/// One online Elo update. Rating sum is conserved exactly.
pub fn elo_update(pre: (f64, f64), score_a: f64, k_factor: f64) -> (f64, f64) {
    let e_a = expected_score(pre.0, pre.1);
    let delta = k_factor * (score_a - e_a);
    (pre.0 + delta, pre.1 - delta)
}

/// Post ratings implied by a match record's pre ratings and outcome.
pub fn update_ratings(record: &MatchRecord, k_factor: f64) -> (f64, f64) {
    match &record.outcome {
        MatchOutcome::Abandoned { .. } => record.pre_ratings,
        MatchOutcome::Decided { verdict } => elo_update(
            record.pre_ratings,
            score_for_a(record.order, verdict.winner),
            k_factor,
        ),
    }
}

/// A scheduled comparison, not yet judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedMatch {
    pub instance_id: String,
    pub player_a: String,
    pub player_b: String,
    pub order: MatchOrder,
}

/// A pairing skipped for want of a generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPairing {
    pub instance_id: String,
    pub player: String,
}

/// Per-player generations keyed by instance id.
pub type Generations = BTreeMap<String, BTreeMap<String, String>>;

/// Round-robin plan: each round samples one instance (seeded) and issues
/// every player pairing on it, in both orders when configured. Pairings
/// missing a generation are skipped and logged.
pub fn schedule_matches(
    player_ids: &[String],
    instance_ids: &[String],
    generations: &Generations,
    cfg: &TournamentConfig,
) -> (Vec<PlannedMatch>, Vec<SkippedPairing>) {
    let mut plan = Vec::new();
    let mut skipped = Vec::new();
    if instance_ids.is_empty() || player_ids.len() < 2 {
        return (plan, skipped);
    }
    let mut sorted_players = player_ids.to_vec();
    sorted_players.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for _ in 0..cfg.rounds {
        let instance_id = instance_ids
            .choose(&mut rng)
            .expect("instance list is non-empty")
            .clone();
        for (i, a) in sorted_players.iter().enumerate() {
            for b in &sorted_players[i + 1..] {
                let has = |p: &str| {
                    generations
                        .get(p)
                        .map(|m| m.contains_key(&instance_id))
                        .unwrap_or(false)
                };
                let mut missing = false;
                for p in [a.as_str(), b.as_str()] {
                    if !has(p) {
                        skipped.push(SkippedPairing {
                            instance_id: instance_id.clone(),
                            player: p.to_string(),
                        });
                        missing = true;
                    }
                }
                if missing {
                    continue;
                }
                plan.push(PlannedMatch {
                    instance_id: instance_id.clone(),
                    player_a: a.clone(),
                    player_b: b.clone(),
                    order: MatchOrder::Ab,
                });
                if cfg.both_orders {
                    plan.push(PlannedMatch {
                        instance_id: instance_id.clone(),
                        player_a: a.clone(),
                        player_b: b.clone(),
                        order: MatchOrder::Ba,
                    });
                }
            }
        }
    }
    (plan, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expected_score_examples() {
        assert_eq!(expected_score(1000.0, 1000.0), 0.5);
        assert!((expected_score(1100.0, 1000.0) - 0.6401).abs() < 0.0005);
        assert!((expected_score(600.0, 1000.0) - 0.0909).abs() < 1e-4);
    }

    #[test]
    fn elo_update_examples() {
        let (ra, rb) = elo_update((1000.0, 1000.0), 1.0, 32.0);
        assert_eq!((ra, rb), (1016.0, 984.0));
        // tie at equal ratings changes nothing
        let (ra, rb) = elo_update((1000.0, 1000.0), 0.5, 32.0);
        assert_eq!((ra, rb), (1000.0, 1000.0));
        let (ra, _) = elo_update((1100.0, 1000.0), 1.0, 32.0);
        assert!((ra - 1111.5).abs() < 0.05);
    }

    #[test]
    fn score_mapping_accounts_for_order() {
        assert_eq!(score_for_a(MatchOrder::Ab, Winner::First), 1.0);
        assert_eq!(score_for_a(MatchOrder::Ab, Winner::Second), 0.0);
        assert_eq!(score_for_a(MatchOrder::Ba, Winner::First), 0.0);
        assert_eq!(score_for_a(MatchOrder::Ba, Winner::Second), 1.0);
        assert_eq!(score_for_a(MatchOrder::Ab, Winner::Tie), 0.5);
    }

    fn gen_for(players: &[&str], instances: &[&str]) -> Generations {
        let mut g = Generations::new();
        for p in players {
            let mut m = BTreeMap::new();
            for i in instances {
                m.insert(i.to_string(), format!("{p}-{i}"));
            }
            g.insert(p.to_string(), m);
        }
        g
    }

    #[test]
    fn three_players_one_instance_both_orders() {
        let players: Vec<String> = ["p1", "p2", "p3"].iter().map(|s| s.to_string()).collect();
        let instances = vec!["i1".to_string()];
        let generations = gen_for(&["p1", "p2", "p3"], &["i1"]);
        let cfg = TournamentConfig::default();
        let (plan, skipped) = schedule_matches(&players, &instances, &generations, &cfg);
        assert_eq!(plan.len(), 6);
        assert!(skipped.is_empty());
    }

    #[test]
    fn single_order_when_disabled() {
        let players: Vec<String> = ["p1", "p2"].iter().map(|s| s.to_string()).collect();
        let instances = vec!["i1".to_string()];
        let generations = gen_for(&["p1", "p2"], &["i1"]);
        let cfg = TournamentConfig {
            both_orders: false,
            ..TournamentConfig::default()
        };
        let (plan, _) = schedule_matches(&players, &instances, &generations, &cfg);
        assert_eq!(plan.len(), 1);
    }

    #[test]
    fn schedule_is_seed_deterministic() {
        let players: Vec<String> = ["p1", "p2"].iter().map(|s| s.to_string()).collect();
        let instances: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
        let generations = gen_for(
            &["p1", "p2"],
            &instances.iter().map(String::as_str).collect::<Vec<_>>(),
        );
        let cfg = TournamentConfig {
            rounds: 20,
            seed: 42,
            ..TournamentConfig::default()
        };
        let (plan1, _) = schedule_matches(&players, &instances, &generations, &cfg);
        let (plan2, _) = schedule_matches(&players, &instances, &generations, &cfg);
        assert_eq!(plan1, plan2);
        let cfg2 = TournamentConfig { seed: 43, ..cfg };
        let (plan3, _) = schedule_matches(&players, &instances, &generations, &cfg2);
        assert_ne!(plan1, plan3);
    }

    #[test]
    fn missing_generation_skips_pairing() {
        let players: Vec<String> = ["p1", "p2"].iter().map(|s| s.to_string()).collect();
        let instances = vec!["i1".to_string()];
        let generations = gen_for(&["p1"], &["i1"]);
        let cfg = TournamentConfig::default();
        let (plan, skipped) = schedule_matches(&players, &instances, &generations, &cfg);
        assert!(plan.is_empty());
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].player, "p2");
    }

    proptest! {
        #[test]
        fn expected_scores_sum_to_one(ra in 0.0f64..3000.0, rb in 0.0f64..3000.0) {
            let sum = expected_score(ra, rb) + expected_score(rb, ra);
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn elo_update_conserves_sum(ra in 500.0f64..1500.0, rb in 500.0f64..1500.0,
                                    score in prop_oneof![Just(0.0), Just(0.5), Just(1.0)],
                                    k in 1.0f64..64.0) {
            let (na, nb) = elo_update((ra, rb), score, k);
            prop_assert!(((na + nb) - (ra + rb)).abs() < 1e-9);
        }
    }
}
