//! Tournament execution and log replay.
//!
//! Matches are judged in plan order; every `MatchRecord` is appended to the
//! write-ahead log (and flushed) before its rating update is applied to the
//! live table, so the persisted log is always the source of truth. Updates
//! are applied strictly in `match_id` order by this single serialized
//! applier. Replay recomputes the table and fails on the first gap or
//! tampered record.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    update_ratings, ArenaError, Generations, MatchOrder, MatchOutcome, MatchRecord, PlannedMatch,
    Player, PlayerKind, RatingTable, TournamentConfig,
};
use crate::providers::{self, Provider, ProviderError};

/// What the arena needs to know about one benchmark instance: the judge's
/// comparison prompt plus the dataset texts that anchor the baseline and
/// topline players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaInstance {
    pub instance_id: String,
    pub judge_prompt: String,
    pub baseline_text: String,
    pub topline_text: String,
}

/// Reserved player ids for the dataset anchors.
pub const BASELINE_PLAYER: &str = "baseline-t1";
pub const TOPLINE_PLAYER: &str = "topline-t2";

/// Add anchor players' generations (the dataset texts) to a generation map.
pub fn with_anchor_generations(mut generations: Generations, instances: &[ArenaInstance]) -> Generations {
    let baseline = generations.entry(BASELINE_PLAYER.to_string()).or_default();
    for inst in instances {
        baseline.insert(inst.instance_id.clone(), inst.baseline_text.clone());
    }
    let topline = generations.entry(TOPLINE_PLAYER.to_string()).or_default();
    for inst in instances {
        topline.insert(inst.instance_id.clone(), inst.topline_text.clone());
    }
    generations
}

#[derive(Debug)]
pub struct TournamentOutcome {
    pub table: RatingTable,
    pub records: Vec<MatchRecord>,
    pub abandoned: u64,
}

/// Execute a match plan. `players` must cover every id in the plan; the log
/// writer receives one NDJSON record per match before the table changes.
pub fn run_tournament(
    plan: &[PlannedMatch],
    players: &[(String, PlayerKind)],
    instances: &[ArenaInstance],
    generations: &Generations,
    judge: &dyn Provider,
    cfg: &TournamentConfig,
    log: &mut dyn Write,
) -> Result<TournamentOutcome, ArenaError> {
    let prompts: BTreeMap<&str, &str> = instances
        .iter()
        .map(|i| (i.instance_id.as_str(), i.judge_prompt.as_str()))
        .collect();
    let mut table = RatingTable::new(players.iter().cloned(), cfg.initial_rating);
    let mut records = Vec::with_capacity(plan.len());
    let mut abandoned = 0u64;

    for (idx, planned) in plan.iter().enumerate() {
        let match_id = idx as u64 + 1;
        let text = |player: &str| -> &str {
            generations
                .get(player)
                .and_then(|m| m.get(&planned.instance_id))
                .map(String::as_str)
                .unwrap_or_default()
        };
        let (first, second) = match planned.order {
            MatchOrder::Ab => (text(&planned.player_a), text(&planned.player_b)),
            MatchOrder::Ba => (text(&planned.player_b), text(&planned.player_a)),
        };
        let prompt = prompts.get(planned.instance_id.as_str()).copied().unwrap_or("");

        let outcome = match judge_with_retry(judge, prompt, first, second) {
            Ok(verdict) => MatchOutcome::Decided { verdict },
            Err(e) => {
                abandoned += 1;
                MatchOutcome::Abandoned { error: e.to_string() }
            }
        };

        let pre = (
            table
                .rating(&planned.player_a)
                .ok_or_else(|| ArenaError::UnknownPlayer(planned.player_a.clone()))?,
            table
                .rating(&planned.player_b)
                .ok_or_else(|| ArenaError::UnknownPlayer(planned.player_b.clone()))?,
        );
        let mut record = MatchRecord {
            match_id,
            instance_id: planned.instance_id.clone(),
            player_a: planned.player_a.clone(),
            player_b: planned.player_b.clone(),
            order: planned.order,
            outcome,
            pre_ratings: pre,
            post_ratings: pre,
        };
        record.post_ratings = update_ratings(&record, cfg.k_factor);

        // write-ahead: persist the full record before touching the table
        serde_json::to_writer(&mut *log, &record)?;
        log.write_all(b"\n")?;
        log.flush()?;

        table.apply(&record.player_a, &record.player_b, record.post_ratings)?;
        records.push(record);
    }

    Ok(TournamentOutcome {
        table,
        records,
        abandoned,
    })
}

fn judge_with_retry(
    judge: &dyn Provider,
    prompt: &str,
    first: &str,
    second: &str,
) -> Result<crate::providers::JudgeVerdict, ProviderError> {
    match providers::judge_pair(judge, prompt, first, second) {
        Ok(v) => Ok(v),
        Err(ProviderError::Transport { .. }) => providers::judge_pair(judge, prompt, first, second),
        Err(e) => Err(e),
    }
}

/// Recompute the rating table from a match log. Fails on the first gap in
/// `match_id`, any pre-rating that disagrees with the running table, or any
/// post-rating that does not follow from the update rule.
pub fn replay_log(
    records: &[MatchRecord],
    players: &[(String, PlayerKind)],
    cfg: &TournamentConfig,
) -> Result<RatingTable, ArenaError> {
    let mut table = RatingTable::new(players.iter().cloned(), cfg.initial_rating);
    for (idx, record) in records.iter().enumerate() {
        let expected_id = idx as u64 + 1;
        if record.match_id != expected_id {
            return Err(ArenaError::Integrity {
                match_id: expected_id,
                reason: format!("expected match_id {expected_id}, found {}", record.match_id),
            });
        }
        let live_pre = (
            table
                .rating(&record.player_a)
                .ok_or_else(|| ArenaError::UnknownPlayer(record.player_a.clone()))?,
            table
                .rating(&record.player_b)
                .ok_or_else(|| ArenaError::UnknownPlayer(record.player_b.clone()))?,
        );
        if live_pre != record.pre_ratings {
            return Err(ArenaError::Integrity {
                match_id: record.match_id,
                reason: format!(
                    "pre_ratings {:?} disagree with replayed table {:?}",
                    record.pre_ratings, live_pre
                ),
            });
        }
        let recomputed = update_ratings(record, cfg.k_factor);
        if recomputed != record.post_ratings {
            return Err(ArenaError::Integrity {
                match_id: record.match_id,
                reason: format!(
                    "post_ratings {:?} do not follow from the update rule ({recomputed:?})",
                    record.post_ratings
                ),
            });
        }
        table.apply(&record.player_a, &record.player_b, record.post_ratings)?;
    }
    Ok(table)
}

/// Read a match log from NDJSON.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<MatchRecord>, ArenaError> {
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Infer the player roster from a log (ids only, kind defaults to Model
/// unless the id is an anchor).
pub fn roster_from_log(records: &[MatchRecord]) -> Vec<(String, PlayerKind)> {
    let mut ids: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for r in records {
        ids.insert(&r.player_a);
        ids.insert(&r.player_b);
    }
    ids.into_iter()
        .map(|id| {
            let kind = match id {
                BASELINE_PLAYER => PlayerKind::BaselineT1,
                TOPLINE_PLAYER => PlayerKind::ToplineT2,
                _ => PlayerKind::Model,
            };
            (id.to_string(), kind)
        })
        .collect()
}

/// Leaderboard rows for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub player_id: String,
    pub kind: PlayerKind,
    pub rating: f64,
    pub games: u64,
}

pub fn leaderboard_rows(table: &RatingTable) -> Vec<LeaderboardRow> {
    table
        .leaderboard()
        .into_iter()
        .map(|p: &Player| LeaderboardRow {
            player_id: p.player_id.clone(),
            kind: p.kind,
            rating: p.rating,
            games: p.games,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::schedule_matches;
    use crate::providers::mock::{FnJudge, ScriptedJudge};

    fn instances(n: usize) -> Vec<ArenaInstance> {
        (0..n)
            .map(|i| ArenaInstance {
                instance_id: format!("i{i}"),
                judge_prompt: format!("compare for instance {i}"),
                baseline_text: format!("baseline text {i}"),
                topline_text: format!("topline text {i}"),
            })
            .collect()
    }

    fn model_generations(players: &[&str], insts: &[ArenaInstance]) -> Generations {
        let mut g = Generations::new();
        for p in players {
            let mut m = BTreeMap::new();
            for i in insts {
                m.insert(i.instance_id.clone(), format!("{p} text for {}", i.instance_id));
            }
            g.insert(p.to_string(), m);
        }
        g
    }

    fn roster(players: &[&str]) -> Vec<(String, PlayerKind)> {
        players
            .iter()
            .map(|p| (p.to_string(), PlayerKind::Model))
            .collect()
    }

    #[test]
    fn winner_gains_rating() {
        let insts = instances(1);
        let generations = model_generations(&["alpha", "beta"], &insts);
        let cfg = TournamentConfig {
            rounds: 10,
            ..TournamentConfig::default()
        };
        let player_ids: Vec<String> = vec!["alpha".into(), "beta".into()];
        let instance_ids: Vec<String> = insts.iter().map(|i| i.instance_id.clone()).collect();
        let (plan, _) = schedule_matches(&player_ids, &instance_ids, &generations, &cfg);
        // judge always prefers alpha's text regardless of position
        let judge = FnJudge::new(|_, a, _b| {
            if a.starts_with("alpha") {
                "A".to_string()
            } else {
                "B".to_string()
            }
        });
        let mut log = Vec::new();
        let out = run_tournament(&plan, &roster(&["alpha", "beta"]), &insts, &generations, &judge, &cfg, &mut log)
            .unwrap();
        assert!(out.table.rating("alpha").unwrap() > out.table.rating("beta").unwrap());
        assert_eq!(out.records.len(), plan.len());
    }

    #[test]
    fn rating_sum_is_conserved() {
        let insts = instances(3);
        let generations = model_generations(&["a", "b", "c"], &insts);
        let cfg = TournamentConfig {
            rounds: 25,
            seed: 5,
            ..TournamentConfig::default()
        };
        let player_ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let instance_ids: Vec<String> = insts.iter().map(|i| i.instance_id.clone()).collect();
        let (plan, _) = schedule_matches(&player_ids, &instance_ids, &generations, &cfg);
        let judge = ScriptedJudge::new(Vec::<String>::new()).with_fallback("A");
        let mut log = Vec::new();
        let out = run_tournament(&plan, &roster(&["a", "b", "c"]), &insts, &generations, &judge, &cfg, &mut log)
            .unwrap();
        assert!((out.table.rating_sum() - 3000.0).abs() < 1e-6);
    }

    #[test]
    fn abandoned_matches_change_nothing() {
        let insts = instances(1);
        let generations = model_generations(&["a", "b"], &insts);
        let cfg = TournamentConfig::default();
        let (plan, _) = schedule_matches(
            &["a".to_string(), "b".to_string()],
            &["i0".to_string()],
            &generations,
            &cfg,
        );
        let judge = crate::providers::mock::FailingProvider::new(crate::providers::Role::Judge);
        let mut log = Vec::new();
        let out = run_tournament(&plan, &roster(&["a", "b"]), &insts, &generations, &judge, &cfg, &mut log)
            .unwrap();
        assert_eq!(out.abandoned, plan.len() as u64);
        assert_eq!(out.table.rating("a"), Some(1000.0));
        assert_eq!(out.table.rating("b"), Some(1000.0));
    }

    #[test]
    fn replay_reproduces_live_table() {
        let insts = instances(4);
        let generations = model_generations(&["a", "b", "c"], &insts);
        let cfg = TournamentConfig {
            rounds: 30,
            seed: 11,
            ..TournamentConfig::default()
        };
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let instance_ids: Vec<String> = insts.iter().map(|i| i.instance_id.clone()).collect();
        let (plan, _) = schedule_matches(&ids, &instance_ids, &generations, &cfg);
        let judge = FnJudge::new(|_, a, b| if a.len() >= b.len() { "A".into() } else { "B".into() });
        let mut log = Vec::new();
        let out = run_tournament(&plan, &roster(&["a", "b", "c"]), &insts, &generations, &judge, &cfg, &mut log)
            .unwrap();
        // replay from the serialized log
        let records = read_log(&log[..]).unwrap();
        let replayed = replay_log(&records, &roster(&["a", "b", "c"]), &cfg).unwrap();
        assert_eq!(replayed, out.table);
    }

    #[test]
    fn empty_log_replays_to_initial() {
        let cfg = TournamentConfig::default();
        let table = replay_log(&[], &roster(&["x", "y"]), &cfg).unwrap();
        assert_eq!(table.rating("x"), Some(1000.0));
        assert_eq!(table.rating("y"), Some(1000.0));
    }

    #[test]
    fn tampered_log_is_rejected() {
        let insts = instances(1);
        let generations = model_generations(&["a", "b"], &insts);
        let cfg = TournamentConfig {
            rounds: 3,
            ..TournamentConfig::default()
        };
        let (plan, _) = schedule_matches(
            &["a".to_string(), "b".to_string()],
            &["i0".to_string()],
            &generations,
            &cfg,
        );
        let judge = ScriptedJudge::new(Vec::<String>::new()).with_fallback("A");
        let mut log = Vec::new();
        let out = run_tournament(&plan, &roster(&["a", "b"]), &insts, &generations, &judge, &cfg, &mut log)
            .unwrap();
        let mut records = out.records;
        records[2].post_ratings.0 += 1.0;
        match replay_log(&records, &roster(&["a", "b"]), &cfg) {
            Err(ArenaError::Integrity { match_id, .. }) => assert_eq!(match_id, 3),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn gap_in_log_is_rejected() {
        let insts = instances(1);
        let generations = model_generations(&["a", "b"], &insts);
        let cfg = TournamentConfig {
            rounds: 3,
            ..TournamentConfig::default()
        };
        let (plan, _) = schedule_matches(
            &["a".to_string(), "b".to_string()],
            &["i0".to_string()],
            &generations,
            &cfg,
        );
        let judge = ScriptedJudge::new(Vec::<String>::new()).with_fallback("A");
        let mut log = Vec::new();
        let out = run_tournament(&plan, &roster(&["a", "b"]), &insts, &generations, &judge, &cfg, &mut log)
            .unwrap();
        let mut records = out.records;
        records.remove(1);
        match replay_log(&records, &roster(&["a", "b"]), &cfg) {
            Err(ArenaError::Integrity { match_id, .. }) => assert_eq!(match_id, 2),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn anchors_use_dataset_text() {
        let insts = instances(2);
        let generations = with_anchor_generations(Generations::new(), &insts);
        assert_eq!(
            generations[BASELINE_PLAYER]["i0"],
            "baseline text 0"
        );
        assert_eq!(generations[TOPLINE_PLAYER]["i1"], "topline text 1");
    }
}
