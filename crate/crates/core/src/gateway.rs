//! Operator-facing service state: file-based persistence for players,
//! submissions, tournaments, and leaderboards.
//!
//! One service instance owns a data directory (guarded by a lock file).
//! Everything is reconstructible from the directory contents: match logs
//! are the source of truth and leaderboards are replayed from them, so a
//! kill-and-restart yields the identical leaderboard.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::tournament::{
    self, leaderboard_rows, read_log, replay_log, with_anchor_generations, ArenaInstance,
    LeaderboardRow, BASELINE_PLAYER, TOPLINE_PLAYER,
};
use crate::arena::{
    schedule_matches, ArenaError, Generations, MatchRecord, PlayerKind, TournamentConfig,
};
use crate::benchkit::{read_instances, BenchError, TaskInstance};
use crate::providers::http::provider_from_config;
use crate::providers::mock::{FnJudge, MockEmbedder, MockGenerator, ScriptedJudge};
use crate::providers::{Provider, ProviderConfig, ProviderError, Role};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("data directory {0} is locked by another service instance")]
    Locked(PathBuf),
    #[error("unknown player {0}")]
    UnknownPlayer(String),
    #[error("player {0} already registered")]
    DuplicatePlayer(String),
    #[error("unknown tournament {0}")]
    UnknownTournament(String),
    #[error("submission references unknown instance ids: {0:?}")]
    UnknownInstances(Vec<String>),
    #[error("no benchmark instances loaded for task {0}")]
    NoInstances(String),
    #[error("config parse error at {path}:{line}: {reason}")]
    ConfigParse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Service settings, loadable from a `key = value` text file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    #[serde(default)]
    pub providers: BTreeMap<Role, ProviderConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8787".to_string(),
            data_dir: PathBuf::from("./arena-data"),
            auth_token: None,
            providers: BTreeMap::new(),
        }
    }
}

impl ServiceConfig {
    /// Parse the `key = value` config format. Unknown keys are errors, as
    /// are malformed lines; comments start with `#`.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)?;
        let mut config = ServiceConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(GatewayError::ConfigParse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: "expected 'key = value'".to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim().to_string();
            match key {
                "listen" => config.listen = value,
                "data_dir" => config.data_dir = PathBuf::from(value),
                "auth_token" => config.auth_token = Some(value),
                _ => {
                    if let Some(rest) = key.strip_prefix("provider.") {
                        let mut parts = rest.splitn(2, '.');
                        let (Some(role_str), Some(field)) = (parts.next(), parts.next()) else {
                            return Err(GatewayError::ConfigParse {
                                path: path.display().to_string(),
                                line: idx + 1,
                                reason: format!("bad provider key: {key}"),
                            });
                        };
                        let role: Role = role_str.parse().map_err(|reason| {
                            GatewayError::ConfigParse {
                                path: path.display().to_string(),
                                line: idx + 1,
                                reason,
                            }
                        })?;
                        let entry = config
                            .providers
                            .entry(role)
                            .or_insert_with(|| ProviderConfig::new(role, ""));
                        match field {
                            "url" => entry.endpoint = value,
                            "key" => entry.api_key = Some(value),
                            "timeout_secs" => {
                                entry.timeout_secs =
                                    value.parse().map_err(|_| GatewayError::ConfigParse {
                                        path: path.display().to_string(),
                                        line: idx + 1,
                                        reason: format!("bad integer: {value}"),
                                    })?
                            }
                            "max_retries" => {
                                entry.max_retries =
                                    value.parse().map_err(|_| GatewayError::ConfigParse {
                                        path: path.display().to_string(),
                                        line: idx + 1,
                                        reason: format!("bad integer: {value}"),
                                    })?
                            }
                            "cache_dir" => entry.cache_dir = Some(PathBuf::from(value)),
                            other => {
                                return Err(GatewayError::ConfigParse {
                                    path: path.display().to_string(),
                                    line: idx + 1,
                                    reason: format!("unknown provider field: {other}"),
                                })
                            }
                        }
                    } else {
                        return Err(GatewayError::ConfigParse {
                            path: path.display().to_string(),
                            line: idx + 1,
                            reason: format!("unknown key: {key}"),
                        });
                    }
                }
            }
        }
        for provider in config.providers.values_mut() {
            *provider = provider.clone().with_env_overrides();
        }
        Ok(config)
    }

    /// Build the provider for a role. `mock://` endpoints construct the
    /// deterministic in-process mocks: `mock://first`, `mock://longer`,
    /// `mock://hash/<seed>` (judges), `mock://seed/<seed>` (embedder and
    /// generator).
    pub fn provider(&self, role: Role) -> Result<Box<dyn Provider>, GatewayError> {
        let config = self
            .providers
            .get(&role)
            .cloned()
            .unwrap_or_else(|| ProviderConfig::new(role, "mock://seed/0"));
        Ok(build_provider(config)?)
    }
}

fn mock_seed(endpoint: &str) -> u64 {
    endpoint
        .rsplit('/')
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Construct a provider from config, honoring `mock://` endpoints.
pub fn build_provider(config: ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    if let Some(rest) = config.endpoint.strip_prefix("mock://") {
        let seed = mock_seed(&config.endpoint);
        return Ok(match (config.role, rest.split('/').next().unwrap_or("")) {
            (Role::Judge, "first") => Box::new(ScriptedJudge::new(Vec::<String>::new())),
            (Role::Judge, "longer") => Box::new(FnJudge::new(|_, a, b| {
                if b.len() > a.len() {
                    "B".to_string()
                } else {
                    "A".to_string()
                }
            })),
            (Role::Judge, _) => Box::new(FnJudge::new(move |prompt, a, b| {
                use std::collections::hash_map::DefaultHasher;
                use std::hash::{Hash, Hasher};
                let mut h = DefaultHasher::new();
                (seed, prompt, a, b).hash(&mut h);
                if h.finish().is_multiple_of(2) {
                    "A".to_string()
                } else {
                    "B".to_string()
                }
            })),
            (Role::Embedder, _) => Box::new(MockEmbedder::new(seed)),
            (Role::Generator, _) => Box::new(MockGenerator::new(seed)),
            (Role::Captioner, _) => Box::new(crate::providers::mock::MockCaptioner::default()),
            (Role::Classifier, _) => Box::new(crate::providers::mock::MockClassifier::default()),
            (Role::Scorer, _) => Box::new(crate::providers::mock::MockScorer::uniform(-1.0)),
        });
    }
    provider_from_config(config)
}

/// A model's generations for one task's instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionBundle {
    pub player_id: String,
    pub task: String,
    pub generations: BTreeMap<String, String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRegistration {
    pub player_id: String,
    pub kind: PlayerKind,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TournamentState {
    Pending,
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TournamentStatus {
    pub tournament_id: String,
    pub task: String,
    pub state: TournamentState,
    pub planned_matches: u64,
    pub played_matches: u64,
    pub abandoned_matches: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: TournamentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredResponse {
    pub key: String,
    pub status: u16,
    pub body: serde_json::Value,
}

/// File layout rooted at the data directory.
pub struct Store {
    root: PathBuf,
    /// Present only on the locking handle; removed on drop.
    lock_path: Option<PathBuf>,
}

impl Store {
    /// Open (and lock) a data directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        fs::create_dir_all(root.join("submissions"))?;
        fs::create_dir_all(root.join("tournaments"))?;
        let lock_path = root.join("lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(GatewayError::Locked(root));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Store {
            root,
            lock_path: Some(lock_path),
        })
    }

    /// Borrow an already-locked data directory without taking the lock.
    /// For worker threads owned by the same process as the locking handle.
    pub fn open_unlocked(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store {
            root,
            lock_path: None,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn players_path(&self) -> PathBuf {
        self.root.join("players.ndjson")
    }

    fn instances_path(&self) -> PathBuf {
        self.root.join("instances.ndjson")
    }

    fn idempotency_path(&self) -> PathBuf {
        self.root.join("idempotency.ndjson")
    }

    fn append_line<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), GatewayError> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        serde_json::to_writer(&mut f, value)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn players(&self) -> Result<Vec<PlayerRegistration>, GatewayError> {
        let path = self.players_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for line in BufReader::new(fs::File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line)?);
        }
        Ok(out)
    }

    pub fn register_player(&self, player_id: &str) -> Result<PlayerRegistration, GatewayError> {
        if self.players()?.iter().any(|p| p.player_id == player_id) {
            return Err(GatewayError::DuplicatePlayer(player_id.to_string()));
        }
        let registration = PlayerRegistration {
            player_id: player_id.to_string(),
            kind: PlayerKind::Model,
            registered_at: Utc::now(),
        };
        self.append_line(&self.players_path(), &registration)?;
        Ok(registration)
    }

    /// Install the benchmark instance file the arena serves.
    pub fn install_instances(&self, instances: &[TaskInstance]) -> Result<(), GatewayError> {
        let mut buf = Vec::new();
        crate::benchkit::write_instances(&mut buf, instances)?;
        fs::write(self.instances_path(), buf)?;
        Ok(())
    }

    pub fn instances(&self) -> Result<Vec<TaskInstance>, GatewayError> {
        let path = self.instances_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_instances(BufReader::new(fs::File::open(path)?))?)
    }

    /// Store a submission after validating every referenced instance id.
    pub fn add_submission(&self, bundle: &SubmissionBundle) -> Result<(), GatewayError> {
        if !self.players()?.iter().any(|p| p.player_id == bundle.player_id) {
            return Err(GatewayError::UnknownPlayer(bundle.player_id.clone()));
        }
        let known: std::collections::BTreeSet<String> = self
            .instances()?
            .iter()
            .map(|i| i.instance_id.clone())
            .collect();
        let unknown: Vec<String> = bundle
            .generations
            .keys()
            .filter(|id| !known.contains(*id))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(GatewayError::UnknownInstances(unknown));
        }
        let dir = self.root.join("submissions").join(&bundle.player_id);
        fs::create_dir_all(&dir)?;
        let body = serde_json::to_vec_pretty(bundle)?;
        let tmp = dir.join(".tmp-submission");
        fs::write(&tmp, body)?;
        fs::rename(tmp, dir.join(format!("{}.json", bundle.task)))?;
        Ok(())
    }

    pub fn submissions_for_task(&self, task: &str) -> Result<Vec<SubmissionBundle>, GatewayError> {
        let mut out = Vec::new();
        let base = self.root.join("submissions");
        if !base.exists() {
            return Ok(out);
        }
        let mut player_dirs: Vec<PathBuf> = fs::read_dir(&base)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        player_dirs.sort();
        for dir in player_dirs {
            let path = dir.join(format!("{task}.json"));
            if path.exists() {
                out.push(serde_json::from_slice(&fs::read(path)?)?);
            }
        }
        Ok(out)
    }

    fn tournament_dir(&self, id: &str) -> PathBuf {
        self.root.join("tournaments").join(id)
    }

    pub fn tournament_status(&self, id: &str) -> Result<TournamentStatus, GatewayError> {
        let path = self.tournament_dir(id).join("status.json");
        if !path.exists() {
            return Err(GatewayError::UnknownTournament(id.to_string()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    fn write_status(&self, status: &TournamentStatus) -> Result<(), GatewayError> {
        let dir = self.tournament_dir(&status.tournament_id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join(".tmp-status");
        fs::write(&tmp, serde_json::to_vec_pretty(status)?)?;
        fs::rename(tmp, dir.join("status.json"))?;
        Ok(())
    }

    pub fn tournament_ids(&self) -> Result<Vec<String>, GatewayError> {
        let base = self.root.join("tournaments");
        if !base.exists() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(base)?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn match_log(&self, id: &str) -> Result<Vec<MatchRecord>, GatewayError> {
        let path = self.tournament_dir(id).join("log.ndjson");
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_log(BufReader::new(fs::File::open(path)?))?)
    }

    /// Run a tournament synchronously: schedule, judge, and persist.
    /// Returns the completed status.
    pub fn run_tournament(
        &self,
        tournament_id: &str,
        task: &str,
        judge: &dyn Provider,
        cfg: &TournamentConfig,
    ) -> Result<TournamentStatus, GatewayError> {
        let arena_instances = self.arena_instances_for_task(task)?;
        if arena_instances.is_empty() {
            return Err(GatewayError::NoInstances(task.to_string()));
        }
        let mut generations: Generations = Generations::new();
        for bundle in self.submissions_for_task(task)? {
            generations
                .entry(bundle.player_id.clone())
                .or_default()
                .extend(bundle.generations.clone());
        }
        let generations = with_anchor_generations(generations, &arena_instances);

        let mut players: Vec<(String, PlayerKind)> = vec![
            (BASELINE_PLAYER.to_string(), PlayerKind::BaselineT1),
            (TOPLINE_PLAYER.to_string(), PlayerKind::ToplineT2),
        ];
        for p in self.players()? {
            players.push((p.player_id, PlayerKind::Model));
        }

        let player_ids: Vec<String> = players.iter().map(|(id, _)| id.clone()).collect();
        let instance_ids: Vec<String> = arena_instances
            .iter()
            .map(|i| i.instance_id.clone())
            .collect();
        let (plan, _skipped) = schedule_matches(&player_ids, &instance_ids, &generations, cfg);

        let mut status = TournamentStatus {
            tournament_id: tournament_id.to_string(),
            task: task.to_string(),
            state: TournamentState::Running,
            planned_matches: plan.len() as u64,
            played_matches: 0,
            abandoned_matches: 0,
            error: None,
            config: cfg.clone(),
        };
        self.write_status(&status)?;

        let dir = self.tournament_dir(tournament_id);
        fs::create_dir_all(&dir)?;
        let mut log = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("log.ndjson"))?;

        match tournament::run_tournament(
            &plan,
            &players,
            &arena_instances,
            &generations,
            judge,
            cfg,
            &mut log,
        ) {
            Ok(outcome) => {
                status.state = TournamentState::Completed;
                status.played_matches = outcome.records.len() as u64;
                status.abandoned_matches = outcome.abandoned;
                self.write_status(&status)?;
                Ok(status)
            }
            Err(e) => {
                status.state = TournamentState::Failed;
                status.error = Some(e.to_string());
                self.write_status(&status)?;
                Err(e.into())
            }
        }
    }

    /// Arena-ready view of the stored benchmark instances for one task tag:
    /// instances with both a baseline text and a reference.
    pub fn arena_instances_for_task(&self, task: &str) -> Result<Vec<ArenaInstance>, GatewayError> {
        Ok(self
            .instances()?
            .into_iter()
            .filter(|i| i.task.tag() == task)
            .filter_map(|i| {
                let baseline = i.baseline_text.clone()?;
                let topline = i.references.first().cloned()?;
                Some(ArenaInstance {
                    instance_id: i.instance_id,
                    judge_prompt: i.prompt,
                    baseline_text: baseline,
                    topline_text: topline,
                })
            })
            .collect())
    }

    /// Leaderboard for a task: the replayed rating table of its latest
    /// completed tournament.
    pub fn leaderboard(&self, task: Option<&str>) -> Result<Vec<LeaderboardRow>, GatewayError> {
        let mut latest_per_task: BTreeMap<String, String> = BTreeMap::new();
        for id in self.tournament_ids()? {
            if let Ok(status) = self.tournament_status(&id) {
                if status.state == TournamentState::Completed {
                    latest_per_task.insert(status.task.clone(), id);
                }
            }
        }
        match task {
            Some(task) => match latest_per_task.get(task) {
                Some(id) => self.replayed_rows(id),
                None => Ok(Vec::new()),
            },
            None => {
                // average rating per player across the latest tournament of
                // every task
                let mut sums: BTreeMap<String, (PlayerKind, f64, u64, u64)> = BTreeMap::new();
                for id in latest_per_task.values() {
                    for row in self.replayed_rows(id)? {
                        let entry = sums
                            .entry(row.player_id.clone())
                            .or_insert((row.kind, 0.0, 0, 0));
                        entry.1 += row.rating;
                        entry.2 += 1;
                        entry.3 += row.games;
                    }
                }
                let mut rows: Vec<LeaderboardRow> = sums
                    .into_iter()
                    .map(|(player_id, (kind, sum, n, games))| LeaderboardRow {
                        player_id,
                        kind,
                        rating: sum / n.max(1) as f64,
                        games,
                    })
                    .collect();
                rows.sort_by(|a, b| {
                    b.rating
                        .partial_cmp(&a.rating)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then_with(|| a.player_id.cmp(&b.player_id))
                });
                Ok(rows)
            }
        }
    }

    fn replayed_rows(&self, tournament_id: &str) -> Result<Vec<LeaderboardRow>, GatewayError> {
        let status = self.tournament_status(tournament_id)?;
        let records = self.match_log(tournament_id)?;
        let roster = tournament::roster_from_log(&records);
        let table = replay_log(&records, &roster, &status.config)?;
        Ok(leaderboard_rows(&table))
    }

    pub fn lookup_idempotency(&self, key: &str) -> Result<Option<StoredResponse>, GatewayError> {
        let path = self.idempotency_path();
        if !path.exists() {
            return Ok(None);
        }
        let mut found = None;
        for line in BufReader::new(fs::File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let stored: StoredResponse = serde_json::from_str(&line)?;
            if stored.key == key {
                found = Some(stored);
            }
        }
        Ok(found)
    }

    pub fn record_idempotency(
        &self,
        key: &str,
        status: u16,
        body: serde_json::Value,
    ) -> Result<(), GatewayError> {
        self.append_line(
            &self.idempotency_path(),
            &StoredResponse {
                key: key.to_string(),
                status,
                body,
            },
        )
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if let Some(lock) = &self.lock_path {
            let _ = fs::remove_file(lock);
        }
    }
}
