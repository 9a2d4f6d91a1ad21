//! HTTP service: player registration, submissions, tournaments, leaderboard,
//! and match-log paging over the file-backed store.
//!
//! Mutating endpoints honor an `Idempotency-Key` header: a retried request
//! with the same key replays the stored response. When an auth token is
//! configured, every request must carry `Authorization: Bearer <token>`.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clap::Args;
use serde::Deserialize;
use serde_json::{json, Value};

use suasion_core::arena::TournamentConfig;
use suasion_core::benchkit;
use suasion_core::gateway::{GatewayError, ServiceConfig, Store, SubmissionBundle};
use suasion_core::providers::Role;

#[derive(Args)]
pub struct ServeArgs {
    /// Service config file (key = value); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub auth_token: Option<String>,
    /// Benchmark instances NDJSON to install into the data directory
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Judge endpoint override (mock://… or http…)
    #[arg(long)]
    pub judge: Option<String>,
}

struct AppState {
    store: Store,
    config: ServiceConfig,
    write_lock: Mutex<()>,
    tournament_counter: AtomicU64,
}

struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::UnknownInstances(ids) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": "unknown instance ids", "unknown_instances": ids }),
            },
            GatewayError::UnknownPlayer(p) => {
                ApiError::new(StatusCode::NOT_FOUND, format!("unknown player {p}"))
            }
            GatewayError::UnknownTournament(t) => {
                ApiError::new(StatusCode::NOT_FOUND, format!("unknown tournament {t}"))
            }
            GatewayError::DuplicatePlayer(p) => {
                ApiError::new(StatusCode::CONFLICT, format!("player {p} already registered"))
            }
            GatewayError::NoInstances(task) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("no arena-ready instances for task {task}"),
            ),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

fn check_auth(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(expected) = &state.config.auth_token else {
        return Ok(());
    };
    let provided = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if provided == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing or bad auth token"))
    }
}

fn idempotency_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

/// Replay a stored response or run the handler and record its result.
fn with_idempotency(
    state: &AppState,
    headers: &HeaderMap,
    run: impl FnOnce() -> Result<(StatusCode, Value), ApiError>,
) -> Result<(StatusCode, Value), ApiError> {
    let key = idempotency_key(headers);
    if let Some(key) = &key {
        if let Some(stored) = state.store.lookup_idempotency(key).map_err(ApiError::from)? {
            let status = StatusCode::from_u16(stored.status)
                .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return Ok((status, stored.body));
        }
    }
    let (status, body) = run()?;
    if let Some(key) = &key {
        state
            .store
            .record_idempotency(key, status.as_u16(), body.clone())
            .map_err(ApiError::from)?;
    }
    Ok((status, body))
}

#[derive(Deserialize)]
struct RegisterRequest {
    player_id: String,
}

async fn register_player(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(request): Json<RegisterRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    check_auth(&state, &headers)?;
    let (status, body) = with_idempotency(&state, &headers, || {
        let _guard = state.write_lock.lock().unwrap();
        let registration = state.store.register_player(&request.player_id)?;
        Ok((StatusCode::CREATED, serde_json::to_value(registration).unwrap()))
    })?;
    Ok((status, Json(body)))
}

#[derive(Deserialize)]
struct SubmissionRequest {
    player_id: String,
    task: String,
    generations: std::collections::BTreeMap<String, String>,
}

async fn add_submission(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(request): Json<SubmissionRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    check_auth(&state, &headers)?;
    let (status, body) = with_idempotency(&state, &headers, || {
        let _guard = state.write_lock.lock().unwrap();
        let bundle = SubmissionBundle {
            player_id: request.player_id.clone(),
            task: request.task.clone(),
            generations: request.generations.clone(),
            created_at: chrono::Utc::now(),
        };
        state.store.add_submission(&bundle)?;
        Ok((
            StatusCode::CREATED,
            json!({ "player_id": bundle.player_id, "task": bundle.task, "instances": bundle.generations.len() }),
        ))
    })?;
    Ok((status, Json(body)))
}

#[derive(Deserialize)]
struct TournamentRequest {
    task: String,
    #[serde(default)]
    rounds: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    k_factor: Option<f64>,
    #[serde(default)]
    both_orders: Option<bool>,
}

async fn start_tournament(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(request): Json<TournamentRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    check_auth(&state, &headers)?;
    let (status, body) = with_idempotency(&state, &headers, || {
        // validate up front so an unusable task 422s instead of failing async
        let ready = state
            .store
            .arena_instances_for_task(&request.task)
            .map_err(ApiError::from)?;
        if ready.is_empty() {
            return Err(ApiError::from(GatewayError::NoInstances(request.task.clone())));
        }
        let n = state.tournament_counter.fetch_add(1, Ordering::SeqCst) + 1;
        let tournament_id = format!("t-{n:04}");
        let cfg = TournamentConfig {
            rounds: request.rounds.unwrap_or(1),
            seed: request.seed.unwrap_or(0),
            k_factor: request.k_factor.unwrap_or(4.0),
            both_orders: request.both_orders.unwrap_or(true),
            ..TournamentConfig::default()
        };
        let data_dir = state.store.root().to_path_buf();
        let judge_config = state.config.providers.get(&Role::Judge).cloned();
        let task = request.task.clone();
        let id_for_thread = tournament_id.clone();
        // judged on a plain thread: the blocking HTTP judge client must not
        // run on the async runtime
        std::thread::spawn(move || {
            let store = match WorkerStore::open(&data_dir) {
                Ok(s) => s,
                Err(_) => return,
            };
            let judge = match judge_config
                .map(suasion_core::gateway::build_provider)
                .unwrap_or_else(|| {
                    suasion_core::gateway::build_provider(
                        suasion_core::providers::ProviderConfig::new(Role::Judge, "mock://longer"),
                    )
                }) {
                Ok(j) => j,
                Err(_) => return,
            };
            let _ = store.0.run_tournament(&id_for_thread, &task, judge.as_ref(), &cfg);
        });
        Ok((
            StatusCode::ACCEPTED,
            json!({ "tournament_id": tournament_id, "state": "pending" }),
        ))
    })?;
    Ok((status, Json(body)))
}

/// The tournament worker reuses the already-locked data directory; the lock
/// belongs to the serving process, so this wrapper bypasses `Store::open`'s
/// exclusivity by borrowing the same root.
struct WorkerStore(Store);

impl WorkerStore {
    fn open(root: &std::path::Path) -> Result<Self, GatewayError> {
        Store::open_unlocked(root).map(WorkerStore)
    }
}

async fn tournament_status(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    check_auth(&state, &headers)?;
    let status = state.store.tournament_status(&id)?;
    Ok(Json(serde_json::to_value(status).unwrap()))
}

#[derive(Deserialize)]
struct LeaderboardQuery {
    task: Option<String>,
}

async fn leaderboard(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(query): Query<LeaderboardQuery>,
) -> Result<Json<Value>, ApiError> {
    check_auth(&state, &headers)?;
    let rows = state.store.leaderboard(query.task.as_deref())?;
    Ok(Json(serde_json::to_value(rows).unwrap()))
}

#[derive(Deserialize)]
struct MatchesQuery {
    tournament: Option<String>,
    #[serde(default)]
    after: u64,
    #[serde(default = "default_page")]
    limit: usize,
}

fn default_page() -> usize {
    1000
}

async fn matches(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(query): Query<MatchesQuery>,
) -> Result<Json<Value>, ApiError> {
    check_auth(&state, &headers)?;
    let tournament_id = match query.tournament {
        Some(id) => id,
        None => state
            .store
            .tournament_ids()?
            .into_iter()
            .next_back()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no tournaments yet"))?,
    };
    let records: Vec<_> = state
        .store
        .match_log(&tournament_id)?
        .into_iter()
        .filter(|r| r.match_id > query.after)
        .take(query.limit)
        .collect();
    Ok(Json(json!({ "tournament_id": tournament_id, "matches": records })))
}

async fn health() -> Json<Value> {
    Json(json!({ "ok": true }))
}

fn build_router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/players", post(register_player))
        .route("/submissions", post(add_submission))
        .route("/tournaments", post(start_tournament))
        .route("/tournaments/{id}", get(tournament_status))
        .route("/leaderboard", get(leaderboard))
        .route("/matches", get(matches))
        .with_state(state)
}

pub fn run(args: ServeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ServiceConfig::from_file(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(data_dir) = args.data_dir {
        config.data_dir = data_dir;
    }
    if let Some(token) = args.auth_token {
        config.auth_token = Some(token);
    }
    if let Some(judge) = args.judge {
        config
            .providers
            .entry(Role::Judge)
            .or_insert_with(|| suasion_core::providers::ProviderConfig::new(Role::Judge, ""))
            .endpoint = judge;
    }

    let store = Store::open(&config.data_dir)?;
    if let Some(path) = &args.instances {
        let instances = benchkit::read_instances(std::io::BufReader::new(
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
        ))?;
        store.install_instances(&instances)?;
    }
    let existing = store.tournament_ids()?.len() as u64;
    let state = Arc::new(AppState {
        store,
        config: config.clone(),
        write_lock: Mutex::new(()),
        tournament_counter: AtomicU64::new(existing),
    });

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        let addr = listener.local_addr()?;
        println!("{}", json!({ "listening": addr.to_string(), "data_dir": config.data_dir }));
        axum::serve(listener, build_router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
