//! HTTP service round-trip: register players, submit generations, run a
//! mock-judged tournament, and read a leaderboard that matches the arena's
//! replayed rating table. Also exercises validation, auth, and idempotency.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

struct Service {
    child: Child,
    base: String,
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn write_instances(path: &Path) {
    let mut lines = Vec::new();
    for n in 0..4 {
        lines.push(
            serde_json::json!({
                "instance_id": format!("ts-gt-ref:lo{n}~hi{n}"),
                "task": {"TS-GT": "Ref"},
                "prompt": format!("improve draft number {n}"),
                "references": [format!("reference improved text {n} with detail")],
                "baseline_text": format!("draft text {n}"),
                "account_id": "acct",
            })
            .to_string(),
        );
    }
    std::fs::write(path, lines.join("\n")).unwrap();
}

fn start_service(data_dir: &Path, instances: &Path, auth: Option<&str>) -> Service {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_suasion"));
    cmd.args([
        "serve",
        "--listen",
        "127.0.0.1:0",
        "--data-dir",
        &data_dir.display().to_string(),
        "--instances",
        &instances.display().to_string(),
        "--judge",
        "mock://longer",
    ]);
    if let Some(token) = auth {
        cmd.args(["--auth-token", token]);
    }
    cmd.stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("spawn service");
    let stdout = child.stdout.take().expect("piped stdout");
    let mut reader = BufReader::new(stdout);
    let mut line = String::new();
    reader.read_line(&mut line).expect("read listening line");
    let v: serde_json::Value = serde_json::from_str(line.trim()).expect("listening line is JSON");
    let addr = v["listening"].as_str().expect("listening address").to_string();
    Service {
        child,
        base: format!("http://{addr}"),
    }
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .unwrap()
}

#[test]
fn full_round_trip_matches_arena_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let instances_path = dir.path().join("instances.ndjson");
    write_instances(&instances_path);
    let service = start_service(&dir.path().join("data"), &instances_path, None);
    let http = client();

    // fresh service: empty leaderboard
    let rows: Vec<serde_json::Value> = http
        .get(format!("{}/leaderboard", service.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(rows.is_empty());

    // register two players
    for player in ["modelA", "modelB"] {
        let response = http
            .post(format!("{}/players", service.base))
            .json(&serde_json::json!({"player_id": player}))
            .send()
            .unwrap();
        assert_eq!(response.status().as_u16(), 201);
    }
    // duplicate registration conflicts
    let dup = http
        .post(format!("{}/players", service.base))
        .json(&serde_json::json!({"player_id": "modelA"}))
        .send()
        .unwrap();
    assert_eq!(dup.status().as_u16(), 409);

    // submission referencing an unknown instance is a 422 naming it
    let bad = http
        .post(format!("{}/submissions", service.base))
        .json(&serde_json::json!({
            "player_id": "modelA",
            "task": "TS-GT-Ref",
            "generations": {"nope:missing": "text"},
        }))
        .send()
        .unwrap();
    assert_eq!(bad.status().as_u16(), 422);
    let body: serde_json::Value = bad.json().unwrap();
    assert_eq!(body["unknown_instances"][0], "nope:missing");

    // valid submissions: modelA longer (mock judge prefers longer)
    for (player, suffix) in [("modelA", " with a much stronger call to action"), ("modelB", "")] {
        let generations: BTreeMap<String, String> = (0..4)
            .map(|n| {
                (
                    format!("ts-gt-ref:lo{n}~hi{n}"),
                    format!("generation {n} by {player}{suffix}"),
                )
            })
            .collect();
        let response = http
            .post(format!("{}/submissions", service.base))
            .json(&serde_json::json!({
                "player_id": player,
                "task": "TS-GT-Ref",
                "generations": generations,
            }))
            .send()
            .unwrap();
        assert_eq!(response.status().as_u16(), 201);
    }

    // start a tournament and poll to completion
    let started: serde_json::Value = http
        .post(format!("{}/tournaments", service.base))
        .json(&serde_json::json!({"task": "TS-GT-Ref", "rounds": 10, "seed": 4}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = started["tournament_id"].as_str().unwrap().to_string();

    let deadline = Instant::now() + Duration::from_secs(20);
    let status = loop {
        let status: serde_json::Value = http
            .get(format!("{}/tournaments/{id}", service.base))
            .send()
            .unwrap()
            .json()
            .unwrap();
        if status["state"] == "completed" || status["state"] == "failed" {
            break status;
        }
        assert!(Instant::now() < deadline, "tournament did not finish: {status}");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(status["state"], "completed", "status: {status}");
    assert!(status["played_matches"].as_u64().unwrap() > 0);

    // leaderboard is non-empty, sorted by rating, and modelA beats modelB
    let rows: Vec<serde_json::Value> = http
        .get(format!("{}/leaderboard?task=TS-GT-Ref", service.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(rows.len(), 4);
    let ratings: Vec<f64> = rows.iter().map(|r| r["rating"].as_f64().unwrap()).collect();
    assert!(ratings.windows(2).all(|w| w[0] >= w[1]), "not sorted: {ratings:?}");
    let pos = |id: &str| rows.iter().position(|r| r["player_id"] == id).unwrap();
    assert!(pos("modelA") < pos("modelB"));

    // match log pages and is gapless from 1
    let matches: serde_json::Value = http
        .get(format!("{}/matches?tournament={id}&after=0", service.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let records = matches["matches"].as_array().unwrap();
    assert_eq!(records[0]["match_id"], 1);
    let after: serde_json::Value = http
        .get(format!("{}/matches?tournament={id}&after=5", service.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(after["matches"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["match_id"].as_u64().unwrap() > 5));
}

#[test]
fn idempotency_key_replays_response() {
    let dir = tempfile::tempdir().unwrap();
    let instances_path = dir.path().join("instances.ndjson");
    write_instances(&instances_path);
    let service = start_service(&dir.path().join("data"), &instances_path, None);
    let http = client();

    let send = || {
        http.post(format!("{}/players", service.base))
            .header("Idempotency-Key", "reg-1")
            .json(&serde_json::json!({"player_id": "once"}))
            .send()
            .unwrap()
    };
    let first = send();
    assert_eq!(first.status().as_u16(), 201);
    let first_body: serde_json::Value = first.json().unwrap();
    // a retry with the same key replays the stored response instead of 409
    let second = send();
    assert_eq!(second.status().as_u16(), 201);
    let second_body: serde_json::Value = second.json().unwrap();
    assert_eq!(first_body, second_body);
}

#[test]
fn auth_token_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let instances_path = dir.path().join("instances.ndjson");
    write_instances(&instances_path);
    let service = start_service(&dir.path().join("data"), &instances_path, Some("sekret"));
    let http = client();

    let denied = http.get(format!("{}/leaderboard", service.base)).send().unwrap();
    assert_eq!(denied.status().as_u16(), 401);

    let allowed = http
        .get(format!("{}/leaderboard", service.base))
        .bearer_auth("sekret")
        .send()
        .unwrap();
    assert_eq!(allowed.status().as_u16(), 200);
}
