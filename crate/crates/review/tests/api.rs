use std::path::Path;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use euphemism::corpus::load_keywords;
use euphemism::pipeline::{cmd_detect, cmd_synth, RunConfig, RunDir};
use euphemism::synth::SynthConfig;
use euphemism_review::{replay, router, ReviewStatus, ReviewStore};
use serde_json::{json, Value};
use tower::ServiceExt;

fn setup(dir: &Path) -> ReviewStore {
    let paths = cmd_synth(&SynthConfig::default(), &dir.join("data")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply([
        ("corpus", paths.corpus.to_str().unwrap()),
        ("keywords", paths.keywords.to_str().unwrap()),
        ("backend", "count-oracle"),
        ("run_id", "base"),
        ("runs_dir", dir.join("runs").to_str().unwrap()),
    ])
    .unwrap();
    cmd_detect(&cfg).unwrap();
    ReviewStore::new(dir.join("runs"))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

#[tokio::test]
async fn candidates_paginate_by_rank() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(setup(dir.path()));
    let (s, runs) = call(&app, "GET", "/runs", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(runs["runs"][0]["run_id"], "base");

    let (s, page) = call(&app, "GET", "/runs/base/candidates?page=1", None).await;
    assert_eq!(s, StatusCode::OK);
    let items = page["items"].as_array().unwrap();
    assert_eq!(items.len(), 20);
    let ranks: Vec<u64> = items.iter().map(|i| i["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, (1..=20).collect::<Vec<_>>());
    assert!(!items[0]["contexts"].as_array().unwrap().is_empty());
    assert!(items[0]["contexts"].as_array().unwrap().len() <= 10);

    let (s, page2) = call(&app, "GET", "/runs/base/candidates?page=2&page_size=20", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page2["items"][0]["rank"], 21);
    let (s, far) = call(&app, "GET", "/runs/base/candidates?page=100000", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(far["items"].as_array().unwrap().is_empty());

    let (s, _) = call(&app, "GET", "/runs/nope/candidates", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, item) = call(&app, "GET", "/runs/base/candidates/weed", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(item["status"], "pending");
    let (s, _) = call(&app, "GET", "/runs/base/candidates/zzzz", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn verdict_rules() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(setup(dir.path()));
    let post = |body: Value| {
        let app = app.clone();
        async move { call(&app, "POST", "/runs/base/verdicts", Some(body)).await }
    };
    let (s, item) = post(json!({"word": "weed", "verdict": "confirmed", "mapped_keyword": "marijuana"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(item["status"], "confirmed");
    assert_eq!(item["mapped_keyword"], "marijuana");

    let (s, _) = post(json!({"word": "pot", "verdict": "rejected"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, err) = post(json!({"word": "pot", "verdict": "confirmed", "mapped_keyword": "marijuana"})).await;
    assert_eq!(s, StatusCode::CONFLICT, "{err}");

    let (s, _) = post(json!({"word": "snow", "verdict": "confirmed"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = post(json!({"word": "snow", "verdict": "confirmed", "mapped_keyword": "coffee"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = post(json!({"word": "snow", "verdict": "unsure"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = post(json!({"word": "snow", "verdict": "confirmed", "mapped_keyword": "cocaine"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = post(json!({"word": "zzzz", "verdict": "rejected"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = post(json!({"word": "weed", "verdict": "maybe"})).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn ledger_replay_survives_a_lost_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    store
        .submit_verdict("base", "weed", euphemism_review::Verdict::Unsure, None, Some("r1"))
        .unwrap();
    store
        .submit_verdict("base", "weed", euphemism_review::Verdict::Confirmed, Some("marijuana"), None)
        .unwrap();
    store
        .submit_verdict("base", "junk", euphemism_review::Verdict::Rejected, None, None)
        .unwrap();
    let review = RunDir::new(dir.path().join("runs/base")).review();
    let stored = std::fs::read_to_string(review.join("status.json")).unwrap();
    assert_eq!(
        serde_json::from_str::<Value>(&stored).unwrap(),
        serde_json::to_value(replay(&store.ledger("base").unwrap())).unwrap()
    );
    // A crash after the ledger append but before the snapshot write.
    std::fs::write(review.join("status.json"), "{}").unwrap();
    let fresh = ReviewStore::new(dir.path().join("runs"));
    let states = fresh.statuses("base").unwrap();
    assert_eq!(states["weed"].status, ReviewStatus::Confirmed);
    assert_eq!(states["junk"].status, ReviewStatus::Rejected);
    assert_eq!(std::fs::read_to_string(review.join("status.json")).unwrap(), stored);
}

#[tokio::test]
async fn promote_then_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(setup(dir.path()));
    let (s, _) = call(&app, "POST", "/runs/base/rerun", None).await;
    assert_eq!(s, StatusCode::CONFLICT, "rerun needs a promoted list");
    let (s, _) = call(&app, "POST", "/runs/base/promote", None).await;
    assert_eq!(s, StatusCode::CONFLICT, "nothing confirmed yet");

    for (w, k) in [("weed", "marijuana"), ("snow", "cocaine")] {
        let body = json!({"word": w, "verdict": "confirmed", "mapped_keyword": k});
        assert_eq!(call(&app, "POST", "/runs/base/verdicts", Some(body)).await.0, StatusCode::OK);
    }
    let (s, promo) = call(&app, "POST", "/runs/base/promote", None).await;
    assert_eq!(s, StatusCode::OK, "{promo}");
    assert_eq!(promo["added"], json!(["snow", "weed"]));
    assert_eq!(promo["total"], 5);
    assert_eq!(promo["version"], 1);
    let (s, _) = call(&app, "POST", "/runs/base/promote", None).await;
    assert_eq!(s, StatusCode::CONFLICT, "second promotion without new confirmations");

    let (s, body) = call(&app, "POST", "/runs/base/rerun", Some(json!({"overrides": {"t": 8}}))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{body}");
    let new_id = body["run_id"].as_str().unwrap().to_string();
    assert_eq!(new_id, "base-r1");
    let (s, _) = call(&app, "POST", "/runs/base/rerun", Some(json!({"overrides": {"t": 8}}))).await;
    assert!(s == StatusCode::CONFLICT || s == StatusCode::ACCEPTED);

    let mut done = false;
    for _ in 0..200 {
        let (_, st) = call(&app, "GET", "/runs/base/status", None).await;
        let state = &st["reruns"][0]["state"];
        if state == "complete" {
            done = true;
            break;
        }
        assert_ne!(state, "failed", "{st}");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert!(done);
    let (s, st) = call(&app, "GET", &format!("/runs/{new_id}/status"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["manifest"]["config"]["t"], 8);
    let kw_path = st["manifest"]["config"]["keywords"].as_str().unwrap();
    assert!(kw_path.ends_with("keywords.v1.tsv"));
    let new_keywords = load_keywords(RunDir::new(dir.path().join("runs").join(&new_id)).keywords()).unwrap();
    assert!(new_keywords.iter().any(|k| k.surface == "weed" && k.category == "drug"));
    let (_, page) = call(&app, "GET", &format!("/runs/{new_id}/candidates"), None).await;
    assert!(page["items"].as_array().unwrap().iter().all(|i| i["word"] != "weed"));
}

#[tokio::test]
async fn busy_rerun_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = setup(dir.path());
    store
        .submit_verdict("base", "weed", euphemism_review::Verdict::Confirmed, Some("marijuana"), None)
        .unwrap();
    store.promote_confirmed("base").unwrap();
    let first = store.prepare_rerun("base", &Default::default()).unwrap();
    assert!(matches!(
        store.prepare_rerun("base", &Default::default()),
        Err(euphemism_review::ReviewError::Busy(_))
    ));
    store.execute_rerun("base", &first);
    let second = store.prepare_rerun("base", &Default::default()).unwrap();
    assert_eq!(second.run_id, "base-r2");
    let err = store
        .prepare_rerun("nope", &Default::default())
        .unwrap_err();
    assert_eq!(err.status_code(), StatusCode::NOT_FOUND);
}
