//! In-process tests of the review API.

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use timely_cli::service::{router, AppState, ReviewData};
use timely_cli::session::{read_log, Decision, SessionLog};
use timely_core::params::{default_params, uniform_emission};
use timely_core::{Border, CellRecord, ConsistencyReport, LineageTopology, ReportCell};
use tower::ServiceExt;

/// Five cells on one branch, the third flagged, plus two cells on a second
/// branch; borders at pseudotime 0.5 and 1.0.
fn fixture() -> (ConsistencyReport, Vec<CellRecord>, LineageTopology) {
    let topo = LineageTopology::chain(&["A", "B", "C"]).unwrap();
    let rows: [(&str, usize, f64, usize, usize); 7] = [
        ("c0", 0, 0.0, 0, 0),
        ("c1", 0, 0.25, 0, 0),
        ("c2", 0, 0.5, 2, 1),
        ("c3", 0, 0.75, 1, 1),
        ("c4", 0, 1.0, 2, 2),
        ("d1", 1, 0.6, 1, 1),
        ("d0", 1, 0.3, 0, 0),
    ];
    let cells: Vec<ReportCell> = rows
        .iter()
        .map(|&(id, branch_id, pseudotime, observed_label, inferred_label)| ReportCell {
            id: id.into(),
            branch_id,
            pseudotime,
            observed_label,
            inferred_label,
            flagged: observed_label != inferred_label,
        })
        .collect();
    let records = rows
        .iter()
        .map(|&(id, _, pt, observed_label, _)| CellRecord {
            id: id.into(),
            features: vec![pt, 1.0],
            observed_label,
            image_ref: Some(format!("img/{id}.png")),
        })
        .collect();
    let report = ConsistencyReport {
        cells,
        borders: vec![
            Border {
                branch_id: 0,
                from_state: 0,
                to_state: 1,
                pseudotime: 0.5,
                index: 2,
            },
            Border {
                branch_id: 0,
                from_state: 1,
                to_state: 2,
                pseudotime: 1.0,
                index: 4,
            },
        ],
        log_likelihood: -3.0,
        params: default_params(&topo, 0.9, uniform_emission(3, 0.8), None).unwrap(),
        iterations: vec![-3.5, -3.0],
    };
    (report, records, topo)
}

fn app_with(session: SessionLog) -> (Router, AppState) {
    let (report, cells, topo) = fixture();
    let state = AppState::new(ReviewData::new(report, Some(cells), topo).unwrap(), session);
    (router(state.clone(), None), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn post_raw(app: &Router, body: &str) -> StatusCode {
    let req = Request::builder()
        .method("POST")
        .uri("/api/decision")
        .body(Body::from(body.to_string()))
        .unwrap();
    app.clone().oneshot(req).await.unwrap().status()
}

fn export_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[tokio::test]
async fn export_without_decisions_equals_observed() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_with(SessionLog::open(dir.path().join("s.jsonl")).unwrap());
    let (status, csv) = call(&app, "GET", "/api/export", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(csv.starts_with("id,observed_label,final_label,decision\n"));
    let rows = export_rows(&csv);
    assert_eq!(rows.len(), 7);
    for r in rows {
        assert_eq!(r[1], r[2]);
        assert_eq!(r[3], "");
    }
}

#[tokio::test]
async fn accept_proposed_shows_inferred_label_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let (app, _) = app_with(SessionLog::open(&path).unwrap());
    let body = json!({"cell_id": "c2", "decision": "accept_proposed"});
    let (status, ack) = call(&app, "POST", "/api/decision", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    let ack: Value = serde_json::from_str(&ack).unwrap();
    assert_eq!(ack["final_label"], 2);
    // acknowledged means already on disk
    assert_eq!(read_log(&path).unwrap().len(), 1);
    let (_, first) = call(&app, "GET", "/api/export", None).await;
    call(&app, "POST", "/api/decision", Some(body)).await;
    let (_, second) = call(&app, "GET", "/api/export", None).await;
    assert_eq!(first, second);
    let row = export_rows(&first).into_iter().find(|r| r[0] == "c2").unwrap();
    assert_eq!(row, vec!["c2", "3", "2", "accept_proposed"]);
}

#[tokio::test]
async fn latest_decision_wins() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_with(SessionLog::open(dir.path().join("s.jsonl")).unwrap());
    for body in [
        json!({"cell_id": "c3", "decision": "accept_proposed"}),
        json!({"cell_id": "c3", "decision": "custom", "custom_label": 3}),
        json!({"cell_id": "c4", "decision": "custom", "custom_label": 1}),
        json!({"cell_id": "c4", "decision": "keep_observed", "custom_label": null}),
    ] {
        let (status, msg) = call(&app, "POST", "/api/decision", Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{msg}");
    }
    let (_, csv) = call(&app, "GET", "/api/export", None).await;
    let rows = export_rows(&csv);
    assert_eq!(rows[3], vec!["c3", "2", "3", "custom"]);
    assert_eq!(rows[4], vec!["c4", "3", "3", "keep_observed"]);
    let (_, ds) = call(&app, "GET", "/api/dataset", None).await;
    let ds: Value = serde_json::from_str(&ds).unwrap();
    assert_eq!(ds["cells"][3]["final_label"], 3);
    assert_eq!(ds["cells"][3]["decision"], "custom");
}

#[tokio::test]
async fn invalid_requests_are_rejected_without_logging() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let (app, _) = app_with(SessionLog::open(&path).unwrap());
    let unprocessable = [
        "not json",
        "[]",
        r#"{"decision": "accept_proposed"}"#,
        r#"{"cell_id": "c2", "decision": "approve"}"#,
        r#"{"cell_id": "c2", "decision": "custom"}"#,
        r#"{"cell_id": "c2", "decision": "custom", "custom_label": 0}"#,
        r#"{"cell_id": "c2", "decision": "custom", "custom_label": 4}"#,
        r#"{"cell_id": "c2", "decision": "custom", "custom_label": "2"}"#,
        r#"{"cell_id": "c2", "decision": "keep_observed", "custom_label": 2}"#,
    ];
    for body in unprocessable {
        assert_eq!(post_raw(&app, body).await, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    }
    let unknown = r#"{"cell_id": "zz", "decision": "keep_observed"}"#;
    assert_eq!(post_raw(&app, unknown).await, StatusCode::NOT_FOUND);
    assert!(read_log(&path).unwrap().is_empty());
}

#[tokio::test]
async fn dataset_cell_and_borders_views() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app_with(SessionLog::open(dir.path().join("s.jsonl")).unwrap());
    let (_, ds) = call(&app, "GET", "/api/dataset", None).await;
    let ds: Value = serde_json::from_str(&ds).unwrap();
    let ids: Vec<&str> = ds["cells"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["c0", "c1", "c2", "c3", "c4", "d1", "d0"]);
    assert_eq!(ds["states"][1], json!({"label": 2, "name": "B", "parent": 1}));
    assert_eq!(ds["cells"][2]["flagged"], true);
    assert_eq!(ds["cells"][2]["observed_label"], 3);
    assert_eq!(ds["cells"][2]["inferred_label"], 2);
    assert_eq!(ds["cells"][2]["image_ref"], "img/c2.png");

    let (_, b) = call(&app, "GET", "/api/borders", None).await;
    let b: Value = serde_json::from_str(&b).unwrap();
    assert_eq!(b.as_array().unwrap().len(), 2);
    assert_eq!(b[0]["from_state"], 1);
    assert_eq!(b[0]["to_state"], 2);

    let neighbours = |v: &Value| (v["prev"].clone(), v["next"].clone());
    let (_, c) = call(&app, "GET", "/api/cell/c2", None).await;
    let c: Value = serde_json::from_str(&c).unwrap();
    assert_eq!(neighbours(&c), (json!("c1"), json!("c3")));
    assert_eq!(c["features"], json!([0.5, 1.0]));
    let (_, c) = call(&app, "GET", "/api/cell/c4", None).await;
    assert_eq!(neighbours(&serde_json::from_str(&c).unwrap()), (json!("c3"), Value::Null));
    // second branch is ordered by pseudotime, not by report position
    let (_, c) = call(&app, "GET", "/api/cell/d0", None).await;
    assert_eq!(neighbours(&serde_json::from_str(&c).unwrap()), (Value::Null, json!("d1")));

    let (status, _) = call(&app, "GET", "/api/cell/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[cfg(target_os = "linux")]
#[tokio::test]
async fn failed_write_is_not_acknowledged() {
    let (app, state) = app_with(SessionLog::open("/dev/full").unwrap());
    let (status, msg) = call(
        &app,
        "POST",
        "/api/decision",
        Some(json!({"cell_id": "c2", "decision": "accept_proposed"})),
    )
    .await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR, "{msg}");
    assert!(state.session.lock().unwrap().latest().is_empty());
    let (_, csv) = call(&app, "GET", "/api/export", None).await;
    assert!(export_rows(&csv).iter().all(|r| r[3].is_empty()));
}

#[tokio::test]
async fn reopened_session_restores_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    {
        let (app, _) = app_with(SessionLog::open(&path).unwrap());
        for (id, d) in [("c2", "accept_proposed"), ("c3", "keep_observed"), ("d1", "accept_proposed")] {
            let (status, _) = call(&app, "POST", "/api/decision", Some(json!({"cell_id": id, "decision": d}))).await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    let (app, state) = app_with(SessionLog::open(&path).unwrap());
    assert_eq!(state.session.lock().unwrap().latest().len(), 3);
    assert_eq!(state.session.lock().unwrap().latest()["c3"].decision, Decision::KeepObserved);
    let (_, csv) = call(&app, "GET", "/api/export", None).await;
    let decided = export_rows(&csv).iter().filter(|r| !r[3].is_empty()).count();
    assert_eq!(decided, 3);
}

#[tokio::test]
async fn ui_bundle_is_served_statically() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    let (report, cells, topo) = fixture();
    let state = AppState::new(
        ReviewData::new(report, Some(cells), topo).unwrap(),
        SessionLog::open(dir.path().join("s.jsonl")).unwrap(),
    );
    let app = router(state, Some(ui));
    let (status, body) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<html>review</html>");
    let (status, _) = call(&app, "GET", "/api/borders", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[test]
fn inconsistent_cells_file_is_rejected() {
    let (report, mut cells, topo) = fixture();
    cells[0].observed_label = 2;
    assert!(ReviewData::new(report.clone(), Some(cells), topo.clone()).is_err());
    let stranger = CellRecord {
        id: "x".into(),
        features: vec![0.0, 0.0],
        observed_label: 0,
        image_ref: None,
    };
    assert!(ReviewData::new(report, Some(vec![stranger]), topo).is_err());
}
