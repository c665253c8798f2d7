//! Review HTTP service: read-only views of a consistency report plus a
//! decision endpoint backed by the session log.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Result};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use timely_core::{Border, CellRecord, ConsistencyReport, LineageTopology};
use tower_http::services::ServeDir;

use crate::session::{Decision, DecisionRecord, SessionLog};

/// Immutable data behind every GET.
#[derive(Debug)]
pub struct ReviewData {
    pub report: ConsistencyReport,
    pub topology: LineageTopology,
    cells: HashMap<String, CellRecord>,
    position: HashMap<String, usize>,
    /// Previous and next report position within the same branch.
    neighbours: Vec<(Option<usize>, Option<usize>)>,
}

impl ReviewData {
    pub fn new(report: ConsistencyReport, cells: Option<Vec<CellRecord>>, topology: LineageTopology) -> Result<Self> {
        let k = topology.n_states();
        let mut position = HashMap::with_capacity(report.cells.len());
        for (i, c) in report.cells.iter().enumerate() {
            if c.observed_label >= k || c.inferred_label >= k {
                bail!("cell {} has a label outside 1..{k}", c.id);
            }
            if position.insert(c.id.clone(), i).is_some() {
                bail!("cell id {} appears twice in the report", c.id);
            }
        }
        let cells: HashMap<String, CellRecord> = cells
            .unwrap_or_default()
            .into_iter()
            .map(|c| (c.id.clone(), c))
            .collect();
        for (id, c) in &cells {
            match position.get(id) {
                None => bail!("cell {id} is missing from the report"),
                Some(&i) if report.cells[i].observed_label != c.observed_label => {
                    bail!("cell {id}: report and cells file disagree on the observed label")
                }
                Some(_) => {}
            }
        }
        let mut by_branch: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in report.cells.iter().enumerate() {
            by_branch.entry(c.branch_id).or_default().push(i);
        }
        let mut neighbours = vec![(None, None); report.cells.len()];
        for members in by_branch.values_mut() {
            members.sort_by(|&a, &b| report.cells[a].pseudotime.total_cmp(&report.cells[b].pseudotime).then(a.cmp(&b)));
            for (j, &i) in members.iter().enumerate() {
                let prev = j.checked_sub(1).map(|p| members[p]);
                neighbours[i] = (prev, members.get(j + 1).copied());
            }
        }
        Ok(Self {
            report,
            topology,
            cells,
            position,
            neighbours,
        })
    }

    /// Final 0-based label of the cell at `pos` under `decision`.
    fn final_label(&self, pos: usize, decision: Option<&DecisionRecord>) -> usize {
        let c = &self.report.cells[pos];
        match decision {
            None => c.observed_label,
            Some(d) => match d.decision {
                Decision::AcceptProposed => c.inferred_label,
                Decision::KeepObserved => c.observed_label,
                Decision::Custom => d.custom_label.map_or(c.observed_label, |l| l - 1),
            },
        }
    }

    fn cell_json(&self, pos: usize, decision: Option<&DecisionRecord>) -> Value {
        let c = &self.report.cells[pos];
        json!({
            "id": c.id,
            "position": pos,
            "branch_id": c.branch_id,
            "pseudotime": c.pseudotime,
            "observed_label": c.observed_label + 1,
            "inferred_label": c.inferred_label + 1,
            "flagged": c.flagged,
            "image_ref": self.cells.get(&c.id).and_then(|r| r.image_ref.clone()),
            "final_label": self.final_label(pos, decision) + 1,
            "decision": decision.map(|d| d.decision.name()),
        })
    }

    /// Labels CSV `id,observed_label,final_label,decision` in report order.
    pub fn export_csv(&self, latest: &BTreeMap<String, DecisionRecord>) -> String {
        let mut out = String::from("id,observed_label,final_label,decision\n");
        for (i, c) in self.report.cells.iter().enumerate() {
            let d = latest.get(&c.id);
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&c.id),
                c.observed_label + 1,
                self.final_label(i, d) + 1,
                d.map_or("", |d| d.decision.name())
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub data: Arc<ReviewData>,
    pub session: Arc<Mutex<SessionLog>>,
}

impl AppState {
    pub fn new(data: ReviewData, session: SessionLog) -> Self {
        Self {
            data: Arc::new(data),
            session: Arc::new(Mutex::new(session)),
        }
    }

    fn latest(&self) -> BTreeMap<String, DecisionRecord> {
        self.session.lock().unwrap_or_else(|e| e.into_inner()).latest().clone()
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/dataset", get(dataset))
        .route("/api/cell/{id}", get(cell))
        .route("/api/borders", get(borders))
        .route("/api/decision", post(decision))
        .route("/api/export", get(export))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Serialize)]
struct StateInfo<'a> {
    label: usize,
    name: &'a str,
    parent: Option<usize>,
}

async fn dataset(State(s): State<AppState>) -> Json<Value> {
    let latest = s.latest();
    let d = &s.data;
    let states: Vec<StateInfo> = d
        .topology
        .states()
        .iter()
        .enumerate()
        .map(|(k, name)| StateInfo {
            label: k + 1,
            name,
            parent: d.topology.parent(k).map(|p| p + 1),
        })
        .collect();
    let cells: Vec<Value> = (0..d.report.cells.len())
        .map(|i| d.cell_json(i, latest.get(&d.report.cells[i].id)))
        .collect();
    Json(json!({ "states": states, "cells": cells, "borders": d.report.borders }))
}

async fn cell(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let d = &s.data;
    let &pos = d
        .position
        .get(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown cell {id:?}")))?;
    let latest = s.latest();
    let mut v = d.cell_json(pos, latest.get(&id));
    let (prev, next) = d.neighbours[pos];
    let id_at = |p: Option<usize>| p.map(|p| d.report.cells[p].id.clone());
    v["features"] = json!(d.cells.get(&id).map(|c| &c.features));
    v["prev"] = json!(id_at(prev));
    v["next"] = json!(id_at(next));
    Ok(Json(v))
}

async fn borders(State(s): State<AppState>) -> Json<Vec<Border>> {
    Json(s.data.report.borders.clone())
}

async fn export(State(s): State<AppState>) -> impl IntoResponse {
    let csv = s.data.export_csv(&s.latest());
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv)
}

/// Validated decision request.
struct DecisionRequest {
    cell_id: String,
    decision: Decision,
    custom_label: Option<usize>,
}

fn parse_decision(body: &[u8], k: usize) -> Result<DecisionRequest, ApiError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| unprocessable(format!("invalid JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| unprocessable("body must be a JSON object"))?;
    let cell_id = obj
        .get("cell_id")
        .and_then(Value::as_str)
        .ok_or_else(|| unprocessable("cell_id must be a string"))?
        .to_string();
    let raw = obj
        .get("decision")
        .and_then(Value::as_str)
        .ok_or_else(|| unprocessable("decision must be a string"))?;
    let decision = Decision::parse(raw).ok_or_else(|| {
        unprocessable(format!(
            "unknown decision {raw:?}; expected accept_proposed, keep_observed or custom"
        ))
    })?;
    let custom_label = match obj.get("custom_label") {
        None | Some(Value::Null) => None,
        Some(l) => Some(
            l.as_u64()
                .ok_or_else(|| unprocessable("custom_label must be a positive integer"))? as usize,
        ),
    };
    match (decision, custom_label) {
        (Decision::Custom, None) => return Err(unprocessable("custom decision needs custom_label")),
        (Decision::Custom, Some(l)) if l == 0 || l > k => {
            return Err(unprocessable(format!("custom_label {l} outside 1..{k}")))
        }
        (Decision::AcceptProposed | Decision::KeepObserved, Some(_)) => {
            return Err(unprocessable("custom_label is only allowed with the custom decision"))
        }
        _ => {}
    }
    Ok(DecisionRequest {
        cell_id,
        decision,
        custom_label,
    })
}

async fn decision(State(s): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req = parse_decision(&body, s.data.topology.n_states())?;
    let Some(&pos) = s.data.position.get(&req.cell_id) else {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown cell {:?}", req.cell_id)));
    };
    let session = Arc::clone(&s.session);
    let record = tokio::task::spawn_blocking(move || {
        let mut log = session.lock().unwrap_or_else(|e| e.into_inner());
        log.append(&req.cell_id, req.decision, req.custom_label)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| {
        log::error!("decision not recorded: {e:#}");
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("decision not recorded: {e:#}"))
    })?;
    let final_label = s.data.final_label(pos, Some(&record)) + 1;
    let mut v = serde_json::to_value(&record).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    v["final_label"] = json!(final_label);
    Ok(Json(v))
}
