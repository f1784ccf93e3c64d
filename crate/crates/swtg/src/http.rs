//! REST API under /api/v1.

use std::net::Ipv4Addr;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use swtg_core::impair::ImpairmentSpec;
use swtg_core::model::GenerationConfig;
use swtg_core::{MacAddr, PortId};

use crate::orchestrator::{ApiError, ImixParams, Orchestrator, Rfc2544Params, TestPlan};
use crate::schema::api_schema;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    if body.is_empty() {
        return serde_json::from_slice(b"{}").map_err(|e| ApiError::BadRequest(e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))
}

fn json_text(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Runs a blocking orchestrator call off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

pub fn router(orch: Orchestrator) -> Router {
    Router::new()
        .route("/api/v1/status", get(status))
        .route("/api/v1/config", get(get_config).post(post_config))
        .route("/api/v1/start", post(start))
        .route("/api/v1/stop", post(stop))
        .route("/api/v1/plans", get(list_plans).post(post_plan))
        .route("/api/v1/plans/abort", post(abort_plan))
        .route("/api/v1/plans/{id}", get(get_plan))
        .route("/api/v1/statistics", get(statistics))
        .route("/api/v1/timeseries", get(timeseries))
        .route("/api/v1/ports", get(ports))
        .route("/api/v1/ports/{port}/arp", post(set_arp))
        .route("/api/v1/ports/{port}/arp/inject", post(inject_arp))
        .route("/api/v1/impairment", get(get_impairment).put(put_impairment))
        .route("/api/v1/impairment/blackout", post(blackout))
        .route("/api/v1/reports/{id}", get(report))
        .route("/api/v1/profiles/{name}/run", post(run_profile))
        .route("/api/v1/schema", get(schema))
        .with_state(orch)
}

async fn status(State(o): State<Orchestrator>) -> Json<Value> {
    let plan = o.plans().into_iter().next_back().map(|p| {
        json!({"id": p.id, "kind": p.kind, "status": p.status, "current_index": p.current_index, "total": p.total})
    });
    Json(json!({
        "state": o.state(),
        "configured": o.config_json().is_some(),
        "profile": o.profile(),
        "last_plan": plan,
    }))
}

async fn get_config(State(o): State<Orchestrator>) -> ApiResult<Response> {
    o.config_json()
        .map(|c| json_text(StatusCode::OK, c))
        .ok_or_else(|| ApiError::NotFound {
            code: "NoConfig",
            message: "no configuration has been set".into(),
        })
}

async fn post_config(State(o): State<Orchestrator>, body: Bytes) -> ApiResult<Response> {
    let cfg: GenerationConfig = parse(&body)?;
    let echo = blocking(move || o.configure(cfg)).await?;
    Ok(json_text(StatusCode::OK, echo))
}

async fn start(State(o): State<Orchestrator>) -> ApiResult<Json<Value>> {
    blocking(move || o.start()).await?;
    Ok(Json(json!({"state": "running"})))
}

async fn stop(State(o): State<Orchestrator>) -> ApiResult<Json<Value>> {
    Ok(Json(blocking(move || o.stop()).await?))
}

async fn list_plans(State(o): State<Orchestrator>) -> Json<Value> {
    let plans: Vec<Value> = o
        .plans()
        .into_iter()
        .map(|p| json!({"id": p.id, "kind": p.kind, "status": p.status, "current_index": p.current_index, "total": p.total, "names": p.names}))
        .collect();
    Json(json!(plans))
}

async fn post_plan(State(o): State<Orchestrator>, body: Bytes) -> ApiResult<Response> {
    let plan: TestPlan = parse(&body)?;
    let id = blocking(move || o.run_plan(plan)).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({"id": id}))).into_response())
}

async fn abort_plan(State(o): State<Orchestrator>) -> ApiResult<Json<Value>> {
    blocking(move || o.abort_plan()).await?;
    Ok(Json(json!({"aborting": true})))
}

async fn get_plan(State(o): State<Orchestrator>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let p = o.plan(id).ok_or_else(|| ApiError::NotFound {
        code: "UnknownPlan",
        message: format!("no plan {id}"),
    })?;
    Ok(Json(serde_json::to_value(p).map_err(|e| ApiError::Internal(e.to_string()))?))
}

#[derive(Deserialize)]
struct StatsQuery {
    test: Option<String>,
    plan: Option<u64>,
}

async fn statistics(State(o): State<Orchestrator>, Query(q): Query<StatsQuery>) -> ApiResult<Json<Value>> {
    let snap = o.statistics(q.test.as_deref(), q.plan)?;
    Ok(Json(serde_json::to_value(snap).map_err(|e| ApiError::Internal(e.to_string()))?))
}

async fn timeseries(State(o): State<Orchestrator>) -> Json<Value> {
    Json(json!(o.timeseries()))
}

async fn ports(State(o): State<Orchestrator>) -> Json<Value> {
    Json(json!(o.ports()))
}

#[derive(Deserialize)]
struct ArpBody {
    enabled: bool,
    #[serde(default)]
    mac: Option<MacAddr>,
}

async fn set_arp(State(o): State<Orchestrator>, Path(port): Path<u16>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: ArpBody = parse(&body)?;
    let cfg = o.set_arp(PortId(port), b.enabled, b.mac)?;
    Ok(Json(json!(cfg)))
}

#[derive(Deserialize)]
struct InjectBody {
    target_ip: Ipv4Addr,
    requester_mac: MacAddr,
    requester_ip: Ipv4Addr,
}

async fn inject_arp(State(o): State<Orchestrator>, Path(port): Path<u16>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: InjectBody = parse(&body)?;
    o.inject_arp(PortId(port), b.target_ip, b.requester_mac, b.requester_ip)?;
    Ok(Json(json!({"injected": true})))
}

async fn get_impairment(State(o): State<Orchestrator>) -> ApiResult<Json<Value>> {
    let spec = o.impairment().ok_or_else(|| ApiError::NotFound {
        code: "NoImpairment",
        message: "the channel has no impairment model".into(),
    })?;
    Ok(Json(json!(spec)))
}

async fn put_impairment(State(o): State<Orchestrator>, body: Bytes) -> ApiResult<Json<Value>> {
    let spec: ImpairmentSpec = parse(&body)?;
    o.set_impairment(spec.clone())?;
    Ok(Json(json!(spec)))
}

#[derive(Deserialize)]
struct BlackoutBody {
    duration_ns: u64,
}

async fn blackout(State(o): State<Orchestrator>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: BlackoutBody = parse(&body)?;
    o.trigger_blackout(b.duration_ns)?;
    Ok(Json(json!({"blackout_ns": b.duration_ns})))
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn report(State(o): State<Orchestrator>, Path(id): Path<u64>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let r = o.report(id)?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(json_text(
            StatusCode::OK,
            serde_json::to_string(&r).map_err(|e| ApiError::Internal(e.to_string()))?,
        )),
        "csv" => Ok((
            StatusCode::OK,
            [
                (header::CONTENT_TYPE, "text/csv".to_string()),
                (header::CONTENT_DISPOSITION, format!("attachment; filename=\"report-{id}.csv\"")),
            ],
            r.to_csv(),
        )
            .into_response()),
        other => Err(ApiError::BadRequest(format!("unknown format {other:?}, expected csv or json"))),
    }
}

async fn run_profile(State(o): State<Orchestrator>, Path(name): Path<String>, body: Bytes) -> ApiResult<Response> {
    let id = match name.as_str() {
        "imix" => {
            let p: ImixParams = parse(&body)?;
            blocking(move || o.run_imix(p)).await?
        }
        "rfc2544" => {
            let p: Rfc2544Params = parse(&body)?;
            blocking(move || o.run_rfc2544(p)).await?
        }
        _ => {
            return Err(ApiError::NotFound {
                code: "UnknownProfile",
                message: format!("no profile {name:?}"),
            })
        }
    };
    Ok((StatusCode::ACCEPTED, Json(json!({"id": id}))).into_response())
}

async fn schema() -> Json<Value> {
    Json(api_schema())
}
