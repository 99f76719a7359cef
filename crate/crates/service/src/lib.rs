//! HTTP/JSON API over the landtriage engine.
//!
//! Every write goes through one engine behind a lock, so appends are
//! serialized and readers always see the state after a completed append.

mod idempotency;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tracing::{error, info};

use landtriage_core::detections::{IncidentalReport, ModelRun};
use landtriage_core::fieldops::{Determination, FieldResponse};
use landtriage_core::registry::{Org, RegistryDocs};
use landtriage_core::report::{self, ReportName, ReportParams};
use landtriage_core::routing::{Decision, RejectReason, ScreeningStatus};
use landtriage_core::{Config, Engine, Error};

pub use idempotency::{IdempotencyStore, Stored, IDEMPOTENCY_FILE};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Shared service state.
#[derive(Debug)]
pub struct Service {
    engine: RwLock<Engine>,
    idempotency: Mutex<IdempotencyStore>,
}

impl Service {
    /// Opens the data directory named in `cfg`, replaying its log.
    pub fn open(cfg: Config) -> landtriage_core::Result<Arc<Service>> {
        let dir = cfg.data_dir.clone();
        let engine = Engine::open(cfg)?;
        let idempotency = IdempotencyStore::open(&dir)?;
        Ok(Arc::new(Service { engine: RwLock::new(engine), idempotency: Mutex::new(idempotency) }))
    }

    /// Wraps an existing engine; retries are remembered in memory only.
    pub fn with_engine(engine: Engine) -> Arc<Service> {
        Arc::new(Service { engine: RwLock::new(engine), idempotency: Mutex::new(IdempotencyStore::in_memory()) })
    }

    pub fn read<R>(&self, f: impl FnOnce(&Engine) -> R) -> R {
        f(&self.engine.read().unwrap_or_else(|p| p.into_inner()))
    }
}

/// JSON error body with the status class of the engine error.
#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Validation { .. } | Error::Json(_) | Error::Csv(_) => StatusCode::BAD_REQUEST,
        Error::NotFound { .. } => StatusCode::NOT_FOUND,
        Error::Conflict { .. } => StatusCode::CONFLICT,
        Error::CorruptLog { .. } | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub fn error_body(e: &Error) -> Value {
    let field = match e {
        Error::Validation { field, .. } => Value::String(field.clone()),
        _ => Value::Null,
    };
    let message = match e {
        Error::Validation { message, .. } => message.clone(),
        other => other.to_string(),
    };
    json!({"code": e.code(), "field": field, "message": message})
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            error!(error = %self.0, "request failed");
        }
        (status, Json(error_body(&self.0))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(Error::validation("invalid_json", "body", e.to_string())))
}

fn parse_enum<T: DeserializeOwned>(field: &'static str, v: &str) -> Result<T, ApiError> {
    serde_json::from_value(Value::String(v.to_string()))
        .map_err(|_| ApiError(Error::validation("invalid_param", field, format!("unknown value '{v}'"))))
}

fn to_json<T: serde::Serialize>(status: StatusCode, v: &T) -> Result<(StatusCode, Value), Error> {
    Ok((status, serde_json::to_value(v)?))
}

/// Runs a write under the engine lock, honoring `Idempotency-Key`.
///
/// A repeated key with the same request returns the stored result; with a
/// different request it is a conflict. Only successful results are kept.
fn mutate(
    svc: &Service,
    headers: &HeaderMap,
    method: &Method,
    uri: &Uri,
    body: &[u8],
    f: impl FnOnce(&mut Engine) -> Result<(StatusCode, Value), Error>,
) -> ApiResult {
    let key = headers.get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let mut engine = svc.engine.write().unwrap_or_else(|p| p.into_inner());
    let fingerprint = key.as_ref().map(|_| {
        let mut h = Sha256::new();
        h.update(method.as_str());
        h.update(b" ");
        h.update(uri.to_string());
        h.update(b"\n");
        h.update(body);
        hex::encode(h.finalize())
    });
    if let (Some(k), Some(fp)) = (&key, &fingerprint) {
        let store = svc.idempotency.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = store.get(k) {
            if &s.fingerprint != fp {
                return Err(ApiError(Error::conflict("idempotency_key_reused", format!("key '{k}' was used for a different request"))));
            }
            let status = StatusCode::from_u16(s.status).unwrap_or(StatusCode::OK);
            return Ok((status, Json(s.body.clone())).into_response());
        }
    }
    let (status, value) = f(&mut engine)?;
    if let (Some(k), Some(fp)) = (key, fingerprint) {
        let mut store = svc.idempotency.lock().unwrap_or_else(|p| p.into_inner());
        store
            .insert(Stored { key: k, fingerprint: fp, status: status.as_u16(), body: value.clone() })
            .map_err(Error::Io)?;
    }
    Ok((status, Json(value)).into_response())
}

fn today(engine: &Engine) -> NaiveDate {
    engine.clock().now().date_naive()
}

/// The full /v1 router.
pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/registry", post(load_registry))
        .route("/v1/runs", post(add_run).get(list_runs))
        .route("/v1/runs/{run_id}/detections", post(add_detections))
        .route("/v1/route/{run_id}", post(route_run))
        .route("/v1/screening", get(list_screening))
        .route("/v1/screening/{detection_id}", post(screen))
        .route("/v1/assignments", get(list_assignments))
        .route("/v1/packets/{assignment_id}", get(packet))
        .route("/v1/responses", post(add_response))
        .route("/v1/responses/{assignment_id}/amend", post(amend_response))
        .route("/v1/determinations", post(add_determination))
        .route("/v1/incidentals", post(add_incidental))
        .route("/v1/reports/{name}", get(get_report))
        .with_state(svc)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(svc: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health(State(svc): State<Arc<Service>>) -> Json<Value> {
    Json(svc.read(|e| json!({"status": "ok", "last_seq": e.state().last_seq, "digest": e.state().digest()})))
}

async fn load_registry(State(svc): State<Arc<Service>>, req: Request) -> ApiResult {
    let (headers, method, uri) = (req.headers().clone(), req.method().clone(), req.uri().clone());
    let is_multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (docs, raw): (RegistryDocs, Vec<u8>) = if is_multipart {
        let mut mp = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError(Error::validation("invalid_multipart", "body", e.body_text())))?;
        let mut parts: HashMap<String, String> = HashMap::new();
        while let Some(field) = mp
            .next_field()
            .await
            .map_err(|e| ApiError(Error::validation("invalid_multipart", "body", e.body_text())))?
        {
            let name = field.name().unwrap_or_default().to_string();
            let text = field
                .text()
                .await
                .map_err(|e| ApiError(Error::validation("invalid_multipart", name.clone(), e.body_text())))?;
            parts.insert(name, text);
        }
        let part = |n: &'static str| {
            parts.get(n).ok_or_else(|| ApiError(Error::validation("missing_part", n, format!("multipart field '{n}' is required"))))
        };
        let docs = RegistryDocs::from_json(part("facilities")?, part("fields")?, part("verifiers")?)?;
        let raw = serde_json::to_vec(&docs).map_err(Error::from)?;
        (docs, raw)
    } else {
        let body = Bytes::from_request(req, &()).await.map_err(|e| ApiError(Error::validation("invalid_body", "body", e.body_text())))?;
        (parse_json(&body)?, body.to_vec())
    };
    mutate(&svc, &headers, &method, &uri, &raw, |e| to_json(StatusCode::OK, &e.load_registry(docs)?))
}

async fn add_run(State(svc): State<Arc<Service>>, headers: HeaderMap, method: Method, uri: Uri, body: Bytes) -> ApiResult {
    let run: ModelRun = parse_json(&body)?;
    mutate(&svc, &headers, &method, &uri, &body, |e| {
        let warnings = e.register_run(run.clone())?;
        Ok((StatusCode::CREATED, json!({"run": run, "warnings": warnings})))
    })
}

async fn list_runs(State(svc): State<Arc<Service>>) -> Json<Value> {
    Json(svc.read(|e| json!(e.state().runs.values().collect::<Vec<_>>())))
}

async fn add_detections(
    State(svc): State<Arc<Service>>,
    Path(run_id): Path<String>,
    headers: HeaderMap,
    method: Method,
    uri: Uri,
    body: Bytes,
) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError(Error::validation("invalid_utf8", "body", e.to_string())))?;
    mutate(&svc, &headers, &method, &uri, &body, |e| to_json(StatusCode::OK, &e.ingest_detections(&run_id, text)?))
}

async fn route_run(
    State(svc): State<Arc<Service>>,
    Path(run_id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
    method: Method,
    uri: Uri,
) -> ApiResult {
    let org = q.get("org").ok_or_else(|| ApiError(Error::validation("missing_param", "org", "org=wdnr|elpc is required")))?;
    let org: Org = parse_enum("org", org)?;
    mutate(&svc, &headers, &method, &uri, b"", |e| to_json(StatusCode::OK, &e.route(&run_id, org)?))
}

async fn list_screening(State(svc): State<Arc<Service>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let status: Option<ScreeningStatus> = q.get("status").map(|s| parse_enum("status", s)).transpose()?;
    Ok(Json(svc.read(|e| json!(e.state().screening_queue(status)))).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScreenBody {
    decision: Decision,
    #[serde(default)]
    reason: Option<RejectReason>,
    #[serde(default)]
    note: Option<String>,
    #[serde(default)]
    decided_on: Option<NaiveDate>,
}

async fn screen(
    State(svc): State<Arc<Service>>,
    Path(detection_id): Path<String>,
    headers: HeaderMap,
    method: Method,
    uri: Uri,
    body: Bytes,
) -> ApiResult {
    let b: ScreenBody = parse_json(&body)?;
    mutate(&svc, &headers, &method, &uri, &body, |e| {
        let on = b.decided_on.unwrap_or_else(|| today(e));
        to_json(StatusCode::OK, &e.screen(&detection_id, b.decision, b.reason, b.note, on)?)
    })
}

async fn list_assignments(State(svc): State<Arc<Service>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let org: Option<Org> = q.get("org").map(|s| parse_enum("org", s)).transpose()?;
    let list = svc.read(|e| {
        json!(e.state().assignments_filtered(org, q.get("verifier_id").map(String::as_str), q.get("run_id").map(String::as_str)))
    });
    Ok(Json(list).into_response())
}

async fn packet(State(svc): State<Arc<Service>>, Path(assignment_id): Path<String>) -> ApiResult {
    let p = svc.read(|e| e.packet(&assignment_id))?;
    Ok(Json(p).into_response())
}

async fn add_response(State(svc): State<Arc<Service>>, headers: HeaderMap, method: Method, uri: Uri, body: Bytes) -> ApiResult {
    let r: FieldResponse = parse_json(&body)?;
    mutate(&svc, &headers, &method, &uri, &body, |e| to_json(StatusCode::CREATED, &e.submit_response(r)?))
}

async fn amend_response(
    State(svc): State<Arc<Service>>,
    Path(assignment_id): Path<String>,
    headers: HeaderMap,
    method: Method,
    uri: Uri,
    body: Bytes,
) -> ApiResult {
    let r: FieldResponse = parse_json(&body)?;
    if r.assignment_id != assignment_id {
        return Err(ApiError(Error::validation(
            "assignment_mismatch",
            "assignment_id",
            format!("body names '{}' but the path names '{assignment_id}'", r.assignment_id),
        )));
    }
    mutate(&svc, &headers, &method, &uri, &body, |e| to_json(StatusCode::OK, &e.amend_response(r)?))
}

async fn add_determination(State(svc): State<Arc<Service>>, headers: HeaderMap, method: Method, uri: Uri, body: Bytes) -> ApiResult {
    let d: Determination = parse_json(&body)?;
    mutate(&svc, &headers, &method, &uri, &body, |e| to_json(StatusCode::CREATED, &e.submit_determination(d)?))
}

async fn add_incidental(State(svc): State<Arc<Service>>, headers: HeaderMap, method: Method, uri: Uri, body: Bytes) -> ApiResult {
    let r: IncidentalReport = parse_json(&body)?;
    mutate(&svc, &headers, &method, &uri, &body, |e| to_json(StatusCode::CREATED, &e.add_incidental(r)?))
}

async fn get_report(State(svc): State<Arc<Service>>, Path(name): Path<String>, Query(pairs): Query<Vec<(String, String)>>) -> ApiResult {
    let name: ReportName = name.parse()?;
    let params = ReportParams::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let r = svc.read(|e| report::generate(e.state(), e.config(), name, &params, e.exec()))?;
    Ok(Json(r).into_response())
}
