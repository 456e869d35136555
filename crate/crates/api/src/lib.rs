//! HTTP+JSON surface over a [`Platform`].
//!
//! Every mutating endpoint honours an `Idempotency-Key` header: a retry with
//! the same key and the same request replays the stored response, while the
//! same key on a different request is rejected with `409 IDEMPOTENCY_CONFLICT`.
//! Errors are returned as `{"code": ..., "message": ...}`.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET  | `/health` | |
//! | GET  | `/categories` | |
//! | POST | `/categories` | `{name, description?, created_by?}` |
//! | POST | `/sessions` | `{worker_id, target_category, condition?, seed?, at?}` |
//! | GET  | `/sessions/{id}` | |
//! | POST | `/sessions/{id}/trials` | `{text, at?}` |
//! | POST | `/sessions/{id}/close` | `{at?}` |
//! | GET  | `/trials/{id}` | |
//! | POST | `/trials/{id}/claim` | `{asserted, at?}` |
//! | POST | `/trials/{id}/continue` | `{at?}` |
//! | POST | `/trials/{id}/give-up` | `{at?}` |
//! | POST | `/trials/{id}/settle` | |
//! | GET  | `/validation/tasks?worker=` | |
//! | POST | `/judgments` | one judgment, an array, or NDJSON |
//! | GET  | `/analysis/summary?category=` | |
//! | GET  | `/analysis/table?category=&word=&search=&severity=` | |
//! | POST | `/runs/{id}/export?format=csv\|json` | |
//!
//! `at` is a millisecond timestamp; when omitted the server uses the wall
//! clock, bumped past the store's clock so events stay ordered.

mod error;

use std::collections::BTreeSet;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use failprobe_core::adjudication::{parse_judgment_lines, JudgmentOutcome, JudgmentSubmission, TaskBatch};
use failprobe_core::analytics::{write_export_csv, AnalysisSummary, SeverityBucket, TableFilter, TableRow};
use failprobe_core::explainer::ExplanationView;
use failprobe_core::ids::{CategoryId, SessionId, Timestamp, TrialId, WorkerId};
use failprobe_core::pipeline::{OpenSession, PayoutLedgerEntry, Session, Trial};
use failprobe_core::store::Category;
use failprobe_core::{Platform, SentimentLabel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use error::{status_for, ApiError, ErrorBody};

pub type SharedPlatform = Arc<RwLock<Platform>>;

type ApiResult<T> = Result<T, ApiError>;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
/// The store holds a single run, addressed by this id.
pub const CURRENT_RUN: &str = "current";

pub fn shared(platform: Platform) -> SharedPlatform {
    Arc::new(RwLock::new(platform))
}

pub fn router(platform: SharedPlatform) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/categories", get(list_categories).post(create_category))
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/trials", post(submit_trial))
        .route("/sessions/{id}/close", post(close_session))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/claim", post(claim))
        .route("/trials/{id}/continue", post(continue_trial))
        .route("/trials/{id}/give-up", post(give_up))
        .route("/trials/{id}/settle", post(settle))
        .route("/validation/tasks", get(validation_tasks))
        .route("/judgments", post(judgments))
        .route("/analysis/summary", get(summary))
        .route("/analysis/table", get(table))
        .route("/runs/{id}/export", post(export))
        .with_state(platform)
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, platform: SharedPlatform) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(platform)).await
}

fn read(p: &SharedPlatform) -> ApiResult<RwLockReadGuard<'_, Platform>> {
    p.read()
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "POISONED", "store lock poisoned"))
}

fn write(p: &SharedPlatform) -> ApiResult<RwLockWriteGuard<'_, Platform>> {
    p.write()
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "POISONED", "store lock poisoned"))
}

fn now(platform: &Platform, at: Option<Timestamp>) -> Timestamp {
    at.unwrap_or_else(|| {
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Timestamp(wall.max(platform.clock().0 + 1))
    })
}

fn fingerprint(method: &Method, uri: &Uri, body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(method.as_str());
    h.update(b" ");
    h.update(uri.path_and_query().map_or(uri.path(), |p| p.as_str()));
    h.update(b"\n");
    h.update(body);
    hex::encode(h.finalize())
}

fn idempotency_key(headers: &HeaderMap) -> ApiResult<Option<String>> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .map(|v| {
            v.to_str()
                .map(str::to_owned)
                .map_err(|_| ApiError::bad_request("idempotency key must be visible ASCII"))
        })
        .transpose()
}

/// Runs a mutation under the write lock, deduplicated by idempotency key.
fn mutate<T, F>(p: &SharedPlatform, req: &Req, f: F) -> ApiResult<T>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce(&mut Platform) -> failprobe_core::Result<T>,
{
    let mut platform = write(p)?;
    Ok(platform.idempotent(req.key.as_deref(), &req.fingerprint, f)?)
}

struct Req {
    key: Option<String>,
    fingerprint: String,
}

impl Req {
    fn new(method: &Method, uri: &Uri, headers: &HeaderMap, body: &[u8]) -> ApiResult<Self> {
        Ok(Req {
            key: idempotency_key(headers)?,
            fingerprint: fingerprint(method, uri, body),
        })
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn parse_optional_body<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtBody {
    #[serde(default)]
    at: Option<Timestamp>,
}

async fn health() -> &'static str {
    "ok"
}

async fn list_categories(State(p): State<SharedPlatform>) -> ApiResult<Json<Vec<Category>>> {
    Ok(Json(read(&p)?.categories().filter(|c| c.active).cloned().collect()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateCategory {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    created_by: Option<WorkerId>,
    #[serde(default)]
    at: Option<Timestamp>,
}

async fn create_category(
    State(p): State<SharedPlatform>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Category>)> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: CreateCategory = parse_body(&body)?;
    let created_by = b.created_by.unwrap_or_else(|| WorkerId::new("developer"));
    let category = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.create_category(&b.name, &b.description, &created_by, at)
    })?;
    Ok((StatusCode::CREATED, Json(category)))
}

#[derive(Debug, Deserialize)]
struct OpenSessionBody {
    #[serde(flatten)]
    request: OpenSession,
    #[serde(default)]
    at: Option<Timestamp>,
}

async fn open_session(
    State(p): State<SharedPlatform>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Session>)> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: OpenSessionBody = parse_body(&body)?;
    let session = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.open_session(b.request, at)
    })?;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(State(p): State<SharedPlatform>, Path(id): Path<u64>) -> ApiResult<Json<Session>> {
    Ok(Json(read(&p)?.session(SessionId(id))?.clone()))
}

/// A trial plus the colour-bucketed rendering of its explanation, if any.
#[derive(Debug, Serialize)]
pub struct TrialResponse {
    #[serde(flatten)]
    pub trial: Trial,
    pub view: Option<ExplanationView>,
}

fn trial_response(p: &SharedPlatform, trial: Trial) -> ApiResult<Json<TrialResponse>> {
    let thresholds = read(p)?.config().highlight;
    let view = match &trial.explanation {
        Some(e) => Some(e.view(thresholds).map_err(failprobe_core::Error::from)?),
        None => None,
    };
    Ok(Json(TrialResponse { trial, view }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitTrial {
    text: String,
    #[serde(default)]
    at: Option<Timestamp>,
}

async fn submit_trial(
    State(p): State<SharedPlatform>,
    Path(id): Path<u64>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<TrialResponse>)> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: SubmitTrial = parse_body(&body)?;
    let trial = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.submit_trial(SessionId(id), &b.text, at)
    })?;
    Ok((StatusCode::CREATED, trial_response(&p, trial)?))
}

async fn close_session(
    State(p): State<SharedPlatform>,
    Path(id): Path<u64>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<Session>> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: AtBody = parse_optional_body(&body)?;
    let session = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.close_session(SessionId(id), at)
    })?;
    Ok(Json(session))
}

async fn get_trial(State(p): State<SharedPlatform>, Path(id): Path<u64>) -> ApiResult<Json<TrialResponse>> {
    let trial = read(&p)?.trial(TrialId(id))?.clone();
    trial_response(&p, trial)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimBody {
    asserted: SentimentLabel,
    #[serde(default)]
    at: Option<Timestamp>,
}

async fn claim(
    State(p): State<SharedPlatform>,
    Path(id): Path<u64>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<TrialResponse>> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: ClaimBody = parse_body(&body)?;
    let trial = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.claim_win(TrialId(id), b.asserted, at)
    })?;
    trial_response(&p, trial)
}

async fn continue_trial(
    State(p): State<SharedPlatform>,
    Path(id): Path<u64>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<TrialResponse>> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: AtBody = parse_optional_body(&body)?;
    let trial = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.continue_trial(TrialId(id), at)
    })?;
    trial_response(&p, trial)
}

async fn give_up(
    State(p): State<SharedPlatform>,
    Path(id): Path<u64>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<TrialResponse>> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let b: AtBody = parse_optional_body(&body)?;
    let trial = mutate(&p, &req, |pl| {
        let at = now(pl, b.at);
        pl.give_up(TrialId(id), at)
    })?;
    trial_response(&p, trial)
}

async fn settle(
    State(p): State<SharedPlatform>,
    Path(id): Path<u64>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<PayoutLedgerEntry>> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    Ok(Json(mutate(&p, &req, |pl| pl.settle_bonuses(TrialId(id)))?))
}

#[derive(Debug, Deserialize)]
struct TasksQuery {
    worker: String,
    #[serde(default)]
    at: Option<u64>,
}

async fn validation_tasks(
    State(p): State<SharedPlatform>,
    Query(q): Query<TasksQuery>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
) -> ApiResult<Json<TaskBatch>> {
    let req = Req::new(&method, &uri, &headers, &[])?;
    let worker = WorkerId::new(q.worker);
    let batch = mutate(&p, &req, |pl| {
        let at = now(pl, q.at.map(Timestamp));
        pl.assign_validation_task(&worker, at)
    })?;
    Ok(Json(batch))
}

/// Per-line result of a batch judgment submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchItem {
    Outcome(JudgmentOutcome),
    Error(ErrorBody),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    pub results: Vec<BatchItem>,
}

/// A single JSON judgment answers with its outcome (or an error status);
/// an array or an NDJSON body answers with one result per item.
async fn judgments(
    State(p): State<SharedPlatform>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let req = Req::new(&method, &uri, &headers, &body)?;
    let ndjson = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/x-ndjson"));
    let batch: Vec<JudgmentSubmission> = if ndjson {
        let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
        parse_judgment_lines(text)?
    } else {
        match parse_body::<serde_json::Value>(&body)? {
            serde_json::Value::Array(items) => items
                .into_iter()
                .map(serde_json::from_value)
                .collect::<Result<_, _>>()
                .map_err(|e| ApiError::bad_request(format!("invalid judgment: {e}")))?,
            single => {
                let submission: JudgmentSubmission = serde_json::from_value(single)
                    .map_err(|e| ApiError::bad_request(format!("invalid judgment: {e}")))?;
                let outcome = mutate(&p, &req, |pl| pl.record_judgment(submission))?;
                return Ok(Json(outcome).into_response());
            }
        }
    };
    let response = mutate(&p, &req, |pl| {
        let results = batch
            .into_iter()
            .map(|s| match pl.record_judgment(s) {
                Ok(o) => BatchItem::Outcome(o),
                Err(e) => BatchItem::Error(ErrorBody::from(&e)),
            })
            .collect();
        Ok(BatchResponse { results })
    })?;
    Ok(Json(response).into_response())
}

fn resolve_category(platform: &Platform, raw: Option<&str>) -> ApiResult<Option<CategoryId>> {
    let Some(raw) = raw.map(str::trim).filter(|s| !s.is_empty()) else {
        return Ok(None);
    };
    let found = match raw.parse::<u64>() {
        Ok(n) => platform.categories().find(|c| c.category_id == CategoryId(n)),
        Err(_) => platform.category_by_name(raw),
    };
    found.map(|c| Some(c.category_id)).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "CATEGORY_NOT_FOUND",
            format!("no category {raw:?}"),
        )
    })
}

#[derive(Debug, Deserialize)]
struct SummaryQuery {
    #[serde(default)]
    category: Option<String>,
}

async fn summary(State(p): State<SharedPlatform>, Query(q): Query<SummaryQuery>) -> ApiResult<Json<AnalysisSummary>> {
    let platform = read(&p)?;
    let category = resolve_category(&platform, q.category.as_deref())?;
    Ok(Json(platform.analysis_summary(category)?))
}

#[derive(Debug, Deserialize)]
struct TableQuery {
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    word: Option<String>,
    #[serde(default)]
    search: Option<String>,
    /// Comma-separated buckets, e.g. `high,middle`.
    #[serde(default)]
    severity: Option<String>,
}

fn parse_buckets(raw: &str) -> ApiResult<BTreeSet<SeverityBucket>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
                .map_err(|_| ApiError::bad_request(format!("unknown severity bucket {s:?}")))
        })
        .collect()
}

async fn table(State(p): State<SharedPlatform>, Query(q): Query<TableQuery>) -> ApiResult<Json<Vec<TableRow>>> {
    let platform = read(&p)?;
    let nonempty = |s: Option<String>| s.filter(|s| !s.trim().is_empty());
    let filter = TableFilter {
        category: resolve_category(&platform, q.category.as_deref())?,
        word: nonempty(q.word),
        search: nonempty(q.search),
        severity: nonempty(q.severity).map(|s| parse_buckets(&s)).transpose()?,
    };
    Ok(Json(platform.analysis_table(&filter)?))
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn export(
    State(p): State<SharedPlatform>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    if id != CURRENT_RUN {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "RUN_NOT_FOUND",
            format!("no run {id:?}"),
        ));
    }
    let rows = read(&p)?.export_rows()?;
    match q.format.as_deref().unwrap_or("csv") {
        "csv" => {
            let mut buf = Vec::new();
            write_export_csv(&mut buf, &rows)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "IO", e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
        }
        "json" => Ok(Json(rows).into_response()),
        other => Err(ApiError::bad_request(format!("unknown export format {other:?}"))),
    }
}
