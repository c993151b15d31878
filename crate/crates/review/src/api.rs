use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use ihc_triage::abmil::render_heatmap;
use ihc_triage::cohort::{filter_ihc_basal, join_predictions, InclusionLedger, SlideRecord};
use ihc_triage::eval::{curve_points, evaluate, roc_and_auc, CurvePoint, EvaluationReport, RocCurve, DEFAULT_GRID};
use ihc_triage::tiling::{LevelInfo, RgbRaster, SlidePyramid};
use ihc_triage::Exec;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::journal::{JournalError, JournalEvent};
use crate::recommend::{recommend, Recommendation, Verdict};
use crate::session::{
    build_blinded_session, AiFields, CaseView, ConcordanceReport, Decision, DecisionSubmission, ReviewSession,
    SessionError, SessionPlan, SessionState,
};
use crate::trust::{IhcOutcome, TrustAlert, TrustEvent, TrustSnapshot};
use crate::{AppState, IMAGE_TILE_PX, REVIEWER_HEADER};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            SessionError::CannotBalance(_) => (StatusCode::UNPROCESSABLE_ENTITY, "cannot_balance"),
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            SessionError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JournalError> for ApiError {
    fn from(e: JournalError) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/slides/{id}/recommendation", get(slide_recommendation))
        .route("/slides/{id}/heatmap", get(slide_heatmap))
        .route("/slides/{id}/image", get(slide_image_info))
        .route("/slides/{id}/tiles/{level}/{col}/{row}", get(slide_tile))
        .route("/images/{slide_ref}", get(ref_image_info))
        .route("/images/{slide_ref}/tiles/{level}/{col}/{row}", get(ref_tile))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_case))
        .route("/sessions/{id}/decisions", post(post_decision))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/cohorts/{id}/report", get(cohort_report))
        .route("/trust", get(trust))
        .route("/trust/events", post(trust_event))
        .with_state(state)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

fn reviewer(headers: &HeaderMap) -> ApiResult<Option<String>> {
    match headers.get(REVIEWER_HEADER) {
        None => Ok(None),
        Some(v) => {
            let s = v.to_str().map_err(|_| ApiError::bad_request(format!("{REVIEWER_HEADER} is not text")))?.trim();
            if s.is_empty() {
                return Err(ApiError::bad_request(format!("{REVIEWER_HEADER} is empty")));
            }
            Ok(Some(s.to_string()))
        }
    }
}

fn require_reviewer(headers: &HeaderMap) -> ApiResult<String> {
    reviewer(headers)?.ok_or_else(|| ApiError::bad_request(format!("missing {REVIEWER_HEADER} header")))
}

async fn health(State(st): Shared) -> Json<serde_json::Value> {
    let sessions = st.read_store(|s| s.sessions.len());
    Json(json!({
        "status": "ok",
        "slides_with_predictions": st.catalog.predictions.len(),
        "cohorts": st.catalog.manifests.keys().collect::<Vec<_>>(),
        "sessions": sessions,
        "default_threshold": st.config.default_threshold,
    }))
}

fn recommendation_for(st: &AppState, slide_id: &str) -> ApiResult<Recommendation> {
    let p = st
        .catalog
        .predictions
        .get(slide_id)
        .ok_or_else(|| ApiError::not_found(format!("no prediction for slide {slide_id}")))?;
    recommend(p, st.threshold_for_slide(slide_id)).map_err(ApiError::internal)
}

async fn slide_recommendation(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<Recommendation>> {
    recommendation_for(&st, &id).map(Json)
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn slide_heatmap(State(st): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let p = st.catalog.predictions.get(&id).ok_or_else(|| ApiError::not_found(format!("no prediction for slide {id}")))?;
    let g = p.geometry.ok_or_else(|| ApiError::not_found(format!("slide {id} has no tiling geometry")))?;
    let hm = render_heatmap(&p.attention(), &p.anchors(), g).map_err(|e| ApiError::internal(e.to_string()))?;
    let mut out = Vec::new();
    hm.write_png(&mut out).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(png_response(out))
}

#[derive(Debug, Serialize)]
struct ImageInfo {
    tile_px: u32,
    levels: Vec<LevelInfo>,
    columns: Vec<u32>,
    rows: Vec<u32>,
}

fn image_info(p: &SlidePyramid) -> ImageInfo {
    let n = |v: u32| v.div_ceil(IMAGE_TILE_PX);
    ImageInfo {
        tile_px: IMAGE_TILE_PX,
        levels: p.levels().to_vec(),
        columns: p.levels().iter().map(|l| n(l.width_px)).collect(),
        rows: p.levels().iter().map(|l| n(l.height_px)).collect(),
    }
}

fn encode_rgb_png(r: &RgbRaster) -> ApiResult<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, r.width(), r.height());
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| ApiError::internal(e.to_string()))?;
    w.write_image_data(r.as_bytes()).map_err(|e| ApiError::internal(e.to_string()))?;
    w.finish().map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(out)
}

fn tile(p: &SlidePyramid, level: usize, col: u32, row: u32) -> ApiResult<Response> {
    let info = p.levels().get(level).ok_or_else(|| ApiError::not_found(format!("no level {level}")))?;
    let (x, y) = (col as u64 * IMAGE_TILE_PX as u64, row as u64 * IMAGE_TILE_PX as u64);
    if x >= info.width_px as u64 || y >= info.height_px as u64 {
        return Err(ApiError::not_found(format!("tile {col},{row} outside level {level}")));
    }
    let (x, y) = (x as u32, y as u32);
    let w = IMAGE_TILE_PX.min(info.width_px - x);
    let h = IMAGE_TILE_PX.min(info.height_px - y);
    let r = p.read_region(level, x, y, w, h).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(png_response(encode_rgb_png(&r)?))
}

fn pyramid<'a>(st: &'a AppState, slide_id: &str) -> ApiResult<&'a SlidePyramid> {
    st.catalog.images.get(slide_id).ok_or_else(|| ApiError::not_found(format!("no image for slide {slide_id}")))
}

async fn slide_image_info(State(st): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(image_info(pyramid(&st, &id)?)).into_response())
}

async fn slide_tile(State(st): Shared, Path((id, level, col, row)): Path<(String, usize, u32, u32)>) -> ApiResult<Response> {
    tile(pyramid(&st, &id)?, level, col, row)
}

fn slide_for_ref(st: &AppState, slide_ref: &str) -> ApiResult<String> {
    st.read_store(|s| {
        s.sessions
            .values()
            .flat_map(|x| &x.cases)
            .find(|c| c.slide_ref == slide_ref)
            .map(|c| c.slide_id.clone())
    })
    .ok_or_else(|| ApiError::not_found(format!("unknown image {slide_ref}")))
}

async fn ref_image_info(State(st): Shared, Path(slide_ref): Path<String>) -> ApiResult<Response> {
    let id = slide_for_ref(&st, &slide_ref)?;
    Ok(Json(image_info(pyramid(&st, &id)?)).into_response())
}

async fn ref_tile(
    State(st): Shared,
    Path((slide_ref, level, col, row)): Path<(String, usize, u32, u32)>,
) -> ApiResult<Response> {
    let id = slide_for_ref(&st, &slide_ref)?;
    tile(pyramid(&st, &id)?, level, col, row)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    case_slide_ids: Vec<String>,
    #[serde(default)]
    n_decoys: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "yes")]
    blinded: bool,
    #[serde(default = "yes")]
    include_benign_decoys: bool,
    /// Defaults to every loaded cohort.
    #[serde(default)]
    decoy_cohorts: Option<Vec<String>>,
    #[serde(default)]
    reviewer_id: Option<String>,
}

fn yes() -> bool {
    true
}

/// Reviewer-facing session: never includes slide ids, decoy flags or
/// blinded AI fields while open.
#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    state: SessionState,
    blinded: bool,
    reviewer_id: Option<String>,
    seed: u64,
    total: usize,
    cases: Vec<CaseView>,
    decisions: Vec<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<ConcordanceReport>,
}

fn session_view(s: &ReviewSession, reviewer: Option<&str>) -> SessionView {
    SessionView {
        session_id: s.session_id.clone(),
        state: s.state,
        blinded: s.blinded,
        reviewer_id: s.reviewer_id.clone(),
        seed: s.seed,
        total: s.cases.len(),
        cases: (0..s.cases.len()).map(|i| s.view(i, "/images")).collect(),
        decisions: s.decisions.iter().filter(|d| reviewer.is_none_or(|r| d.reviewer_id == r)).cloned().collect(),
        report: s.report(),
    }
}

fn ai_fields(st: &AppState, slide_id: &str) -> Option<AiFields> {
    let r = recommendation_for(st, slide_id).ok()?;
    Some(AiFields {
        cancer_probability: r.cancer_probability,
        operating_threshold: r.operating_threshold,
        verdict: r.verdict,
        final_isup: r.final_isup,
        heatmap_ref: r.heatmap_ref,
    })
}

async fn create_session(State(st): Shared, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_json(&body)?;
    if let Some(r) = &req.reviewer_id {
        if r.trim().is_empty() {
            return Err(ApiError::bad_request("reviewer_id is empty"));
        }
    }
    let cases: Vec<SlideRecord> = req
        .case_slide_ids
        .iter()
        .map(|id| st.catalog.slide(id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown slide {id}"))))
        .collect::<Result<_, _>>()?;
    let pool: Vec<SlideRecord> = match &req.decoy_cohorts {
        None => st.catalog.manifests.values().flat_map(|m| m.slides.iter().cloned()).collect(),
        Some(ids) => {
            let mut v = Vec::new();
            for id in ids {
                let m = st.catalog.manifests.get(id).ok_or_else(|| ApiError::not_found(format!("unknown cohort {id}")))?;
                v.extend(m.slides.iter().cloned());
            }
            v
        }
    };
    let mut store = st.store_lock();
    let plan = SessionPlan {
        session_id: format!("session-{:04}", store.next_session + 1),
        reviewer_id: req.reviewer_id.clone(),
        seed: req.seed,
        blinded: req.blinded,
        n_decoys: req.n_decoys,
        include_benign_decoys: req.include_benign_decoys,
    };
    let session = build_blinded_session(&plan, &cases, &pool, |id| ai_fields(&st, id), Utc::now())?;
    let view = session_view(&session, None);
    st.commit(&mut store, JournalEvent::SessionCreated { session })?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(st): Shared, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let r = reviewer(&headers)?;
    st.read_store(|s| Ok(Json(session_view(s.session(&id)?, r.as_deref())).into_response()))
}

#[derive(Debug, Serialize)]
struct NextCase {
    case: Option<CaseView>,
    done: bool,
    decided: usize,
    total: usize,
}

async fn next_case(State(st): Shared, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<NextCase>> {
    let r = require_reviewer(&headers)?;
    st.read_store(|s| {
        let sess = s.session(&id)?;
        let next = if sess.is_open() { sess.next_case(&r) } else { None };
        Ok(Json(NextCase {
            case: next.map(|i| sess.view(i, "/images")),
            done: next.is_none(),
            decided: sess.decisions_by(&r).len(),
            total: sess.cases.len(),
        }))
    })
}

async fn post_decision(
    State(st): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let r = require_reviewer(&headers)?;
    let sub: DecisionSubmission = parse_json(&body)?;
    let mut store = st.store_lock();
    store.session(&id)?.check_decision(&r, &sub)?;
    let decision = Decision {
        case_id: sub.case_id,
        reviewer_id: r,
        diagnosis: sub.diagnosis,
        ihc_required: sub.ihc_required,
        note: sub.note,
        timestamp: Utc::now(),
    };
    st.commit(&mut store, JournalEvent::Decision { session_id: id, decision: decision.clone() })?;
    Ok((StatusCode::CREATED, Json(decision)).into_response())
}

async fn finalize(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<ConcordanceReport>> {
    let mut store = st.store_lock();
    if store.session(&id)?.is_open() {
        st.commit(&mut store, JournalEvent::Finalized { session_id: id.clone(), at: Utc::now() })?;
    }
    let report = store.session(&id)?.report().ok_or_else(|| ApiError::internal("finalized session without report"))?;
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    /// Comma-separated; defaults to the standard grid.
    thresholds: Option<String>,
    step: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CohortReport {
    operating_threshold: f64,
    report: EvaluationReport,
    curve: Vec<CurvePoint>,
    roc: Option<RocCurve>,
    inclusion: InclusionLedger,
}

async fn cohort_report(
    State(st): Shared,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Json<CohortReport>> {
    let m = st.catalog.manifests.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown cohort {id}")))?;
    let thresholds: Vec<f64> = match &q.thresholds {
        None => DEFAULT_GRID.to_vec(),
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| ApiError::bad_request(format!("bad threshold {t:?}"))))
            .collect::<Result<_, _>>()?,
    };
    let (included, inclusion) = filter_ihc_basal(m);
    let probs: HashMap<String, f64> =
        st.catalog.predictions.iter().map(|(k, v)| (k.clone(), v.cancer_probability)).collect();
    let bad = |e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_cohort", e);
    let preds = join_predictions(&included, &probs).map_err(|e| bad(e.to_string()))?;
    let report = evaluate(&preds, &thresholds, Exec::Parallel).map_err(|e| bad(e.to_string()))?;
    let curve = curve_points(&preds, q.step.unwrap_or(0.01)).map_err(|e| bad(e.to_string()))?;
    Ok(Json(CohortReport {
        operating_threshold: st.threshold_for_cohort(&id),
        report,
        curve,
        roc: roc_and_auc(&preds).ok(),
        inclusion,
    }))
}

async fn trust(State(st): Shared) -> Json<TrustSnapshot> {
    Json(st.read_store(|s| s.trust.snapshot()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrustEventRequest {
    slide_id: String,
    ihc_outcome: IhcOutcome,
}

#[derive(Debug, Serialize)]
struct TrustUpdate {
    monitor: TrustSnapshot,
    alert: Option<TrustAlert>,
}

async fn trust_event(State(st): Shared, body: Bytes) -> ApiResult<Json<TrustUpdate>> {
    let req: TrustEventRequest = parse_json(&body)?;
    let rec = recommendation_for(&st, &req.slide_id)?;
    if rec.verdict != Verdict::IhcNotRecommended {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_event",
            format!("slide {} was AI-positive at threshold {}", req.slide_id, rec.operating_threshold),
        ));
    }
    let event = TrustEvent {
        slide_id: req.slide_id,
        cancer_probability: rec.cancer_probability,
        operating_threshold: rec.operating_threshold,
        ihc_outcome: req.ihc_outcome,
    };
    let mut store = st.store_lock();
    let before = store.trust.alerts.len();
    st.commit(&mut store, JournalEvent::Trust { event, at: Utc::now() })?;
    Ok(Json(TrustUpdate {
        monitor: store.trust.snapshot(),
        alert: store.trust.alerts.get(before).cloned(),
    }))
}
