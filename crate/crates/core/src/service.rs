//! JSON-over-HTTP facade for refinement sessions.
//!
//! | method | path | effect |
//! |---|---|---|
//! | POST | `/sessions` | create from `imageRef` or `synthSpec`; predicts and picks rois |
//! | GET | `/sessions/{id}` | full state, masks as base64 PGM |
//! | POST | `/sessions/{id}/rois/{k}/command` | parse and execute `{text}`, stage the result |
//! | POST | `/sessions/{id}/rois/{k}/accept` | apply the staged patch |
//! | POST | `/sessions/{id}/rois/{k}/reject` | drop the staged patch |
//! | GET | `/sessions/{id}/replay` | transcript that rebuilds the current mask |
//!
//! Unknown sessions or rois give 404, unparseable commands 422 (with the
//! offending clause), accept/reject without a staged result 409.

use crate::acquisition::{select_rois, BudgetPlan, EntropyAcquisition, Acquisition};
use crate::classifier::PixelClassifier;
use crate::command::render_program;
use crate::exec::StepRecord;
use crate::grid::{GridImage, LabelMask, Roi};
use crate::io::{self, image_from_pgm, image_to_pgm, labels_from_pgm, labels_to_pgm, read_pgm, write_pgm};
use crate::session::{HistoryEntry, RoiStatus, Session, SessionError};
use crate::synth::{generate_phantoms, DomainShift, PhantomSpec};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use tower_http::cors::CorsLayer;

/// Shared server state: the frozen model and all live sessions.
pub struct AppState {
    model: PixelClassifier,
    data_dir: Option<PathBuf>,
    next_id: AtomicU64,
    sessions: Mutex<BTreeMap<String, Arc<tokio::sync::Mutex<Session>>>>,
}

impl AppState {
    pub fn new(model: PixelClassifier, data_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            model,
            data_dir,
            next_id: AtomicU64::new(1),
            sessions: Mutex::new(BTreeMap::new()),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session `{id}` does not exist")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/rois/{k}/command", post(command))
        .route("/sessions/{id}/rois/{k}/accept", post(accept))
        .route("/sessions/{id}/rois/{k}/reject", post(reject))
        .route("/sessions/{id}/replay", get(replay))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match &e {
            SessionError::UnknownRoi(_) => Self::not_found(e.to_string()),
            SessionError::NothingStaged(_) => Self::new(StatusCode::CONFLICT, e.to_string()),
            SessionError::Command(c) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": e.to_string(), "clause": c.clause() }),
            },
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthRequest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shift: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateSession {
    /// Name of `<data>/<ref>.pgm`; `<data>/<ref>_label.pgm` is used as ground truth when present.
    pub image_ref: Option<String>,
    pub synth_spec: Option<SynthRequest>,
    /// Initial mask as base64 PGM; defaults to the model's prediction.
    pub mask_pgm: Option<String>,
    /// Explicit rois; default is entropy acquisition.
    pub rois: Option<Vec<Roi>>,
    pub budget_percent: Option<f64>,
    pub roi_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct RoiView {
    index: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    score: f64,
    status: RoiStatus,
}

fn roi_views(s: &Session) -> Vec<RoiView> {
    s.rois
        .iter()
        .enumerate()
        .map(|(index, r)| RoiView {
            index,
            x: r.roi.x,
            y: r.roi.y,
            w: r.roi.w,
            h: r.roi.h,
            score: r.score,
            status: r.status,
        })
        .collect()
}

pub fn encode_pgm(pgm: &io::Pgm) -> String {
    B64.encode(write_pgm(pgm))
}

pub fn decode_pgm(text: &str) -> Result<io::Pgm, String> {
    let bytes = B64.decode(text).map_err(|e| format!("invalid base64: {e}"))?;
    read_pgm(&bytes).map_err(|e| e.to_string())
}

fn load_ref(dir: &std::path::Path, name: &str) -> Result<(GridImage, Option<LabelMask>), ApiError> {
    if name.is_empty() || name.contains(['/', '\\']) || name.contains("..") {
        return Err(ApiError::bad_request(format!("invalid image reference `{name}`")));
    }
    let img_path = dir.join(format!("{name}.pgm"));
    let bytes = std::fs::read(&img_path).map_err(|_| ApiError::not_found(format!("image `{name}` not found")))?;
    let image = image_from_pgm(&read_pgm(&bytes).map_err(|e| ApiError::bad_request(e.to_string()))?);
    let gt = match std::fs::read(dir.join(format!("{name}_label.pgm"))) {
        Ok(b) => {
            let pgm = read_pgm(&b).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let classes = (*pgm.data.iter().max().unwrap_or(&0) as usize + 1).max(2);
            Some(labels_from_pgm(&pgm, classes).map_err(|e| ApiError::bad_request(e.to_string()))?)
        }
        Err(_) => None,
    };
    Ok((image, gt))
}

async fn create_session(State(st): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Result<Json<serde_json::Value>, ApiError> {
    let (image, gt) = match (&req.image_ref, &req.synth_spec) {
        (Some(name), None) => {
            let dir = st
                .data_dir
                .as_ref()
                .ok_or_else(|| ApiError::bad_request("server has no data directory; use synthSpec"))?;
            load_ref(dir, name)?
        }
        (None, Some(spec)) => {
            let shift = match spec.shift.as_deref().unwrap_or("intensity") {
                "none" => DomainShift::None,
                "intensity" => DomainShift::intensity(),
                other => return Err(ApiError::bad_request(format!("unknown shift `{other}`"))),
            };
            let ds = generate_phantoms(&PhantomSpec {
                count: 1,
                shift,
                seed: spec.seed,
                ..PhantomSpec::default()
            })
            .map_err(ApiError::bad_request)?;
            let item = ds.items.into_iter().next().expect("one item");
            (item.image, Some(item.labels))
        }
        _ => return Err(ApiError::bad_request("give exactly one of imageRef or synthSpec")),
    };
    let classes = st.model.class_count();
    let probs = st.model.predict(&image);
    let initial = match &req.mask_pgm {
        Some(text) => {
            let pgm = decode_pgm(text).map_err(ApiError::bad_request)?;
            if (pgm.width, pgm.height) != (image.width(), image.height()) {
                return Err(ApiError::bad_request("mask size differs from image size"));
            }
            labels_from_pgm(&pgm, classes).map_err(|e| ApiError::bad_request(e.to_string()))?
        }
        None => probs.argmax(),
    };
    let rois: Vec<(Roi, f64)> = match &req.rois {
        Some(list) => {
            for r in list {
                r.validate(image.width(), image.height())
                    .map_err(|e| ApiError::bad_request(e.to_string()))?;
            }
            list.iter().map(|r| (*r, 0.0)).collect()
        }
        None => {
            let side = req.roi_size.unwrap_or(21);
            let plan = BudgetPlan {
                budget_percent: req.budget_percent.unwrap_or(5.0),
                rounds: 1,
                roi_w: side,
                roi_h: side,
            };
            plan.validate().map_err(ApiError::bad_request)?;
            select_rois(&EntropyAcquisition.score(&probs), &plan, &[])
                .into_iter()
                .map(|s| (s.roi, s.score))
                .collect()
        }
    };
    let id = format!("s{}", st.next_id.fetch_add(1, Ordering::SeqCst));
    let session = Session::new(id.clone(), image, initial, gt, rois, req.seed);
    let body = json!({ "sessionId": id, "rois": roi_views(&session) });
    st.sessions
        .lock()
        .expect("session map poisoned")
        .insert(id, Arc::new(tokio::sync::Mutex::new(session)));
    Ok(Json(body))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SessionView<'a> {
    session_id: &'a str,
    width: usize,
    height: usize,
    class_count: usize,
    class_id: u8,
    seed: u64,
    image_pgm: String,
    mask_pgm: String,
    initial_mask_pgm: String,
    gt_pgm: Option<String>,
    rois: Vec<RoiView>,
    history: &'a [HistoryEntry],
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = st.session(&id)?;
    let s = handle.lock().await;
    let view = SessionView {
        session_id: &s.id,
        width: s.image.width(),
        height: s.image.height(),
        class_count: s.current.class_count(),
        class_id: s.class_id,
        seed: s.seed,
        image_pgm: encode_pgm(&image_to_pgm(&s.image)),
        mask_pgm: encode_pgm(&labels_to_pgm(&s.current)),
        initial_mask_pgm: encode_pgm(&labels_to_pgm(&s.initial)),
        gt_pgm: s.gt.as_ref().map(|g| encode_pgm(&labels_to_pgm(g))),
        rois: roi_views(&s),
        history: &s.history,
    };
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

#[derive(Debug, Deserialize)]
pub struct CommandRequest {
    pub text: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CommandResponse {
    program: String,
    steps: Vec<StepRecord>,
    /// Roi-sized binary PGM.
    refined_patch: String,
    eta_trace: Vec<crate::refine::EtaEntry>,
    roi_dice_if_gt: Option<RoiDice>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct RoiDice {
    before: f64,
    after: f64,
}

async fn command(
    State(st): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
    Json(req): Json<CommandRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = st.session(&id)?;
    let mut s = handle.lock().await;
    let out = s.stage(k, &req.text)?;
    let body = CommandResponse {
        program: render_program(&out.program),
        refined_patch: encode_pgm(&io::mask_to_pgm(&out.patch)),
        eta_trace: out
            .steps
            .iter()
            .filter_map(|s| s.eta_trace.as_ref())
            .flat_map(|t| t.entries.iter().copied())
            .collect(),
        warnings: out.steps.iter().flat_map(|s| s.warnings.iter().cloned()).collect(),
        steps: out.steps,
        roi_dice_if_gt: out.roi_dice.map(|(before, after)| RoiDice { before, after }),
    };
    Ok(Json(serde_json::to_value(body).expect("serializable")))
}

async fn accept(State(st): State<Arc<AppState>>, Path((id, k)): Path<(String, usize)>) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = st.session(&id)?;
    let mut s = handle.lock().await;
    let changed = s.accept(k)?;
    Ok(Json(json!({ "roi": k, "status": RoiStatus::Accepted, "changedPixels": changed })))
}

async fn reject(State(st): State<Arc<AppState>>, Path((id, k)): Path<(String, usize)>) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = st.session(&id)?;
    let mut s = handle.lock().await;
    s.reject(k)?;
    Ok(Json(json!({ "roi": k, "status": s.rois[k].status })))
}

async fn replay(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<String, ApiError> {
    let handle = st.session(&id)?;
    let s = handle.lock().await;
    Ok(s.transcript().render())
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
