//! HTTP service: review and judging queues, run control and reports.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use simulacra_core::conformity::Condition;
use simulacra_core::eval::{EvalError, Grade, JudgingKind, MatchVerdict, Submission};
use simulacra_core::simulacrum::Method;
use simulacra_core::store::{read_json, ArtifactKind, RunRecord, RunState, SlotState, StoreError, TaskState};
use simulacra_core::story::{ReviewDecision, ReviewMode, StoryError};

use crate::runs::{Pipeline, RunRequest, SelfReportResults};
use crate::ui;

/// Error body: `{"error": <code>, "message": <text>}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn shape(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "shape-mismatch", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownId(_) => Self::new(StatusCode::NOT_FOUND, "unknown-id", msg),
            StoreError::AlreadyDecided(_) => Self::new(StatusCode::CONFLICT, "already-decided", msg),
            StoreError::ClaimConflict { .. } => Self::new(StatusCode::CONFLICT, "claim-conflict", msg),
            StoreError::Locked { .. } => Self::new(StatusCode::CONFLICT, "locked", msg),
            StoreError::Invalid(_) => Self::bad_request(msg),
            StoreError::Eval(EvalError::ShapeMismatch(_)) | StoreError::Story(StoryError::InvalidDecision(_)) => {
                Self::shape(msg)
            }
            StoreError::Eval(EvalError::NotReady(_)) => Self::new(StatusCode::CONFLICT, "not-ready", msg),
            StoreError::Eval(EvalError::InvalidInput(_)) => Self::bad_request(msg),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<StoreError>() {
            Ok(s) => s.into(),
            Err(e) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("{e:#}")),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub struct AppState {
    pipeline: Pipeline,
    /// Serializes the parked-to-running transition so each decision resumes
    /// a run at most once.
    resume: Mutex<()>,
}

impl AppState {
    pub fn new(pipeline: Pipeline) -> Arc<Self> {
        Arc::new(Self {
            pipeline,
            resume: Mutex::new(()),
        })
    }

    fn store(&self) -> &simulacra_core::store::ProjectStore {
        &self.pipeline.store
    }

    /// Moves the runs parked on `task_id` back to running; returns them.
    fn take_parked(&self, task_id: &str) -> Result<Vec<RunRecord>, StoreError> {
        let _g = self.resume.lock().expect("resume lock poisoned");
        let mut taken = Vec::new();
        for mut run in self.store().list_runs()? {
            if run.state == RunState::Parked && run.pending_review.as_deref() == Some(task_id) {
                run.state = RunState::Running;
                run.detail = Some(format!("resumed after review {task_id}"));
                self.store().save_run(&run)?;
                taken.push(run);
            }
        }
        Ok(taken)
    }
}

/// Restarts what a previous process left behind: runs that were executing
/// when it stopped, and parked runs whose review was decided meanwhile. The
/// forge journal lets both continue without repeating iterations.
pub fn recover(state: &Arc<AppState>) -> anyhow::Result<Vec<String>> {
    let mut resumed = Vec::new();
    let runs = {
        let _g = state.resume.lock().expect("resume lock poisoned");
        let mut picked = Vec::new();
        for mut run in state.store().list_runs()? {
            let ready = match (run.state, run.pending_review.as_deref()) {
                (RunState::Running, _) => true,
                (RunState::Parked, Some(task)) => state.store().review_task(task)?.state == TaskState::Decided,
                _ => false,
            };
            if ready {
                run.state = RunState::Running;
                run.detail = Some("resumed after restart".into());
                state.store().save_run(&run)?;
                picked.push(run);
            }
        }
        picked
    };
    for run in runs {
        let req = state.pipeline.load_request(&run.id)?;
        resumed.push(run.id.clone());
        spawn_run(state.clone(), run, req);
    }
    Ok(resumed)
}

/// Runs a pipeline on the blocking pool; the outcome lands in the run ledger.
fn spawn_run(state: Arc<AppState>, mut run: RunRecord, req: RunRequest) {
    tokio::task::spawn_blocking(move || {
        if let Err(e) = state.pipeline.execute(&mut run, &req) {
            tracing::warn!(run = %run.id, error = %format!("{e:#}"), "run failed");
        }
    });
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/reviews", get(list_reviews))
        .route("/reviews/{id}", get(get_review))
        .route("/reviews/{id}/claim", post(claim_review))
        .route("/reviews/{id}/decision", post(decide_review))
        .route("/judging/rules", get(judging_rules))
        .route("/judging/tasks", get(list_judging))
        .route("/judging/tasks/{id}", get(get_judging))
        .route("/judging/tasks/{id}/submission", post(submit_judging))
        .route("/runs", get(list_runs).post(start_run))
        .route("/runs/{id}", get(get_run))
        .route("/characters", get(characters))
        .route("/reports/observer", get(observer_report))
        .route("/reports/self-report/{character}", get(self_report))
        .route("/reports/conformity", get(conformity_reports));
    Router::new()
        .nest("/api/v1", api)
        .route("/", get(|| async { asset("index.html") }))
        .route("/ui/{file}", get(|Path(f): Path<String>| async move { asset(&f) }))
        .with_state(state)
}

fn asset(name: &str) -> Response {
    match ui::asset(name) {
        Some((mime, body)) => ([(header::CONTENT_TYPE, mime)], body).into_response(),
        None => ApiError::new(StatusCode::NOT_FOUND, "unknown-id", format!("no asset {name}")).into_response(),
    }
}

/// Runs store calls off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Deserialize)]
struct StateFilter {
    state: Option<String>,
}

async fn list_reviews(State(s): State<Arc<AppState>>, Query(q): Query<StateFilter>) -> ApiResult<Value> {
    let filter = q
        .state
        .as_deref()
        .map(str::parse::<TaskState>)
        .transpose()
        .map_err(ApiError::bad_request)?;
    blocking(move || Ok(Json(json!({ "tasks": s.store().list_reviews(filter)? })))).await
}

async fn get_review(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    blocking(move || Ok(Json(serde_json::to_value(s.store().review_task(&id)?).expect("task serializes")))).await
}

#[derive(Deserialize)]
struct ClaimBody {
    reviewer: String,
}

async fn claim_review(State(s): State<Arc<AppState>>, Path(id): Path<String>, Json(body): Json<Value>) -> ApiResult<Value> {
    let body: ClaimBody = serde_json::from_value(body).map_err(|e| ApiError::shape(e.to_string()))?;
    blocking(move || Ok(Json(serde_json::to_value(s.store().claim_review(&id, &body.reviewer)?).expect("serializes")))).await
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DecisionReply {
    task: simulacra_core::store::ReviewTask,
    resumed_runs: Vec<String>,
}

async fn decide_review(State(s): State<Arc<AppState>>, Path(id): Path<String>, Json(body): Json<Value>) -> ApiResult<DecisionReply> {
    let mut decision: ReviewDecision = serde_json::from_value(body).map_err(|e| ApiError::shape(e.to_string()))?;
    // The service stamps decisions itself.
    decision.timestamp = None;
    let state = s.clone();
    let (task, parked) = blocking(move || {
        let task = state.store().submit_review(&id, decision)?;
        let parked = state.take_parked(&id)?;
        Ok((task, parked))
    })
    .await?;
    let mut resumed = Vec::new();
    for run in parked {
        let req = s.pipeline.load_request(&run.id)?;
        resumed.push(run.id.clone());
        spawn_run(s.clone(), run, req);
    }
    Ok(Json(DecisionReply {
        task,
        resumed_runs: resumed,
    }))
}

/// Shape rules clients validate against before submitting.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgingRules {
    pub kinds: Vec<JudgingKind>,
    pub descriptions_per_pass: usize,
    pub min_reaction_words: usize,
    pub verdicts: Vec<MatchVerdict>,
    pub grades: Vec<Grade>,
}

async fn judging_rules(State(s): State<Arc<AppState>>) -> ApiResult<JudgingRules> {
    blocking(move || {
        let a = s.store().judging_assignment()?;
        Ok(Json(JudgingRules {
            kinds: JudgingKind::ALL.to_vec(),
            descriptions_per_pass: a.descriptions_per_pass,
            min_reaction_words: a.min_reaction_words,
            verdicts: vec![MatchVerdict::Correct, MatchVerdict::Partial, MatchVerdict::Incorrect],
            grades: vec![Grade::A, Grade::B, Grade::C, Grade::D, Grade::E],
        }))
    })
    .await
}

#[derive(Deserialize)]
struct JudgingFilter {
    judge: Option<String>,
    state: Option<SlotState>,
}

async fn list_judging(State(s): State<Arc<AppState>>, Query(q): Query<JudgingFilter>) -> ApiResult<Value> {
    blocking(move || Ok(Json(json!({ "tasks": s.store().judging_tasks(q.judge.as_deref(), q.state)? })))).await
}

async fn get_judging(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    blocking(move || Ok(Json(serde_json::to_value(s.store().judging_task(&id)?).expect("task serializes")))).await
}

async fn submit_judging(State(s): State<Arc<AppState>>, Path(id): Path<String>, Json(body): Json<Value>) -> ApiResult<Value> {
    let judge = body
        .get("judge")
        .and_then(Value::as_str)
        .filter(|j| !j.trim().is_empty())
        .ok_or_else(|| ApiError::shape("judge is required"))?
        .to_string();
    let submission = Submission::from_json(body.get("submission").unwrap_or(&Value::Null))
        .map_err(|e| ApiError::from(StoreError::from(e)))?;
    blocking(move || {
        let out = s.store().submit_judgment(&id, &judge, &submission)?;
        Ok(Json(serde_json::to_value(out).expect("outcome serializes")))
    })
    .await
}

async fn start_run(State(s): State<Arc<AppState>>, Json(body): Json<Value>) -> Result<(StatusCode, Json<RunRecord>), ApiError> {
    let req: RunRequest = serde_json::from_value(body).map_err(|e| ApiError::shape(e.to_string()))?;
    if req.review_mode == ReviewMode::Interactive {
        return Err(ApiError::bad_request("the service cannot run interactive reviews; use queued"));
    }
    let state = s.clone();
    let r = req.clone();
    let run = blocking(move || Ok(state.pipeline.start(&r)?)).await?;
    spawn_run(s, run.clone(), req);
    Ok((StatusCode::ACCEPTED, Json(run)))
}

async fn list_runs(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(move || Ok(Json(json!({ "runs": s.store().list_runs()? })))).await
}

async fn get_run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<RunRecord> {
    blocking(move || Ok(Json(s.store().load_run(&id)?))).await
}

async fn characters(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(move || Ok(Json(json!({ "characters": s.store().characters()? })))).await
}

async fn observer_report(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(move || match s.store().observer_report()? {
        Some(r) => Ok(Json(serde_json::to_value(r).expect("report serializes"))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown-id", "no observer report yet")),
    })
    .await
}

async fn self_report(State(s): State<Arc<AppState>>, Path(character): Path<String>) -> ApiResult<Value> {
    blocking(move || {
        let a = s.store().require_artifact::<SelfReportResults>(&character, ArtifactKind::SelfReport)?;
        Ok(Json(serde_json::to_value(a).expect("results serialize")))
    })
    .await
}

async fn conformity_reports(State(s): State<Arc<AppState>>) -> ApiResult<Value> {
    blocking(move || {
        let mut out = serde_json::Map::new();
        for m in Method::ALL {
            for c in [Condition::Group, Condition::Control] {
                let path = s.pipeline.conformity_report_path(m, c);
                if let Some(v) = read_json::<Value>(&path)? {
                    let key = path.file_stem().and_then(|x| x.to_str()).unwrap_or_default().to_string();
                    out.insert(key, v);
                }
            }
        }
        Ok(Json(Value::Object(out)))
    })
    .await
}
