//! HTTP+JSON API over the store and the generation pipeline.
//!
//! Every route except `POST /families` needs `Authorization: Bearer
//! <token>` for the family it touches. Blocking work (SQLite, model
//! calls) runs on the blocking pool.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use homeplan_core::{CaregiverProfile, FamilyContext, LearningTask, PlanId, SubtaskStatus, Timestamp};
use homeplan_core::events::TutoringMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::llm::gateway::TutoringRequest;
use crate::llm::provider::Attachment;
use crate::pipeline::{Pipeline, PipelineError, PlanInput, Policy, parse_subtasks};
use crate::store::{Actor, Store, StoreError, Window};

pub struct AppState {
    pub store: Store,
    pub pipeline: Pipeline,
}

pub type Shared = Arc<AppState>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub details: Vec<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_owned(), message: message.into(), details: Vec::new() }
    }

    fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound { .. } => StatusCode::NOT_FOUND,
            StoreError::Duplicate(_) | StoreError::IllegalTransition(_) | StoreError::VersionConflict { .. } => {
                StatusCode::CONFLICT
            }
            StoreError::Validation(_) | StoreError::FromNotOwner(_) | StoreError::UnknownCaregiver(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            StoreError::Unauthorized => StatusCode::UNAUTHORIZED,
            StoreError::Forbidden(_) => StatusCode::FORBIDDEN,
            StoreError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let details = match &e {
            StoreError::VersionConflict { actual, .. } => vec!["retriable".into(), format!("current_version={actual}")],
            _ => Vec::new(),
        };
        ApiError::new(status, e.code(), e.to_string()).with_details(details)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Input(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::InFlight(_) => StatusCode::CONFLICT,
            PipelineError::Stage { .. } => StatusCode::BAD_GATEWAY,
            PipelineError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut details = vec![format!("stage={}", e.stage())];
        if let PipelineError::Stage { source: crate::llm::GatewayError::ConstraintViolation { rules, .. }, .. } = &e {
            details.extend(rules.iter().map(|r| format!("rule={r}")));
        }
        ApiError::new(status, e.code(), e.to_string()).with_details(details)
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// `Json` with rejections rendered in the API error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(rejection: JsonRejection) -> ApiError {
    let status = match rejection {
        JsonRejection::MissingJsonContentType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
        _ => StatusCode::BAD_REQUEST,
    };
    ApiError::new(status, "bad_request", rejection.body_text())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn bearer(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_owned())
        .filter(|t| !t.is_empty())
        .ok_or_else(|| StoreError::Unauthorized.into())
}

fn actor(caregiver_id: &str, acting_as: Option<String>) -> Actor {
    Actor { caregiver_id: caregiver_id.into(), acting_as: acting_as.map(Into::into) }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/families", post(create_family))
        .route("/families/{id}", get(get_family))
        .route("/families/{id}/caregivers/{cid}", put(put_caregiver))
        .route("/families/{id}/plans", post(create_plan))
        .route("/families/{id}/engagement", get(engagement))
        .route("/plans/{id}/timesheet", get(timesheet))
        .route("/plans/{id}/report", get(report))
        .route("/plans/{id}/subtasks/{name}/handover", post(handover))
        .route("/plans/{id}/subtasks/{name}/status", post(set_status))
        .route("/plans/{id}/subtasks/{name}/notes", post(add_note))
        .route("/tutoring/{mode}", post(tutoring))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

async fn create_family(State(app): State<Shared>, Body(family): Body<FamilyContext>) -> ApiResult<impl IntoResponse> {
    let id = family.family_id.clone();
    let token = blocking(move || Ok(app.store.create_family(&family)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({"family_id": id, "token": token, "version": 1}))))
}

async fn get_family(State(app): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    blocking(move || {
        app.store.authorize(&id, &token)?;
        Ok(Json(serde_json::to_value(app.store.get_family(&id)?).unwrap_or_default()))
    })
    .await
}

async fn put_caregiver(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path((id, cid)): Path<(String, String)>,
    Body(profile): Body<CaregiverProfile>,
) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    if profile.caregiver_id.as_str() != cid {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation_failed",
            format!("body caregiver_id `{}` does not match path `{cid}`", profile.caregiver_id),
        ));
    }
    blocking(move || {
        app.store.authorize(&id, &token)?;
        let version = app.store.update_caregiver(&id, &profile)?;
        Ok(Json(json!({"caregiver_id": cid, "version": version})))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRequest {
    tasks: Vec<LearningTask>,
    #[serde(default = "default_policy")]
    policy: Policy,
    /// Regenerates this plan when it exists, creates it otherwise.
    plan_id: Option<String>,
    /// Pre-made decomposition; skips the decompose call.
    subtasks: Option<Value>,
    requested_by: Option<String>,
}

fn default_policy() -> Policy {
    Policy::LlmFirst
}

async fn create_plan(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Body(body): Body<PlanRequest>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    blocking(move || {
        app.store.authorize(&id, &token)?;
        let family = app.store.get_family(&id)?.family;
        let plan_id: PlanId = match &body.plan_id {
            Some(p) if !p.trim().is_empty() => p.as_str().into(),
            Some(_) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", "empty plan_id")),
            None => format!("{id}-{}", hex::encode(rand::random::<[u8; 6]>())).as_str().into(),
        };
        let previous = if app.store.plan_exists(plan_id.as_str())? {
            if app.store.plan(plan_id.as_str())?.family_id != family.family_id {
                return Err(StoreError::Forbidden(plan_id.to_string()).into());
            }
            Some(app.store.snapshot(plan_id.as_str())?)
        } else {
            None
        };
        let requested_by = body
            .requested_by
            .clone()
            .or_else(|| family.caregivers.first().map(|c| c.caregiver_id.to_string()))
            .unwrap_or_default();
        if family.caregiver(&requested_by).is_none() {
            return Err(StoreError::UnknownCaregiver(requested_by).into());
        }
        let input = PlanInput {
            plan_id: plan_id.clone(),
            family,
            tasks: body.tasks.clone(),
            policy: body.policy,
            subtasks: body.subtasks.as_ref().map(|v| parse_subtasks(v, &plan_id, &id.as_str().into())).transpose()?,
        };
        let output = match &previous {
            Some(prev) => app.pipeline.regenerate_plan(prev, &input)?,
            None => app.pipeline.generate_plan(&input)?,
        };
        let version = app.store.save_plan(&id, &Actor::new(&requested_by), &body.tasks, body.policy, &output)?;
        let status = if version == 1 { StatusCode::CREATED } else { StatusCode::OK };
        Ok((
            status,
            Json(json!({
                "plan_id": plan_id,
                "version": version,
                "schedule": output.schedule,
                "report": output.report,
                "unplaced": output.unplaced,
                "unresolved": output.unresolved,
            })),
        ))
    })
    .await
}

fn authorize_plan(app: &AppState, plan_id: &str, token: &str) -> ApiResult<String> {
    let family_id = app.store.plan(plan_id)?.family_id.to_string();
    app.store.authorize(&family_id, token)?;
    Ok(family_id)
}

async fn timesheet(State(app): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    blocking(move || {
        authorize_plan(&app, &id, &token)?;
        Ok(Json(serde_json::to_value(app.store.timesheet(&id)?).unwrap_or_default()))
    })
    .await
}

async fn report(State(app): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    blocking(move || {
        authorize_plan(&app, &id, &token)?;
        Ok(Json(serde_json::to_value(app.store.report(&id)?).unwrap_or_default()))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandoverBody {
    from: String,
    to: String,
    /// Defaults to `from`.
    caregiver_id: Option<String>,
    acting_as: Option<String>,
    expected_version: Option<u32>,
}

async fn handover(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path((id, name)): Path<(String, String)>,
    Body(body): Body<HandoverBody>,
) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    blocking(move || {
        authorize_plan(&app, &id, &token)?;
        let who = actor(body.caregiver_id.as_deref().unwrap_or(&body.from), body.acting_as);
        let update = app.store.handover(&id, &name, &who, &body.from, &body.to, body.expected_version)?;
        Ok(Json(serde_json::to_value(update).unwrap_or_default()))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusBody {
    caregiver_id: String,
    status: SubtaskStatus,
    acting_as: Option<String>,
    expected_version: Option<u32>,
}

async fn set_status(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path((id, name)): Path<(String, String)>,
    Body(body): Body<StatusBody>,
) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    blocking(move || {
        authorize_plan(&app, &id, &token)?;
        let who = actor(&body.caregiver_id, body.acting_as);
        let update = app.store.set_status(&id, &name, &who, body.status, body.expected_version)?;
        Ok(Json(serde_json::to_value(update).unwrap_or_default()))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoteBody {
    caregiver_id: String,
    text: String,
    acting_as: Option<String>,
    expected_version: Option<u32>,
}

async fn add_note(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path((id, name)): Path<(String, String)>,
    Body(body): Body<NoteBody>,
) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    blocking(move || {
        authorize_plan(&app, &id, &token)?;
        let who = actor(&body.caregiver_id, body.acting_as);
        let update = app.store.add_note(&id, &name, &who, &body.text, body.expected_version)?;
        Ok(Json(serde_json::to_value(update).unwrap_or_default()))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttachmentBody {
    media_type: String,
    data_base64: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TutoringBody {
    family_id: String,
    caregiver_id: String,
    acting_as: Option<String>,
    plan_id: Option<String>,
    subtask_name: Option<String>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    attachments: Vec<AttachmentBody>,
}

async fn tutoring(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path(mode): Path<String>,
    Body(body): Body<TutoringBody>,
) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    let mode = TutoringMode::parse(&mode).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_mode", format!("no tutoring mode `{mode}`"))
            .with_details(TutoringMode::ALL.iter().map(|m| m.as_str().to_owned()).collect())
    })?;
    let mut attachments = Vec::new();
    for a in &body.attachments {
        let bytes = base64::engine::general_purpose::STANDARD.decode(a.data_base64.as_bytes()).map_err(|e| {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("attachment is not base64: {e}"))
        })?;
        attachments.push(Attachment { media_type: a.media_type.clone(), bytes });
    }
    blocking(move || {
        app.store.authorize(&body.family_id, &token)?;
        if let Some(plan) = &body.plan_id {
            if app.store.plan(plan)?.family_id.as_str() != body.family_id {
                return Err(StoreError::Forbidden(plan.clone()).into());
            }
        }
        let who = actor(&body.caregiver_id, body.acting_as);
        let family = app.store.get_family(&body.family_id)?.family;
        if family.caregiver(who.effective().as_str()).is_none() {
            return Err(StoreError::UnknownCaregiver(who.effective().to_string()).into());
        }
        let req = TutoringRequest {
            caregiver_id: who.effective().clone(),
            plan_id: body.plan_id.map(|p| p.as_str().into()),
            subtask_name: body.subtask_name.clone(),
            mode,
            text: body.text,
            attachments,
        };
        let history = if mode == TutoringMode::Dialogue {
            app.store.dialogue_history(&body.family_id, who.effective().as_str(), body.subtask_name.as_deref())?
        } else {
            Vec::new()
        };
        let exchange = app.pipeline.gateway.tutor(&req, &history, app.store.now()).map_err(|e| {
            let status = match e.code() {
                "provider_unreachable" => StatusCode::BAD_GATEWAY,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            ApiError::new(status, e.code(), e.to_string())
        })?;
        app.store.record_tutoring(&body.family_id, &who, &exchange)?;
        Ok(Json(serde_json::to_value(exchange).unwrap_or_default()))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowQuery {
    since: Option<i64>,
    until: Option<i64>,
}

async fn engagement(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    q: Result<Query<WindowQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let token = bearer(&headers)?;
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    blocking(move || {
        app.store.authorize(&id, &token)?;
        let window = Window { since: q.since.map(Timestamp), until: q.until.map(Timestamp) };
        Ok(Json(serde_json::to_value(app.store.engagement(&id, window)?).unwrap_or_default()))
    })
    .await
}
