//! JSON HTTP API over the robomem dialogue engine.
//!
//! Handlers only decode requests and hand them to [`Service`], whose
//! methods run on the blocking pool.

pub mod config;
pub mod error;
pub mod service;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use robomem_core::dialogue::{DialogueAct, Phase, Reply, SideChannel};
use robomem_core::memory::Valence;
use robomem_core::persona::PersonaProfile;
use robomem_core::transcript::TranscriptLine;
use serde::{Deserialize, Serialize};

pub use config::ServerConfig;
pub use error::{ApiError, ErrorCode};
pub use service::{ConfigOverrides, Service, SessionHandle, UserProfile};

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateUserRequest {
    pub display_name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSessionRequest {
    pub user_id: String,
    pub robot: String,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRequest {
    pub text: String,
    #[serde(default)]
    pub emotion_valence: Option<Valence>,
    #[serde(default)]
    pub attire: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Serialize)]
pub struct ReplyBody {
    pub text: String,
    pub acts: Vec<DialogueAct>,
    pub phase: Phase,
}

impl From<Reply> for ReplyBody {
    fn from(r: Reply) -> Self {
        Self {
            text: r.text,
            acts: r.acts,
            phase: r.phase,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct OpenSessionBody {
    pub session: SessionHandle,
    #[serde(flatten)]
    pub reply: ReplyBody,
}

#[derive(Debug, Serialize)]
pub struct TranscriptBody {
    pub session: SessionHandle,
    pub turns: Vec<TranscriptLine>,
}

#[derive(Debug, Serialize)]
struct HealthBody<'a> {
    status: &'static str,
    personas: Vec<&'a PersonaProfile>,
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/users", post(create_user))
        .route("/users/{id}/models/{robot}", get(get_model))
        .route("/sessions", post(open_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .with_state(service)
}

async fn blocking<T, F>(service: Arc<Service>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(t)| t)
        .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.body_text()))
}

async fn health(State(service): State<Arc<Service>>) -> Json<serde_json::Value> {
    let body = HealthBody {
        status: "ok",
        personas: service.personas(),
    };
    Json(serde_json::to_value(body).expect("personas serialize"))
}

async fn create_user(
    State(service): State<Arc<Service>>,
    payload: Result<Json<CreateUserRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<UserProfile>)> {
    let req = body(payload)?;
    let profile = blocking(service, move |s| s.create_user(&req.display_name)).await?;
    Ok((StatusCode::CREATED, Json(profile)))
}

async fn open_session(
    State(service): State<Arc<Service>>,
    payload: Result<Json<OpenSessionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<OpenSessionBody>)> {
    let req = body(payload)?;
    let overrides = ConfigOverrides {
        mode: req.mode,
        threshold: req.threshold,
        seed: req.seed,
    };
    let (session, reply) = blocking(service, move |s| {
        s.open_session(&req.user_id, &req.robot, &overrides)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(OpenSessionBody {
            session,
            reply: reply.into(),
        }),
    ))
}

async fn post_message(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<MessageRequest>, JsonRejection>,
) -> ApiResult<Json<ReplyBody>> {
    let req = body(payload)?;
    let side = SideChannel {
        emotion_valence: req.emotion_valence,
        attire: req.attire,
    };
    let reply = blocking(service, move |s| s.post_message(&id, &req.text, &side)).await?;
    Ok(Json(reply.into()))
}

async fn get_model(
    State(service): State<Arc<Service>>,
    Path((id, robot)): Path<(String, String)>,
) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(
        blocking(service, move |s| s.model(&id, &robot)).await?,
    ))
}

async fn get_transcript(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
) -> ApiResult<Json<TranscriptBody>> {
    let body = blocking(service, move |s| {
        Ok(TranscriptBody {
            session: s.session_handle(&id)?,
            turns: s.transcript(&id)?,
        })
    })
    .await?;
    Ok(Json(body))
}
