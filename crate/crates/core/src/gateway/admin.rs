//! Operator routes for skills, profiles and memory.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use serde_json::{json, Value};

use super::error::ApiError;
use crate::cognition::Agent;
use crate::skills::{PluginDefinition, Skill, SkillError};
use crate::toolhub::RESPOND_TOOL;

impl From<SkillError> for ApiError {
    fn from(e: SkillError) -> Self {
        match e {
            SkillError::UnknownSkill(_) => ApiError::not_found(e.to_string()),
            SkillError::InvalidDefinition(_) => ApiError::bad_request(e.to_string()),
        }
    }
}

/// Registers a plugin skill whose every tool is registered with the agent.
pub fn register_plugin(agent: &Agent, def: PluginDefinition) -> Result<Skill, SkillError> {
    if let Some(missing) =
        def.action_sequence.iter().find(|c| c.tool != RESPOND_TOOL && !agent.tools().has_tool(&c.tool))
    {
        return Err(SkillError::InvalidDefinition(format!("unknown tool {:?}", missing.tool)));
    }
    agent.skills().register_plugin(def, Utc::now())
}

/// Profile dump with an explicit marker for callers never seen.
pub fn profile_view(agent: &Agent, caller_id: &str) -> Value {
    json!({
        "caller_id": caller_id,
        "known": agent.profiles().contains(caller_id),
        "profile": agent.profile(caller_id),
    })
}

pub fn skills_view(agent: &Agent) -> Value {
    json!({ "skills": agent.skills().list() })
}

pub fn routes(agent: Agent) -> Router {
    Router::new()
        .route("/admin/skills", get(list_skills).post(create_skill))
        .route("/admin/skills/{id}", get(get_skill).delete(delete_skill))
        .route("/admin/profiles/{caller}", get(get_profile).delete(forget_caller))
        .route("/admin/memory/stats", get(memory_stats))
        .with_state(agent)
}

async fn list_skills(State(agent): State<Agent>) -> Json<Value> {
    Json(skills_view(&agent))
}

async fn create_skill(
    State(agent): State<Agent>,
    body: Result<Json<PluginDefinition>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(def) = body?;
    let skill = register_plugin(&agent, def)?;
    Ok((StatusCode::CREATED, Json(skill)).into_response())
}

async fn get_skill(State(agent): State<Agent>, Path(id): Path<String>) -> Result<Json<Skill>, ApiError> {
    agent.skills().get(&id).map(Json).ok_or_else(|| SkillError::UnknownSkill(id).into())
}

async fn delete_skill(State(agent): State<Agent>, Path(id): Path<String>) -> Result<Json<Skill>, ApiError> {
    Ok(Json(agent.skills().remove(&id)?))
}

async fn get_profile(State(agent): State<Agent>, Path(caller): Path<String>) -> Json<Value> {
    Json(profile_view(&agent, &caller))
}

async fn forget_caller(State(agent): State<Agent>, Path(caller): Path<String>) -> Json<Value> {
    Json(json!(agent.forget_caller(&caller).await))
}

async fn memory_stats(State(agent): State<Agent>) -> Json<Value> {
    Json(json!(agent.memory().stats()))
}
