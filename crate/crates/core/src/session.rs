//! Scripted multi-turn sessions with per-turn assertions.
//!
//! A script is either a bare array of turns or an object:
//!
//! ```json
//! {
//!   "description": "optional",
//!   "turns": [
//!     {
//!       "caller_id": "alice",
//!       "message": "search the weather forecast for Paris",
//!       "expect": {
//!         "success": true,
//!         "skill_shortcut": false,
//!         "phases_include": ["reason"],
//!         "phases_exclude": [],
//!         "response_contains": "Forecast",
//!         "strategy": "react"
//!       }
//!     }
//!   ],
//!   "expect_after": { "skills_min": 1, "stage_at_least": "progenitor" }
//! }
//! ```
//!
//! Every `expect` field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cognition::Agent;
use crate::perception::Metadata;
use crate::skills::Stage;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_shortcut: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases_include: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases_exclude: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub caller_id: String,
    pub message: String,
    #[serde(default, alias = "expected")]
    pub expect: Option<Expect>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectAfter {
    #[serde(default)]
    pub skills_min: Option<usize>,
    #[serde(default)]
    pub stage_at_least: Option<Stage>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub expect_after: Option<ExpectAfter>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Turns(Vec<Turn>),
    Full(Script),
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, serde_json::Error> {
        Ok(match serde_json::from_str(text)? {
            ScriptFile::Turns(turns) => Script { turns, ..Script::default() },
            ScriptFile::Full(s) => s,
        })
    }

    pub fn from_file(path: &Path) -> Result<Script, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Script::parse(&text).map_err(|e| format!("invalid script {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnReport {
    pub turn: usize,
    pub caller_id: String,
    pub message: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub passed: bool,
    pub turns: Vec<TurnReport>,
    pub skills: Vec<Value>,
    pub failures: Vec<String>,
}

/// Checks one pipeline result (as JSON) against its expectations.
pub fn check_turn(expect: &Expect, result: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let phases: Vec<&str> = result
        .get("trace")
        .and_then(Value::as_array)
        .map(|t| t.iter().filter_map(|e| e.get("phase").and_then(Value::as_str)).collect())
        .unwrap_or_default();
    if let Some(want) = expect.success {
        let got = result.get("success").and_then(Value::as_bool).unwrap_or(false);
        if got != want {
            out.push(format!("expected success={want}, got {got}"));
        }
    }
    if let Some(want) = expect.skill_shortcut {
        let got = result.get("skill_shortcut_used").and_then(Value::as_bool).unwrap_or(false);
        if got != want {
            out.push(format!("expected skill_shortcut={want}, got {got}"));
        }
    }
    for p in &expect.phases_include {
        if !phases.contains(&p.as_str()) {
            out.push(format!("expected phase {p:?} in trace {phases:?}"));
        }
    }
    for p in &expect.phases_exclude {
        if phases.contains(&p.as_str()) {
            out.push(format!("expected phase {p:?} absent from trace {phases:?}"));
        }
    }
    if let Some(want) = &expect.response_contains {
        let got = result.get("response").and_then(Value::as_str).unwrap_or("");
        if !got.contains(want.as_str()) {
            out.push(format!("expected response containing {want:?}, got {got:?}"));
        }
    }
    if let Some(want) = &expect.strategy {
        let got = result.get("strategy").and_then(Value::as_str).unwrap_or("none");
        if got != want {
            out.push(format!("expected strategy {want:?}, got {got:?}"));
        }
    }
    out
}

fn check_after(expect: &ExpectAfter, skills: &[Value]) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(min) = expect.skills_min {
        if skills.len() < min {
            out.push(format!("expected at least {min} skills, found {}", skills.len()));
        }
    }
    if let Some(stage) = expect.stage_at_least {
        let reached = skills
            .iter()
            .filter_map(|s| s.get("stage").cloned())
            .filter_map(|s| serde_json::from_value::<Stage>(s).ok())
            .any(|s| s >= stage);
        if !reached {
            out.push(format!("expected a skill at stage {stage:?} or later"));
        }
    }
    out
}

fn assemble(script: &Script, turns: Vec<TurnReport>, skills: Vec<Value>) -> SessionReport {
    let mut failures: Vec<String> =
        turns.iter().flat_map(|t| t.failures.iter().map(move |f| format!("turn {}: {f}", t.turn))).collect();
    if let Some(after) = &script.expect_after {
        failures.extend(check_after(after, &skills).into_iter().map(|f| format!("after session: {f}")));
    }
    SessionReport { passed: failures.is_empty(), turns, skills, failures }
}

fn turn_report(i: usize, t: &Turn, result: Value) -> TurnReport {
    let failures = t.expect.as_ref().map(|e| check_turn(e, &result)).unwrap_or_default();
    TurnReport {
        turn: i + 1,
        caller_id: t.caller_id.clone(),
        message: t.message.clone(),
        passed: failures.is_empty(),
        failures,
        result,
    }
}

/// Runs every turn in-process, letting learning settle between turns.
pub async fn run_embedded(agent: &Agent, script: &Script) -> SessionReport {
    let mut turns = Vec::with_capacity(script.turns.len());
    for (i, t) in script.turns.iter().enumerate() {
        let result = match agent.run(&t.caller_id, &t.message, &Metadata::new()).await {
            Ok(r) => serde_json::to_value(&r).unwrap_or(Value::Null),
            Err(e) => json!({ "success": false, "error": e.to_string() }),
        };
        agent.settle().await;
        turns.push(turn_report(i, t, result));
    }
    let skills = agent.skills().list().into_iter().map(|s| json!(s)).collect();
    assemble(script, turns, skills)
}

/// Runs every turn through a gateway's A2A endpoint.
pub async fn run_remote(base: &str, api_key: Option<&str>, script: &Script) -> Result<SessionReport, String> {
    let client = reqwest::Client::new();
    let base = base.trim_end_matches('/');
    let with_key = |rb: reqwest::RequestBuilder| match api_key {
        Some(k) => rb.header("x-api-key", k),
        None => rb,
    };
    let mut turns = Vec::with_capacity(script.turns.len());
    for (i, t) in script.turns.iter().enumerate() {
        let body = json!({
            "jsonrpc": "2.0",
            "id": i + 1,
            "method": "tasks/send",
            "params": { "message": t.message, "metadata": { "caller_id": t.caller_id } },
        });
        let reply: Value = with_key(client.post(format!("{base}/a2a")).json(&body))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let result = match reply.pointer("/result/task/metadata") {
            Some(Value::Object(m)) if !m.contains_key("error") => Value::Object(m.clone()),
            Some(other) => json!({ "success": false, "error": other.get("error").cloned().unwrap_or(Value::Null) }),
            None => json!({ "success": false, "error": reply.get("error").cloned().unwrap_or(Value::Null) }),
        };
        turns.push(turn_report(i, t, result));
    }
    let listing: Value = with_key(client.get(format!("{base}/admin/skills")))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    let skills = listing.get("skills").and_then(Value::as_array).cloned().unwrap_or_default();
    Ok(assemble(script, turns, skills))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_script_shapes_parse() {
        assert_eq!(Script::parse("[]").unwrap().turns.len(), 0);
        let s = Script::parse(r#"{"turns":[{"caller_id":"a","message":"hi","expected":{"success":true}}]}"#).unwrap();
        assert_eq!(s.turns[0].expect.as_ref().unwrap().success, Some(true));
        assert!(Script::parse(r#"{"turns":[{"caller_id":"a","message":"hi","expect":{"sucess":true}}]}"#).is_err());
    }

    #[test]
    fn assertions_name_the_mismatch() {
        let result = json!({
            "success": true,
            "skill_shortcut_used": false,
            "response": "Forecast: mild",
            "strategy": "react",
            "trace": [{ "phase": "perceive" }, { "phase": "reason" }],
        });
        let ok = Expect { success: Some(true), phases_include: vec!["reason".into()], ..Expect::default() };
        assert!(check_turn(&ok, &result).is_empty());
        let bad = Expect { skill_shortcut: Some(true), phases_exclude: vec!["reason".into()], ..Expect::default() };
        assert_eq!(check_turn(&bad, &result).len(), 2);
    }
}
