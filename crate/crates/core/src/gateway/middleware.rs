//! Shared middleware, applied in this order: correlation, auth, rate limit.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::HeaderValue;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use hmac::{Hmac, Mac};
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::clock::SharedClock;
use super::error::{ApiError, CORRELATION_ID};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

/// Paths served without credentials or rate limiting.
pub const PUBLIC_PATHS: &[&str] = &["/.well-known/agent.json", "/healthz"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestContext {
    pub correlation_id: String,
    pub received_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Principal {
    pub id: String,
    pub method: &'static str,
}

impl Principal {
    pub fn anonymous() -> Self {
        Self { id: "anonymous".into(), method: "none" }
    }
}

fn usable_request_id(v: &HeaderValue) -> Option<String> {
    let s = v.to_str().ok()?.trim();
    (!s.is_empty() && s.len() <= 128 && s.bytes().all(|b| b.is_ascii_graphic())).then(|| s.to_string())
}

pub async fn correlation(mut req: Request, next: Next) -> Response {
    let id = req
        .headers()
        .get(REQUEST_ID_HEADER)
        .and_then(usable_request_id)
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    req.extensions_mut().insert(RequestContext { correlation_id: id.clone(), received_at: Utc::now() });
    let mut res = CORRELATION_ID.scope(id.clone(), next.run(req)).await;
    if let Ok(v) = HeaderValue::from_str(&id) {
        res.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    res
}

type HmacSha256 = Hmac<Sha256>;

/// Static API keys plus optional HS256 JWTs signed with a shared secret.
/// With neither configured every request is admitted anonymously.
pub struct Authenticator {
    keys: HashSet<String>,
    jwt_secret: Option<Vec<u8>>,
    clock: SharedClock,
}

impl Authenticator {
    pub fn new(keys: &[String], jwt_secret: Option<&str>, clock: SharedClock) -> Self {
        Self { keys: keys.iter().cloned().collect(), jwt_secret: jwt_secret.map(|s| s.as_bytes().to_vec()), clock }
    }

    pub fn is_open(&self) -> bool {
        self.keys.is_empty() && self.jwt_secret.is_none()
    }

    pub fn authenticate(&self, headers: &axum::http::HeaderMap) -> Result<Principal, ApiError> {
        if self.is_open() {
            return Ok(Principal::anonymous());
        }
        let bearer = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer ").or_else(|| v.strip_prefix("bearer ")))
            .map(str::trim);
        let api_key = headers.get("x-api-key").and_then(|v| v.to_str().ok()).map(str::trim);
        let Some(credential) = api_key.or(bearer) else {
            return Err(ApiError::unauthorized("missing credentials: send X-API-Key or Authorization: Bearer"));
        };
        if self.keys.contains(credential) {
            let digest = hex::encode(Sha256::digest(credential.as_bytes()));
            return Ok(Principal { id: format!("key:{}", &digest[..12]), method: "api_key" });
        }
        if let Some(secret) = &self.jwt_secret {
            if credential.matches('.').count() == 2 {
                return verify_jwt(secret, credential, self.clock.now())
                    .map_err(|why| ApiError::unauthorized(format!("invalid token: {why}")));
            }
        }
        Err(ApiError::unauthorized("invalid credentials"))
    }
}

fn verify_jwt(secret: &[u8], token: &str, now: DateTime<Utc>) -> Result<Principal, String> {
    let mut parts = token.split('.');
    let (Some(h), Some(p), Some(s)) = (parts.next(), parts.next(), parts.next()) else {
        return Err("malformed".into());
    };
    let header: Value = serde_json::from_slice(&URL_SAFE_NO_PAD.decode(h).map_err(|_| "bad header encoding")?)
        .map_err(|_| "bad header")?;
    if header.get("alg").and_then(Value::as_str) != Some("HS256") {
        return Err("unsupported alg".into());
    }
    let sig = URL_SAFE_NO_PAD.decode(s).map_err(|_| "bad signature encoding")?;
    let mut mac = HmacSha256::new_from_slice(secret).map_err(|_| "bad secret")?;
    mac.update(format!("{h}.{p}").as_bytes());
    mac.verify_slice(&sig).map_err(|_| "signature mismatch")?;
    let claims: Value = serde_json::from_slice(&URL_SAFE_NO_PAD.decode(p).map_err(|_| "bad payload encoding")?)
        .map_err(|_| "bad payload")?;
    let ts = now.timestamp();
    if claims.get("exp").and_then(Value::as_i64).is_some_and(|exp| exp <= ts) {
        return Err("expired".into());
    }
    if claims.get("nbf").and_then(Value::as_i64).is_some_and(|nbf| nbf > ts) {
        return Err("not yet valid".into());
    }
    let sub = claims.get("sub").and_then(Value::as_str).unwrap_or("jwt");
    Ok(Principal { id: format!("jwt:{sub}"), method: "jwt" })
}

/// HS256-signs `claims`; the counterpart of the gateway's verifier.
pub fn sign_jwt(secret: &str, claims: &Value) -> String {
    let h = URL_SAFE_NO_PAD.encode(br#"{"alg":"HS256","typ":"JWT"}"#);
    let p = URL_SAFE_NO_PAD.encode(claims.to_string());
    let mut mac = HmacSha256::new_from_slice(secret.as_bytes()).expect("hmac accepts any key length");
    mac.update(format!("{h}.{p}").as_bytes());
    let s = URL_SAFE_NO_PAD.encode(mac.finalize().into_bytes());
    format!("{h}.{p}.{s}")
}

pub async fn auth(State(auth): State<Arc<Authenticator>>, mut req: Request, next: Next) -> Response {
    if PUBLIC_PATHS.contains(&req.uri().path()) {
        return next.run(req).await;
    }
    match auth.authenticate(req.headers()) {
        Ok(principal) => {
            req.extensions_mut().insert(principal);
            next.run(req).await
        }
        Err(e) => e.into_response(),
    }
}

struct Bucket {
    tokens: f64,
    last: DateTime<Utc>,
}

/// Token bucket per principal: `capacity` tokens, refilled continuously at
/// `refill_per_minute`.
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    buckets: Mutex<HashMap<String, Bucket>>,
    clock: SharedClock,
}

impl RateLimiter {
    pub fn new(capacity: u32, refill_per_minute: u32, clock: SharedClock) -> Self {
        Self {
            capacity: f64::from(capacity.max(1)),
            per_second: f64::from(refill_per_minute) / 60.0,
            buckets: Mutex::new(HashMap::new()),
            clock,
        }
    }

    /// Takes a token, or returns the whole seconds until one is available.
    pub fn check(&self, principal: &str) -> Result<(), u64> {
        let now = self.clock.now();
        let mut buckets = self.buckets.lock();
        let b = buckets.entry(principal.to_string()).or_insert(Bucket { tokens: self.capacity, last: now });
        let elapsed = (now - b.last).num_microseconds().unwrap_or(i64::MAX).max(0) as f64 / 1e6;
        b.tokens = (b.tokens + elapsed * self.per_second).min(self.capacity);
        b.last = now;
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            Ok(())
        } else if self.per_second <= 0.0 {
            Err(u64::MAX)
        } else {
            Err(((1.0 - b.tokens) / self.per_second).ceil().max(1.0) as u64)
        }
    }
}

pub async fn rate_limit(State(limiter): State<Arc<RateLimiter>>, req: Request, next: Next) -> Response {
    if PUBLIC_PATHS.contains(&req.uri().path()) {
        return next.run(req).await;
    }
    let principal = req.extensions().get::<Principal>().cloned().unwrap_or_else(Principal::anonymous);
    match limiter.check(&principal.id) {
        Ok(()) => next.run(req).await,
        Err(secs) => ApiError::rate_limited(secs).into_response(),
    }
}
