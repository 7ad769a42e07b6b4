//! Server-sent event framing: `event: <TYPE>\ndata: <one-line JSON>\n\n`.

use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::Response;
use futures::stream::{self, Stream, StreamExt};
use serde_json::Value;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

pub fn frame(event: &str, data: &Value) -> String {
    // compact JSON never contains a raw newline
    format!("event: {event}\ndata: {data}\n\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseEvent {
    pub event: String,
    pub data: Value,
}

/// Strict reference parser for streams this crate produces.
pub fn parse(bytes: &[u8]) -> Result<Vec<SseEvent>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let Some(body) = text.strip_suffix("\n\n") else {
        return Err("stream does not end with a blank line".into());
    };
    body.split("\n\n")
        .enumerate()
        .map(|(i, block)| {
            let mut lines = block.split('\n');
            let event = lines
                .next()
                .and_then(|l| l.strip_prefix("event: "))
                .ok_or_else(|| format!("event {i}: missing event line"))?;
            let data = lines
                .next()
                .and_then(|l| l.strip_prefix("data: "))
                .ok_or_else(|| format!("event {i}: missing data line"))?;
            if lines.next().is_some() {
                return Err(format!("event {i}: unexpected extra line"));
            }
            if event.is_empty() || event.contains(' ') {
                return Err(format!("event {i}: bad event name {event:?}"));
            }
            let data = serde_json::from_str(data).map_err(|e| format!("event {i}: {e}"))?;
            Ok(SseEvent { event: event.to_string(), data })
        })
        .collect()
}

/// Aborts the producing task when the response body is dropped, which is
/// how a client disconnect cancels the run.
struct AbortOnDrop(JoinHandle<()>);

impl Drop for AbortOnDrop {
    fn drop(&mut self) {
        self.0.abort();
    }
}

/// An SSE response fed by `producer`, which owns the only sender.
pub fn response<F, Fut>(producer: F) -> Response
where
    F: FnOnce(mpsc::UnboundedSender<(String, Value)>) -> Fut,
    Fut: std::future::Future<Output = ()> + Send + 'static,
{
    let (tx, rx) = mpsc::unbounded_channel();
    let guard = AbortOnDrop(tokio::spawn(producer(tx)));
    stream_response(frames(rx, guard))
}

fn frames(
    rx: mpsc::UnboundedReceiver<(String, Value)>,
    guard: AbortOnDrop,
) -> impl Stream<Item = Result<Bytes, Infallible>> + Send {
    stream::unfold((rx, guard), |(mut rx, guard)| async move {
        let (event, data) = rx.recv().await?;
        Some((Ok(Bytes::from(frame(&event, &data))), (rx, guard)))
    })
}

pub fn from_events(events: Vec<(String, Value)>) -> Response {
    let chunks = events.into_iter().map(|(e, d)| Ok::<_, Infallible>(Bytes::from(frame(&e, &d))));
    stream_response(stream::iter(chunks).boxed())
}

fn stream_response<S>(s: S) -> Response
where
    S: Stream<Item = Result<Bytes, Infallible>> + Send + 'static,
{
    let mut res = Response::new(Body::from_stream(s));
    *res.status_mut() = StatusCode::OK;
    let h = res.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/event-stream"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    res
}
