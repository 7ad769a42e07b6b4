use std::process::Stdio;
use std::sync::atomic::{AtomicU64, Ordering};

use async_trait::async_trait;
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::process::{Child, ChildStdin, ChildStdout, Command};
use tokio::sync::Mutex;

use super::{ProviderError, ToolDescriptor, ToolProvider};
use crate::jsonrpc;

struct Pipes {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Tools served by a child process speaking line-delimited JSON-RPC on stdio.
/// Requests are serialized over the single pipe pair.
pub struct SubprocessProvider {
    id: String,
    _child: Child,
    pipes: Mutex<Pipes>,
    next_id: AtomicU64,
}

impl SubprocessProvider {
    pub async fn spawn(id: impl Into<String>, program: &str, args: &[String]) -> Result<Self, ProviderError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| ProviderError::new(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| ProviderError::new("child stdin unavailable"))?;
        let stdout = child.stdout.take().ok_or_else(|| ProviderError::new("child stdout unavailable"))?;
        Ok(Self {
            id: id.into(),
            _child: child,
            pipes: Mutex::new(Pipes { stdin, stdout: BufReader::new(stdout) }),
            next_id: AtomicU64::new(1),
        })
    }

    async fn request(&self, method: &str, params: Value) -> Result<Value, ProviderError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut line =
            serde_json::to_vec(&jsonrpc::request(id, method, params)).map_err(|e| ProviderError::new(e.to_string()))?;
        line.push(b'\n');
        let mut pipes = self.pipes.lock().await;
        let io = |e: std::io::Error| ProviderError::new(format!("transport: {e}"));
        pipes.stdin.write_all(&line).await.map_err(io)?;
        pipes.stdin.flush().await.map_err(io)?;
        loop {
            let mut buf = String::new();
            if pipes.stdout.read_line(&mut buf).await.map_err(io)? == 0 {
                return Err(ProviderError::new("tool server closed its output"));
            }
            let Ok(reply) = serde_json::from_str::<Value>(&buf) else {
                continue;
            };
            if reply.get("id") != Some(&json!(id)) {
                continue;
            }
            if let Some(err) = reply.get("error") {
                let msg = err.get("message").and_then(Value::as_str).unwrap_or("error");
                return Err(ProviderError::new(msg.to_string()));
            }
            return Ok(reply.get("result").cloned().unwrap_or(Value::Null));
        }
    }
}

#[async_trait]
impl ToolProvider for SubprocessProvider {
    fn id(&self) -> &str {
        &self.id
    }

    async fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ProviderError> {
        let result = self.request("tools/list", json!({})).await?;
        serde_json::from_value(result.get("tools").cloned().unwrap_or_else(|| json!([])))
            .map_err(|e| ProviderError::new(format!("bad tools/list result: {e}")))
    }

    async fn call(&self, name: &str, arguments: Value) -> Result<Value, ProviderError> {
        let result = self.request("tools/call", json!({ "name": name, "arguments": arguments })).await?;
        let text = result.pointer("/content/0/text").and_then(Value::as_str).unwrap_or_default().to_string();
        if result.get("isError").and_then(Value::as_bool).unwrap_or(false) {
            return Err(ProviderError::new(text));
        }
        Ok(result.get("structuredContent").cloned().unwrap_or_else(|| json!({ "text": text })))
    }
}
