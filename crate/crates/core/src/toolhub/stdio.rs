//! Line-delimited JSON-RPC 2.0 tool server: one object per `\n`-terminated line.
//!
//! Methods: `tools/list` (no params) and `tools/call` (`{name, arguments}`).

use serde_json::{json, Value};
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWrite, AsyncWriteExt};

use super::ToolProvider;
use crate::jsonrpc::{self, RpcError};

/// Handles one decoded line. Returns `None` for notifications.
pub async fn handle_line(provider: &dyn ToolProvider, line: &str) -> Option<Value> {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => {
            return Some(jsonrpc::failure(
                Value::Null,
                RpcError::new(jsonrpc::PARSE_ERROR, format!("Parse error: {e}")),
            ))
        }
    };
    let request = match jsonrpc::parse_request(&value) {
        Ok(r) => r,
        Err((id, err)) => return Some(jsonrpc::failure(id, err)),
    };
    let id = request.id.clone()?;
    let reply = match request.method.as_str() {
        "tools/list" => match provider.list_tools().await {
            Ok(tools) => jsonrpc::success(id, json!({ "tools": tools })),
            Err(e) => jsonrpc::failure(id, RpcError::new(jsonrpc::INTERNAL_ERROR, e.to_string())),
        },
        "tools/call" => {
            let Some(name) = request.params.get("name").and_then(Value::as_str) else {
                return Some(jsonrpc::failure(id, RpcError::invalid_params("params.name must be a string")));
            };
            let known = provider.list_tools().await.map(|t| t.iter().any(|d| d.name == name)).unwrap_or(false);
            if !known {
                return Some(jsonrpc::failure(id, RpcError::invalid_params(format!("unknown tool: {name}"))));
            }
            let arguments = request.params.get("arguments").cloned().unwrap_or_else(|| json!({}));
            match provider.call(name, arguments).await {
                Ok(output) => jsonrpc::success(
                    id,
                    json!({
                        "content": [{ "type": "text", "text": super::output_text(&output) }],
                        "structuredContent": output,
                        "isError": false
                    }),
                ),
                Err(e) => jsonrpc::success(
                    id,
                    json!({ "content": [{ "type": "text", "text": e.to_string() }], "isError": true }),
                ),
            }
        }
        other => jsonrpc::failure(id, RpcError::new(jsonrpc::METHOD_NOT_FOUND, format!("Method not found: {other}"))),
    };
    Some(reply)
}

/// Serves requests until the reader hits EOF.
pub async fn serve<R, W>(provider: &dyn ToolProvider, reader: R, mut writer: W) -> std::io::Result<()>
where
    R: AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin,
{
    let mut lines = reader.lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = handle_line(provider, &line).await {
            let mut out = serde_json::to_vec(&reply)?;
            out.push(b'\n');
            writer.write_all(&out).await?;
            writer.flush().await?;
        }
    }
    Ok(())
}
