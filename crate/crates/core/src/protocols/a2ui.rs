//! A2UI: declarative UI documents as flat id-referenced component lists
//! (`POST /a2ui/render`).

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use axum::response::Response;
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{sse, ProtocolDescriptor, ProtocolHandler};
use crate::gateway::error::{current_correlation_id, ApiError};
use crate::money::Money;

pub const PROTOCOL_VERSION: &str = "0.1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Text,
    Heading,
    Image,
    Button,
    TextInput,
    Select,
    Checkbox,
    RadioGroup,
    Slider,
    Card,
    List,
    Row,
    Column,
    Divider,
    Table,
    Form,
}

impl Primitive {
    pub const ALL: [Primitive; 16] = [
        Primitive::Text,
        Primitive::Heading,
        Primitive::Image,
        Primitive::Button,
        Primitive::TextInput,
        Primitive::Select,
        Primitive::Checkbox,
        Primitive::RadioGroup,
        Primitive::Slider,
        Primitive::Card,
        Primitive::List,
        Primitive::Row,
        Primitive::Column,
        Primitive::Divider,
        Primitive::Table,
        Primitive::Form,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::Text => "text",
            Primitive::Heading => "heading",
            Primitive::Image => "image",
            Primitive::Button => "button",
            Primitive::TextInput => "text_input",
            Primitive::Select => "select",
            Primitive::Checkbox => "checkbox",
            Primitive::RadioGroup => "radio_group",
            Primitive::Slider => "slider",
            Primitive::Card => "card",
            Primitive::List => "list",
            Primitive::Row => "row",
            Primitive::Column => "column",
            Primitive::Divider => "divider",
            Primitive::Table => "table",
            Primitive::Form => "form",
        }
    }
}

impl FromStr for Primitive {
    type Err = DocumentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| DocumentError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(rename = "type")]
    pub kind: Primitive,
    #[serde(default)]
    pub properties: Map<String, Value>,
    #[serde(default)]
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub root: String,
    pub components: BTreeMap<String, Component>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocumentError {
    #[error("unknown component type {0:?}")]
    UnknownType(String),
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("root {0:?} is not a component")]
    MissingRoot(String),
    #[error("component {parent:?} references missing child {child:?}")]
    DanglingChild { parent: String, child: String },
    #[error("component {0:?} is referenced as a child more than once")]
    SharedChild(String),
    #[error("cycle through component {0:?}")]
    Cycle(String),
}

/// Decodes a document, reporting unknown component types by name.
pub fn parse_document(v: &Value) -> Result<Document, DocumentError> {
    if let Some(components) = v.get("components").and_then(Value::as_object) {
        for c in components.values() {
            if let Some(t) = c.get("type").and_then(Value::as_str) {
                t.parse::<Primitive>()?;
            }
        }
    }
    serde_json::from_value(v.clone()).map_err(|e| DocumentError::Malformed(e.to_string()))
}

impl Document {
    pub fn validate(&self) -> Result<(), DocumentError> {
        if !self.components.contains_key(&self.root) {
            return Err(DocumentError::MissingRoot(self.root.clone()));
        }
        let mut referenced: HashMap<&str, usize> = HashMap::new();
        for (id, c) in &self.components {
            for child in &c.children {
                if !self.components.contains_key(child) {
                    return Err(DocumentError::DanglingChild { parent: id.clone(), child: child.clone() });
                }
                let n = referenced.entry(child).or_default();
                *n += 1;
                if *n > 1 {
                    return Err(DocumentError::SharedChild(child.clone()));
                }
            }
        }
        // iterative DFS from the root with on-stack marking
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Finished,
        }
        let mut marks: HashMap<&str, Mark> = HashMap::new();
        let mut stack: Vec<(&str, usize)> = vec![(self.root.as_str(), 0)];
        marks.insert(&self.root, Mark::Active);
        while let Some((id, next)) = stack.pop() {
            let children = &self.components[id].children;
            if next == children.len() {
                marks.insert(id, Mark::Finished);
                continue;
            }
            stack.push((id, next + 1));
            let child = children[next].as_str();
            match marks.get(child) {
                Some(Mark::Active) => return Err(DocumentError::Cycle(child.to_string())),
                Some(Mark::Finished) => {}
                None => {
                    marks.insert(child, Mark::Active);
                    stack.push((child, 0));
                }
            }
        }
        Ok(())
    }

    /// Ids reachable from the root, in depth-first preorder.
    pub fn reachable(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.as_str()];
        let mut seen = std::collections::HashSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            out.push(id);
            if let Some(c) = self.components.get(id) {
                stack.extend(c.children.iter().rev().map(String::as_str));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub id: String,
    pub properties: Map<String, Value>,
}

struct Builder {
    components: BTreeMap<String, Component>,
}

impl Builder {
    fn new() -> Self {
        Self { components: BTreeMap::new() }
    }

    fn add(&mut self, id: &str, kind: Primitive, properties: Value, children: &[&str]) -> &mut Self {
        let properties = match properties {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        let children = children.iter().map(|c| c.to_string()).collect();
        self.components.insert(id.to_string(), Component { kind, properties, children });
        self
    }

    fn finish(self, root: &str) -> Document {
        Document { root: root.to_string(), components: self.components }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct LineItem {
    pub name: String,
    #[serde(default = "one")]
    pub quantity: u32,
    pub unit_price: Money,
}

fn one() -> u32 {
    1
}

pub fn checkout_view(items: &[LineItem]) -> Result<Document, ApiError> {
    let mut total = Money::ZERO;
    let mut rows = Vec::new();
    for it in items {
        let line = it.unit_price.checked_mul(it.quantity).map_err(|e| ApiError::bad_request(e.to_string()))?;
        total = total.checked_add(line).map_err(|e| ApiError::bad_request(e.to_string()))?;
        rows.push(json!([it.name, it.quantity, it.unit_price, line]));
    }
    let mut b = Builder::new();
    b.add("root", Primitive::Column, json!({ "gap": 12 }), &["title", "items", "total", "divider", "form", "status"])
        .add("title", Primitive::Heading, json!({ "text": "Checkout", "level": 1 }), &[])
        .add(
            "items",
            Primitive::Table,
            json!({ "columns": ["Item", "Qty", "Unit price", "Line total"], "rows": rows }),
            &[],
        )
        .add("total", Primitive::Text, json!({ "text": format!("Total: {total}") }), &[])
        .add("divider", Primitive::Divider, json!({}), &[])
        .add(
            "form",
            Primitive::Form,
            json!({ "action": "/ucp/sessions" }),
            &["name", "email", "method", "terms", "submit"],
        )
        .add("name", Primitive::TextInput, json!({ "label": "Full name", "name": "name", "required": true }), &[])
        .add("email", Primitive::TextInput, json!({ "label": "Email", "name": "email", "input_type": "email" }), &[])
        .add(
            "method",
            Primitive::Select,
            json!({ "label": "Payment method", "options": ["card", "bank_transfer", "wallet"] }),
            &[],
        )
        .add("terms", Primitive::Checkbox, json!({ "label": "I accept the terms", "checked": false }), &[])
        .add("submit", Primitive::Button, json!({ "label": "Pay", "action": "submit" }), &[])
        .add("status", Primitive::Text, json!({ "text": "Awaiting details" }), &[]);
    Ok(b.finish("root"))
}

/// Uses every primitive at least once.
pub fn gallery_view() -> Document {
    let mut b = Builder::new();
    b.add("root", Primitive::Column, json!({}), &["title", "intro", "cards", "divider", "list", "prefs", "table"])
        .add("title", Primitive::Heading, json!({ "text": "Gallery", "level": 1 }), &[])
        .add("intro", Primitive::Text, json!({ "text": "Every component primitive in one view." }), &[])
        .add("cards", Primitive::Row, json!({}), &["card_a", "card_b"])
        .add("card_a", Primitive::Card, json!({ "title": "Mountains" }), &["img_a", "open_a"])
        .add("img_a", Primitive::Image, json!({ "src": "/static/mountains.png", "alt": "Mountains" }), &[])
        .add("open_a", Primitive::Button, json!({ "label": "Open", "action": "open:mountains" }), &[])
        .add("card_b", Primitive::Card, json!({ "title": "Coast" }), &["img_b"])
        .add("img_b", Primitive::Image, json!({ "src": "/static/coast.png", "alt": "Coast" }), &[])
        .add("divider", Primitive::Divider, json!({}), &[])
        .add("list", Primitive::List, json!({ "ordered": false }), &["li_1", "li_2"])
        .add("li_1", Primitive::Text, json!({ "text": "First item" }), &[])
        .add("li_2", Primitive::Text, json!({ "text": "Second item" }), &[])
        .add("prefs", Primitive::Form, json!({ "action": "preferences" }), &["search", "size", "notify", "volume"])
        .add("search", Primitive::TextInput, json!({ "label": "Search", "name": "q" }), &[])
        .add("size", Primitive::RadioGroup, json!({ "label": "Size", "options": ["S", "M", "L"], "value": "M" }), &[])
        .add("notify", Primitive::Checkbox, json!({ "label": "Notify me", "checked": true }), &[])
        .add("volume", Primitive::Slider, json!({ "label": "Volume", "min": 0, "max": 10, "value": 5 }), &[])
        .add(
            "table",
            Primitive::Table,
            json!({ "columns": ["Name", "Value"], "rows": [["alpha", 1], ["beta", 2]] }),
            &[],
        );
    b.components.get_mut("prefs").unwrap().children.push("sort".into());
    b.add("sort", Primitive::Select, json!({ "label": "Sort", "options": ["newest", "oldest"] }), &[]);
    b.finish("root")
}

#[derive(Debug, Deserialize)]
pub struct RenderRequest {
    pub view: String,
    #[serde(default)]
    pub items: Option<Vec<LineItem>>,
    #[serde(default)]
    pub document: Option<Value>,
    #[serde(default)]
    pub patches: Vec<Patch>,
}

/// The document and built-in patches for a view request.
pub fn compose(req: &RenderRequest) -> Result<(Document, Vec<Patch>), ApiError> {
    let (doc, mut patches) = match req.view.as_str() {
        "checkout" => {
            let items = req.items.clone().unwrap_or_else(|| {
                vec![
                    LineItem { name: "Notebook".into(), quantity: 2, unit_price: Money::from_minor(450) },
                    LineItem { name: "Pen".into(), quantity: 3, unit_price: Money::from_minor(120) },
                ]
            });
            let ready = Patch {
                id: "status".into(),
                properties: json!({ "text": "Ready for payment" }).as_object().cloned().unwrap_or_default(),
            };
            (checkout_view(&items)?, vec![ready])
        }
        "gallery" => (gallery_view(), Vec::new()),
        "custom" => {
            let raw = req.document.as_ref().ok_or_else(|| ApiError::bad_request("custom view requires `document`"))?;
            (parse_document(raw).map_err(|e| ApiError::bad_request(e.to_string()))?, Vec::new())
        }
        other => {
            return Err(ApiError::bad_request(format!("unknown view {other:?}; expected checkout, gallery or custom")))
        }
    };
    doc.validate().map_err(|e| match e {
        DocumentError::UnknownType(_) | DocumentError::Malformed(_) => ApiError::bad_request(e.to_string()),
        _ if req.view == "custom" => ApiError::bad_request(e.to_string()),
        _ => ApiError::internal(),
    })?;
    patches.extend(req.patches.iter().cloned());
    Ok((doc, patches))
}

/// DOCUMENT, then one PATCH per patch; stops with ERROR at the first bad patch.
pub fn events(doc: Document, patches: &[Patch]) -> Vec<(String, Value)> {
    let mut seq = 0u64;
    let mut next = || {
        seq += 1;
        seq
    };
    let mut out = vec![("DOCUMENT".to_string(), json!({ "seq": next(), "document": doc }))];
    let mut doc = doc;
    for p in patches {
        let Some(c) = doc.components.get_mut(&p.id) else {
            let error = json!({
                "status": 400,
                "code": "bad_request",
                "message": format!("patch targets unknown component {:?}", p.id),
                "correlation_id": current_correlation_id(),
            });
            out.push(("ERROR".to_string(), json!({ "seq": next(), "error": error })));
            break;
        };
        c.properties.extend(p.properties.clone());
        out.push(("PATCH".to_string(), json!({ "seq": next(), "id": p.id, "properties": p.properties })));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct A2uiHandler;

impl ProtocolHandler for A2uiHandler {
    fn descriptor(&self) -> ProtocolDescriptor {
        ProtocolDescriptor { name: "a2ui", version: PROTOCOL_VERSION, endpoints: vec!["POST /a2ui/render".into()] }
    }

    fn routes(&self) -> Router {
        Router::new().route("/a2ui/render", post(render))
    }
}

async fn render(body: Result<Json<Value>, axum::extract::rejection::JsonRejection>) -> Result<Response, ApiError> {
    let Json(raw) = body?;
    let req: RenderRequest =
        serde_json::from_value(raw).map_err(|e| ApiError::bad_request(format!("invalid render request: {e}")))?;
    let (doc, patches) = compose(&req)?;
    Ok(sse::from_events(events(doc, &patches)))
}
