//! Deterministic demo tools: search, summarize, calculator, inventory, price_quote.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Value};

use super::{InProcessProvider, ProviderError, ToolDescriptor};
use crate::text::{fnv1a, tokenize};

pub const DEMO_PROVIDER_ID: &str = "demo";

fn input(args: &Value) -> Result<String, ProviderError> {
    match args.get("input") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Ok(other.to_string()),
        None => Err(ProviderError::new("missing argument: input")),
    }
}

const CORPUS: &[(&str, &str)] = &[
    ("weather", "Forecast: mild with light wind, highs near 18C and a chance of evening showers."),
    ("flight", "Three direct flights found; the earliest departs at 07:40 and the cheapest costs $129."),
    ("rust", "Rust is a systems language focused on memory safety without garbage collection."),
    ("stock", "Markets closed mixed; the index moved 0.4% on moderate volume."),
    ("recipe", "A simple recipe needs 20 minutes of preparation and five pantry ingredients."),
    ("news", "Top headlines cover technology, climate policy and regional elections."),
];

fn search(args: Value) -> Result<Value, ProviderError> {
    let query = input(&args)?;
    let tokens = tokenize(&query);
    let hits: Vec<&str> =
        CORPUS.iter().filter(|(k, _)| tokens.iter().any(|t| t.starts_with(k))).map(|(_, v)| *v).collect();
    let text = if hits.is_empty() {
        format!("No indexed documents match \"{}\". Try a broader query.", query.trim())
    } else {
        hits.join(" ")
    };
    Ok(json!({ "text": text, "hits": hits.len() }))
}

fn summarize(args: Value) -> Result<Value, ProviderError> {
    let text = input(&args)?;
    let first = text.split_inclusive(['.', '!', '?']).next().unwrap_or(&text).trim();
    let words: Vec<&str> = first.split_whitespace().take(25).collect();
    Ok(json!({ "text": words.join(" ") }))
}

static EXPR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[-+*/().\d\s]*\d[-+*/().\d\s]*").unwrap());

/// Recursive-descent evaluator for `+ - * /`, unary minus and parentheses.
struct Calc<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Calc<'_> {
    fn skip(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut v = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            v = if op == b'+' { v + rhs } else { v - rhs };
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut v = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            if op == b'/' && rhs == 0.0 {
                return Err("division by zero".into());
            }
            v = if op == b'*' { v * rhs } else { v / rhs };
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err("expected ')'".into());
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                    self.pos += 1;
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).map_err(|e| e.to_string())?;
                s.parse().map_err(|_| format!("bad number {s}"))
            }
            _ => Err("expected a number".into()),
        }
    }
}

pub fn evaluate(expression: &str) -> Result<f64, String> {
    let mut c = Calc { src: expression.as_bytes(), pos: 0 };
    let v = c.expr()?;
    if c.peek().is_some() {
        return Err(format!("unexpected input at {}", c.pos));
    }
    Ok(v)
}

fn calculator(args: Value) -> Result<Value, ProviderError> {
    let raw = input(&args)?;
    let expr = EXPR
        .find_iter(&raw)
        .map(|m| m.as_str().trim())
        .max_by_key(|s| s.len())
        .ok_or_else(|| ProviderError::new("no arithmetic expression found"))?;
    let value = evaluate(expr).map_err(ProviderError::new)?;
    Ok(json!({ "text": format!("{expr} = {value}"), "value": value }))
}

fn item_name(raw: &str) -> String {
    let t: Vec<String> = tokenize(raw).into_iter().filter(|t| !crate::text::is_stopword(t)).collect();
    if t.is_empty() {
        "item".into()
    } else {
        t.join(" ")
    }
}

fn inventory(args: Value) -> Result<Value, ProviderError> {
    let item = item_name(&input(&args)?);
    let stock = fnv1a(item.as_bytes()) % 100;
    Ok(json!({ "text": format!("{item}: {stock} in stock"), "item": item, "in_stock": stock }))
}

fn price_quote(args: Value) -> Result<Value, ProviderError> {
    let item = item_name(&input(&args)?);
    let cents = 500 + fnv1a(format!("price:{item}").as_bytes()) % 9500;
    let amount = format!("{}.{:02}", cents / 100, cents % 100);
    Ok(json!({ "text": format!("{item}: ${amount}"), "item": item, "amount": amount }))
}

pub fn demo_provider() -> InProcessProvider {
    InProcessProvider::new(DEMO_PROVIDER_ID)
        .with_tool(ToolDescriptor::simple("search", "Search an indexed document corpus"), search)
        .with_tool(ToolDescriptor::simple("summarize", "Summarize text to its first sentence"), summarize)
        .with_tool(ToolDescriptor::simple("calculator", "Evaluate an arithmetic expression"), calculator)
        .with_tool(ToolDescriptor::simple("inventory", "Look up stock levels for an item"), inventory)
        .with_tool(ToolDescriptor::simple("price_quote", "Quote a price for an item"), price_quote)
}
