//! Phase 1: turn a raw inbound message into a structured [`Perception`].
//!
//! Everything here is rule based and deterministic. The intent taxonomy is a
//! fixed set of ten categories; classification walks an ordered keyword table
//! and the first matching rule wins.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{contains_any, is_stopword, tokenize};

/// Free-form request metadata (for example `domain`, `hour`, `session_turns`).
pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Question,
    Command,
    CodeGeneration,
    Analysis,
    Creative,
    Search,
    Transaction,
    Smalltalk,
    Feedback,
    Other,
}

impl Intent {
    pub const ALL: [Intent; 10] = [
        Intent::Question,
        Intent::Command,
        Intent::CodeGeneration,
        Intent::Analysis,
        Intent::Creative,
        Intent::Search,
        Intent::Transaction,
        Intent::Smalltalk,
        Intent::Feedback,
        Intent::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Question => "question",
            Intent::Command => "command",
            Intent::CodeGeneration => "code_generation",
            Intent::Analysis => "analysis",
            Intent::Creative => "creative",
            Intent::Search => "search",
            Intent::Transaction => "transaction",
            Intent::Smalltalk => "smalltalk",
            Intent::Feedback => "feedback",
            Intent::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Simple,
    Medium,
    Complex,
}

impl Complexity {
    pub const ALL: [Complexity; 3] = [Complexity::Simple, Complexity::Medium, Complexity::Complex];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Date,
    Amount,
    Email,
    Url,
    ProperNoun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub text: String,
    pub kind: EntityKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    pub intent: Intent,
    pub complexity: Complexity,
    pub entities: Vec<Entity>,
    pub sentiment: f64,
    pub urgency: f64,
    pub has_code: bool,
    pub word_count: usize,
    pub requires_tools: bool,
    pub domain_hints: Vec<String>,
}

impl Perception {
    pub fn entity_kinds(&self) -> Vec<EntityKind> {
        let mut kinds: Vec<EntityKind> = self.entities.iter().map(|e| e.kind).collect();
        kinds.sort_unstable();
        kinds.dedup();
        kinds
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PerceptionError {
    #[error("message is empty")]
    EmptyMessage,
}

/// Complexity cutoffs. `complex` wins over `simple`, so the mapping is total.
pub fn estimate_complexity(word_count: usize, entity_count: usize, has_code: bool) -> Complexity {
    if has_code || word_count > 100 || entity_count >= 5 {
        Complexity::Complex
    } else if word_count < 20 && entity_count <= 1 {
        Complexity::Simple
    } else {
        Complexity::Medium
    }
}

// Ordered rule table: first match wins.
const TRANSACTION: &[&str] =
    &["buy", "purchase", "order", "pay", "payment", "checkout", "refund", "subscribe", "book a", "reserve"];
const SEARCH: &[&str] = &["search", "find", "look up", "lookup", "locate", "browse", "google"];
const CODE: &[&str] =
    &["code", "function", "implement", "program", "script", "compile", "debug", "refactor", "snippet", "regex"];
const ANALYSIS: &[&str] = &[
    "analyze",
    "analyse",
    "analysis",
    "compare",
    "evaluate",
    "assess",
    "examine",
    "breakdown",
    "pros and cons",
    "tradeoffs",
    "trade offs",
];
const CREATIVE: &[&str] =
    &["poem", "story", "imagine", "brainstorm", "compose", "creative", "invent", "lyrics", "slogan"];
const FEEDBACK: &[&str] =
    &["thanks", "thank you", "great job", "well done", "wrong", "incorrect", "not helpful", "feedback", "that helped"];
const GREETINGS: &[&str] =
    &["hello", "hi", "hey", "good morning", "good afternoon", "good evening", "how are you", "bye", "goodbye", "yo"];
const QUESTION_OPENERS: &[&str] = &[
    "what", "who", "when", "where", "why", "how", "which", "is", "are", "can", "could", "does", "do", "will", "should",
    "would",
];
const COMMAND_VERBS: &[&str] = &[
    "please",
    "run",
    "open",
    "create",
    "delete",
    "set",
    "send",
    "show",
    "list",
    "make",
    "start",
    "stop",
    "calculate",
    "tell",
    "give",
    "update",
    "explain",
    "convert",
    "schedule",
];

/// Keyword/pattern intent classifier; unmatched input maps to [`Intent::Other`].
pub fn classify_intent(message: &str) -> Intent {
    let tokens = tokenize(message);
    if message.contains("```") || contains_any(&tokens, CODE) {
        // transaction and search still take precedence over code keywords
        if contains_any(&tokens, TRANSACTION) {
            return Intent::Transaction;
        }
        if contains_any(&tokens, SEARCH) {
            return Intent::Search;
        }
        return Intent::CodeGeneration;
    }
    if contains_any(&tokens, TRANSACTION) {
        return Intent::Transaction;
    }
    if contains_any(&tokens, SEARCH) {
        return Intent::Search;
    }
    if contains_any(&tokens, ANALYSIS) {
        return Intent::Analysis;
    }
    if contains_any(&tokens, CREATIVE) {
        return Intent::Creative;
    }
    if contains_any(&tokens, FEEDBACK) {
        return Intent::Feedback;
    }
    if tokens.len() <= 4 && contains_any(&tokens, GREETINGS) {
        return Intent::Smalltalk;
    }
    let first = tokens.first().map(String::as_str).unwrap_or("");
    if message.trim_end().ends_with('?') || QUESTION_OPENERS.contains(&first) {
        return Intent::Question;
    }
    if COMMAND_VERBS.contains(&first) {
        return Intent::Command;
    }
    Intent::Other
}

static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"https?://[^\s<>"]+"#).unwrap());
static DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(\d{4}-\d{2}-\d{2}|\d{1,2}/\d{1,2}/\d{2,4}|(jan|feb|mar|apr|may|jun|jul|aug|sep|sept|oct|nov|dec)[a-z]*\.? \d{1,2}(st|nd|rd|th)?|today|tomorrow|tonight|yesterday|monday|tuesday|wednesday|thursday|friday|saturday|sunday)\b",
    )
    .unwrap()
});
static AMOUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)([$€£]\s?\d+(?:[.,]\d+)?|\b\d+(?:\.\d+)?\s?(usd|eur|gbp|dollars|euros)\b)").unwrap()
});
static CAPITALIZED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[A-Z][a-z]+(?:\s+[A-Z][a-z]+)*\b").unwrap());
static CODE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*(def|fn|class|function|pub fn|#include|import)\b.*[({:;]\s*$").unwrap());

fn detect_code(message: &str) -> bool {
    message.contains("```") || CODE_LINE.is_match(message)
}

const DATE_WORDS: &[&str] = &[
    "Today",
    "Tomorrow",
    "Tonight",
    "Yesterday",
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

/// Regex/gazetteer entity extraction. Spans claimed by one kind are not
/// re-reported as another; capitalized spans at sentence starts are skipped.
pub fn extract_entities(message: &str) -> Vec<Entity> {
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut found: Vec<(usize, Entity)> = Vec::new();
    let overlaps = |claimed: &[(usize, usize)], s: usize, e: usize| claimed.iter().any(|&(cs, ce)| s < ce && cs < e);
    for (re, kind) in [
        (&*URL, EntityKind::Url),
        (&*EMAIL, EntityKind::Email),
        (&*AMOUNT, EntityKind::Amount),
        (&*DATE, EntityKind::Date),
    ] {
        for m in re.find_iter(message) {
            if !overlaps(&claimed, m.start(), m.end()) {
                claimed.push((m.start(), m.end()));
                found.push((m.start(), Entity { text: m.as_str().to_string(), kind }));
            }
        }
    }
    for m in CAPITALIZED.find_iter(message) {
        if overlaps(&claimed, m.start(), m.end()) || DATE_WORDS.contains(&m.as_str()) {
            continue;
        }
        let before = message[..m.start()].trim_end();
        let sentence_start = before.is_empty() || before.ends_with(['.', '!', '?', '\n', ':']);
        if sentence_start {
            continue;
        }
        claimed.push((m.start(), m.end()));
        found.push((m.start(), Entity { text: m.as_str().to_string(), kind: EntityKind::ProperNoun }));
    }
    found.sort_by_key(|(start, _)| *start);
    found.into_iter().map(|(_, e)| e).collect()
}

const POSITIVE: &[&str] = &[
    "good",
    "great",
    "excellent",
    "love",
    "like",
    "happy",
    "thanks",
    "thank",
    "awesome",
    "nice",
    "perfect",
    "helpful",
    "wonderful",
    "glad",
    "best",
    "amazing",
];
const NEGATIVE: &[&str] = &[
    "bad",
    "terrible",
    "hate",
    "awful",
    "angry",
    "wrong",
    "broken",
    "worst",
    "annoying",
    "sad",
    "useless",
    "poor",
    "fail",
    "failed",
    "problem",
    "disappointed",
];

/// Signed lexicon score in [-1, 1]: (pos − neg) / (pos + neg), 0 without hits.
pub fn score_sentiment(tokens: &[String]) -> f64 {
    let pos = tokens.iter().filter(|t| POSITIVE.contains(&t.as_str())).count() as f64;
    let neg = tokens.iter().filter(|t| NEGATIVE.contains(&t.as_str())).count() as f64;
    if pos + neg == 0.0 {
        0.0
    } else {
        ((pos - neg) / (pos + neg)).clamp(-1.0, 1.0)
    }
}

const URGENT: &[&str] = &[
    "urgent",
    "urgently",
    "asap",
    "immediately",
    "emergency",
    "critical",
    "deadline",
    "right away",
    "as soon as possible",
    "by tomorrow",
    "by today",
    "end of day",
    "eod",
];

/// Each urgency cue adds 0.4, an exclamation mark adds 0.1; clamped to [0, 1].
pub fn score_urgency(message: &str, tokens: &[String]) -> f64 {
    let hits = URGENT.iter().filter(|p| contains_any(tokens, &[**p])).count() as f64;
    let bang = if message.contains('!') { 0.1 } else { 0.0 };
    (hits * 0.4 + bang).clamp(0.0, 1.0)
}

/// Distinct lowercase content tokens in order of first appearance.
pub fn domain_hints(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokens {
        if t.len() >= 3 && t.chars().all(char::is_alphabetic) && !is_stopword(t) && !out.contains(t) {
            out.push(t.clone());
            if out.len() == 12 {
                break;
            }
        }
    }
    out
}

/// Stateless perceiver; the registered tool names feed `requires_tools`.
#[derive(Debug, Clone, Default)]
pub struct Perceiver {
    tool_names: Vec<String>,
}

impl Perceiver {
    pub fn new(tool_names: impl IntoIterator<Item = String>) -> Self {
        Self { tool_names: tool_names.into_iter().map(|n| n.to_lowercase()).collect() }
    }

    pub fn perceive(&self, message: &str, metadata: &Metadata) -> Result<Perception, PerceptionError> {
        if message.trim().is_empty() {
            return Err(PerceptionError::EmptyMessage);
        }
        let tokens = tokenize(message);
        let intent = classify_intent(message);
        let entities = extract_entities(message);
        let has_code = detect_code(message);
        let word_count = message.split_whitespace().count();
        let complexity = estimate_complexity(word_count, entities.len(), has_code);
        let mentions_tool = self.tool_names.iter().any(|n| tokens.iter().any(|t| t == n));
        let requires_tools = matches!(intent, Intent::Transaction | Intent::Search) || mentions_tool;
        let mut hints = domain_hints(&tokens);
        if let Some(domain) = metadata.get("domain") {
            let d = domain.trim().to_lowercase();
            if !d.is_empty() && !hints.contains(&d) {
                hints.push(d);
            }
        }
        Ok(Perception {
            intent,
            complexity,
            entities,
            sentiment: score_sentiment(&tokens),
            urgency: score_urgency(message, &tokens),
            has_code,
            word_count,
            requires_tools,
            domain_hints: hints,
        })
    }
}

/// Convenience wrapper with no registered tools.
pub fn perceive(message: &str, metadata: &Metadata) -> Result<Perception, PerceptionError> {
    Perceiver::default().perceive(message, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(msg: &str) -> Perception {
        perceive(msg, &Metadata::new()).unwrap()
    }

    #[test]
    fn simple_question() {
        let got = p("what is 2+2?");
        assert_eq!(got.intent, Intent::Question);
        assert_eq!(got.complexity, Complexity::Simple);
        assert!(!got.requires_tools);
    }

    #[test]
    fn blank_messages_are_rejected() {
        assert_eq!(perceive("", &Metadata::new()), Err(PerceptionError::EmptyMessage));
        assert_eq!(perceive("  \n\t", &Metadata::new()), Err(PerceptionError::EmptyMessage));
    }

    #[test]
    fn long_message_with_fenced_code_is_complex() {
        let mut msg = "word ".repeat(140);
        msg.push_str("\n```\nfn main() { println!(\"hi\"); }\n```\n");
        msg.push_str(&"tail ".repeat(6));
        let got = p(&msg);
        assert!(got.word_count >= 145);
        assert!(got.has_code);
        assert_eq!(got.complexity, Complexity::Complex);
    }

    #[test]
    fn intent_examples() {
        assert_eq!(classify_intent("buy me a ticket"), Intent::Transaction);
        assert_eq!(classify_intent("hello"), Intent::Smalltalk);
        assert_eq!(classify_intent("3f2b8c1e-9a4d-4e51-b0c7-2d6f8e9a1b3c"), Intent::Other);
        assert_eq!(classify_intent("search the weather forecast for Paris"), Intent::Search);
        assert_eq!(classify_intent("write a function that reverses a list"), Intent::CodeGeneration);
        assert_eq!(classify_intent("compare rust and go for services"), Intent::Analysis);
        assert_eq!(classify_intent("write a poem about autumn"), Intent::Creative);
        assert_eq!(classify_intent("thanks, that helped"), Intent::Feedback);
        assert_eq!(classify_intent("calculate 12 * 7"), Intent::Command);
    }

    #[test]
    fn entities_by_kind() {
        let e = extract_entities("Send $25.50 to bob@example.com by 2024-05-01, see https://x.io and ask Alice Smith");
        let kinds: Vec<EntityKind> = e.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EntityKind::Amount, EntityKind::Email, EntityKind::Date, EntityKind::Url, EntityKind::ProperNoun]
        );
        assert_eq!(e[4].text, "Alice Smith");
    }

    #[test]
    fn sentence_initial_capital_is_not_an_entity() {
        assert!(extract_entities("Weather is nice").is_empty());
        assert_eq!(extract_entities("weather in Paris")[0].kind, EntityKind::ProperNoun);
    }

    #[test]
    fn sentiment_and_urgency_ranges() {
        assert_eq!(p("this is great, thanks").sentiment, 1.0);
        assert_eq!(p("this is terrible and broken").sentiment, -1.0);
        assert_eq!(p("fix this urgent problem asap!").urgency, 0.9);
        assert_eq!(p("urgent critical emergency asap immediately").urgency, 1.0);
    }

    #[test]
    fn tool_mentions_require_tools() {
        let perceiver = Perceiver::new(vec!["calculator".to_string()]);
        let got = perceiver.perceive("use the calculator for 3*4", &Metadata::new()).unwrap();
        assert!(got.requires_tools);
        assert!(p("find cheap flights").requires_tools);
        assert!(p("buy me a ticket").requires_tools);
    }

    #[test]
    fn metadata_domain_is_hinted() {
        let mut md = Metadata::new();
        md.insert("domain".into(), "Finance".into());
        let got = perceive("hello", &md).unwrap();
        assert!(got.domain_hints.contains(&"finance".to_string()));
    }
}
