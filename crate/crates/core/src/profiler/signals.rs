use crate::perception::{Intent, Metadata, Perception};
use crate::text::{contains_any, tokenize};

use super::{Dimension, Signals};

/// Keyword rule: if any phrase matches, the dimension receives `value`.
struct Rule {
    dimension: Dimension,
    phrases: &'static [&'static str],
    value: f64,
}

const RULES: &[Rule] = &[
    Rule {
        dimension: Dimension::Verbosity,
        phrases: &["brief", "concise", "short", "tl dr", "tldr", "summary only"],
        value: 0.1,
    },
    Rule {
        dimension: Dimension::Verbosity,
        phrases: &["detailed", "in detail", "elaborate", "thorough", "thoroughly", "in depth"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::Formality,
        phrases: &["dear", "kindly", "regards", "sincerely", "please advise"],
        value: 0.9,
    },
    Rule { dimension: Dimension::Formality, phrases: &["lol", "gonna", "wanna", "btw", "dude"], value: 0.1 },
    Rule {
        dimension: Dimension::StructurePreference,
        phrases: &["step by step", "bullet", "bullets", "outline", "checklist", "numbered"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::Directness,
        phrases: &["directly", "bottom line", "just tell me", "straight answer", "no fluff"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::TestingEmphasis,
        phrases: &["test", "tests", "testing", "unit test", "coverage"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::SecurityMindedness,
        phrases: &["secure", "security", "vulnerability", "vulnerabilities", "encrypt", "encryption"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::CorrectnessOverSpeed,
        phrases: &["correct", "correctly", "accurate", "accurately", "precise", "rigorous"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::CorrectnessOverSpeed,
        phrases: &["quick", "quickly", "fast", "rough", "ballpark"],
        value: 0.2,
    },
    Rule {
        dimension: Dimension::DocumentationEmphasis,
        phrases: &["docs", "document", "documentation", "docstring", "comments"],
        value: 0.9,
    },
    Rule {
        dimension: Dimension::RiskTolerance,
        phrases: &["risky", "experimental", "bleeding edge", "aggressive"],
        value: 0.8,
    },
    Rule {
        dimension: Dimension::RiskTolerance,
        phrases: &["safe", "safest", "stable", "conservative", "proven"],
        value: 0.2,
    },
    Rule {
        dimension: Dimension::Innovation,
        phrases: &["novel", "innovative", "cutting edge", "unconventional", "fresh idea"],
        value: 0.8,
    },
    Rule {
        dimension: Dimension::Pragmatism,
        phrases: &["practical", "pragmatic", "good enough", "just works"],
        value: 0.9,
    },
    Rule { dimension: Dimension::Pragmatism, phrases: &["ideal", "perfect", "elegant", "purist"], value: 0.2 },
    Rule {
        dimension: Dimension::Collaboration,
        phrases: &["team", "together", "collaborate", "pair", "colleagues"],
        value: 0.8,
    },
    Rule {
        dimension: Dimension::LongTermFocus,
        phrases: &["long term", "maintainable", "scalable", "future proof", "sustainable"],
        value: 0.8,
    },
    Rule {
        dimension: Dimension::Skepticism,
        phrases: &["prove", "evidence", "source", "sources", "are you sure", "citation"],
        value: 0.8,
    },
    Rule { dimension: Dimension::Autonomy, phrases: &["myself", "on my own", "i decide", "my call"], value: 0.8 },
    Rule {
        dimension: Dimension::DetailOrientation,
        phrases: &["exact", "exactly", "edge case", "edge cases", "nuance", "nuances"],
        value: 0.8,
    },
    Rule {
        dimension: Dimension::ToolAffinity,
        phrases: &["tool", "tools", "api", "automate", "automation"],
        value: 0.8,
    },
    Rule { dimension: Dimension::ToolAffinity, phrases: &["manually", "by hand", "without tools"], value: 0.2 },
    Rule {
        dimension: Dimension::IterationTendency,
        phrases: &["again", "retry", "revise", "another version", "iterate", "tweak"],
        value: 0.8,
    },
];

/// Signals present in this interaction. Later rules for the same dimension
/// override earlier ones, so the contrary phrase of a pair wins on ties.
pub fn extract_signals(perception: &Perception, message: &str, metadata: &Metadata) -> Signals {
    let tokens = tokenize(message);
    let mut out = Signals::new();
    if perception.has_code {
        out.insert(Dimension::TechnicalDepth, 0.9);
    }
    for rule in RULES {
        if contains_any(&tokens, rule.phrases) {
            out.insert(rule.dimension, rule.value);
        }
    }
    if perception.intent == Intent::Feedback && perception.sentiment < 0.0 {
        out.insert(Dimension::IterationTendency, 0.8);
    }
    // habits come from request metadata, normalized into [0, 1]
    if let Some(hour) = metadata.get("hour").and_then(|h| h.parse::<f64>().ok()) {
        out.insert(Dimension::PeakHourNorm, (hour / 24.0).clamp(0.0, 1.0));
    }
    if let Some(turns) = metadata.get("session_turns").and_then(|t| t.parse::<f64>().ok()) {
        out.insert(Dimension::SessionLengthNorm, (turns / 20.0).clamp(0.0, 1.0));
    }
    out
}
