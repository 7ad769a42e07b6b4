use crate::profiler::BehaviorParameters;
use crate::toolhub::{output_text, ExecutionReport, StepReport, StepStatus, RESPOND_TOOL};

const TERSE_BELOW: f64 = 0.33;
const DETAILED_FROM: f64 = 0.66;
const FORMAL_FROM: f64 = 0.5;

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn step_line(s: &StepReport) -> String {
    let label = if s.tool == RESPOND_TOOL { "answer".to_string() } else { s.tool.clone() };
    let body = match s.status {
        StepStatus::Succeeded => s.output.as_ref().map(|o| one_line(&output_text(o))).unwrap_or_default(),
        StepStatus::Failed => format!("failed: {}", s.error.as_deref().unwrap_or("unknown error")),
        StepStatus::Skipped => "skipped (an earlier step did not succeed)".to_string(),
    };
    let attempts = match s.attempts {
        0 | 1 => String::new(),
        n => format!(" after {n} attempts"),
    };
    format!("- {} {label}{attempts}: {body}", s.id)
}

fn failure_summary(report: &ExecutionReport, formal: bool) -> String {
    let failed: Vec<&StepReport> = report.steps.iter().filter(|s| s.status == StepStatus::Failed).collect();
    let skipped = report.steps.iter().filter(|s| s.status == StepStatus::Skipped).count();
    let names: Vec<String> = failed.iter().map(|s| s.tool.clone()).collect();
    let lead = if formal { "The request could not be completed." } else { "Sorry, that didn't fully work." };
    let mut text = format!("{lead} {} of {} steps failed", failed.len(), report.steps.len());
    if !names.is_empty() {
        text.push_str(&format!(" ({})", names.join(", ")));
    }
    if skipped > 0 {
        text.push_str(&format!(" and {skipped} were skipped"));
    }
    text.push('.');
    text
}

/// Phase 7: render execution results for the caller.
///
/// Verbosity below 0.33 gives one paragraph; from 0.66 every step is listed
/// with its output. Formality at or above 0.5 selects the formal wording.
pub fn format_response(report: &ExecutionReport, params: &BehaviorParameters, formality: f64) -> String {
    let formal = formality >= FORMAL_FROM;
    let results: Vec<String> = report
        .steps
        .iter()
        .filter(|s| s.status == StepStatus::Succeeded)
        .filter_map(|s| s.output.as_ref().map(output_text))
        .map(|t| one_line(&t))
        .filter(|t| !t.is_empty())
        .collect();
    let mut paragraph = String::new();
    if !report.success {
        paragraph.push_str(&failure_summary(report, formal));
        if !results.is_empty() {
            paragraph.push_str(if formal { " Partial results: " } else { " Here's what did come back: " });
            paragraph.push_str(&results.join(" "));
        }
    } else {
        let has_tools = report.tool_steps().next().is_some();
        if has_tools {
            paragraph.push_str(if formal { "Here is the requested information: " } else { "Here's what I found: " });
        }
        paragraph.push_str(&results.join(" "));
    }
    let paragraph = one_line(&paragraph);
    if params.verbosity < TERSE_BELOW {
        return paragraph;
    }
    let mut out = paragraph;
    if params.verbosity >= DETAILED_FROM {
        out.push_str(if formal { "\n\nStep results:\n" } else { "\n\nDetails:\n" });
        let lines: Vec<String> = report.steps.iter().map(step_line).collect();
        out.push_str(&lines.join("\n"));
    } else {
        let tools: Vec<&str> = report.tool_steps().map(|s| s.tool.as_str()).collect();
        if !tools.is_empty() {
            out.push_str(&format!("\n\nTools used: {}.", tools.join(", ")));
        }
    }
    out
}
