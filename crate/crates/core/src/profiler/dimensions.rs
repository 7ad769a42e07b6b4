//! The closed registry of 21 caller-profile dimensions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Philosophy,
    Principles,
    Style,
    Habits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "philosophy.pragmatism")]
    Pragmatism,
    #[serde(rename = "philosophy.risk_tolerance")]
    RiskTolerance,
    #[serde(rename = "philosophy.innovation")]
    Innovation,
    #[serde(rename = "philosophy.autonomy")]
    Autonomy,
    #[serde(rename = "philosophy.detail_orientation")]
    DetailOrientation,
    #[serde(rename = "philosophy.collaboration")]
    Collaboration,
    #[serde(rename = "philosophy.long_term_focus")]
    LongTermFocus,
    #[serde(rename = "philosophy.skepticism")]
    Skepticism,
    #[serde(rename = "principles.correctness_over_speed")]
    CorrectnessOverSpeed,
    #[serde(rename = "principles.testing_emphasis")]
    TestingEmphasis,
    #[serde(rename = "principles.security_mindedness")]
    SecurityMindedness,
    #[serde(rename = "principles.documentation_emphasis")]
    DocumentationEmphasis,
    #[serde(rename = "style.formality")]
    Formality,
    #[serde(rename = "style.verbosity")]
    Verbosity,
    #[serde(rename = "style.technical_depth")]
    TechnicalDepth,
    #[serde(rename = "style.structure_preference")]
    StructurePreference,
    #[serde(rename = "style.directness")]
    Directness,
    #[serde(rename = "habits.session_length_norm")]
    SessionLengthNorm,
    #[serde(rename = "habits.iteration_tendency")]
    IterationTendency,
    #[serde(rename = "habits.peak_hour_norm")]
    PeakHourNorm,
    #[serde(rename = "habits.tool_affinity")]
    ToolAffinity,
}

impl Dimension {
    pub const ALL: [Dimension; 21] = [
        Dimension::Pragmatism,
        Dimension::RiskTolerance,
        Dimension::Innovation,
        Dimension::Autonomy,
        Dimension::DetailOrientation,
        Dimension::Collaboration,
        Dimension::LongTermFocus,
        Dimension::Skepticism,
        Dimension::CorrectnessOverSpeed,
        Dimension::TestingEmphasis,
        Dimension::SecurityMindedness,
        Dimension::DocumentationEmphasis,
        Dimension::Formality,
        Dimension::Verbosity,
        Dimension::TechnicalDepth,
        Dimension::StructurePreference,
        Dimension::Directness,
        Dimension::SessionLengthNorm,
        Dimension::IterationTendency,
        Dimension::PeakHourNorm,
        Dimension::ToolAffinity,
    ];

    pub fn category(self) -> Category {
        use Dimension::*;
        match self {
            Pragmatism | RiskTolerance | Innovation | Autonomy | DetailOrientation | Collaboration | LongTermFocus
            | Skepticism => Category::Philosophy,
            CorrectnessOverSpeed | TestingEmphasis | SecurityMindedness | DocumentationEmphasis => Category::Principles,
            Formality | Verbosity | TechnicalDepth | StructurePreference | Directness => Category::Style,
            SessionLengthNorm | IterationTendency | PeakHourNorm | ToolAffinity => Category::Habits,
        }
    }

    /// Dotted `category.name` key used on the wire.
    pub fn key(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn category_sizes() {
        let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
        for d in Dimension::ALL {
            *counts.entry(d.category()).or_default() += 1;
        }
        assert_eq!(counts[&Category::Philosophy], 8);
        assert_eq!(counts[&Category::Principles], 4);
        assert_eq!(counts[&Category::Style], 5);
        assert_eq!(counts[&Category::Habits], 4);
    }

    #[test]
    fn keys_carry_their_category_prefix() {
        for d in Dimension::ALL {
            let key = d.key();
            let cat = serde_json::to_value(d.category()).unwrap();
            assert!(key.starts_with(&format!("{}.", cat.as_str().unwrap())), "{key}");
        }
        assert_eq!(Dimension::Verbosity.key(), "style.verbosity");
    }
}
