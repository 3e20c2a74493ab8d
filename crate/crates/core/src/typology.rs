//! Financial semantic-shift typology.
//!
//! Eleven shift patterns grouped under four axes, each axis owned by one
//! document type. The catalog drives hard-negative generation: a source
//! sentence may only be rewritten along patterns of its own domain.
//!
//! News carries a single pattern (temporal variation). Framing shifts that
//! also occur in news are assigned to research reports so the per-domain
//! subsets stay disjoint.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::corpus::SourceDomain;

/// Bumped whenever a pattern id, order or assignment changes.
pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftAxis {
    TemporalVariation,
    PerspectivalFraming,
    StructuralFormality,
    RuleBasedSemantics,
}

impl ShiftAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftAxis::TemporalVariation => "temporal_variation",
            ShiftAxis::PerspectivalFraming => "perspectival_framing",
            ShiftAxis::StructuralFormality => "structural_formality",
            ShiftAxis::RuleBasedSemantics => "rule_based_semantics",
        }
    }

    /// The document type each axis is drawn from.
    pub fn source_domain(self) -> SourceDomain {
        match self {
            ShiftAxis::TemporalVariation => SourceDomain::News,
            ShiftAxis::PerspectivalFraming => SourceDomain::ResearchReport,
            ShiftAxis::StructuralFormality => SourceDomain::Disclosure,
            ShiftAxis::RuleBasedSemantics => SourceDomain::Legal,
        }
    }
}

impl fmt::Display for ShiftAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShiftPattern {
    pub id: &'static str,
    pub axis: ShiftAxis,
    pub source_domain: SourceDomain,
    pub description: &'static str,
}

const fn pattern(
    id: &'static str,
    axis: ShiftAxis,
    source_domain: SourceDomain,
    description: &'static str,
) -> ShiftPattern {
    ShiftPattern {
        id,
        axis,
        source_domain,
        description,
    }
}

use ShiftAxis::*;
use SourceDomain::{Disclosure, Legal, News, ResearchReport};

static CATALOG: [ShiftPattern; 11] = [
    pattern(
        "temporal_variation",
        TemporalVariation,
        News,
        "Move the statement to a different time frame (quarter, year, before/after an event) so the reported fact no longer holds while the wording stays close.",
    ),
    pattern(
        "micro_vs_macro_analysis",
        PerspectivalFraming,
        ResearchReport,
        "Swap a company-specific claim for a claim about the broad economy or sector, or the reverse.",
    ),
    pattern(
        "facts_vs_opinions",
        PerspectivalFraming,
        ResearchReport,
        "Turn an objective, reported figure into an analyst's subjective expectation, or the reverse.",
    ),
    pattern(
        "financial_jargon_vs_everyday_language",
        PerspectivalFraming,
        ResearchReport,
        "Replace a term of art with its everyday homonym so the financial meaning is lost (e.g. consensus as market expectation vs. agreement).",
    ),
    pattern(
        "intensified_sentiment",
        StructuralFormality,
        Disclosure,
        "Change the intensity of the tone (significant vs. modest) without touching the rest of the sentence.",
    ),
    pattern(
        "elaborated_details",
        StructuralFormality,
        Disclosure,
        "Alter a contextual detail (amount, site, counterparty) so the disclosure tells a different story.",
    ),
    pattern(
        "plan_realization",
        StructuralFormality,
        Disclosure,
        "Change the status of a forward-looking statement (planned vs. completed vs. cancelled).",
    ),
    pattern(
        "emerging_situations",
        StructuralFormality,
        Disclosure,
        "Introduce a new external circumstance that reframes the stated fact.",
    ),
    pattern(
        "legal_interpretation_shifts",
        RuleBasedSemantics,
        Legal,
        "Replace an open-textured legal term (e.g. reasonable cause) with a variant that shifts its interpretation.",
    ),
    pattern(
        "shifts_in_sanction_application",
        RuleBasedSemantics,
        Legal,
        "Alter how a penalty is calculated or applied.",
    ),
    pattern(
        "procedural_clarifications",
        RuleBasedSemantics,
        Legal,
        "Modify a procedural step so the compliance burden changes.",
    ),
];

pub fn pattern_catalog() -> &'static [ShiftPattern] {
    &CATALOG
}

pub fn pattern_by_id(id: &str) -> Option<&'static ShiftPattern> {
    CATALOG.iter().find(|p| p.id == id)
}

/// Catalog subset for one domain, in catalog order.
pub fn patterns_for_source(domain: SourceDomain) -> Vec<&'static ShiftPattern> {
    CATALOG.iter().filter(|p| p.source_domain == domain).collect()
}

/// Like [`patterns_for_source`] but takes the domain by name.
pub fn patterns_for_source_name(name: &str) -> Result<Vec<&'static ShiftPattern>, String> {
    Ok(patterns_for_source(name.parse()?))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagValidation {
    pub kept: Vec<&'static str>,
    /// Tags that are unknown or belong to another domain. Duplicates of a
    /// kept tag are not counted here.
    pub rejected: Vec<String>,
}

/// Keeps tags that exist in the catalog and match `domain`, in first-seen
/// order with duplicates removed.
pub fn validate_axis_tags<S: AsRef<str>>(tags: &[S], domain: SourceDomain) -> TagValidation {
    let mut seen = HashSet::new();
    let mut out = TagValidation::default();
    for tag in tags {
        let tag = tag.as_ref().trim();
        match pattern_by_id(tag) {
            Some(p) if p.source_domain == domain => {
                if seen.insert(p.id) {
                    out.kept.push(p.id);
                }
            }
            _ => out.rejected.push(tag.to_string()),
        }
    }
    out
}

/// Catalog as a JSON array of `{id, axis, source_domain, description}`.
pub fn catalog_json() -> String {
    serde_json::to_string_pretty(&CATALOG[..]).expect("catalog serializes")
}
