//! Structured-prose ("formalized") text format for goal structures and patterns.
//!
//! One statement per line:
//!
//! ```text
//! AssuranceCase: Infusion pump
//! Goal(G1, "The pump is acceptably safe")
//! Undeveloped(G1)
//! Strategy(S1, "Argue over each identified hazard")
//! Context(C1, "Hazard log \"HL-3\"")
//! SupportedBy(G1, S1)
//! InContextOf(G1, C1)
//! ```
//!
//! The header is `AssuranceCase: <name>` or `Pattern: <name>`. `#` starts a
//! comment, either on its own line or after a closing parenthesis. Statements
//! escape `\`, `"`, newline, carriage return and tab with a backslash.
//!
//! [`serialize`] emits the canonical form: elements breadth-first from the
//! root with children in id order, each followed by its `Undeveloped` line if
//! decorated, then all relationships grouped by source in the same order.

mod dot;
mod layout;
mod parse;
mod svg;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    has_errors, validate, GoalStructure, GsnElement, GsnRelationship, PatternDocument, RelationshipKind, Violation,
};

pub use dot::export_dot;
pub use layout::{layered_layout, Layout, NodePlacement};
pub use parse::{parse, DiagnosticCode, ParseDiagnostic, ParseOutcome};
pub use svg::export_svg;

pub const ASSURANCE_CASE_HEADER: &str = "AssuranceCase:";
pub const PATTERN_HEADER: &str = "Pattern:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    AssuranceCase,
    Pattern,
}

impl DocumentKind {
    pub fn header(self) -> &'static str {
        match self {
            DocumentKind::AssuranceCase => ASSURANCE_CASE_HEADER,
            DocumentKind::Pattern => PATTERN_HEADER,
        }
    }
}

/// A parsed or to-be-serialized document: an assurance case or a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "document", rename_all = "snake_case")]
pub enum Document {
    AssuranceCase(GoalStructure),
    Pattern(PatternDocument),
}

impl Document {
    pub fn kind(&self) -> DocumentKind {
        match self {
            Document::AssuranceCase(_) => DocumentKind::AssuranceCase,
            Document::Pattern(_) => DocumentKind::Pattern,
        }
    }

    pub fn structure(&self) -> &GoalStructure {
        match self {
            Document::AssuranceCase(s) => s,
            Document::Pattern(p) => p.structure(),
        }
    }

    pub fn into_structure(self) -> GoalStructure {
        match self {
            Document::AssuranceCase(s) => s,
            Document::Pattern(p) => p.into_structure(),
        }
    }
}

impl From<GoalStructure> for Document {
    fn from(s: GoalStructure) -> Self {
        Document::AssuranceCase(s)
    }
}

impl From<PatternDocument> for Document {
    fn from(p: PatternDocument) -> Self {
        Document::Pattern(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("structure is not well formed ({} violation(s)): {}", .0.len(), summarize(.0))]
    InvalidStructure(Vec<Violation>),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .take(3)
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Canonical structured-prose rendering of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormalizedText {
    pub kind: DocumentKind,
    pub name: String,
    /// Statement lines after the header.
    pub lines: Vec<String>,
}

impl FormalizedText {
    pub fn header(&self) -> String {
        if self.name.is_empty() {
            self.kind.header().to_string()
        } else {
            format!("{} {}", self.kind.header(), self.name)
        }
    }

    /// Body text without the header; this is what similarity metrics consume.
    pub fn body(&self) -> String {
        self.lines.join("\n")
    }

    /// Number of lines including the header.
    pub fn line_count(&self) -> usize {
        self.lines.len() + 1
    }
}

impl fmt::Display for FormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header())?;
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

pub fn escape_statement(statement: &str) -> String {
    let mut out = String::with_capacity(statement.len() + 2);
    for c in statement.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes a goal structure with the given header kind.
pub fn serialize_structure(structure: &GoalStructure, kind: DocumentKind) -> Result<FormalizedText, CodecError> {
    let violations = validate(structure);
    if has_errors(&violations) {
        return Err(CodecError::InvalidStructure(violations));
    }
    let (elements, relationships) = canonical_order(structure);
    let mut lines = Vec::with_capacity(elements.len() + relationships.len());
    for e in elements {
        lines.push(format!("{}({}, \"{}\")", e.kind, e.id, escape_statement(&e.statement)));
        if e.undeveloped {
            lines.push(format!("Undeveloped({})", e.id));
        }
    }
    for r in relationships {
        lines.push(format!("{}({}, {})", r.kind, r.source, r.target));
    }

    Ok(FormalizedText {
        kind,
        name: structure.name().to_string(),
        lines,
    })
}

/// Elements breadth-first from the root; relationships by (source position, kind, target id).
pub(crate) fn canonical_order(structure: &GoalStructure) -> (Vec<&GsnElement>, Vec<&GsnRelationship>) {
    let order = structure.breadth_first_ids();
    let position: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let elements = order
        .iter()
        .map(|id| structure.element(id).expect("id from structure"))
        .collect();
    let mut relationships: Vec<_> = structure.relationships().collect();
    relationships.sort_by_key(|r| {
        (
            position.get(r.source.as_str()).copied().unwrap_or(usize::MAX),
            kind_order(r.kind),
            r.target.as_str(),
        )
    });
    (elements, relationships)
}

fn kind_order(kind: RelationshipKind) -> u8 {
    match kind {
        RelationshipKind::SupportedBy => 0,
        RelationshipKind::InContextOf => 1,
    }
}

pub fn serialize(document: &Document) -> Result<FormalizedText, CodecError> {
    serialize_structure(document.structure(), document.kind())
}

pub fn serialize_case(structure: &GoalStructure) -> Result<FormalizedText, CodecError> {
    serialize_structure(structure, DocumentKind::AssuranceCase)
}

pub fn serialize_pattern(pattern: &PatternDocument) -> Result<FormalizedText, CodecError> {
    serialize_structure(pattern.structure(), DocumentKind::Pattern)
}
