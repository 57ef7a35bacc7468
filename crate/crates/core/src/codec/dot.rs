use std::fmt::Write as _;

use super::{canonical_order, CodecError};
use crate::model::{has_errors, validate, ElementKind, GoalStructure, RelationshipKind};

const UNDEVELOPED_GLYPH: char = '\u{25C7}';

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn shape_attrs(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Goal => "shape=box",
        ElementKind::Strategy => "shape=parallelogram",
        ElementKind::Solution => "shape=circle",
        ElementKind::Context => "shape=box, style=rounded",
        ElementKind::Assumption => "shape=ellipse, xlabel=\"A\"",
        ElementKind::Justification => "shape=ellipse, xlabel=\"J\"",
    }
}

/// Graphviz description: one node line per element, one edge line per relationship.
///
/// SupportedBy edges use a filled arrowhead, InContextOf a hollow one;
/// undeveloped elements get a hollow-diamond glyph under their label.
pub fn export_dot(structure: &GoalStructure) -> Result<String, CodecError> {
    let violations = validate(structure);
    if has_errors(&violations) {
        return Err(CodecError::InvalidStructure(violations));
    }
    let (elements, relationships) = canonical_order(structure);
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(structure.name())).unwrap();
    out.push_str("  rankdir=TB;\n  node [fontname=\"Helvetica\", fontsize=10];\n");
    for e in elements {
        let mut label = format!("{}\n{}", e.id, e.statement);
        if e.undeveloped {
            label.push('\n');
            label.push(UNDEVELOPED_GLYPH);
        }
        writeln!(out, "  {} [label={}, {}];", quote(&e.id), quote(&label), shape_attrs(e.kind)).unwrap();
    }
    for r in relationships {
        let head = match r.kind {
            RelationshipKind::SupportedBy => "normal",
            RelationshipKind::InContextOf => "onormal",
        };
        writeln!(
            out,
            "  {} -> {} [arrowhead={head}, label={}];",
            quote(&r.source),
            quote(&r.target),
            quote(r.kind.as_str())
        )
        .unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GsnElement, GsnRelationship};

    #[test]
    fn single_goal_one_node_no_edges() {
        let s = GoalStructure::new("x")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "safe"))
            .unwrap();
        let dot = export_dot(&s).unwrap();
        assert_eq!(dot.matches("shape=").count(), 1);
        assert_eq!(dot.matches(" -> ").count(), 0);
        assert!(dot.contains("\"G1\" [label=\"G1\\nsafe\", shape=box];"));
    }

    #[test]
    fn in_context_of_uses_hollow_arrowhead() {
        let s = GoalStructure::new("x")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "safe"))
            .unwrap()
            .with_element(GsnElement::new("C1", ElementKind::Context, "env"))
            .unwrap()
            .with_relationship(GsnRelationship::in_context_of("G1", "C1"));
        let dot = export_dot(&s).unwrap();
        assert!(dot.contains("\"G1\" -> \"C1\" [arrowhead=onormal"));
        assert!(dot.contains("style=rounded"));
    }

    #[test]
    fn undeveloped_glyph_and_escaping() {
        let s = GoalStructure::new("q\"n")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "say \"x\"").undeveloped())
            .unwrap();
        let dot = export_dot(&s).unwrap();
        assert!(dot.starts_with("digraph \"q\\\"n\" {"));
        assert!(dot.contains('\u{25C7}'));
        assert!(dot.contains("say \\\"x\\\""));
    }
}
