use std::fmt::Write as _;

use super::layout::{layered_layout, NODE_HEIGHT, NODE_WIDTH};
use super::{canonical_order, CodecError};
use crate::model::{has_errors, validate, ElementKind, GoalStructure, RelationshipKind};

const WRAP: usize = 30;
const MAX_TEXT_LINES: usize = 3;

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn wrap(statement: &str) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in statement.split_whitespace() {
        if !current.is_empty() && current.chars().count() + 1 + word.chars().count() > WRAP {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        lines.push(current);
    }
    if lines.len() > MAX_TEXT_LINES {
        lines.truncate(MAX_TEXT_LINES);
        lines[MAX_TEXT_LINES - 1].push('\u{2026}');
    }
    lines
}

fn shape(kind: ElementKind) -> String {
    let (w, h) = (NODE_WIDTH, NODE_HEIGHT);
    match kind {
        ElementKind::Goal => format!(r#"<rect width="{w}" height="{h}"/>"#),
        ElementKind::Strategy => {
            let skew = 16.0;
            format!(
                r#"<polygon points="{skew},0 {w},0 {},{h} 0,{h}"/>"#,
                w - skew
            )
        }
        ElementKind::Solution => format!(r#"<circle cx="{}" cy="{}" r="{}"/>"#, w / 2.0, h / 2.0, h / 2.0 + 4.0),
        ElementKind::Context => format!(r#"<rect width="{w}" height="{h}" rx="{}" ry="{}"/>"#, h / 2.0, h / 2.0),
        ElementKind::Assumption | ElementKind::Justification => {
            format!(r#"<ellipse cx="{}" cy="{}" rx="{}" ry="{}"/>"#, w / 2.0, h / 2.0, w / 2.0, h / 2.0)
        }
    }
}

fn kind_class(kind: ElementKind) -> String {
    format!("gsn-{}", kind.as_str().to_ascii_lowercase())
}

/// SVG drawing with the layered layout: root at the top, one row per
/// longest-path depth. Each element is a `<g class="node …">` and each
/// relationship a `<g class="edge …">`.
pub fn export_svg(structure: &GoalStructure) -> Result<String, CodecError> {
    let violations = validate(structure);
    if has_errors(&violations) {
        return Err(CodecError::InvalidStructure(violations));
    }
    let layout = layered_layout(structure);
    let (elements, relationships) = canonical_order(structure);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = layout.width,
        h = layout.height
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", xml_escape(structure.name())).unwrap();
    out.push_str(concat!(
        "<defs>\n",
        r#"<marker id="arrow-solid" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="8" markerHeight="8" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="black"/></marker>"#,
        "\n",
        r#"<marker id="arrow-hollow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="8" markerHeight="8" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="white" stroke="black"/></marker>"#,
        "\n</defs>\n",
        r#"<style>.node *{fill:white;stroke:black;stroke-width:1.2}.node text{fill:black;stroke:none;font:11px sans-serif}.edge line{stroke:black;stroke-width:1.2}</style>"#,
        "\n",
    ));

    for r in relationships {
        let (Some(s), Some(t)) = (layout.node(&r.source), layout.node(&r.target)) else {
            continue;
        };
        let (marker, class) = match r.kind {
            RelationshipKind::SupportedBy => ("arrow-solid", "supported-by"),
            RelationshipKind::InContextOf => ("arrow-hollow", "in-context-of"),
        };
        writeln!(
            out,
            r#"<g class="edge {class}" data-source="{}" data-target="{}"><line x1="{}" y1="{}" x2="{}" y2="{}" marker-end="url(#{marker})"/></g>"#,
            xml_escape(&r.source),
            xml_escape(&r.target),
            s.x,
            s.y + NODE_HEIGHT,
            t.x,
            t.y
        )
        .unwrap();
    }

    for e in elements {
        let Some(p) = layout.node(&e.id) else { continue };
        writeln!(
            out,
            r#"<g class="node {}" data-id="{}" data-rank="{}" transform="translate({},{})">"#,
            kind_class(e.kind),
            xml_escape(&e.id),
            p.rank,
            p.x - NODE_WIDTH / 2.0,
            p.y
        )
        .unwrap();
        out.push_str(&shape(e.kind));
        out.push('\n');
        let mut text = format!(
            r#"<text x="{}" y="16" text-anchor="middle"><tspan font-weight="bold">{}</tspan>"#,
            NODE_WIDTH / 2.0,
            xml_escape(&e.id)
        );
        for (i, line) in wrap(&e.statement).iter().enumerate() {
            write!(
                text,
                r#"<tspan x="{}" y="{}">{}</tspan>"#,
                NODE_WIDTH / 2.0,
                32 + 14 * i,
                xml_escape(line)
            )
            .unwrap();
        }
        text.push_str("</text>\n");
        out.push_str(&text);
        match e.kind {
            ElementKind::Assumption => out.push_str(&marker_letter("A")),
            ElementKind::Justification => out.push_str(&marker_letter("J")),
            _ => {}
        }
        if e.undeveloped {
            let (cx, top) = (NODE_WIDTH / 2.0, NODE_HEIGHT);
            writeln!(
                out,
                r#"<polygon class="undeveloped" points="{cx},{top} {},{} {cx},{} {},{}" style="fill:white"/>"#,
                cx + 8.0,
                top + 8.0,
                top + 16.0,
                cx - 8.0,
                top + 8.0
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn marker_letter(letter: &str) -> String {
    format!(
        r#"<text x="{}" y="{}" font-weight="bold">{letter}</text>
"#,
        NODE_WIDTH - 6.0,
        NODE_HEIGHT + 4.0
    )
}
