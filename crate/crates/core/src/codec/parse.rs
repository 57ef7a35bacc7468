use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Document, DocumentKind, ASSURANCE_CASE_HEADER, PATTERN_HEADER};
use crate::model::{
    scan_placeholders, validate, ElementKind, GoalStructure, GsnElement, GsnRelationship, PatternDocument,
    RelationshipKind, Severity, ViolationCode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    MissingHeader,
    MisplacedHeader,
    DuplicateHeader,
    Grammar,
    UnknownElementKind,
    UnknownPredicate,
    DuplicateId,
    DanglingEndpoint,
    UnknownElement,
    ForwardReference,
    DuplicateRelationship,
    DuplicateDecorator,
    MalformedPlaceholder,
    Structure(ViolationCode),
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticCode::Structure(code) => write!(f, "{code}"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    /// 1-based line number.
    pub line: usize,
    /// 1-based column, counted in characters.
    pub column: usize,
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}[{}]: {}", self.line, self.column, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub document: Document,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &ParseDiagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Ident(String),
    Str(String),
}

#[derive(Debug)]
struct Statement {
    name: String,
    args: Vec<(Arg, usize)>,
}

#[derive(Debug)]
struct SyntaxError {
    column: usize,
    message: String,
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c == ' ' || c == '\t') {
            self.pos += 1;
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            column: self.column(),
            message: message.into(),
        })
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an identifier");
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn string(&mut self) -> Result<String, SyntaxError> {
        debug_assert_eq!(self.peek(), Some('"'));
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return self.err("unterminated string literal"),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('\\') => out.push('\\'),
                    Some('"') => out.push('"'),
                    Some('n') => out.push('\n'),
                    Some('r') => out.push('\r'),
                    Some('t') => out.push('\t'),
                    Some(other) => {
                        self.pos -= 2;
                        return self.err(format!("unknown escape `\\{other}`"));
                    }
                    None => return self.err("unterminated escape"),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        self.skip_ws();
        let name = self.ident()?;
        self.skip_ws();
        if self.peek() != Some('(') {
            return self.err(format!("expected `(` after `{name}`"));
        }
        self.pos += 1;
        let mut args = Vec::new();
        loop {
            self.skip_ws();
            let col = self.column();
            let arg = match self.peek() {
                Some('"') => Arg::Str(self.string()?),
                Some(')') if args.is_empty() => {
                    return self.err("expected at least one argument");
                }
                _ => Arg::Ident(self.ident()?),
            };
            args.push((arg, col));
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(')') => break,
                Some(c) => {
                    self.pos -= 1;
                    return self.err(format!("expected `,` or `)` but found `{c}`"));
                }
                None => return self.err("expected `)` before end of line"),
            }
        }
        self.skip_ws();
        match self.peek() {
            None | Some('#') => Ok(Statement { name, args }),
            Some(c) => self.err(format!("unexpected `{c}` after statement")),
        }
    }
}

struct Builder {
    diagnostics: Vec<ParseDiagnostic>,
}

impl Builder {
    fn push(&mut self, line: usize, column: usize, code: DiagnosticCode, severity: Severity, message: impl Into<String>) {
        self.diagnostics.push(ParseDiagnostic {
            line,
            column,
            code,
            severity,
            message: message.into(),
        });
    }

    fn error(&mut self, line: usize, column: usize, code: DiagnosticCode, message: impl Into<String>) {
        self.push(line, column, code, Severity::Error, message);
    }

    fn warning(&mut self, line: usize, column: usize, code: DiagnosticCode, message: impl Into<String>) {
        self.push(line, column, code, Severity::Warning, message);
    }
}

struct PendingRel {
    line: usize,
    columns: (usize, usize),
    rel: GsnRelationship,
}

struct PendingDecorator {
    line: usize,
    column: usize,
    id: String,
}

/// Parses structured prose. Never aborts: every problem becomes a diagnostic
/// and the best-effort document is still returned.
///
/// With zero error diagnostics, the returned structure passes `validate`.
pub fn parse(text: &str) -> ParseOutcome {
    let mut b = Builder { diagnostics: Vec::new() };
    let mut header: Option<(DocumentKind, String, usize)> = None;
    let mut seen_statement = false;
    let mut structure = GoalStructure::default();
    let mut element_lines: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut rels: Vec<PendingRel> = Vec::new();
    let mut decorators: Vec<PendingDecorator> = Vec::new();

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = line.chars().count() - trimmed.chars().count();

        let header_kind = if trimmed.starts_with(ASSURANCE_CASE_HEADER) {
            Some((DocumentKind::AssuranceCase, ASSURANCE_CASE_HEADER))
        } else if trimmed.starts_with(PATTERN_HEADER) {
            Some((DocumentKind::Pattern, PATTERN_HEADER))
        } else {
            None
        };
        if let Some((kind, prefix)) = header_kind {
            let name = trimmed[prefix.len()..].trim().to_string();
            if header.is_some() {
                b.error(line_no, indent + 1, DiagnosticCode::DuplicateHeader, "document already has a header");
            } else {
                if seen_statement {
                    b.error(
                        line_no,
                        indent + 1,
                        DiagnosticCode::MisplacedHeader,
                        "header must precede all statements",
                    );
                }
                header = Some((kind, name, line_no));
            }
            continue;
        }
        seen_statement = true;

        let stmt = match Cursor::new(line).statement() {
            Ok(s) => s,
            Err(e) => {
                b.error(line_no, e.column, DiagnosticCode::Grammar, e.message);
                continue;
            }
        };
        let name_col = indent + 1;

        if let Ok(kind) = stmt.name.parse::<ElementKind>() {
            match stmt.args.as_slice() {
                [(Arg::Ident(id), _), (Arg::Str(statement), _)] => {
                    if element_lines.contains_key(id) {
                        b.error(
                            line_no,
                            name_col,
                            DiagnosticCode::DuplicateId,
                            format!("element `{id}` is already declared on line {}", element_lines[id].0),
                        );
                        continue;
                    }
                    let scol = stmt.args[1].1;
                    element_lines.insert(id.clone(), (line_no, scol));
                    structure
                        .add_element(GsnElement::new(id.clone(), kind, statement.clone()))
                        .expect("duplicate ids filtered above");
                }
                _ => b.error(
                    line_no,
                    name_col,
                    DiagnosticCode::Grammar,
                    format!("`{}` expects an id and a quoted statement", stmt.name),
                ),
            }
        } else if let Ok(kind) = stmt.name.parse::<RelationshipKind>() {
            match stmt.args.as_slice() {
                [(Arg::Ident(source), c1), (Arg::Ident(target), c2)] => rels.push(PendingRel {
                    line: line_no,
                    columns: (*c1, *c2),
                    rel: GsnRelationship::new(source.clone(), target.clone(), kind),
                }),
                _ => b.error(
                    line_no,
                    name_col,
                    DiagnosticCode::Grammar,
                    format!("`{}` expects two element ids", stmt.name),
                ),
            }
        } else if stmt.name == "Undeveloped" {
            match stmt.args.as_slice() {
                [(Arg::Ident(id), col)] => decorators.push(PendingDecorator {
                    line: line_no,
                    column: *col,
                    id: id.clone(),
                }),
                _ => b.error(line_no, name_col, DiagnosticCode::Grammar, "`Undeveloped` expects one element id"),
            }
        } else if matches!(stmt.args.as_slice(), [(Arg::Ident(_), _), (Arg::Str(_), _)]) {
            b.error(
                line_no,
                name_col,
                DiagnosticCode::UnknownElementKind,
                format!("unknown element kind `{}`", stmt.name),
            );
        } else {
            b.error(
                line_no,
                name_col,
                DiagnosticCode::UnknownPredicate,
                format!("unknown statement `{}`", stmt.name),
            );
        }
    }

    let mut rel_lines: BTreeMap<GsnRelationship, usize> = BTreeMap::new();
    for p in rels {
        let mut dangling = false;
        for (id, col) in [(&p.rel.source, p.columns.0), (&p.rel.target, p.columns.1)] {
            match element_lines.get(id) {
                None => {
                    dangling = true;
                    b.error(
                        p.line,
                        col,
                        DiagnosticCode::DanglingEndpoint,
                        format!("`{id}` is not declared"),
                    );
                }
                Some(&(decl, _)) if decl > p.line => b.warning(
                    p.line,
                    col,
                    DiagnosticCode::ForwardReference,
                    format!("`{id}` is declared later, on line {decl}"),
                ),
                Some(_) => {}
            }
        }
        if dangling {
            continue;
        }
        if let Some(&first) = rel_lines.get(&p.rel) {
            b.warning(
                p.line,
                1,
                DiagnosticCode::DuplicateRelationship,
                format!("same relationship already stated on line {first}"),
            );
            continue;
        }
        rel_lines.insert(p.rel.clone(), p.line);
        structure.add_relationship(p.rel);
    }

    let mut decorated = BTreeSet::new();
    for d in decorators {
        if !element_lines.contains_key(&d.id) {
            b.error(d.line, d.column, DiagnosticCode::UnknownElement, format!("`{}` is not declared", d.id));
            continue;
        }
        if !decorated.insert(d.id.clone()) {
            b.warning(
                d.line,
                d.column,
                DiagnosticCode::DuplicateDecorator,
                format!("`{}` is already marked undeveloped", d.id),
            );
        }
        structure.set_undeveloped(&d.id, true);
    }

    let (kind, header_line) = match header {
        Some((kind, name, line)) => {
            structure.set_name(name);
            (kind, line)
        }
        None => {
            b.error(
                1,
                1,
                DiagnosticCode::MissingHeader,
                format!("expected `{ASSURANCE_CASE_HEADER} <name>` or `{PATTERN_HEADER} <name>`"),
            );
            (DocumentKind::AssuranceCase, 1)
        }
    };

    if kind == DocumentKind::Pattern {
        for e in structure.elements() {
            let scan = scan_placeholders(&e.statement);
            let (line, col) = element_lines[&e.id];
            for issue in scan.issues {
                let offset_chars = e.statement[..issue.offset()].chars().count();
                b.error(
                    line,
                    col + 1 + offset_chars,
                    DiagnosticCode::MalformedPlaceholder,
                    format!("malformed placeholder in `{}`", e.id),
                );
            }
        }
    }

    for v in validate(&structure) {
        let rel_line = match v.ids.as_slice() {
            [s, t] if v.code.is_relationship_rule() || v.code == ViolationCode::SelfLoop => rel_lines
                .iter()
                .find(|(r, _)| &r.source == s && &r.target == t)
                .map(|(_, &l)| l),
            _ => None,
        };
        let line = rel_line
            .or_else(|| v.ids.first().and_then(|id| element_lines.get(id).map(|&(l, _)| l)))
            .unwrap_or(header_line);
        b.push(line, 1, DiagnosticCode::Structure(v.code), v.severity, v.message);
    }

    b.diagnostics.sort_by_key(|d| (d.line, d.column));

    let document = match kind {
        DocumentKind::AssuranceCase => Document::AssuranceCase(structure),
        DocumentKind::Pattern => Document::Pattern(PatternDocument::lenient(structure)),
    };
    ParseOutcome {
        document,
        diagnostics: b.diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{serialize, serialize_case};

    fn codes(o: &ParseOutcome) -> Vec<(usize, DiagnosticCode)> {
        o.diagnostics.iter().map(|d| (d.line, d.code)).collect()
    }

    #[test]
    fn dangling_endpoint_on_second_statement() {
        let o = parse("AssuranceCase: x\nGoal(G1, \"x\")\nSupportedBy(G1, G9)\n");
        assert_eq!(codes(&o), vec![(3, DiagnosticCode::DanglingEndpoint)]);
        assert_eq!(o.diagnostics[0].column, 17);
        assert_eq!(o.document.structure().element_count(), 1);
    }

    #[test]
    fn canonical_text_has_no_diagnostics() {
        let src = "AssuranceCase: Pump\nGoal(G1, \"Pump is safe\")\nStrategy(S1, \"By hazard\")\nSupportedBy(G1, S1)\n";
        let o = parse(src);
        assert!(o.diagnostics.is_empty(), "{:?}", o.diagnostics);
        assert_eq!(serialize(&o.document).unwrap().to_string(), src);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let src = "# leading\n\nAssuranceCase: C  \n  Goal(G1, \"a # not a comment\")  # trailing\n";
        let o = parse(src);
        assert!(o.diagnostics.is_empty(), "{:?}", o.diagnostics);
        let s = o.document.structure();
        assert_eq!(s.name(), "C");
        assert_eq!(s.element("G1").unwrap().statement, "a # not a comment");
    }

    #[test]
    fn accumulates_multiple_errors() {
        let src = "AssuranceCase: x\nGoal(G1, \"a\")\nWidget(W1, \"b\")\nGoal(G1, \"dup\")\nGoal G2\nFrob(A, B)\nSupportedBy(G1)\n";
        let o = parse(src);
        assert_eq!(
            codes(&o),
            vec![
                (3, DiagnosticCode::UnknownElementKind),
                (4, DiagnosticCode::DuplicateId),
                (5, DiagnosticCode::Grammar),
                (6, DiagnosticCode::UnknownPredicate),
                (7, DiagnosticCode::Grammar),
            ]
        );
    }

    #[test]
    fn missing_header() {
        let o = parse("Goal(G1, \"a\")\n");
        assert_eq!(codes(&o), vec![(1, DiagnosticCode::MissingHeader)]);
    }

    #[test]
    fn misplaced_and_duplicate_header() {
        let o = parse("Goal(G1, \"a\")\nAssuranceCase: x\nPattern: y\n");
        assert_eq!(
            codes(&o),
            vec![(2, DiagnosticCode::MisplacedHeader), (3, DiagnosticCode::DuplicateHeader)]
        );
        assert_eq!(o.document.structure().name(), "x");
    }

    #[test]
    fn structural_violation_reported_on_relationship_line() {
        let o = parse("AssuranceCase: x\nGoal(G1, \"a\")\nContext(C1, \"b\")\nSupportedBy(G1, C1)\n");
        assert_eq!(
            codes(&o),
            vec![(4, DiagnosticCode::Structure(ViolationCode::IllegalSupportedByTarget))]
        );
    }

    #[test]
    fn forward_reference_is_a_warning() {
        let o = parse("AssuranceCase: x\nGoal(G1, \"a\")\nSupportedBy(G1, G2)\nGoal(G2, \"b\")\n");
        assert_eq!(codes(&o), vec![(3, DiagnosticCode::ForwardReference)]);
        assert!(!o.has_errors());
        assert_eq!(o.document.structure().relationship_count(), 1);
    }

    #[test]
    fn decorator_handling() {
        let o = parse("AssuranceCase: x\nGoal(G1, \"a\")\nUndeveloped(G1)\nUndeveloped(G1)\nUndeveloped(G7)\n");
        assert_eq!(
            codes(&o),
            vec![(4, DiagnosticCode::DuplicateDecorator), (5, DiagnosticCode::UnknownElement)]
        );
        assert!(o.document.structure().element("G1").unwrap().undeveloped);
    }

    #[test]
    fn pattern_with_malformed_placeholder() {
        let o = parse("Pattern: p\nGoal(G1, \"System {X is safe\")\n");
        assert_eq!(codes(&o), vec![(2, DiagnosticCode::MalformedPlaceholder)]);
        assert_eq!(o.diagnostics[0].column, 18);
        assert!(matches!(o.document, Document::Pattern(_)));
    }

    #[test]
    fn pattern_placeholders_derived() {
        let o = parse("Pattern: p\nGoal(G1, \"{System} is {property}\")\n");
        match o.document {
            Document::Pattern(p) => assert_eq!(p.placeholders().len(), 2),
            _ => panic!("expected a pattern"),
        }
    }

    #[test]
    fn unterminated_string_and_bad_escape() {
        let o = parse("AssuranceCase: x\nGoal(G1, \"abc\nGoal(G2, \"a\\qb\")\n");
        let grammar: Vec<_> = o.diagnostics.iter().filter(|d| d.code == DiagnosticCode::Grammar).collect();
        assert_eq!(grammar.iter().map(|d| d.line).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(grammar[1].column, 12);
    }

    #[test]
    fn crlf_is_tolerated() {
        let o = parse("AssuranceCase: x\r\nGoal(G1, \"a\")\r\n");
        assert!(o.diagnostics.is_empty());
    }

    #[test]
    fn reparse_of_serialized_escape_round_trips() {
        let s = GoalStructure::new("E")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "tab\there \"q\" back\\slash\r\n"))
            .unwrap();
        let text = serialize_case(&s).unwrap().to_string();
        let o = parse(&text);
        assert!(o.diagnostics.is_empty());
        assert_eq!(o.document.structure(), &s);
    }
}
