use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{GoalStructure, RelationshipKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// Machine-readable violation codes. Declaration order is the report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    EmptyStructure,
    InvalidName,
    EmptyId,
    MalformedId,
    EmptyStatement,
    IllegalUndeveloped,
    SelfLoop,
    DanglingEndpoint,
    IllegalSupportedBySource,
    IllegalSupportedByTarget,
    IllegalInContextOfSource,
    IllegalInContextOfTarget,
    AcyclicityViolation,
    NoRoot,
    MultipleRoots,
    Unreachable,
    UndevelopedWithChildren,
}

impl ViolationCode {
    pub fn severity(self) -> Severity {
        match self {
            ViolationCode::UndevelopedWithChildren => Severity::Warning,
            _ => Severity::Error,
        }
    }

    /// Codes raised by the relationship rule table.
    pub fn is_relationship_rule(self) -> bool {
        matches!(
            self,
            ViolationCode::IllegalSupportedBySource
                | ViolationCode::IllegalSupportedByTarget
                | ViolationCode::IllegalInContextOfSource
                | ViolationCode::IllegalInContextOfTarget
        )
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub ids: Vec<String>,
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, ids: Vec<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            ids,
            severity: code.severity(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]({}): {}", self.code, self.ids.join(", "), self.message)
    }
}

pub fn has_errors(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.severity == Severity::Error)
}

pub(crate) fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub(crate) fn is_valid_structure_name(name: &str) -> bool {
    name.trim() == name && !name.chars().any(char::is_control)
}

/// Checks every element, relationship and goal-structure invariant.
///
/// Returns an empty list iff the structure is well formed; warnings alone
/// also make the list non-empty. Output is sorted by code, then ids.
pub fn validate(structure: &GoalStructure) -> Vec<Violation> {
    let mut out = Vec::new();

    if structure.is_empty() {
        out.push(Violation::new(
            ViolationCode::EmptyStructure,
            vec![],
            "goal structure has no elements",
        ));
        return out;
    }

    if !is_valid_structure_name(structure.name()) {
        out.push(Violation::new(
            ViolationCode::InvalidName,
            vec![],
            "structure name must be a single trimmed line",
        ));
    }

    for e in structure.elements() {
        if e.id.is_empty() {
            out.push(Violation::new(ViolationCode::EmptyId, vec![], "element id is empty"));
        } else if !is_valid_id(&e.id) {
            out.push(Violation::new(
                ViolationCode::MalformedId,
                vec![e.id.clone()],
                "ids may only contain ASCII letters, digits, `_`, `-` and `.`",
            ));
        }
        if e.statement.trim().is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyStatement,
                vec![e.id.clone()],
                "statement is empty",
            ));
        }
        if e.undeveloped && !e.kind.is_argument() {
            out.push(Violation::new(
                ViolationCode::IllegalUndeveloped,
                vec![e.id.clone()],
                format!("the undeveloped decorator cannot be applied to a {}", e.kind),
            ));
        }
    }

    for r in structure.relationships() {
        let ids = vec![r.source.clone(), r.target.clone()];
        if r.source == r.target {
            out.push(Violation::new(
                ViolationCode::SelfLoop,
                ids,
                format!("{} links `{}` to itself", r.kind, r.source),
            ));
            continue;
        }
        let (source, target) = match (structure.element(&r.source), structure.element(&r.target)) {
            (Some(s), Some(t)) => (s, t),
            _ => {
                out.push(Violation::new(
                    ViolationCode::DanglingEndpoint,
                    ids,
                    format!("{} refers to an element that does not exist", r.kind),
                ));
                continue;
            }
        };
        if r.kind.permits(source.kind, target.kind) {
            continue;
        }
        let code = match r.kind {
            RelationshipKind::SupportedBy if !source.kind.is_argument() => ViolationCode::IllegalSupportedBySource,
            RelationshipKind::SupportedBy => ViolationCode::IllegalSupportedByTarget,
            RelationshipKind::InContextOf if !source.kind.is_argument() => ViolationCode::IllegalInContextOfSource,
            RelationshipKind::InContextOf => ViolationCode::IllegalInContextOfTarget,
        };
        out.push(Violation::new(
            code,
            ids,
            format!("{} from {} to {} is not permitted", r.kind, source.kind, target.kind),
        ));
    }

    if let Some(cycle) = supported_by_cycle_members(structure) {
        out.push(Violation::new(
            ViolationCode::AcyclicityViolation,
            cycle,
            "SupportedBy relationships form a cycle",
        ));
    }

    let roots = structure.roots();
    match roots.as_slice() {
        [] => out.push(Violation::new(
            ViolationCode::NoRoot,
            vec![],
            "no goal is free of incoming SupportedBy links",
        )),
        [root] => {
            let unreachable = unreachable_from(structure, &root.id);
            if !unreachable.is_empty() {
                out.push(Violation::new(
                    ViolationCode::Unreachable,
                    unreachable,
                    format!("elements not reachable from root `{}`", root.id),
                ));
            }
        }
        many => out.push(Violation::new(
            ViolationCode::MultipleRoots,
            many.iter().map(|e| e.id.clone()).collect(),
            "more than one root goal",
        )),
    }

    for e in structure.elements().filter(|e| e.undeveloped) {
        let has_children = structure
            .outgoing(&e.id)
            .any(|r| r.kind == RelationshipKind::SupportedBy);
        if has_children {
            out.push(Violation::new(
                ViolationCode::UndevelopedWithChildren,
                vec![e.id.clone()],
                "element is marked undeveloped but has supporting elements",
            ));
        }
    }

    out.sort();
    out
}

/// Ids of elements lying on SupportedBy cycles (self-loops excluded), if any.
fn supported_by_cycle_members(structure: &GoalStructure) -> Option<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = structure.elements().map(|e| (e.id.as_str(), 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in structure.relationships() {
        if r.kind != RelationshipKind::SupportedBy || r.source == r.target {
            continue;
        }
        if !indegree.contains_key(r.source.as_str()) {
            continue;
        }
        if let Some(d) = indegree.get_mut(r.target.as_str()) {
            *d += 1;
            succ.entry(r.source.as_str()).or_default().push(r.target.as_str());
        }
    }
    let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
    while let Some(id) = queue.pop_front() {
        indegree.remove(id);
        for &next in succ.get(id).map(Vec::as_slice).unwrap_or_default() {
            if let Some(d) = indegree.get_mut(next) {
                *d -= 1;
                if *d == 0 {
                    queue.push_back(next);
                }
            }
        }
    }
    // Remaining nodes are on a cycle or downstream of one; keep only those
    // that can reach themselves.
    let remaining: BTreeSet<&str> = indegree.keys().copied().collect();
    if remaining.is_empty() {
        return None;
    }
    let on_cycle: Vec<String> = remaining
        .iter()
        .filter(|&&start| {
            let mut stack: Vec<&str> = succ.get(start).cloned().unwrap_or_default();
            let mut seen = BTreeSet::new();
            while let Some(n) = stack.pop() {
                if n == start {
                    return true;
                }
                if remaining.contains(n) && seen.insert(n) {
                    stack.extend(succ.get(n).map(Vec::as_slice).unwrap_or_default());
                }
            }
            false
        })
        .map(|s| s.to_string())
        .collect();
    Some(on_cycle)
}

fn unreachable_from(structure: &GoalStructure, root: &str) -> Vec<String> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue = VecDeque::from([root]);
    seen.insert(root);
    while let Some(id) = queue.pop_front() {
        for r in structure.outgoing(id) {
            if structure.element(&r.target).is_some() && seen.insert(r.target.as_str()) {
                queue.push_back(r.target.as_str());
            }
        }
    }
    structure
        .elements()
        .filter(|e| !seen.contains(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElementKind, GsnElement, GsnRelationship};

    fn el(id: &str, kind: ElementKind) -> GsnElement {
        GsnElement::new(id, kind, format!("statement of {id}"))
    }

    fn codes(v: &[Violation]) -> Vec<ViolationCode> {
        v.iter().map(|v| v.code).collect()
    }

    #[test]
    fn single_goal_is_valid() {
        let s = GoalStructure::new("one").with_element(el("G1", ElementKind::Goal)).unwrap();
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn goal_supported_by_context_is_illegal_target() {
        let s = GoalStructure::new("x")
            .with_element(el("G1", ElementKind::Goal))
            .unwrap()
            .with_element(el("C1", ElementKind::Context))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G1", "C1"));
        let v = validate(&s);
        assert_eq!(codes(&v), vec![ViolationCode::IllegalSupportedByTarget]);
        assert_eq!(v[0].ids, vec!["G1", "C1"]);
    }

    #[test]
    fn two_goal_cycle_detected() {
        let s = GoalStructure::new("x")
            .with_element(el("G1", ElementKind::Goal))
            .unwrap()
            .with_element(el("G2", ElementKind::Goal))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G1", "G2"))
            .with_relationship(GsnRelationship::supported_by("G2", "G1"));
        let v = validate(&s);
        let cyc = v.iter().find(|v| v.code == ViolationCode::AcyclicityViolation).unwrap();
        assert_eq!(cyc.ids, vec!["G1", "G2"]);
        assert!(codes(&v).contains(&ViolationCode::NoRoot));
    }

    #[test]
    fn cycle_excludes_downstream_nodes() {
        let s = GoalStructure::new("x")
            .with_element(el("G0", ElementKind::Goal))
            .unwrap()
            .with_element(el("G1", ElementKind::Goal))
            .unwrap()
            .with_element(el("G2", ElementKind::Goal))
            .unwrap()
            .with_element(el("G3", ElementKind::Goal))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G0", "G1"))
            .with_relationship(GsnRelationship::supported_by("G1", "G2"))
            .with_relationship(GsnRelationship::supported_by("G2", "G1"))
            .with_relationship(GsnRelationship::supported_by("G2", "G3"));
        let v = validate(&s);
        assert_eq!(codes(&v), vec![ViolationCode::AcyclicityViolation]);
        assert_eq!(v[0].ids, vec!["G1", "G2"]);
    }

    #[test]
    fn self_loop_and_dangling() {
        let s = GoalStructure::new("x")
            .with_element(el("G1", ElementKind::Goal))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G1", "G1"))
            .with_relationship(GsnRelationship::supported_by("G1", "G9"));
        assert_eq!(
            codes(&validate(&s)),
            vec![ViolationCode::SelfLoop, ViolationCode::DanglingEndpoint]
        );
    }

    #[test]
    fn multiple_roots_and_unreachable() {
        let s = GoalStructure::new("x")
            .with_element(el("G1", ElementKind::Goal))
            .unwrap()
            .with_element(el("G2", ElementKind::Goal))
            .unwrap();
        assert_eq!(codes(&validate(&s)), vec![ViolationCode::MultipleRoots]);

        let s = GoalStructure::new("x")
            .with_element(el("G1", ElementKind::Goal))
            .unwrap()
            .with_element(el("Sn1", ElementKind::Solution))
            .unwrap();
        let v = validate(&s);
        assert_eq!(codes(&v), vec![ViolationCode::Unreachable]);
        assert_eq!(v[0].ids, vec!["Sn1"]);
    }

    #[test]
    fn element_field_checks() {
        let s = GoalStructure::new(" padded")
            .with_element(GsnElement::new("G 1", ElementKind::Goal, "  "))
            .unwrap()
            .with_element(GsnElement::new("", ElementKind::Solution, "x").undeveloped())
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G 1", ""));
        assert_eq!(
            codes(&validate(&s)),
            vec![
                ViolationCode::InvalidName,
                ViolationCode::EmptyId,
                ViolationCode::MalformedId,
                ViolationCode::EmptyStatement,
                ViolationCode::IllegalUndeveloped,
            ]
        );
    }

    #[test]
    fn undeveloped_with_children_is_a_warning() {
        let s = GoalStructure::new("x")
            .with_element(el("G1", ElementKind::Goal).undeveloped())
            .unwrap()
            .with_element(el("Sn1", ElementKind::Solution))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G1", "Sn1"));
        let v = validate(&s);
        assert_eq!(codes(&v), vec![ViolationCode::UndevelopedWithChildren]);
        assert!(!has_errors(&v));
    }

    #[test]
    fn empty_structure() {
        assert_eq!(
            codes(&validate(&GoalStructure::new("e"))),
            vec![ViolationCode::EmptyStructure]
        );
    }
}
