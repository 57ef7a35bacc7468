//! proptest strategies for well-formed goal structures and patterns.
//!
//! Enabled with the `proptest` feature; used by the property suites of this
//! crate and its dependants.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;

use chrono::DateTime;

use crate::detection::{EvaluationReport, EvaluationRow, DETERMINISTIC};
use crate::instantiation::{substitute, DomainKnowledge};
use crate::model::{ElementKind, GoalStructure, GsnElement, GsnRelationship, IdAllocator, PatternDocument, RelationshipKind};
use crate::persistence::Project;

/// Placeholder names drawn on by [`pattern`].
pub const PLACEHOLDER_POOL: &[&str] = &[
    "System",
    "Hazard",
    "Asset",
    "Mitigation",
    "Operating Context",
    "Risk_Model",
    "Standard-2",
    "Evidence Item",
];

#[derive(Debug, Clone)]
struct NodeSpec {
    kind: ElementKind,
    parent: u32,
    statement: String,
    undeveloped: bool,
}

fn kind() -> impl Strategy<Value = ElementKind> {
    prop_oneof![
        4 => Just(ElementKind::Goal),
        2 => Just(ElementKind::Strategy),
        3 => Just(ElementKind::Solution),
        1 => Just(ElementKind::Context),
        1 => Just(ElementKind::Assumption),
        1 => Just(ElementKind::Justification),
    ]
}

pub fn structure_name() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 _-]{0,15}[A-Za-z0-9]"
}

/// Free text without braces, including characters the codec has to escape.
pub fn case_statement() -> impl Strategy<Value = String> {
    r#"[A-Za-z0-9][A-Za-z0-9 ,.;:'"\\()\n\t-]{0,30}"#
}

pub fn words() -> impl Strategy<Value = String> {
    "[a-z]{1,8}( [a-z]{1,8}){0,3}"
}

/// Words interleaved with `{placeholder}` tokens from [`PLACEHOLDER_POOL`].
pub fn pattern_statement() -> impl Strategy<Value = String> {
    let token = prop_oneof![
        2 => "[a-z]{1,8}",
        1 => proptest::sample::select(PLACEHOLDER_POOL).prop_map(|p| format!("{{{p}}}")),
    ];
    vec(token, 1..8).prop_map(|t| t.join(" "))
}

fn build(name: String, root: String, nodes: Vec<NodeSpec>, extra: Vec<(u32, u32)>) -> GoalStructure {
    let mut ids = IdAllocator::new();
    let mut s = GoalStructure::new(name);
    let mut order: Vec<(String, ElementKind)> = Vec::new();
    let root_id = ids.next_id(ElementKind::Goal);
    s.add_element(GsnElement::new(root_id.clone(), ElementKind::Goal, root))
        .expect("fresh id");
    order.push((root_id, ElementKind::Goal));

    let relation_for = |k: ElementKind| {
        if k.is_contextual() {
            RelationshipKind::InContextOf
        } else {
            RelationshipKind::SupportedBy
        }
    };
    let mut flagged = Vec::new();
    for node in nodes {
        let rel = relation_for(node.kind);
        let parents: Vec<&String> = order
            .iter()
            .filter(|(_, k)| rel.permits(*k, node.kind))
            .map(|(id, _)| id)
            .collect();
        let parent = parents[node.parent as usize % parents.len()].clone();
        let id = ids.next_id(node.kind);
        s.add_element(GsnElement::new(id.clone(), node.kind, node.statement))
            .expect("fresh id");
        s.add_relationship(GsnRelationship::new(parent, id.clone(), rel));
        if node.undeveloped {
            flagged.push(id.clone());
        }
        order.push((id, node.kind));
    }
    // Extra edges always run from an earlier element to a later one, so the
    // SupportedBy graph stays acyclic and the root keeps no parents.
    for (a, b) in extra {
        let (i, j) = (a as usize % order.len(), b as usize % order.len());
        if i >= j {
            continue;
        }
        let (src, sk) = &order[i];
        let (dst, dk) = &order[j];
        let rel = relation_for(*dk);
        if rel.permits(*sk, *dk) {
            s.add_relationship(GsnRelationship::new(src.clone(), dst.clone(), rel));
        }
    }
    for id in flagged {
        let is_leaf_argument = s.element(&id).is_some_and(|e| e.kind.is_argument())
            && !s.outgoing(&id).any(|r| r.kind == RelationshipKind::SupportedBy);
        if is_leaf_argument {
            s.set_undeveloped(&id, true);
        }
    }
    s
}

fn structure_with<S: Strategy<Value = String>>(
    statement: fn() -> S,
    max_nodes: usize,
) -> impl Strategy<Value = GoalStructure> {
    let node = (kind(), any::<u32>(), statement(), proptest::bool::weighted(0.2)).prop_map(
        |(kind, parent, statement, undeveloped)| NodeSpec {
            kind,
            parent,
            statement,
            undeveloped,
        },
    );
    (
        structure_name(),
        statement(),
        vec(node, 0..max_nodes),
        vec((any::<u32>(), any::<u32>()), 0..4),
    )
        .prop_map(|(name, root, nodes, extra)| build(name, root, nodes, extra))
}

/// A valid assurance case of 1 to `max_nodes` elements.
pub fn structure(max_nodes: usize) -> impl Strategy<Value = GoalStructure> {
    structure_with(case_statement, max_nodes)
}

/// A valid pattern whose statements use names from [`PLACEHOLDER_POOL`].
pub fn pattern(max_nodes: usize) -> impl Strategy<Value = PatternDocument> {
    structure_with(pattern_statement, max_nodes)
        .prop_map(|s| PatternDocument::new(s).expect("pool names are valid"))
}

/// A value for every name in [`PLACEHOLDER_POOL`].
pub fn full_bindings() -> impl Strategy<Value = BTreeMap<String, String>> {
    vec(words(), PLACEHOLDER_POOL.len()).prop_map(|values| {
        PLACEHOLDER_POOL
            .iter()
            .map(|p| p.to_string())
            .zip(values)
            .collect()
    })
}

/// A pattern and a case derived from it: full substitution followed by up
/// to three extra goals under the root.
pub fn derived_pair(max_nodes: usize) -> impl Strategy<Value = (PatternDocument, GoalStructure)> {
    (pattern(max_nodes), full_bindings(), vec(words(), 0..3)).prop_map(|(p, bindings, extra)| {
        let mut case = substitute(&p, &bindings);
        let root = case.root().expect("single root").id.clone();
        let mut ids = IdAllocator::seeded_from(&case);
        for text in extra {
            let id = ids.next_id(ElementKind::Goal);
            case.add_element(GsnElement::new(id.clone(), ElementKind::Goal, text))
                .expect("fresh id");
            case.add_relationship(GsnRelationship::supported_by(root.clone(), id));
        }
        (p, case)
    })
}

pub fn knowledge() -> impl Strategy<Value = DomainKnowledge> {
    (
        structure_name(),
        vec(case_statement(), 0..3),
        proptest::collection::btree_map(proptest::sample::select(PLACEHOLDER_POOL), words(), 0..4),
    )
        .prop_map(|(system, facts, bindings)| DomainKnowledge {
            system,
            facts,
            bindings: bindings.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
}

pub fn report() -> impl Strategy<Value = EvaluationReport<f64>> {
    let row = (structure_name(), 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 1usize..6).prop_map(
        |(system, threshold, recall, precision, f_measure, runs)| EvaluationRow {
            system,
            backend: DETERMINISTIC.to_string(),
            threshold,
            recall,
            precision,
            f_measure,
            runs,
            error: None,
        },
    );
    (vec(0.0f64..=1.0, 1..4), 1usize..6, vec(row, 0..4)).prop_map(|(thresholds, runs, rows)| EvaluationReport {
        thresholds,
        runs,
        rows,
    })
}

/// A valid project with up to three documents of each kind.
pub fn project() -> impl Strategy<Value = Project> {
    use proptest::collection::btree_map;
    (
        structure_name(),
        0i64..4_000_000_000,
        0i64..1_000_000_000,
        0u32..1_000_000_000,
        btree_map(structure_name(), structure(10), 0..3),
        btree_map(structure_name(), pattern(8), 0..3),
        btree_map(structure_name(), knowledge(), 0..2),
        btree_map(structure_name(), report(), 0..2),
    )
        .prop_map(|(name, created, delta, nanos, cases, patterns, knowledge, reports)| {
            let created = DateTime::from_timestamp(created, nanos).expect("in range");
            let modified = created + chrono::Duration::seconds(delta);
            let mut p = Project::with_timestamps(name, created, modified);
            p.cases = cases;
            p.patterns = patterns;
            p.knowledge = knowledge;
            p.reports = reports;
            p
        })
}
