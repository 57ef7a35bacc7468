use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{scan_placeholders, ElementKind, GoalStructure};

/// Size figures of a goal structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureStats {
    pub elements: usize,
    pub relationships: usize,
    pub per_kind: BTreeMap<ElementKind, usize>,
    pub placeholders: usize,
    pub undeveloped: usize,
}

/// Counts elements, relationships, kinds and distinct well-formed placeholders.
pub fn statistics(structure: &GoalStructure) -> StructureStats {
    let mut per_kind: BTreeMap<ElementKind, usize> = ElementKind::ALL.into_iter().map(|k| (k, 0)).collect();
    let mut names = BTreeSet::new();
    let mut undeveloped = 0;
    for e in structure.elements() {
        *per_kind.entry(e.kind).or_default() += 1;
        names.extend(scan_placeholders(&e.statement).names);
        undeveloped += usize::from(e.undeveloped);
    }
    StructureStats {
        elements: structure.element_count(),
        relationships: structure.relationship_count(),
        per_kind,
        placeholders: names.len(),
        undeveloped,
    }
}
