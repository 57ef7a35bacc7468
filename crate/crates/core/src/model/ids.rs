use std::collections::BTreeMap;

use super::{ElementKind, GoalStructure};

/// Hands out fresh ids per kind: G1, G2 … S1 … Sn1 … C1 … A1 … J1.
///
/// Counters start above the largest numeric suffix already present for the
/// kind's prefix, so ids stay unique after elements are deleted.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator {
    next: BTreeMap<ElementKind, u64>,
}

impl IdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seeded_from(structure: &GoalStructure) -> Self {
        let mut alloc = Self::new();
        for e in structure.elements() {
            for kind in ElementKind::ALL {
                if let Some(n) = numeric_suffix(&e.id, kind.id_prefix()) {
                    let slot = alloc.next.entry(kind).or_insert(1);
                    *slot = (*slot).max(n + 1);
                }
            }
        }
        alloc
    }

    pub fn next_id(&mut self, kind: ElementKind) -> String {
        let slot = self.next.entry(kind).or_insert(1);
        let id = format!("{}{}", kind.id_prefix(), slot);
        *slot += 1;
        id
    }
}

fn numeric_suffix(id: &str, prefix: &str) -> Option<u64> {
    let rest = id.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}
