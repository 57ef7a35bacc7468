use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::GoalStructure;

pub const NODE_WIDTH: f64 = 200.0;
pub const NODE_HEIGHT: f64 = 80.0;
const H_GAP: f64 = 40.0;
const V_GAP: f64 = 70.0;
const MARGIN: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlacement {
    pub id: String,
    /// Longest-path depth from the root.
    pub rank: usize,
    /// Position within the rank, left to right.
    pub order: usize,
    /// Centre x.
    pub x: f64,
    /// Top y.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub nodes: Vec<NodePlacement>,
    pub width: f64,
    pub height: f64,
}

impl Layout {
    pub fn node(&self, id: &str) -> Option<&NodePlacement> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

/// Layered layout: rank by longest path over all relationships, order each
/// rank by the barycentre of its parents' x positions (ties by id).
pub fn layered_layout(structure: &GoalStructure) -> Layout {
    let ids: Vec<&str> = structure.elements().map(|e| e.id.as_str()).collect();
    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|&id| (id, 0)).collect();
    for r in structure.relationships() {
        let (s, t) = (r.source.as_str(), r.target.as_str());
        if s == t || !indegree.contains_key(s) || !indegree.contains_key(t) {
            continue;
        }
        parents.entry(t).or_default().push(s);
        children.entry(s).or_default().push(t);
        *indegree.get_mut(t).unwrap() += 1;
    }

    let mut rank: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
    for &id in &queue {
        rank.insert(id, 0);
    }
    while let Some(id) = queue.pop_front() {
        let next_rank = rank[id] + 1;
        for &c in children.get(id).map(Vec::as_slice).unwrap_or_default() {
            let slot = rank.entry(c).or_insert(0);
            *slot = (*slot).max(next_rank);
            let d = indegree.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push_back(c);
            }
        }
    }
    // Nodes on a cycle never reach indegree zero; park them below everything else.
    let overflow = rank.values().copied().max().map_or(0, |m| m + 1);
    for &id in &ids {
        if indegree[id] > 0 {
            rank.insert(id, overflow);
        }
    }

    let depth = rank.values().copied().max().map_or(0, |m| m + 1);
    let mut layers: Vec<Vec<&str>> = vec![Vec::new(); depth];
    for &id in &ids {
        layers[rank[id]].push(id);
    }
    let widest = layers.iter().map(Vec::len).max().unwrap_or(0);
    let step = NODE_WIDTH + H_GAP;

    let mut x_of: BTreeMap<&str, f64> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(ids.len());
    for (r, layer) in layers.iter_mut().enumerate() {
        if r > 0 {
            let bary = |id: &str| -> f64 {
                let ps: Vec<f64> = parents
                    .get(id)
                    .into_iter()
                    .flatten()
                    .filter_map(|p| x_of.get(p).copied())
                    .collect();
                if ps.is_empty() {
                    f64::INFINITY
                } else {
                    ps.iter().sum::<f64>() / ps.len() as f64
                }
            };
            let mut keyed: Vec<(f64, &str)> = layer.iter().map(|&id| (bary(id), id)).collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            *layer = keyed.into_iter().map(|(_, id)| id).collect();
        }
        let offset = (widest - layer.len()) as f64 * step / 2.0;
        for (i, &id) in layer.iter().enumerate() {
            let x = MARGIN + NODE_WIDTH / 2.0 + offset + i as f64 * step;
            let y = MARGIN + r as f64 * (NODE_HEIGHT + V_GAP);
            x_of.insert(id, x);
            nodes.push(NodePlacement {
                id: id.to_string(),
                rank: r,
                order: i,
                x,
                y,
            });
        }
    }

    let width = 2.0 * MARGIN + widest as f64 * step - if widest > 0 { H_GAP } else { 0.0 };
    let height = 2.0 * MARGIN + depth as f64 * (NODE_HEIGHT + V_GAP) - if depth > 0 { V_GAP } else { 0.0 };
    Layout { nodes, width, height }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElementKind, GsnElement, GsnRelationship};

    #[test]
    fn longest_path_rank_wins() {
        // G1 -> G2 -> G3 and G1 -> G3: G3 sits at depth 2, not 1.
        let s = GoalStructure::new("x")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "a"))
            .unwrap()
            .with_element(GsnElement::new("G2", ElementKind::Goal, "b"))
            .unwrap()
            .with_element(GsnElement::new("G3", ElementKind::Goal, "c"))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G1", "G2"))
            .with_relationship(GsnRelationship::supported_by("G2", "G3"))
            .with_relationship(GsnRelationship::supported_by("G1", "G3"));
        let l = layered_layout(&s);
        assert_eq!(l.node("G3").unwrap().rank, 2);
        assert!(l.node("G3").unwrap().y > l.node("G2").unwrap().y);
    }

    #[test]
    fn barycentre_keeps_children_under_parents() {
        let s = GoalStructure::new("x")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "root"))
            .unwrap()
            .with_element(GsnElement::new("G2", ElementKind::Goal, "left"))
            .unwrap()
            .with_element(GsnElement::new("G3", ElementKind::Goal, "right"))
            .unwrap()
            .with_element(GsnElement::new("Sn1", ElementKind::Solution, "under right"))
            .unwrap()
            .with_element(GsnElement::new("Sn2", ElementKind::Solution, "under left"))
            .unwrap()
            .with_relationship(GsnRelationship::supported_by("G1", "G2"))
            .with_relationship(GsnRelationship::supported_by("G1", "G3"))
            .with_relationship(GsnRelationship::supported_by("G3", "Sn1"))
            .with_relationship(GsnRelationship::supported_by("G2", "Sn2"));
        let l = layered_layout(&s);
        assert_eq!(l.node("Sn2").unwrap().order, 0);
        assert_eq!(l.node("Sn1").unwrap().order, 1);
    }
}
