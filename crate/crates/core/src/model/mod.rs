//! GSN domain model: elements, relationships, goal structures and patterns.
//!
//! A [`GoalStructure`] keeps its elements keyed by id and its relationships
//! as a set, so two structures compare equal regardless of insertion order.
//! Well-formedness is checked separately by [`validate`]; the builder methods
//! only reject what the representation itself cannot hold (duplicate ids).

mod ids;
mod placeholder;
mod stats;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ids::IdAllocator;
pub use placeholder::{extract_placeholders, is_valid_placeholder_name, scan_placeholders, PlaceholderError};
pub use stats::{statistics, StructureStats};
pub use validate::{has_errors, validate, Severity, Violation, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Goal,
    Strategy,
    Solution,
    Context,
    Assumption,
    Justification,
}

impl ElementKind {
    pub const ALL: [ElementKind; 6] = [
        ElementKind::Goal,
        ElementKind::Strategy,
        ElementKind::Solution,
        ElementKind::Context,
        ElementKind::Assumption,
        ElementKind::Justification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Goal => "Goal",
            ElementKind::Strategy => "Strategy",
            ElementKind::Solution => "Solution",
            ElementKind::Context => "Context",
            ElementKind::Assumption => "Assumption",
            ElementKind::Justification => "Justification",
        }
    }

    /// Conventional id prefix used by [`IdAllocator`].
    pub fn id_prefix(self) -> &'static str {
        match self {
            ElementKind::Goal => "G",
            ElementKind::Strategy => "S",
            ElementKind::Solution => "Sn",
            ElementKind::Context => "C",
            ElementKind::Assumption => "A",
            ElementKind::Justification => "J",
        }
    }

    /// Goals and strategies carry argument; everything else is a leaf.
    pub fn is_argument(self) -> bool {
        matches!(self, ElementKind::Goal | ElementKind::Strategy)
    }

    pub fn is_contextual(self) -> bool {
        matches!(
            self,
            ElementKind::Context | ElementKind::Assumption | ElementKind::Justification
        )
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown element kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for ElementKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationshipKind {
    SupportedBy,
    InContextOf,
}

impl RelationshipKind {
    pub const ALL: [RelationshipKind; 2] = [RelationshipKind::SupportedBy, RelationshipKind::InContextOf];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationshipKind::SupportedBy => "SupportedBy",
            RelationshipKind::InContextOf => "InContextOf",
        }
    }

    /// The relationship rule table: which (source, target) kind pairs are legal.
    pub fn permits(self, source: ElementKind, target: ElementKind) -> bool {
        use ElementKind::*;
        match self {
            RelationshipKind::SupportedBy => matches!(
                (source, target),
                (Goal, Goal) | (Goal, Strategy) | (Goal, Solution) | (Strategy, Goal)
            ),
            RelationshipKind::InContextOf => source.is_argument() && target.is_contextual(),
        }
    }
}

impl fmt::Display for RelationshipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationshipKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationshipKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GsnElement {
    pub id: String,
    pub kind: ElementKind,
    pub statement: String,
    #[serde(default)]
    pub undeveloped: bool,
}

impl GsnElement {
    pub fn new(id: impl Into<String>, kind: ElementKind, statement: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            statement: statement.into(),
            undeveloped: false,
        }
    }

    pub fn undeveloped(mut self) -> Self {
        self.undeveloped = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GsnRelationship {
    pub source: String,
    pub target: String,
    pub kind: RelationshipKind,
}

impl GsnRelationship {
    pub fn new(source: impl Into<String>, target: impl Into<String>, kind: RelationshipKind) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            kind,
        }
    }

    pub fn supported_by(parent: impl Into<String>, child: impl Into<String>) -> Self {
        Self::new(parent, child, RelationshipKind::SupportedBy)
    }

    pub fn in_context_of(source: impl Into<String>, context: impl Into<String>) -> Self {
        Self::new(source, context, RelationshipKind::InContextOf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Placeholder(#[from] PlaceholderError),
}

/// The diagrammatic form of an assurance case.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "StructureWire", try_from = "StructureWire")]
pub struct GoalStructure {
    name: String,
    elements: BTreeMap<String, GsnElement>,
    relationships: BTreeSet<GsnRelationship>,
}

impl GoalStructure {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn add_element(&mut self, element: GsnElement) -> Result<(), ModelError> {
        if self.elements.contains_key(&element.id) {
            return Err(ModelError::DuplicateId(element.id));
        }
        self.elements.insert(element.id.clone(), element);
        Ok(())
    }

    /// Inserts a relationship. Returns false if an identical one was already present.
    pub fn add_relationship(&mut self, relationship: GsnRelationship) -> bool {
        self.relationships.insert(relationship)
    }

    pub fn with_element(mut self, element: GsnElement) -> Result<Self, ModelError> {
        self.add_element(element)?;
        Ok(self)
    }

    pub fn with_relationship(mut self, relationship: GsnRelationship) -> Self {
        self.add_relationship(relationship);
        self
    }

    pub fn element(&self, id: &str) -> Option<&GsnElement> {
        self.elements.get(id)
    }

    /// Replaces the statement of `id`. Returns false if no such element exists.
    pub fn set_statement(&mut self, id: &str, statement: impl Into<String>) -> bool {
        match self.elements.get_mut(id) {
            Some(e) => {
                e.statement = statement.into();
                true
            }
            None => false,
        }
    }

    pub fn set_undeveloped(&mut self, id: &str, undeveloped: bool) -> bool {
        match self.elements.get_mut(id) {
            Some(e) => {
                e.undeveloped = undeveloped;
                true
            }
            None => false,
        }
    }

    /// Elements in id order.
    pub fn elements(&self) -> impl Iterator<Item = &GsnElement> {
        self.elements.values()
    }

    pub fn relationships(&self) -> impl Iterator<Item = &GsnRelationship> {
        self.relationships.iter()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn relationship_count(&self) -> usize {
        self.relationships.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Removes an element and every relationship touching it.
    pub fn remove_element(&mut self, id: &str) -> Option<GsnElement> {
        let removed = self.elements.remove(id)?;
        self.relationships.retain(|r| r.source != id && r.target != id);
        Some(removed)
    }

    pub fn remove_relationship(&mut self, relationship: &GsnRelationship) -> bool {
        self.relationships.remove(relationship)
    }

    /// Goals that are not the target of any SupportedBy link from another element, in id order.
    pub fn roots(&self) -> Vec<&GsnElement> {
        let supported: BTreeSet<&str> = self
            .relationships
            .iter()
            .filter(|r| r.kind == RelationshipKind::SupportedBy && r.source != r.target)
            .map(|r| r.target.as_str())
            .collect();
        self.elements
            .values()
            .filter(|e| e.kind == ElementKind::Goal && !supported.contains(e.id.as_str()))
            .collect()
    }

    /// The unique root, if exactly one exists.
    pub fn root(&self) -> Option<&GsnElement> {
        match self.roots().as_slice() {
            [only] => Some(only),
            _ => None,
        }
    }

    /// Outgoing relationships of `id`, ordered by (kind, target).
    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GsnRelationship> + 'a {
        self.relationships.iter().filter(move |r| r.source == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GsnRelationship> + 'a {
        self.relationships.iter().filter(move |r| r.target == id)
    }

    /// Element ids in breadth-first order from the root (children in id order),
    /// followed by any elements unreachable from it, in id order.
    pub fn breadth_first_ids(&self) -> Vec<&str> {
        let mut children: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for r in &self.relationships {
            if self.elements.contains_key(&r.target) {
                children.entry(r.source.as_str()).or_default().insert(r.target.as_str());
            }
        }
        let mut order = Vec::with_capacity(self.elements.len());
        let mut seen = BTreeSet::new();
        let mut queue = std::collections::VecDeque::new();
        for root in self.roots() {
            if seen.insert(root.id.as_str()) {
                queue.push_back(root.id.as_str());
            }
        }
        while let Some(id) = queue.pop_front() {
            order.push(id);
            if let Some(kids) = children.get(id) {
                for &kid in kids {
                    if seen.insert(kid) {
                        queue.push_back(kid);
                    }
                }
            }
        }
        for id in self.elements.keys() {
            if seen.insert(id.as_str()) {
                order.push(id.as_str());
            }
        }
        order
    }
}

/// JSON shape of a goal structure: element and relationship arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StructureWire {
    name: String,
    elements: Vec<GsnElement>,
    relationships: Vec<GsnRelationship>,
}

impl From<GoalStructure> for StructureWire {
    fn from(s: GoalStructure) -> Self {
        Self {
            name: s.name,
            elements: s.elements.into_values().collect(),
            relationships: s.relationships.into_iter().collect(),
        }
    }
}

impl TryFrom<StructureWire> for GoalStructure {
    type Error = ModelError;

    fn try_from(wire: StructureWire) -> Result<Self, Self::Error> {
        let mut structure = GoalStructure::new(wire.name);
        for e in wire.elements {
            structure.add_element(e)?;
        }
        for r in wire.relationships {
            structure.add_relationship(r);
        }
        Ok(structure)
    }
}

/// A goal structure whose statements contain `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PatternWire", try_from = "PatternWire")]
pub struct PatternDocument {
    structure: GoalStructure,
    placeholders: BTreeSet<String>,
}

impl PatternDocument {
    /// Wraps a structure, deriving its placeholder set.
    pub fn new(structure: GoalStructure) -> Result<Self, PlaceholderError> {
        let placeholders = extract_placeholders(&structure)?;
        Ok(Self {
            structure,
            placeholders,
        })
    }

    /// Derives placeholders from well-formed tokens only; malformed braces are ignored.
    pub(crate) fn lenient(structure: GoalStructure) -> Self {
        let placeholders = structure
            .elements()
            .flat_map(|e| scan_placeholders(&e.statement).names)
            .collect();
        Self {
            structure,
            placeholders,
        }
    }

    pub fn structure(&self) -> &GoalStructure {
        &self.structure
    }

    pub fn into_structure(self) -> GoalStructure {
        self.structure
    }

    pub fn name(&self) -> &str {
        self.structure.name()
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PatternWire {
    structure: GoalStructure,
    placeholders: BTreeSet<String>,
}

impl From<PatternDocument> for PatternWire {
    fn from(p: PatternDocument) -> Self {
        Self {
            structure: p.structure,
            placeholders: p.placeholders,
        }
    }
}

impl TryFrom<PatternWire> for PatternDocument {
    type Error = ModelError;

    fn try_from(wire: PatternWire) -> Result<Self, Self::Error> {
        let doc = PatternDocument::new(wire.structure)?;
        if doc.placeholders != wire.placeholders {
            return Err(ModelError::Placeholder(PlaceholderError::SetMismatch {
                declared: wire.placeholders.into_iter().collect(),
                found: doc.placeholders.into_iter().collect(),
            }));
        }
        Ok(doc)
    }
}
