use std::collections::BTreeSet;

use thiserror::Error;

use super::GoalStructure;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlaceholderError {
    #[error("unmatched `{{` at offset {offset} in element `{element}`")]
    UnclosedBrace { element: String, offset: usize },
    #[error("unmatched `}}` at offset {offset} in element `{element}`")]
    StrayClosingBrace { element: String, offset: usize },
    #[error("invalid placeholder name `{name}` in element `{element}`")]
    InvalidName { element: String, name: String },
    #[error("declared placeholders {declared:?} differ from those found {found:?}")]
    SetMismatch { declared: Vec<String>, found: Vec<String> },
}

/// A malformed brace found while scanning a statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanIssue {
    Unclosed { offset: usize },
    StrayClose { offset: usize },
    InvalidName { offset: usize, name: String },
}

impl ScanIssue {
    pub fn offset(&self) -> usize {
        match self {
            ScanIssue::Unclosed { offset }
            | ScanIssue::StrayClose { offset }
            | ScanIssue::InvalidName { offset, .. } => *offset,
        }
    }

    fn into_error(self, element: &str) -> PlaceholderError {
        let element = element.to_string();
        match self {
            ScanIssue::Unclosed { offset } => PlaceholderError::UnclosedBrace { element, offset },
            ScanIssue::StrayClose { offset } => PlaceholderError::StrayClosingBrace { element, offset },
            ScanIssue::InvalidName { name, .. } => PlaceholderError::InvalidName { element, name },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scan {
    /// Well-formed names in order of appearance (may repeat).
    pub names: Vec<String>,
    pub issues: Vec<ScanIssue>,
}

/// Placeholder names are `[A-Za-z0-9_ -]+` with at least one non-space character.
pub fn is_valid_placeholder_name(name: &str) -> bool {
    !name.trim().is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | ' ' | '-'))
}

/// Scans `text` for `{name}` tokens. Offsets are byte offsets into `text`.
pub fn scan_placeholders(text: &str) -> Scan {
    let mut scan = Scan::default();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '{' => {
                if let Some(prev) = open.replace(i) {
                    scan.issues.push(ScanIssue::Unclosed { offset: prev });
                }
            }
            '}' => match open.take() {
                Some(start) => {
                    let name = &text[start + 1..i];
                    if is_valid_placeholder_name(name) {
                        scan.names.push(name.to_string());
                    } else {
                        scan.issues.push(ScanIssue::InvalidName {
                            offset: start,
                            name: name.to_string(),
                        });
                    }
                }
                None => scan.issues.push(ScanIssue::StrayClose { offset: i }),
            },
            _ => {}
        }
    }
    if let Some(start) = open {
        scan.issues.push(ScanIssue::Unclosed { offset: start });
    }
    scan
}

/// All distinct placeholder names across the statements of `structure`.
pub fn extract_placeholders(structure: &GoalStructure) -> Result<BTreeSet<String>, PlaceholderError> {
    let mut names = BTreeSet::new();
    for element in structure.elements() {
        let scan = scan_placeholders(&element.statement);
        if let Some(issue) = scan.issues.into_iter().next() {
            return Err(issue.into_error(&element.id));
        }
        names.extend(scan.names);
    }
    Ok(names)
}
