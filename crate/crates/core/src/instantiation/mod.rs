//! Pattern instantiation: deterministic placeholder substitution, prompt
//! construction, and generation through a chat-completion backend.

mod backend;
mod prompt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{parse, CodecError, ParseDiagnostic, ASSURANCE_CASE_HEADER, PATTERN_HEADER};
use crate::model::{is_valid_placeholder_name, scan_placeholders, GoalStructure, PatternDocument};

pub use backend::{
    BackendError, Bounded, ChatCompletionBackend, FixedReplyBackend, GenerationBackend, GenerationBackendConfig,
    DEFAULT_CREDENTIAL_ENV, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
pub use prompt::{build_prompt, parse_verdict, rule_text, PromptPair, PromptTask};

/// System-specific facts and placeholder bindings used to instantiate a pattern.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainKnowledge {
    pub system: String,
    #[serde(default)]
    pub facts: Vec<String>,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("binding key `{0}` is not a valid placeholder name")]
    InvalidBindingKey(String),
    #[error("knowledge file: {0}")]
    Format(String),
}

impl DomainKnowledge {
    pub fn new(system: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            ..Self::default()
        }
    }

    pub fn with_fact(mut self, fact: impl Into<String>) -> Self {
        self.facts.push(fact.into());
        self
    }

    pub fn with_binding(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.bindings.insert(name.into(), value.into());
        self
    }

    pub fn check(&self) -> Result<(), KnowledgeError> {
        match self.bindings.keys().find(|k| !is_valid_placeholder_name(k)) {
            Some(bad) => Err(KnowledgeError::InvalidBindingKey(bad.clone())),
            None => Ok(()),
        }
    }

    /// Reads the TOML knowledge format: `system`, `facts` and a `[bindings]` table.
    pub fn from_toml(text: &str) -> Result<Self, KnowledgeError> {
        let k: Self = toml::from_str(text).map_err(|e| KnowledgeError::Format(e.to_string()))?;
        k.check()?;
        Ok(k)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("knowledge is always representable as TOML")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstantiationError {
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error(transparent)]
    InvalidPattern(#[from] CodecError),
    #[error("generation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("generation backend refused the request: {0}")]
    BackendRefusal(String),
    #[error("backend reply could not be parsed ({} diagnostic(s))", diagnostics.len())]
    ReplyUnparseable {
        raw_reply: String,
        diagnostics: Vec<ParseDiagnostic>,
    },
}

impl From<BackendError> for InstantiationError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Refusal(msg) => InstantiationError::BackendRefusal(msg),
            other => InstantiationError::BackendUnavailable(other.to_string()),
        }
    }
}

/// Replaces every bound `{name}` in `text`. Unbound names, blank bindings and
/// malformed braces are left as they are.
pub fn replace_placeholders(text: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let nested = after.find('{');
        match close {
            Some(c) if nested.is_none_or(|n| n > c) => {
                let name = &after[..c];
                match bindings.get(name) {
                    Some(value) if is_valid_placeholder_name(name) && !value.trim().is_empty() => {
                        out.push_str(value)
                    }
                    _ => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[c + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Instantiates `pattern` by substituting `bindings` into every statement.
///
/// Ids, kinds and relationships are untouched. A Goal or Strategy whose
/// statement still holds a placeholder afterwards is marked undeveloped.
pub fn substitute(pattern: &PatternDocument, bindings: &BTreeMap<String, String>) -> GoalStructure {
    let mut out = pattern.structure().clone();
    let name = replace_placeholders(pattern.name(), bindings);
    if !name.chars().any(char::is_control) {
        out.set_name(name);
    }
    let updates: Vec<(String, String, bool)> = out
        .elements()
        .map(|e| {
            let text = replace_placeholders(&e.statement, bindings);
            let open = e.kind.is_argument() && !scan_placeholders(&text).names.is_empty();
            (e.id.clone(), text, open)
        })
        .collect();
    for (id, text, open) in updates {
        out.set_statement(&id, text);
        if open {
            out.set_undeveloped(&id, true);
        }
    }
    out
}

/// A case produced by a generation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCase {
    pub structure: GoalStructure,
    pub diagnostics: Vec<ParseDiagnostic>,
    /// Unmodified backend reply, kept for manual refinement.
    pub raw_reply: String,
}

impl GeneratedCase {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.severity == crate::model::Severity::Error)
    }
}

const REFUSAL_MARKERS: &[&str] = &[
    "i'm sorry",
    "i am sorry",
    "i cannot",
    "i can't",
    "i can not",
    "i won't",
    "unable to help",
    "unable to comply",
    "cannot assist",
];

fn looks_like_refusal(reply: &str) -> bool {
    let lower = reply.to_lowercase();
    !reply.contains('(') && REFUSAL_MARKERS.iter().any(|m| lower.contains(m))
}

/// Strips a surrounding Markdown code fence and makes sure a header is present.
fn normalize_reply(reply: &str, system: &str) -> String {
    let mut lines: Vec<&str> = reply.lines().filter(|l| !l.trim_start().starts_with("```")).collect();
    while lines.first().is_some_and(|l| l.trim().is_empty()) {
        lines.remove(0);
    }
    let has_header = lines.iter().any(|l| {
        let t = l.trim_start();
        t.starts_with(ASSURANCE_CASE_HEADER) || t.starts_with(PATTERN_HEADER)
    });
    let mut text = String::new();
    if !has_header {
        text.push_str(ASSURANCE_CASE_HEADER);
        if !system.trim().is_empty() {
            text.push(' ');
            text.push_str(system.trim());
        }
        text.push('\n');
    }
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    text
}

/// Asks `backend` to instantiate `pattern` for the system in `knowledge` and
/// parses the structured-prose reply.
pub fn generate_case(
    pattern: &PatternDocument,
    knowledge: &DomainKnowledge,
    backend: &dyn GenerationBackend,
) -> Result<GeneratedCase, InstantiationError> {
    let prompt = build_prompt::<f64>(PromptTask::Instantiate, pattern, None, Some(knowledge), None)?;
    let reply = backend.complete(&prompt)?;
    if looks_like_refusal(&reply) {
        return Err(InstantiationError::BackendRefusal(reply.chars().take(200).collect()));
    }
    let outcome = parse(&normalize_reply(&reply, &knowledge.system));
    let has_errors = outcome.has_errors();
    let structure = outcome.document.into_structure();
    if structure.is_empty() && has_errors {
        return Err(InstantiationError::ReplyUnparseable {
            raw_reply: reply,
            diagnostics: outcome.diagnostics,
        });
    }
    Ok(GeneratedCase {
        structure,
        diagnostics: outcome.diagnostics,
        raw_reply: reply,
    })
}
