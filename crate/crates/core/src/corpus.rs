//! Evaluation corpora: assurance cases, patterns, domain knowledge and the
//! ground truth linking each case to the patterns it was derived from.
//!
//! Directory layout:
//!
//! ```text
//! cases/*.gsn.txt       AssuranceCase documents
//! patterns/*.gsn.txt    Pattern documents
//! knowledge/*.toml      optional DomainKnowledge files
//! truth.toml            one table per case name
//! ```
//!
//! A `truth.toml` table lists the patterns the case was built from and,
//! optionally, the candidate patterns offered to the detector (defaults to
//! the same list):
//!
//! ```toml
//! ["BlueROV2"]
//! patterns = ["ALARP", "ReSonAte"]
//! candidates = ["ALARP", "ReSonAte", "Hazard avoidance"]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::codec::{parse, Document, ParseDiagnostic};
use crate::instantiation::DomainKnowledge;
use crate::model::{GoalStructure, PatternDocument};

pub const TRUTH_FILE: &str = "truth.toml";
pub const DOCUMENT_SUFFIX: &str = ".gsn.txt";

/// Mapping from case name to the names of the patterns it was derived from.
pub type GroundTruth = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {} error(s), first: {}", diagnostics.len(), diagnostics.first().map(ToString::to_string).unwrap_or_default())]
    Parse { path: PathBuf, diagnostics: Vec<ParseDiagnostic> },
    #[error("{path}: expected {expected} document")]
    WrongKind { path: PathBuf, expected: &'static str },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("duplicate {what} name `{name}`")]
    DuplicateName { what: &'static str, name: String },
    #[error("case `{0}` has no ground-truth entry")]
    MissingTruth(String),
    #[error("ground truth names unknown case `{0}`")]
    UnknownCase(String),
    #[error("case `{case}` refers to unknown pattern `{pattern}`")]
    UnknownPattern { case: String, pattern: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusCase {
    pub structure: GoalStructure,
    /// Patterns the case was derived from.
    pub truth: BTreeSet<String>,
    /// Patterns offered to the detector.
    pub candidates: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub cases: BTreeMap<String, CorpusCase>,
    pub patterns: BTreeMap<String, PatternDocument>,
    /// Keyed by system name.
    pub knowledge: BTreeMap<String, DomainKnowledge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthEntry {
    patterns: Vec<String>,
    #[serde(default)]
    candidates: Option<Vec<String>>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("cases/acas-xu.gsn.txt", include_str!("../corpus/cases/acas-xu.gsn.txt")),
    ("cases/bluerov2.gsn.txt", include_str!("../corpus/cases/bluerov2.gsn.txt")),
    ("cases/gpca.gsn.txt", include_str!("../corpus/cases/gpca.gsn.txt")),
    ("cases/im-software.gsn.txt", include_str!("../corpus/cases/im-software.gsn.txt")),
    ("cases/deepmind.gsn.txt", include_str!("../corpus/cases/deepmind.gsn.txt")),
    ("patterns/acas-xu-threat.gsn.txt", include_str!("../corpus/patterns/acas-xu-threat.gsn.txt")),
    ("patterns/alarp.gsn.txt", include_str!("../corpus/patterns/alarp.gsn.txt")),
    ("patterns/resonate.gsn.txt", include_str!("../corpus/patterns/resonate.gsn.txt")),
    ("patterns/gpca.gsn.txt", include_str!("../corpus/patterns/gpca.gsn.txt")),
    ("patterns/im-software.gsn.txt", include_str!("../corpus/patterns/im-software.gsn.txt")),
    ("patterns/deepmind.gsn.txt", include_str!("../corpus/patterns/deepmind.gsn.txt")),
    ("knowledge/acas-xu.toml", include_str!("../corpus/knowledge/acas-xu.toml")),
    ("knowledge/bluerov2.toml", include_str!("../corpus/knowledge/bluerov2.toml")),
    ("knowledge/gpca.toml", include_str!("../corpus/knowledge/gpca.toml")),
    ("knowledge/im-software.toml", include_str!("../corpus/knowledge/im-software.toml")),
    ("knowledge/deepmind.toml", include_str!("../corpus/knowledge/deepmind.toml")),
    ("truth.toml", include_str!("../corpus/truth.toml")),
];

fn parse_document(path: &Path, text: &str) -> Result<Document, CorpusError> {
    let outcome = parse(text);
    if outcome.has_errors() {
        return Err(CorpusError::Parse {
            path: path.to_path_buf(),
            diagnostics: outcome.errors().cloned().collect(),
        });
    }
    Ok(outcome.document)
}

impl Corpus {
    /// The reproduction corpus shipped with the crate: five systems, six patterns.
    pub fn bundled() -> Self {
        Self::from_sources(BUNDLED.iter().map(|(p, t)| (PathBuf::from(p), t.to_string())))
            .expect("bundled corpus is well formed")
    }

    /// Reads a corpus directory.
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let mut sources = Vec::new();
        for sub in ["cases", "patterns", "knowledge"] {
            let d = dir.join(sub);
            if !d.is_dir() {
                continue;
            }
            let entries = fs::read_dir(&d).map_err(|source| CorpusError::Io { path: d.clone(), source })?;
            let mut paths = Vec::new();
            for entry in entries {
                let entry = entry.map_err(|source| CorpusError::Io { path: d.clone(), source })?;
                paths.push(entry.path());
            }
            paths.sort();
            for path in paths {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                let wanted = if sub == "knowledge" {
                    name.ends_with(".toml")
                } else {
                    name.ends_with(DOCUMENT_SUFFIX)
                };
                if wanted {
                    let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    sources.push((PathBuf::from(sub).join(name), text));
                }
            }
        }
        let truth = dir.join(TRUTH_FILE);
        let text = fs::read_to_string(&truth).map_err(|source| CorpusError::Io { path: truth, source })?;
        sources.push((PathBuf::from(TRUTH_FILE), text));
        Self::from_sources(sources)
    }

    /// Builds a corpus from `(relative path, contents)` pairs laid out as in a
    /// corpus directory.
    pub fn from_sources(sources: impl IntoIterator<Item = (PathBuf, String)>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        let mut case_structures: BTreeMap<String, GoalStructure> = BTreeMap::new();
        let mut truth_text = None;
        for (path, text) in sources {
            let top = path.components().next().and_then(|c| c.as_os_str().to_str()).unwrap_or_default();
            match top {
                "cases" => match parse_document(&path, &text)? {
                    Document::AssuranceCase(s) => {
                        let name = s.name().to_string();
                        if case_structures.insert(name.clone(), s).is_some() {
                            return Err(CorpusError::DuplicateName { what: "case", name });
                        }
                    }
                    Document::Pattern(_) => {
                        return Err(CorpusError::WrongKind {
                            path,
                            expected: "an AssuranceCase",
                        })
                    }
                },
                "patterns" => match parse_document(&path, &text)? {
                    Document::Pattern(p) => {
                        let name = p.name().to_string();
                        if corpus.patterns.insert(name.clone(), p).is_some() {
                            return Err(CorpusError::DuplicateName { what: "pattern", name });
                        }
                    }
                    Document::AssuranceCase(_) => {
                        return Err(CorpusError::WrongKind {
                            path,
                            expected: "a Pattern",
                        })
                    }
                },
                "knowledge" => {
                    let k = DomainKnowledge::from_toml(&text).map_err(|e| CorpusError::Format {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                    let name = k.system.clone();
                    if corpus.knowledge.insert(name.clone(), k).is_some() {
                        return Err(CorpusError::DuplicateName { what: "knowledge", name });
                    }
                }
                _ if path == Path::new(TRUTH_FILE) => truth_text = Some((path, text)),
                _ => {}
            }
        }

        let (truth_path, truth_text) = truth_text.ok_or_else(|| CorpusError::Io {
            path: PathBuf::from(TRUTH_FILE),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing ground-truth file"),
        })?;
        let mut entries: BTreeMap<String, TruthEntry> =
            toml::from_str(&truth_text).map_err(|e| CorpusError::Format {
                path: truth_path,
                message: e.to_string(),
            })?;
        if let Some(unknown) = entries.keys().find(|k| !case_structures.contains_key(*k)) {
            return Err(CorpusError::UnknownCase(unknown.clone()));
        }
        for (name, structure) in case_structures {
            let entry = entries.remove(&name).ok_or_else(|| CorpusError::MissingTruth(name.clone()))?;
            let truth: BTreeSet<String> = entry.patterns.into_iter().collect();
            let candidates: BTreeSet<String> = match entry.candidates {
                Some(c) => c.into_iter().collect(),
                None => truth.clone(),
            };
            if let Some(p) = truth.iter().chain(&candidates).find(|p| !corpus.patterns.contains_key(*p)) {
                return Err(CorpusError::UnknownPattern {
                    case: name,
                    pattern: p.clone(),
                });
            }
            corpus.cases.insert(
                name,
                CorpusCase {
                    structure,
                    truth,
                    candidates,
                },
            );
        }
        Ok(corpus)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.cases.iter().map(|(n, c)| (n.clone(), c.truth.clone())).collect()
    }

    /// Offers every pattern in the corpus to every case.
    pub fn with_all_candidates(mut self) -> Self {
        let all: BTreeSet<String> = self.patterns.keys().cloned().collect();
        for case in self.cases.values_mut() {
            case.candidates = all.clone();
        }
        self
    }
}
