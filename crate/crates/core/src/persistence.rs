//! Local project store with content-addressed revision history.
//!
//! Layout of a store root:
//!
//! ```text
//! <root>/<project-dir>/
//!   project.json            metadata, knowledge, reports, case/pattern file index
//!   cases/<slug>.gsn.txt    structured prose, one file per case
//!   patterns/<slug>.gsn.txt
//!   HEAD                    id of the latest revision
//!   revisions.log           one `<id> <modified>` line per new revision
//!   revisions/<id>/         full snapshot of the files above plus MANIFEST
//!   .lock                   present while a writer is active
//! ```
//!
//! `MANIFEST` lists `<sha256>  <path>` per snapshot file, sorted by path
//! (the `sha256sum` format), and the revision id is the SHA-256 of the
//! MANIFEST itself. Loading always reads a snapshot and checks every hash;
//! the top-level files only mirror HEAD for diffing and review.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use log::{debug, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{parse, serialize_case, serialize_pattern, CodecError, Document};
use crate::detection::EvaluationReport;
use crate::instantiation::DomainKnowledge;
use crate::model::{GoalStructure, PatternDocument};

/// Environment variable naming the default store root.
pub const STORE_ENV: &str = "GSNKIT_STORE";
pub const PROJECT_FILE: &str = "project.json";
pub const MANIFEST_FILE: &str = "MANIFEST";
const HEAD_FILE: &str = "HEAD";
const LOG_FILE: &str = "revisions.log";
const LOCK_FILE: &str = ".lock";
const REVISIONS_DIR: &str = "revisions";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistenceError {
    #[error("store location {path} is not writable: {source}")]
    StoreUnwritable { path: PathBuf, source: io::Error },
    #[error("{0} not found")]
    NotFound(String),
    #[error("corrupt store at {path}: {reason}")]
    CorruptStore { path: PathBuf, reason: String },
    #[error("project is locked by another writer ({0}); remove the file if no writer is running")]
    Locked(PathBuf),
    #[error("{what} `{name}` cannot be stored: {source}")]
    InvalidStructure {
        what: &'static str,
        name: String,
        source: CodecError,
    },
    #[error("invalid project: {0}")]
    InvalidProject(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// A named collection of cases, patterns, domain knowledge and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub name: String,
    pub created: DateTime<Utc>,
    pub modified: DateTime<Utc>,
    pub cases: BTreeMap<String, GoalStructure>,
    pub patterns: BTreeMap<String, PatternDocument>,
    pub knowledge: BTreeMap<String, DomainKnowledge>,
    pub reports: BTreeMap<String, EvaluationReport<f64>>,
}

impl Project {
    pub fn new(name: impl Into<String>) -> Self {
        let now = Utc::now();
        Self::with_timestamps(name, now, now)
    }

    pub fn with_timestamps(name: impl Into<String>, created: DateTime<Utc>, modified: DateTime<Utc>) -> Self {
        Self {
            name: name.into(),
            created,
            modified,
            cases: BTreeMap::new(),
            patterns: BTreeMap::new(),
            knowledge: BTreeMap::new(),
            reports: BTreeMap::new(),
        }
    }

    /// Bumps `modified` to now, never moving it backwards.
    pub fn touch(&mut self) {
        self.modified = self.modified.max(Utc::now());
    }

    pub fn check(&self) -> Result<(), PersistenceError> {
        if self.name.trim().is_empty() || self.name.chars().any(char::is_control) {
            return Err(PersistenceError::InvalidProject(format!(
                "project name `{}` must be non-blank and single-line",
                self.name.escape_debug()
            )));
        }
        if self.modified < self.created {
            return Err(PersistenceError::InvalidProject("modified timestamp precedes created".into()));
        }
        for name in self.cases.keys().chain(self.patterns.keys()) {
            if name.trim().is_empty() || name.chars().any(char::is_control) {
                return Err(PersistenceError::InvalidProject(format!(
                    "document name `{}` must be non-blank and single-line",
                    name.escape_debug()
                )));
            }
        }
        Ok(())
    }
}

/// A content-hash revision id (64 lowercase hex digits).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RevisionId(String);

impl RevisionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RevisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a revision id")]
pub struct InvalidRevisionId(String);

impl FromStr for RevisionId {
    type Err = InvalidRevisionId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(Self(s.to_string()))
        } else {
            Err(InvalidRevisionId(s.to_string()))
        }
    }
}

impl TryFrom<String> for RevisionId {
    type Error = InvalidRevisionId;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RevisionId> for String {
    fn from(id: RevisionId) -> Self {
        id.0
    }
}

/// Which snapshot to load.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Revision {
    #[default]
    Latest,
    Id(RevisionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub id: RevisionId,
    pub modified: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectFile {
    format: u32,
    name: String,
    created: DateTime<Utc>,
    modified: DateTime<Utc>,
    cases: BTreeMap<String, String>,
    patterns: BTreeMap<String, String>,
    knowledge: BTreeMap<String, DomainKnowledge>,
    reports: BTreeMap<String, EvaluationReport<f64>>,
}

/// Lowercase ASCII slug used for directory and file names.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("unnamed");
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistenceError + '_ {
    move |source| PersistenceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Assigns unique file names per document, in name order.
fn file_names(names: impl Iterator<Item = String>, dir: &str) -> BTreeMap<String, String> {
    let mut used = BTreeSet::new();
    let mut out = BTreeMap::new();
    for name in names {
        let base = slug(&name);
        let mut candidate = base.clone();
        let mut n = 2;
        while !used.insert(candidate.clone()) {
            candidate = format!("{base}-{n}");
            n += 1;
        }
        out.insert(name, format!("{dir}/{candidate}.gsn.txt"));
    }
    out
}

/// Renders the snapshot files of `project`, keyed by relative path.
fn render(project: &Project) -> Result<BTreeMap<String, Vec<u8>>, PersistenceError> {
    project.check()?;
    let case_files = file_names(project.cases.keys().cloned(), "cases");
    let pattern_files = file_names(project.patterns.keys().cloned(), "patterns");
    let mut files = BTreeMap::new();
    for (name, structure) in &project.cases {
        let text = serialize_case(structure).map_err(|source| PersistenceError::InvalidStructure {
            what: "case",
            name: name.clone(),
            source,
        })?;
        files.insert(case_files[name].clone(), text.to_string().into_bytes());
    }
    for (name, pattern) in &project.patterns {
        let text = serialize_pattern(pattern).map_err(|source| PersistenceError::InvalidStructure {
            what: "pattern",
            name: name.clone(),
            source,
        })?;
        files.insert(pattern_files[name].clone(), text.to_string().into_bytes());
    }
    let meta = ProjectFile {
        format: FORMAT_VERSION,
        name: project.name.clone(),
        created: project.created,
        modified: project.modified,
        cases: case_files,
        patterns: pattern_files,
        knowledge: project.knowledge.clone(),
        reports: project.reports.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&meta).expect("project metadata serializes");
    json.push(b'\n');
    files.insert(PROJECT_FILE.to_string(), json);
    Ok(files)
}

fn manifest(files: &BTreeMap<String, Vec<u8>>) -> String {
    files
        .iter()
        .map(|(path, bytes)| format!("{}  {path}\n", sha256_hex(bytes)))
        .collect()
}

/// Exclusive writer lock, released on drop.
struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(dir: &Path) -> Result<Self, PersistenceError> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(PersistenceError::Locked(path)),
            Err(source) => Err(PersistenceError::StoreUnwritable { path, source }),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistenceError> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_tree(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<(), PersistenceError> {
    for (rel, bytes) in files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(())
}

/// A directory holding one subdirectory per project.
#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
}

impl ProjectStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Store rooted at `$GSNKIT_STORE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(STORE_ENV).map(Self::new)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, name: &str) -> PathBuf {
        self.root.join(slug(name))
    }

    /// Names of all projects with at least one revision.
    pub fn list(&self) -> Result<Vec<String>, PersistenceError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(PersistenceError::Io { path: self.root.clone(), source }),
        };
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            let dir = entry.path();
            if !dir.join(HEAD_FILE).is_file() {
                continue;
            }
            let meta: ProjectFile = read_json(&dir.join(PROJECT_FILE))?;
            names.push(meta.name);
        }
        names.sort();
        Ok(names)
    }

    /// Writes a new snapshot of `project` and makes it HEAD. Saving an
    /// unchanged project returns the existing revision id.
    pub fn save(&self, project: &Project) -> Result<RevisionId, PersistenceError> {
        let files = render(project)?;
        let manifest = manifest(&files);
        let id = RevisionId(sha256_hex(manifest.as_bytes()));

        let dir = self.project_dir(&project.name);
        fs::create_dir_all(&dir).map_err(|source| PersistenceError::StoreUnwritable {
            path: dir.clone(),
            source,
        })?;
        let _lock = WriteLock::acquire(&dir)?;

        if dir.join(HEAD_FILE).is_file() {
            let existing: ProjectFile = read_json(&dir.join(PROJECT_FILE))?;
            if existing.name != project.name {
                return Err(PersistenceError::InvalidProject(format!(
                    "directory {} already holds project `{}`",
                    dir.display(),
                    existing.name
                )));
            }
        }

        let snapshot = dir.join(REVISIONS_DIR).join(id.as_str());
        if !snapshot.is_dir() {
            let staging = dir
                .join(REVISIONS_DIR)
                .join(format!("{}.tmp-{}", id, std::process::id()));
            let _ = fs::remove_dir_all(&staging);
            write_tree(&staging, &files)?;
            fs::write(staging.join(MANIFEST_FILE), &manifest).map_err(io_err(&staging))?;
            fs::rename(&staging, &snapshot).map_err(io_err(&snapshot))?;
            debug!("wrote snapshot {}", snapshot.display());
        }

        // Mirror the snapshot at the top level, dropping stale documents.
        for sub in ["cases", "patterns"] {
            let path = dir.join(sub);
            match fs::remove_dir_all(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(source) => return Err(PersistenceError::Io { path, source }),
            }
        }
        write_tree(&dir, &files)?;

        let previous = fs::read_to_string(dir.join(HEAD_FILE)).ok();
        if previous.as_deref().map(str::trim) != Some(id.as_str()) {
            let log_path = dir.join(LOG_FILE);
            let mut log = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_path)
                .map_err(io_err(&log_path))?;
            writeln!(log, "{id} {}", project.modified.to_rfc3339()).map_err(io_err(&log_path))?;
            write_atomic(&dir.join(HEAD_FILE), format!("{id}\n").as_bytes())?;
            info!("project `{}` saved as revision {id}", project.name);
        }
        Ok(id)
    }

    pub fn head(&self, name: &str) -> Result<RevisionId, PersistenceError> {
        let path = self.project_dir(name).join(HEAD_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(PersistenceError::NotFound(format!("project `{name}`")))
            }
            Err(source) => return Err(PersistenceError::Io { path, source }),
        };
        text.trim().parse().map_err(|e: InvalidRevisionId| PersistenceError::CorruptStore {
            path,
            reason: e.to_string(),
        })
    }

    /// Loads and verifies a snapshot.
    pub fn load(&self, name: &str, revision: &Revision) -> Result<Project, PersistenceError> {
        let id = match revision {
            Revision::Latest => self.head(name)?,
            Revision::Id(id) => id.clone(),
        };
        let snapshot = self.project_dir(name).join(REVISIONS_DIR).join(id.as_str());
        if !snapshot.is_dir() {
            return Err(PersistenceError::NotFound(format!("revision {id} of project `{name}`")));
        }
        let files = read_verified(&snapshot, &id)?;
        let corrupt = |reason: String| PersistenceError::CorruptStore {
            path: snapshot.clone(),
            reason,
        };
        let meta_bytes = files
            .get(PROJECT_FILE)
            .ok_or_else(|| corrupt(format!("{PROJECT_FILE} missing")))?;
        let meta: ProjectFile =
            serde_json::from_slice(meta_bytes).map_err(|e| corrupt(format!("{PROJECT_FILE}: {e}")))?;
        if meta.format != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {}", meta.format)));
        }

        let mut project = Project::with_timestamps(meta.name, meta.created, meta.modified);
        project.knowledge = meta.knowledge;
        project.reports = meta.reports;
        for (doc_name, rel) in &meta.cases {
            match parse_document(&files, rel).map_err(&corrupt)? {
                Document::AssuranceCase(s) => {
                    project.cases.insert(doc_name.clone(), s);
                }
                Document::Pattern(_) => return Err(corrupt(format!("{rel}: expected an assurance case"))),
            }
        }
        for (doc_name, rel) in &meta.patterns {
            match parse_document(&files, rel).map_err(&corrupt)? {
                Document::Pattern(p) => {
                    project.patterns.insert(doc_name.clone(), p);
                }
                Document::AssuranceCase(_) => return Err(corrupt(format!("{rel}: expected a pattern"))),
            }
        }
        Ok(project)
    }

    /// Revisions in the order they were first saved.
    pub fn history(&self, name: &str) -> Result<Vec<HistoryEntry>, PersistenceError> {
        let path = self.project_dir(name).join(LOG_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(PersistenceError::NotFound(format!("project `{name}`")))
            }
            Err(source) => return Err(PersistenceError::Io { path, source }),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let (id, modified) = line.split_once(' ').unwrap_or((line, ""));
                let id = id.parse().map_err(|e: InvalidRevisionId| PersistenceError::CorruptStore {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                Ok(HistoryEntry {
                    id,
                    modified: modified.to_string(),
                })
            })
            .collect()
    }

    /// Deletes all but the `keep` most recent revisions (HEAD is always
    /// kept). Returns the removed ids.
    pub fn prune(&self, name: &str, keep: usize) -> Result<Vec<RevisionId>, PersistenceError> {
        let dir = self.project_dir(name);
        let head = self.head(name)?;
        let _lock = WriteLock::acquire(&dir)?;
        let history = self.history(name)?;
        let keep = keep.max(1);
        let cut = history.len().saturating_sub(keep);
        let (old, recent) = history.split_at(cut);
        let retained: BTreeSet<&RevisionId> = recent.iter().map(|e| &e.id).chain([&head]).collect();
        let mut removed = Vec::new();
        for entry in old {
            if retained.contains(&entry.id) {
                continue;
            }
            let path = dir.join(REVISIONS_DIR).join(entry.id.as_str());
            match fs::remove_dir_all(&path) {
                Ok(()) => removed.push(entry.id.clone()),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(source) => return Err(PersistenceError::Io { path, source }),
            }
        }
        let log: String = history
            .iter()
            .filter(|e| !removed.contains(&e.id))
            .map(|e| format!("{} {}\n", e.id, e.modified))
            .collect();
        write_atomic(&dir.join(LOG_FILE), log.as_bytes())?;
        Ok(removed)
    }

    /// Removes a project and its whole history.
    pub fn delete(&self, name: &str) -> Result<(), PersistenceError> {
        let dir = self.project_dir(name);
        if !dir.join(HEAD_FILE).is_file() {
            return Err(PersistenceError::NotFound(format!("project `{name}`")));
        }
        let _lock = WriteLock::acquire(&dir)?;
        fs::remove_dir_all(&dir).map_err(io_err(&dir))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PersistenceError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| PersistenceError::CorruptStore {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reads every file named in the snapshot's MANIFEST, checking the manifest
/// against the revision id and each file against its manifest line.
fn read_verified(snapshot: &Path, id: &RevisionId) -> Result<BTreeMap<String, Vec<u8>>, PersistenceError> {
    let corrupt = |reason: String| PersistenceError::CorruptStore {
        path: snapshot.to_path_buf(),
        reason,
    };
    let manifest_path = snapshot.join(MANIFEST_FILE);
    let manifest = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    if sha256_hex(&manifest) != id.as_str() {
        return Err(corrupt("MANIFEST does not match the revision id".into()));
    }
    let manifest = String::from_utf8(manifest).map_err(|_| corrupt("MANIFEST is not UTF-8".into()))?;
    let mut files = BTreeMap::new();
    for line in manifest.lines() {
        let (hash, rel) = line
            .split_once("  ")
            .ok_or_else(|| corrupt(format!("malformed MANIFEST line `{line}`")))?;
        if rel.split('/').any(|part| part.is_empty() || part == "..") {
            return Err(corrupt(format!("illegal path `{rel}` in MANIFEST")));
        }
        let path = snapshot.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(corrupt(format!("{rel} is missing"))),
            Err(source) => return Err(PersistenceError::Io { path, source }),
        };
        if sha256_hex(&bytes) != hash {
            return Err(corrupt(format!("{rel} does not match its recorded hash")));
        }
        files.insert(rel.to_string(), bytes);
    }
    Ok(files)
}

fn parse_document(files: &BTreeMap<String, Vec<u8>>, rel: &str) -> Result<Document, String> {
    let bytes = files.get(rel).ok_or_else(|| format!("{rel} is not in MANIFEST"))?;
    let text = std::str::from_utf8(bytes).map_err(|_| format!("{rel} is not UTF-8"))?;
    let outcome = parse(text);
    if let Some(d) = outcome.errors().next() {
        return Err(format!("{rel}:{d}"));
    }
    Ok(outcome.document)
}
