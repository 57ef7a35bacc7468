use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use gsnkit::codec::{self, Document, DocumentKind, ParseDiagnostic};
use gsnkit::corpus::Corpus;
use gsnkit::detection::{evaluate_corpus, EvaluationBackend, DETERMINISTIC};
use gsnkit::instantiation::{generate_case, substitute, DomainKnowledge, GenerationBackend};
use gsnkit::metrics::{MetricId, MetricThreshold};
use gsnkit::model::{statistics, validate, GoalStructure, PatternDocument, Severity, StructureStats, Violation};
use gsnkit::persistence::{HistoryEntry, PersistenceError, Project, Revision, RevisionId};
use gsnkit::{DetectionJob, DetectionReport, DetectionRule, EvaluationReport};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};
use crate::AppState;

/// Backend name for plain placeholder substitution without a model.
pub const SUBSTITUTE: &str = "substitute";
/// Corpus name for the corpus bundled with the library.
pub const BUNDLED: &str = "bundled";
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_EVALUATION_RUNS: usize = 5;

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

/// JSON body extractor whose rejections use the [`ApiError`] shape.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(value) = Json::<T>::from_request(req, state).await?;
        Ok(ApiJson(value))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

/// A document given either by name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocumentRef<T> {
    Name(String),
    Inline(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResponse {
    pub kind: DocumentKind,
    pub document: Document,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializeRequest {
    pub document: Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializeResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRequest {
    pub structure: GoalStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Dot,
    Svg,
}

impl ExportFormat {
    pub fn media_type(self) -> &'static str {
        match self {
            ExportFormat::Dot => "text/vnd.graphviz",
            ExportFormat::Svg => "image/svg+xml",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRequest {
    pub structure: GoalStructure,
    pub format: ExportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    /// Resolve names in this project instead of the bundled corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
    pub case: DocumentRef<GoalStructure>,
    /// Pattern names to offer. With no names and no inline patterns, every
    /// pattern of the source is offered.
    #[serde(default)]
    pub candidates: Vec<String>,
    #[serde(default)]
    pub patterns: Vec<PatternDocument>,
    /// Metric name to threshold, e.g. `{"bleu": 0.4, "cosine": 0.4}`.
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detected: BTreeSet<String>,
    pub report: DetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantiateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
    pub pattern: DocumentRef<PatternDocument>,
    pub knowledge: DocumentRef<DomainKnowledge>,
    /// `substitute` (the default) or a configured generation backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantiateResponse {
    pub structure: GoalStructure,
    /// Canonical prose, absent when the structure does not validate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub diagnostics: Vec<ParseDiagnostic>,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvaluateRequest {
    /// `bundled` or a corpus directory readable by the server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backends: Option<Vec<String>>,
    /// Offer every corpus pattern to every case instead of the listed candidates.
    #[serde(default)]
    pub all_candidates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
    /// The report rendered as a plain-text table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendsResponse {
    pub detection: Vec<String>,
    pub instantiation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectList {
    pub projects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateProjectRequest {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectResponse {
    pub revision: RevisionId,
    pub project: Project,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedResponse {
    pub revision: RevisionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RevisionQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<String>,
}

pub(crate) async fn health() -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub(crate) async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

pub(crate) async fn parse_text(ApiJson(req): ApiJson<ParseRequest>) -> Json<ParseResponse> {
    let outcome = codec::parse(&req.text);
    Json(ParseResponse {
        kind: outcome.document.kind(),
        document: outcome.document,
        diagnostics: outcome.diagnostics,
    })
}

pub(crate) async fn serialize_document(ApiJson(req): ApiJson<SerializeRequest>) -> ApiResult<Json<SerializeResponse>> {
    let text = codec::serialize(&req.document)?;
    Ok(Json(SerializeResponse { text: text.to_string() }))
}

pub(crate) async fn validate_structure(ApiJson(req): ApiJson<StructureRequest>) -> Json<ValidateResponse> {
    let violations = validate(&req.structure);
    Json(ValidateResponse {
        valid: !violations.iter().any(|v| v.severity == Severity::Error),
        violations,
    })
}

pub(crate) async fn structure_stats(ApiJson(req): ApiJson<StructureRequest>) -> Json<StructureStats> {
    Json(statistics(&req.structure))
}

pub(crate) async fn export(ApiJson(req): ApiJson<ExportRequest>) -> ApiResult<Response> {
    let body = match req.format {
        ExportFormat::Dot => codec::export_dot(&req.structure)?,
        ExportFormat::Svg => codec::export_svg(&req.structure)?,
    };
    Ok(([(header::CONTENT_TYPE, req.format.media_type())], body).into_response())
}

pub(crate) async fn list_backends(State(state): Shared) -> Json<BackendsResponse> {
    let remote: Vec<String> = state.backends.keys().cloned().collect();
    let mut detection = vec![DETERMINISTIC.to_string()];
    detection.extend(remote.iter().cloned());
    let mut instantiation = vec![SUBSTITUTE.to_string()];
    instantiation.extend(remote);
    Json(BackendsResponse {
        detection,
        instantiation,
    })
}

fn remote_backend(state: &AppState, name: &str) -> ApiResult<Arc<dyn GenerationBackend>> {
    state.backends.get(name).cloned().ok_or_else(|| {
        ApiError::new(ErrorCode::UnknownBackend, format!("backend `{name}` is not configured"))
    })
}

/// Where named documents are looked up.
enum Source {
    Project(Box<Project>),
    Bundled(Corpus),
}

impl Source {
    fn open(state: &AppState, project: Option<&str>) -> ApiResult<Self> {
        match project {
            Some(name) => Ok(Source::Project(Box::new(state.store.load(name, &Revision::Latest)?))),
            None => Ok(Source::Bundled(Corpus::bundled())),
        }
    }

    fn label(&self) -> String {
        match self {
            Source::Project(p) => format!("project `{}`", p.name),
            Source::Bundled(_) => "bundled corpus".to_string(),
        }
    }

    fn case(&self, name: &str) -> ApiResult<GoalStructure> {
        let found = match self {
            Source::Project(p) => p.cases.get(name).cloned(),
            Source::Bundled(c) => c.cases.get(name).map(|c| c.structure.clone()),
        };
        found.ok_or_else(|| ApiError::not_found(format!("case `{name}` in {}", self.label())))
    }

    fn pattern(&self, name: &str) -> ApiResult<PatternDocument> {
        let found = match self {
            Source::Project(p) => p.patterns.get(name).cloned(),
            Source::Bundled(c) => c.patterns.get(name).cloned(),
        };
        found.ok_or_else(|| ApiError::not_found(format!("pattern `{name}` in {}", self.label())))
    }

    fn all_patterns(&self) -> Vec<PatternDocument> {
        match self {
            Source::Project(p) => p.patterns.values().cloned().collect(),
            Source::Bundled(c) => c.patterns.values().cloned().collect(),
        }
    }

    fn knowledge(&self, name: &str) -> ApiResult<DomainKnowledge> {
        let found = match self {
            Source::Project(p) => p.knowledge.get(name).cloned(),
            Source::Bundled(c) => c.knowledge.get(name).cloned(),
        };
        found.ok_or_else(|| ApiError::not_found(format!("knowledge `{name}` in {}", self.label())))
    }
}

/// Builds a rule from a metric-name to threshold map.
pub fn rule_from_thresholds(thresholds: &BTreeMap<String, f64>) -> Result<DetectionRule, ApiError> {
    let clauses = thresholds
        .iter()
        .map(|(name, &value)| {
            let metric: MetricId = name
                .parse()
                .map_err(|e: gsnkit::metrics::InvalidMetricName| ApiError::new(ErrorCode::UnknownMetric, e.to_string()))?;
            Ok(MetricThreshold::new(metric, value)?)
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(DetectionRule::new(clauses)?)
}

pub(crate) async fn detect_patterns(State(state): Shared, ApiJson(req): ApiJson<DetectRequest>) -> ApiResult<Json<DetectResponse>> {
    let rule = rule_from_thresholds(&req.thresholds)?;
    let backend = match req.backend.as_deref() {
        None | Some(DETERMINISTIC) => None,
        Some(name) => Some(remote_backend(&state, name)?),
    };
    blocking(move || {
        let needs_source = matches!(req.case, DocumentRef::Name(_)) || !req.candidates.is_empty() || req.patterns.is_empty();
        let source = if needs_source {
            Some(Source::open(&state, req.project.as_deref())?)
        } else {
            None
        };
        let case = match req.case {
            DocumentRef::Name(name) => source.as_ref().expect("opened above").case(&name)?,
            DocumentRef::Inline(s) => s,
        };
        let mut candidates = Vec::new();
        for name in &req.candidates {
            candidates.push(source.as_ref().expect("opened above").pattern(name)?);
        }
        candidates.extend(req.patterns);
        if candidates.is_empty() {
            candidates = source.as_ref().expect("opened above").all_patterns();
        }
        let mut job = DetectionJob::new(case, candidates, rule).runs(req.runs.unwrap_or(1));
        if let Some(b) = backend {
            job = job.backend(b);
        }
        let report = gsnkit::detection::detect(&job)?;
        Ok(Json(DetectResponse {
            detected: report.detected_patterns(),
            report,
        }))
    })
    .await
}

pub(crate) async fn instantiate(
    State(state): Shared,
    ApiJson(req): ApiJson<InstantiateRequest>,
) -> ApiResult<Json<InstantiateResponse>> {
    let backend = match req.backend.as_deref() {
        None | Some(SUBSTITUTE) => None,
        Some(name) => Some(remote_backend(&state, name)?),
    };
    blocking(move || {
        let needs_source = matches!(req.pattern, DocumentRef::Name(_)) || matches!(req.knowledge, DocumentRef::Name(_));
        let source = if needs_source {
            Some(Source::open(&state, req.project.as_deref())?)
        } else {
            None
        };
        let pattern = match req.pattern {
            DocumentRef::Name(name) => source.as_ref().expect("opened above").pattern(&name)?,
            DocumentRef::Inline(p) => p,
        };
        let knowledge = match req.knowledge {
            DocumentRef::Name(name) => source.as_ref().expect("opened above").knowledge(&name)?,
            DocumentRef::Inline(k) => k,
        };
        knowledge
            .check()
            .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
        let (structure, diagnostics, raw_reply) = match backend {
            None => {
                let mut s = substitute(&pattern, &knowledge.bindings);
                if !knowledge.system.trim().is_empty() {
                    s.set_name(knowledge.system.trim());
                }
                (s, Vec::new(), None)
            }
            Some(b) => {
                let generated = generate_case(&pattern, &knowledge, b.as_ref())?;
                (generated.structure, generated.diagnostics, Some(generated.raw_reply))
            }
        };
        let violations = validate(&structure);
        let text = codec::serialize_case(&structure).ok().map(|t| t.to_string());
        Ok(Json(InstantiateResponse {
            structure,
            text,
            diagnostics,
            violations,
            raw_reply,
        }))
    })
    .await
}

fn load_corpus(name: Option<&str>, all_candidates: bool) -> ApiResult<Corpus> {
    let corpus = match name {
        None | Some(BUNDLED) => Corpus::bundled(),
        Some(dir) => Corpus::load(Path::new(dir))
            .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, format!("corpus `{dir}`: {e}")))?,
    };
    Ok(if all_candidates {
        corpus.with_all_candidates()
    } else {
        corpus
    })
}

pub(crate) async fn start_evaluation(
    State(state): Shared,
    ApiJson(req): ApiJson<EvaluateRequest>,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    let thresholds = req.thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    if thresholds.is_empty() {
        return Err(ApiError::new(ErrorCode::InvalidRequest, "at least one threshold is required"));
    }
    for &t in &thresholds {
        MetricThreshold::new(MetricId::Bleu, t)?;
    }
    let runs = req.runs.unwrap_or(DEFAULT_EVALUATION_RUNS);
    if runs == 0 {
        return Err(ApiError::new(ErrorCode::InvalidRequest, "runs must be at least 1"));
    }
    let backends = req
        .backends
        .unwrap_or_else(|| vec![DETERMINISTIC.to_string()])
        .iter()
        .map(|name| {
            if name == DETERMINISTIC {
                Ok(EvaluationBackend::deterministic())
            } else {
                remote_backend(&state, name).map(EvaluationBackend::remote)
            }
        })
        .collect::<ApiResult<Vec<_>>>()?;
    let corpus_name = req.corpus.clone();
    let corpus = blocking(move || load_corpus(corpus_name.as_deref(), req.all_candidates)).await?;

    let id = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    state.jobs.write().await.insert(
        id.clone(),
        JobStatus {
            id: id.clone(),
            state: JobState::Running,
            report: None,
            table: None,
            error: None,
        },
    );
    info!("evaluation {id} started: {} case(s), {} threshold(s), {runs} run(s)", corpus.cases.len(), thresholds.len());

    let job_state = state.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let outcome = blocking(move || Ok(evaluate_corpus(&corpus, &thresholds, runs, &backends)?)).await;
        let status = match outcome {
            Ok(report) => JobStatus {
                id: job_id.clone(),
                state: JobState::Succeeded,
                table: Some(report.render_table()),
                report: Some(report),
                error: None,
            },
            Err(e) => {
                warn!("evaluation {job_id} failed: {e}");
                JobStatus {
                    id: job_id.clone(),
                    state: JobState::Failed,
                    report: None,
                    table: None,
                    error: Some(e),
                }
            }
        };
        job_state.jobs.write().await.insert(job_id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id: id })))
}

pub(crate) async fn job_status(State(state): Shared, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobStatus>> {
    state
        .jobs
        .read()
        .await
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job `{id}`")))
}

pub(crate) async fn list_projects(State(state): Shared) -> ApiResult<Json<ProjectList>> {
    blocking(move || Ok(Json(ProjectList { projects: state.store.list()? }))).await
}

pub(crate) async fn create_project(
    State(state): Shared,
    ApiJson(req): ApiJson<CreateProjectRequest>,
) -> ApiResult<(StatusCode, Json<ProjectResponse>)> {
    let _guard = state.write_lock.lock().await;
    let state = state.clone();
    blocking(move || {
        match state.store.head(&req.name) {
            Ok(_) => {
                return Err(ApiError::new(
                    ErrorCode::ProjectExists,
                    format!("project `{}` already exists", req.name),
                ))
            }
            Err(PersistenceError::NotFound(_)) => {}
            Err(e) => return Err(e.into()),
        }
        let project = Project::new(req.name);
        let revision = state.store.save(&project)?;
        Ok((StatusCode::CREATED, Json(ProjectResponse { revision, project })))
    })
    .await
}

pub(crate) async fn get_project(
    State(state): Shared,
    UrlPath(name): UrlPath<String>,
    Query(query): Query<RevisionQuery>,
) -> ApiResult<Json<ProjectResponse>> {
    let revision = match query.revision.as_deref() {
        None | Some("latest") => Revision::Latest,
        Some(id) => Revision::Id(
            id.parse()
                .map_err(|e: gsnkit::persistence::InvalidRevisionId| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?,
        ),
    };
    blocking(move || {
        let id = match &revision {
            Revision::Latest => state.store.head(&name)?,
            Revision::Id(id) => id.clone(),
        };
        let project = state.store.load(&name, &revision)?;
        Ok(Json(ProjectResponse { revision: id, project }))
    })
    .await
}

pub(crate) async fn put_project(
    State(state): Shared,
    UrlPath(name): UrlPath<String>,
    ApiJson(project): ApiJson<Project>,
) -> ApiResult<Json<SavedResponse>> {
    if project.name != name {
        return Err(ApiError::new(
            ErrorCode::InvalidRequest,
            format!("body names project `{}` but the path names `{name}`", project.name),
        ));
    }
    let _guard = state.write_lock.lock().await;
    let state = state.clone();
    blocking(move || Ok(Json(SavedResponse { revision: state.store.save(&project)? }))).await
}

pub(crate) async fn delete_project(State(state): Shared, UrlPath(name): UrlPath<String>) -> ApiResult<StatusCode> {
    let _guard = state.write_lock.lock().await;
    let state = state.clone();
    blocking(move || {
        state.store.delete(&name)?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

pub(crate) async fn project_history(State(state): Shared, UrlPath(name): UrlPath<String>) -> ApiResult<Json<HistoryResponse>> {
    blocking(move || Ok(Json(HistoryResponse { history: state.store.history(&name)? }))).await
}
