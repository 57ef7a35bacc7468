use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use gsnkit::codec::{serialize_case, Document};
use gsnkit::corpus::Corpus;
use gsnkit::instantiation::FixedReplyBackend;
use gsnkit::model::{ElementKind, GoalStructure, GsnElement, GsnRelationship};
use gsnkit::persistence::Project;
use gsnkit::{DetectionJob, DetectionRule};
use gsnkit_service::*;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(dir: &tempfile::TempDir) -> ServiceConfig {
    let mut c = ServiceConfig::new(SocketAddr::from(([127, 0, 0, 1], 0)), dir.path());
    c.token = None;
    c
}

fn app(dir: &tempfile::TempDir) -> Router {
    Service::new(config(dir)).unwrap().router().unwrap()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    call_raw(app, method, uri, body.map(|b| b.to_string()), None).await
}

async fn call_raw(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<String>,
    token: Option<&str>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b)),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn acas() -> GoalStructure {
    Corpus::bundled().cases["ACAS Xu"].structure.clone()
}

#[tokio::test]
async fn health_and_unknown_route() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, body) = call(&app, Method::GET, "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(decode::<HealthResponse>(&body).status, "ok");

    let (status, body) = call(&app, Method::GET, "/api/v1/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::NotFound);
}

#[tokio::test]
async fn parse_serialize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let text = serialize_case(&acas()).unwrap().to_string();
    let (status, body) = call(&app, Method::POST, "/api/v1/parse", Some(json!({ "text": text }))).await;
    assert_eq!(status, StatusCode::OK);
    let parsed: ParseResponse = decode(&body);
    assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
    assert_eq!(parsed.document, Document::AssuranceCase(acas()));

    let req = SerializeRequest {
        document: parsed.document,
    };
    let (status, body) = call(&app, Method::POST, "/api/v1/serialize", Some(serde_json::to_value(req).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(decode::<SerializeResponse>(&body).text, text);
}

#[tokio::test]
async fn parse_reports_diagnostics_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let text = "Assurance Case: X\nGoal(G1, \"ok\")\nGoal(G2 \"missing comma\")\n";
    let (status, body) = call(&app, Method::POST, "/api/v1/parse", Some(json!({ "text": text }))).await;
    assert_eq!(status, StatusCode::OK);
    let parsed: ParseResponse = decode(&body);
    assert!(parsed.diagnostics.iter().any(|d| d.line == 3));
}

#[tokio::test]
async fn validate_stats_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let bad = GoalStructure::new("bad")
        .with_element(GsnElement::new("G1", ElementKind::Goal, "g"))
        .unwrap()
        .with_element(GsnElement::new("Sn1", ElementKind::Solution, "s"))
        .unwrap()
        .with_relationship(GsnRelationship::supported_by("Sn1", "G1"));
    let (status, body) = call(&app, Method::POST, "/api/v1/validate", Some(json!({ "structure": bad }))).await;
    assert_eq!(status, StatusCode::OK);
    let v: ValidateResponse = decode(&body);
    assert!(!v.valid);
    assert!(!v.violations.is_empty());

    let (_, body) = call(&app, Method::POST, "/api/v1/validate", Some(json!({ "structure": acas() }))).await;
    assert!(decode::<ValidateResponse>(&body).valid);

    let (status, body) = call(&app, Method::POST, "/api/v1/stats", Some(json!({ "structure": acas() }))).await;
    assert_eq!(status, StatusCode::OK);
    let stats: gsnkit::model::StructureStats = decode(&body);
    assert_eq!(stats.elements, acas().element_count());

    for (format, media) in [("dot", "text/vnd.graphviz"), ("svg", "image/svg+xml")] {
        let req = Request::builder()
            .method(Method::POST)
            .uri("/api/v1/export")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(json!({ "structure": acas(), "format": format }).to_string()))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(resp.headers()[header::CONTENT_TYPE], media);
    }

    let (status, body) = call(&app, Method::POST, "/api/v1/export", Some(json!({ "structure": bad, "format": "svg" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::InvalidStructure);
}

#[tokio::test]
async fn detect_matches_library_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let corpus = Corpus::bundled();
    let pattern = "ACAS Xu threat identification";
    for t in [0.2, 0.4, 0.6, 0.8, 1.0] {
        let req = json!({
            "case": "ACAS Xu",
            "candidates": [pattern],
            "thresholds": {"bleu": t, "cosine": t},
        });
        let (status, body) = call(&app, Method::POST, "/api/v1/detect", Some(req)).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        let resp: DetectResponse = decode(&body);
        let job = DetectionJob::new(
            corpus.cases["ACAS Xu"].structure.clone(),
            vec![corpus.patterns[pattern].clone()],
            DetectionRule::bleu_cosine(t, t).unwrap(),
        );
        let expected = gsnkit::detection::detect(&job).unwrap();
        assert_eq!(resp.report, expected);
        assert_eq!(resp.detected.contains(pattern), t < 0.8);
    }
}

#[tokio::test]
async fn detect_inline_documents_and_all_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let corpus = Corpus::bundled();
    let alarp = corpus.patterns["ALARP"].clone();
    let req = json!({
        "case": corpus.cases["BlueROV2"].structure,
        "patterns": [alarp],
        "thresholds": {"bleu": 0.4, "cosine": 0.4},
        "runs": 3,
    });
    let (status, body) = call(&app, Method::POST, "/api/v1/detect", Some(req)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let resp: DetectResponse = decode(&body);
    assert_eq!(resp.report.runs, 3);
    assert!(resp.detected.contains("ALARP"));

    let req = json!({ "case": "DeepMind", "thresholds": {"bleu": 0.4, "cosine": 0.4} });
    let (_, body) = call(&app, Method::POST, "/api/v1/detect", Some(req)).await;
    let resp: DetectResponse = decode(&body);
    assert_eq!(resp.report.candidates.len(), corpus.patterns.len());
}

#[tokio::test]
async fn detect_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let cases = [
        (json!({"case": "ACAS Xu", "thresholds": {"bleu": 1.2}}), ErrorCode::ThresholdOutOfRange),
        (json!({"case": "ACAS Xu", "thresholds": {"cosine": -0.1}}), ErrorCode::ThresholdOutOfRange),
        (json!({"case": "ACAS Xu", "thresholds": {}}), ErrorCode::InvalidRule),
        (json!({"case": "ACAS Xu", "thresholds": {"rouge": 0.5}}), ErrorCode::UnknownMetric),
        (json!({"case": "ACAS Xu", "thresholds": {"bleu": 0.5}, "backend": "gpt"}), ErrorCode::UnknownBackend),
        (json!({"case": "ACAS Xu", "thresholds": {"bleu": 0.5}, "runs": 0}), ErrorCode::InvalidRequest),
        (json!({"case": "Nope", "thresholds": {"bleu": 0.5}}), ErrorCode::NotFound),
        (json!({"case": "ACAS Xu", "thresholds": {"bleu": 0.5}, "project": "missing"}), ErrorCode::NotFound),
        (json!({"case": 5, "thresholds": {"bleu": 0.5}}), ErrorCode::MalformedBody),
    ];
    for (req, code) in cases {
        let (status, body) = call(&app, Method::POST, "/api/v1/detect", Some(req.clone())).await;
        let err: ApiError = decode(&body);
        assert_eq!(err.code, code, "{req}");
        assert_eq!(status, code.status(), "{req}");
    }
    let (status, body) = call_raw(&app, Method::POST, "/api/v1/detect", Some("{not json".into()), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::MalformedBody);
}

#[tokio::test]
async fn instantiate_by_substitution_and_backend() {
    let dir = tempfile::tempdir().unwrap();
    let reply = "```\nGoal(G1, \"BlueROV2 is safe\")\nSolution(Sn1, \"Tests\")\nSupportedBy(G1, Sn1)\n```";
    let service = Service::new(config(&dir))
        .unwrap()
        .with_backend("fixed", Arc::new(FixedReplyBackend::new(reply)))
        .unwrap()
        .with_backend(
            "refuser",
            Arc::new(FixedReplyBackend::failing(gsnkit::instantiation::BackendError::Refusal("no".into()))),
        )
        .unwrap();
    let app = service.router().unwrap();

    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/instantiate",
        Some(json!({"pattern": "ALARP", "knowledge": "BlueROV2"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let resp: InstantiateResponse = decode(&body);
    assert_eq!(resp.structure.name(), "BlueROV2");
    assert!(resp.structure.elements().all(|e| !e.statement.contains('{')));
    assert!(resp.text.is_some());
    assert!(resp.raw_reply.is_none());

    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/instantiate",
        Some(json!({"pattern": "ALARP", "knowledge": {"system": "BlueROV2"}, "backend": "fixed"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let resp: InstantiateResponse = decode(&body);
    assert_eq!(resp.structure.element_count(), 2);
    assert_eq!(resp.raw_reply.as_deref(), Some(reply));

    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/instantiate",
        Some(json!({"pattern": "ALARP", "knowledge": "BlueROV2", "backend": "refuser"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::BackendRefusal);

    let (_, body) = call(&app, Method::GET, "/api/v1/backends", None).await;
    let backends: BackendsResponse = decode(&body);
    assert_eq!(backends.instantiation, ["substitute", "fixed", "refuser"]);
    assert_eq!(backends.detection, ["deterministic", "fixed", "refuser"]);

    assert!(matches!(
        Service::new(config(&dir))
            .unwrap()
            .with_backend("deterministic", Arc::new(FixedReplyBackend::new(""))),
        Err(ServiceError::ReservedBackendName(_))
    ));
}

async fn wait_for(app: &Router, id: &str) -> JobStatus {
    for _ in 0..600 {
        let (status, body) = call(app, Method::GET, &format!("/api/v1/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let job: JobStatus = decode(&body);
        if job.state != JobState::Running {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn evaluation_job() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"thresholds": [0.2, 0.8], "runs": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let accepted: JobAccepted = decode(&body);
    let job = wait_for(&app, &accepted.job_id).await;
    assert_eq!(job.state, JobState::Succeeded, "{:?}", job.error);
    let report = job.report.unwrap();
    assert_eq!(report.row("ACAS Xu", "deterministic", 0.2).unwrap().f_measure, 1.0);
    assert_eq!(report.row("ACAS Xu", "deterministic", 0.8).unwrap().f_measure, 0.0);
    assert!(job.table.unwrap().contains("ACAS Xu"));

    for (req, code) in [
        (json!({"thresholds": [1.5]}), ErrorCode::ThresholdOutOfRange),
        (json!({"thresholds": []}), ErrorCode::InvalidRequest),
        (json!({"runs": 0}), ErrorCode::InvalidRequest),
        (json!({"backends": ["gpt"]}), ErrorCode::UnknownBackend),
        (json!({"corpus": dir.path().join("missing")}), ErrorCode::InvalidRequest),
    ] {
        let (_, body) = call(&app, Method::POST, "/api/v1/evaluate", Some(req.clone())).await;
        assert_eq!(decode::<ApiError>(&body).code, code, "{req}");
    }
    let (status, _) = call(&app, Method::GET, "/api/v1/jobs/job-999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn evaluation_with_failing_backend_reports_cells() {
    let dir = tempfile::tempdir().unwrap();
    let app = Service::new(config(&dir))
        .unwrap()
        .with_backend(
            "down",
            Arc::new(FixedReplyBackend::failing(gsnkit::instantiation::BackendError::Unavailable("x".into()))),
        )
        .unwrap()
        .router()
        .unwrap();
    let (_, body) = call(
        &app,
        Method::POST,
        "/api/v1/evaluate",
        Some(json!({"thresholds": [0.4], "runs": 1, "backends": ["deterministic", "down"]})),
    )
    .await;
    let job = wait_for(&app, &decode::<JobAccepted>(&body).job_id).await;
    let report = job.report.unwrap();
    assert_eq!(report.rows.len(), 10);
    assert_eq!(report.failed_rows().count(), 5);
    assert!(report.failed_rows().all(|r| r.backend == "down"));
}

#[tokio::test]
async fn project_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, body) = call(&app, Method::POST, "/api/v1/projects", Some(json!({"name": "Demo"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let created: ProjectResponse = decode(&body);

    let (status, body) = call(&app, Method::POST, "/api/v1/projects", Some(json!({"name": "Demo"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::ProjectExists);

    let mut project: Project = created.project.clone();
    project.cases.insert("ACAS Xu".into(), acas());
    project
        .patterns
        .insert("ALARP".into(), Corpus::bundled().patterns["ALARP"].clone());
    let (status, body) = call(&app, Method::PUT, "/api/v1/projects/Demo", Some(serde_json::to_value(&project).unwrap())).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let saved: SavedResponse = decode(&body);
    assert_ne!(saved.revision, created.revision);

    let (_, body) = call(&app, Method::GET, "/api/v1/projects", None).await;
    assert_eq!(decode::<ProjectList>(&body).projects, ["Demo"]);

    let (_, body) = call(&app, Method::GET, "/api/v1/projects/Demo", None).await;
    let latest: ProjectResponse = decode(&body);
    assert_eq!(latest.revision, saved.revision);
    assert_eq!(latest.project, project);

    let uri = format!("/api/v1/projects/Demo?revision={}", created.revision);
    let (_, body) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(decode::<ProjectResponse>(&body).project, created.project);

    let (_, body) = call(&app, Method::GET, "/api/v1/projects/Demo/history", None).await;
    let history: HistoryResponse = decode(&body);
    assert_eq!(history.history.len(), 2);

    // Named documents resolve inside the project.
    let req = json!({"project": "Demo", "case": "ACAS Xu", "thresholds": {"bleu": 0.2, "cosine": 0.2}});
    let (status, body) = call(&app, Method::POST, "/api/v1/detect", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(decode::<DetectResponse>(&body).report.candidates.len(), 1);

    let (status, body) = call(&app, Method::GET, "/api/v1/projects/Demo?revision=xyz", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::InvalidRequest);

    let (status, _) = call(&app, Method::PUT, "/api/v1/projects/Other", Some(serde_json::to_value(&project).unwrap())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut broken = project.clone();
    broken.cases.insert(
        "broken".into(),
        GoalStructure::new("b")
            .with_element(GsnElement::new("Sn1", ElementKind::Solution, "s"))
            .unwrap(),
    );
    let (status, body) = call(&app, Method::PUT, "/api/v1/projects/Demo", Some(serde_json::to_value(&broken).unwrap())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::InvalidStructure);

    let (status, _) = call(&app, Method::DELETE, "/api/v1/projects/Demo", None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, body) = call(&app, Method::GET, "/api/v1/projects/Demo", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::NotFound);
}

#[tokio::test]
async fn bearer_token_guards_everything_but_health() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&dir);
    c.token = Some("s3cret".into());
    let app = Service::new(c).unwrap().router().unwrap();

    let (status, _) = call_raw(&app, Method::GET, "/api/v1/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call_raw(&app, Method::GET, "/api/v1/projects", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(decode::<ApiError>(&body).code, ErrorCode::Unauthorized);
    let (status, _) = call_raw(&app, Method::GET, "/api/v1/projects", None, Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call_raw(&app, Method::GET, "/api/v1/projects", None, Some("s3cret")).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn cors_preflight_allows_configured_origin() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&dir);
    c.cors_origins = vec!["http://localhost:5173".into()];
    let app = Service::new(c).unwrap().router().unwrap();
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/v1/detect")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");

    let mut c = config(&dir);
    c.cors_origins = vec!["bad\norigin".into()];
    assert!(matches!(Service::new(c).unwrap().router(), Err(ServiceError::InvalidOrigin(_))));
}

#[test]
fn error_codes_are_stable_json() {
    for code in ErrorCode::ALL {
        let err = ApiError::new(code, "m").with_details(json!({"k": 1}));
        let text = serde_json::to_string(&err).unwrap();
        let back: ApiError = serde_json::from_str(&text).unwrap();
        assert_eq!(back, err);
        assert!(code.status().is_client_error() || code.status().is_server_error());
    }
    assert_eq!(
        serde_json::to_value(ErrorCode::ThresholdOutOfRange).unwrap(),
        json!("ThresholdOutOfRange")
    );
}
