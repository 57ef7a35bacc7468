use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use gsnkit::arbitrary;
use gsnkit::codec::serialize_case;
use gsnkit::corpus::Corpus;
use gsnkit::instantiation::{
    build_prompt, generate_case, substitute, BackendError, ChatCompletionBackend, DomainKnowledge, FixedReplyBackend,
    GenerationBackend, GenerationBackendConfig, InstantiationError, PromptTask,
};
use gsnkit::metrics::DetectionRule;
use gsnkit::model::{scan_placeholders, validate};
use proptest::prelude::*;
use serde_json::{json, Value};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn substitution_invariants(p in arbitrary::pattern(16), bindings in arbitrary::full_bindings(), drop in 0usize..8) {
        let full = substitute(&p, &bindings);
        prop_assert_eq!(full.element_count(), p.structure().element_count());
        prop_assert_eq!(full.relationship_count(), p.structure().relationship_count());
        prop_assert!(full.relationships().eq(p.structure().relationships()));
        for e in full.elements() {
            prop_assert!(scan_placeholders(&e.statement).names.is_empty(), "{}", e.statement);
            let before = p.structure().element(&e.id).unwrap();
            prop_assert_eq!(e.kind, before.kind);
            prop_assert_eq!(e.undeveloped, before.undeveloped);
        }
        prop_assert!(validate(&full).is_empty());

        // Leaving one name unbound marks exactly the arguments that still mention it.
        let unbound = arbitrary::PLACEHOLDER_POOL[drop];
        let mut partial: BTreeMap<String, String> = bindings.clone();
        partial.remove(unbound);
        let open = substitute(&p, &partial);
        prop_assert_eq!(open.element_count(), p.structure().element_count());
        for e in open.elements() {
            let before = p.structure().element(&e.id).unwrap();
            let mentions = scan_placeholders(&before.statement).names.iter().any(|n| n == unbound);
            let expect = before.undeveloped || (mentions && e.kind.is_argument());
            prop_assert_eq!(e.undeveloped, expect, "{}", e.id);
        }
    }

    #[test]
    fn prompts_are_deterministic_zero_shot_and_stepwise(p in arbitrary::pattern(10), case in arbitrary::structure(10)) {
        let knowledge = DomainKnowledge::new("Sys").with_fact("A fact.").with_binding("System", "Sys");
        let a = build_prompt::<f64>(PromptTask::Instantiate, &p, None, Some(&knowledge), None).unwrap();
        let b = build_prompt::<f64>(PromptTask::Instantiate, &p, None, Some(&knowledge), None).unwrap();
        prop_assert_eq!(&a, &b);
        let rule = DetectionRule::bleu_cosine(0.4, 0.6).unwrap();
        let d = build_prompt(PromptTask::Detect, &p, Some(&case), None, Some(&rule)).unwrap();
        prop_assert_eq!(&d, &build_prompt(PromptTask::Detect, &p, Some(&case), None, Some(&rule)).unwrap());
        for prompt in [&a, &d] {
            prop_assert!(!prompt.system.to_lowercase().contains("example"));
            let s1 = prompt.system.find("Step 1:").unwrap();
            let s2 = prompt.system.find("Step 2:").unwrap();
            let ctx = prompt.system.find("## GSN context").unwrap();
            let rules = prompt.system.find("## Formalization rules").unwrap();
            let domain = prompt.system.find("## Domain information").unwrap();
            prop_assert!(s1 < s2 && s2 < ctx && ctx < rules && rules < domain);
        }
        prop_assert!(d.user.contains("Formalized assurance case:\n"));
    }
}

fn bluerov2() -> (gsnkit::model::PatternDocument, DomainKnowledge) {
    let corpus = Corpus::bundled();
    (corpus.patterns["ALARP"].clone(), corpus.knowledge["BlueROV2"].clone())
}

#[test]
fn generate_case_parses_fenced_reply() {
    let (pattern, knowledge) = bluerov2();
    let expected = substitute(&pattern, &knowledge.bindings);
    let body = serialize_case(&expected).unwrap().body();
    let backend = FixedReplyBackend::new(format!("```\n{body}\n```\n"));
    let generated = generate_case(&pattern, &knowledge, &backend).unwrap();
    assert!(!generated.has_errors(), "{:?}", generated.diagnostics);
    assert_eq!(generated.structure.name(), "BlueROV2");
    assert!(generated.structure.elements().eq(expected.elements()));
    assert!(generated.raw_reply.starts_with("```"));
}

#[test]
fn generate_case_error_paths() {
    let (pattern, knowledge) = bluerov2();
    let refusing = FixedReplyBackend::new("I'm sorry, but I cannot help with that.");
    assert!(matches!(
        generate_case(&pattern, &knowledge, &refusing),
        Err(InstantiationError::BackendRefusal(_))
    ));
    let down = FixedReplyBackend::failing(BackendError::Unavailable("connection refused".into()));
    assert!(matches!(
        generate_case(&pattern, &knowledge, &down),
        Err(InstantiationError::BackendUnavailable(_))
    ));
    let garbage = FixedReplyBackend::new("certainly, here it is: nothing");
    match generate_case(&pattern, &knowledge, &garbage) {
        Err(InstantiationError::ReplyUnparseable { raw_reply, diagnostics }) => {
            assert_eq!(raw_reply, "certainly, here it is: nothing");
            assert!(!diagnostics.is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
}

type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

#[derive(Clone, Default)]
struct Mock {
    replies: Arc<Mutex<VecDeque<(u16, Value)>>>,
    seen: Seen,
}

async fn chat(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    mock.seen.lock().unwrap().push((auth, body));
    let (status, reply) = mock.replies.lock().unwrap().pop_front().expect("unexpected request");
    (StatusCode::from_u16(status).unwrap(), Json(reply))
}

fn serve(mock: Mock) -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(mock);
            axum::serve(listener, app).await.unwrap();
        });
    });
    addr
}

fn completion(content: &str) -> Value {
    json!({"choices": [{"index": 0, "finish_reason": "stop", "message": {"role": "assistant", "content": content, "refusal": null}}]})
}

#[test]
fn chat_backend_request_shape_credential_and_retry() {
    let mock = Mock::default();
    mock.replies.lock().unwrap().extend([
        (503, json!({"error": "busy"})),
        (200, completion("VERDICT: DETECTED")),
        (200, json!({"choices": [{"finish_reason": "content_filter", "message": {"content": null}}]})),
        (400, json!({"error": "bad"})),
    ]);
    let addr = serve(mock.clone());
    let env = "GSNKIT_TEST_CHAT_KEY";
    std::env::set_var(env, "sk-test-123");
    let mut config = GenerationBackendConfig::new(format!("http://{addr}/v1/chat/completions"), "test-model");
    config.credential_env = env.into();
    let backend = ChatCompletionBackend::new(config).unwrap();
    assert_eq!(backend.name(), "test-model");

    let prompt = gsnkit::instantiation::PromptPair {
        system: "sys".into(),
        user: "usr".into(),
    };
    assert_eq!(backend.complete(&prompt).unwrap(), "VERDICT: DETECTED");
    assert!(matches!(backend.complete(&prompt), Err(BackendError::Refusal(_))));
    // 4xx is not retried.
    assert!(matches!(backend.complete(&prompt), Err(BackendError::Http { status: 400, .. })));

    let seen = mock.seen.lock().unwrap();
    assert_eq!(seen.len(), 4);
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer sk-test-123"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["max_tokens"], 4096);
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "sys"}));
    assert_eq!(body["messages"][1], json!({"role": "user", "content": "usr"}));
    assert_eq!(seen[0].1, seen[1].1);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let backend = ChatCompletionBackend::new(GenerationBackendConfig::new(format!("http://{addr}/v1"), "m")).unwrap();
    let prompt = gsnkit::instantiation::PromptPair {
        system: "s".into(),
        user: "u".into(),
    };
    assert!(matches!(backend.complete(&prompt), Err(BackendError::Unavailable(_))));
}

/// Talks to a real endpoint. Needs GSNKIT_LIVE_ENDPOINT, GSNKIT_LIVE_MODEL
/// and the credential in GSNKIT_API_KEY.
#[test]
#[ignore]
fn live_backend_instantiates_alarp() {
    let endpoint = std::env::var("GSNKIT_LIVE_ENDPOINT").expect("GSNKIT_LIVE_ENDPOINT");
    let model = std::env::var("GSNKIT_LIVE_MODEL").expect("GSNKIT_LIVE_MODEL");
    let backend = ChatCompletionBackend::new(GenerationBackendConfig::new(endpoint, model)).unwrap();
    let (pattern, knowledge) = bluerov2();
    let generated = generate_case(&pattern, &knowledge, &backend).unwrap();
    println!("{}", generated.raw_reply);
    assert!(generated.structure.element_count() > 0);
}
