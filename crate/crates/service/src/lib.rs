//! HTTP JSON API over gsnkit: codec, validation, detection, instantiation,
//! corpus evaluation jobs and project storage.

mod api;
mod error;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, Method};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use gsnkit::instantiation::{Bounded, ChatCompletionBackend, GenerationBackend, GenerationBackendConfig};
use gsnkit::persistence::ProjectStore;
use log::info;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use api::*;
pub use error::{ApiError, ErrorCode};

/// Environment variable holding the bearer token clients must present.
pub const TOKEN_ENV: &str = "GSNKIT_TOKEN";
pub const DEFAULT_MAX_CONCURRENT_BACKEND_CALLS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("backend `{name}`: {source}")]
    Backend {
        name: String,
        source: gsnkit::instantiation::BackendError,
    },
    #[error("backend name `{0}` is reserved")]
    ReservedBackendName(String),
    #[error("invalid CORS origin `{0}`")]
    InvalidOrigin(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub store_root: PathBuf,
    /// Required bearer token. Read from [`TOKEN_ENV`] by [`ServiceConfig::new`].
    pub token: Option<String>,
    pub cors_origins: Vec<String>,
    pub backends: BTreeMap<String, GenerationBackendConfig>,
    pub max_concurrent_backend_calls: usize,
}

impl ServiceConfig {
    pub fn new(bind: SocketAddr, store_root: impl Into<PathBuf>) -> Self {
        Self {
            bind,
            store_root: store_root.into(),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            cors_origins: Vec::new(),
            backends: BTreeMap::new(),
            max_concurrent_backend_calls: DEFAULT_MAX_CONCURRENT_BACKEND_CALLS,
        }
    }
}

pub(crate) struct AppState {
    pub store: ProjectStore,
    pub token: Option<String>,
    pub backends: BTreeMap<String, Arc<dyn GenerationBackend>>,
    pub jobs: RwLock<HashMap<String, JobStatus>>,
    pub next_job: AtomicU64,
    /// Serializes writers within this process; the store's own lock file
    /// guards against other processes.
    pub write_lock: Mutex<()>,
}

/// A configured service. Build with [`Service::new`], optionally add
/// in-process backends, then call [`Service::router`] or [`Service::serve`].
pub struct Service {
    config: ServiceConfig,
    backends: BTreeMap<String, Arc<dyn GenerationBackend>>,
}

impl Service {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let mut service = Self {
            backends: BTreeMap::new(),
            config,
        };
        for (name, cfg) in service.config.backends.clone() {
            let backend = ChatCompletionBackend::new(cfg).map_err(|source| ServiceError::Backend {
                name: name.clone(),
                source,
            })?;
            service = service.with_backend(&name, Arc::new(backend))?;
        }
        Ok(service)
    }

    /// Registers `backend` under `name`, capped at the configured concurrency.
    pub fn with_backend(mut self, name: &str, backend: Arc<dyn GenerationBackend>) -> Result<Self, ServiceError> {
        if name == gsnkit::detection::DETERMINISTIC || name == SUBSTITUTE {
            return Err(ServiceError::ReservedBackendName(name.to_string()));
        }
        let bounded = Bounded::new(Named(name.to_string(), backend), self.config.max_concurrent_backend_calls);
        self.backends.insert(name.to_string(), Arc::new(bounded));
        Ok(self)
    }

    pub fn router(&self) -> Result<Router, ServiceError> {
        let state = Arc::new(AppState {
            store: ProjectStore::new(&self.config.store_root),
            token: self.config.token.clone(),
            backends: self.backends.clone(),
            jobs: RwLock::new(HashMap::new()),
            next_job: AtomicU64::new(1),
            write_lock: Mutex::new(()),
        });

        let api = Router::new()
            .route("/parse", post(api::parse_text))
            .route("/serialize", post(api::serialize_document))
            .route("/validate", post(api::validate_structure))
            .route("/stats", post(api::structure_stats))
            .route("/export", post(api::export))
            .route("/detect", post(api::detect_patterns))
            .route("/instantiate", post(api::instantiate))
            .route("/evaluate", post(api::start_evaluation))
            .route("/jobs/{id}", get(api::job_status))
            .route("/backends", get(api::list_backends))
            .route("/projects", get(api::list_projects).post(api::create_project))
            .route(
                "/projects/{name}",
                get(api::get_project).put(api::put_project).delete(api::delete_project),
            )
            .route("/projects/{name}/history", get(api::project_history))
            .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
            .route("/health", get(api::health))
            .fallback(api::not_found);

        let mut router = Router::new().nest("/api/v1", api).with_state(state);
        if !self.config.cors_origins.is_empty() {
            let origins = self
                .config
                .cors_origins
                .iter()
                .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::InvalidOrigin(o.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            router = router.layer(
                CorsLayer::new()
                    .allow_origin(AllowOrigin::list(origins))
                    .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
                    .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]),
            );
        }
        Ok(router)
    }

    pub async fn serve(self) -> Result<(), ServiceError> {
        let router = self.router()?;
        let addr = self.config.bind;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        info!(
            "listening on http://{}",
            listener.local_addr().map_err(ServiceError::Serve)?
        );
        axum::serve(listener, router).await.map_err(ServiceError::Serve)
    }
}

/// Reports the registry name instead of the inner client's label.
struct Named(String, Arc<dyn GenerationBackend>);

impl GenerationBackend for Named {
    fn name(&self) -> &str {
        &self.0
    }

    fn complete(&self, prompt: &gsnkit::instantiation::PromptPair) -> Result<String, gsnkit::instantiation::BackendError> {
        self.1.complete(prompt)
    }
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(expected) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(expected.as_str()) {
            return ApiError::new(ErrorCode::Unauthorized, "missing or invalid bearer token").into_response();
        }
    }
    next.run(request).await
}
