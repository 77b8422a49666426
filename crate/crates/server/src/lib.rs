//! HTTP service over a fuzzy probability tree model.
//!
//! | Route | Purpose |
//! |---|---|
//! | `GET /model` | spec summary, tree statistics, ingest counts |
//! | `GET /tree` | the serialised tree |
//! | `GET /fuzzy/{variable}` | membership curves, `?x=` for degrees at a value |
//! | `POST /predict` | `p0`, `p1`, label and the branch weights used |
//! | `POST /counterfactual` | factual and altered decisions with their delta |
//! | `POST /conditional` | `P(class \| conditions)` |
//! | `POST /evaluate` | starts a bootstrap job, polled at `GET /evaluate/{id}` |
//! | `POST /reload` | re-reads the spec and data and swaps the model |
//!
//! Every response carries the `x-model-fingerprint` header.

mod api;
pub mod error;
pub mod session;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::Value;
use tower_http::cors::CorsLayer;

pub use error::{ApiError, FieldError, FINGERPRINT_HEADER};
pub use session::{fingerprint, Session, Sources};

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: u64,
    pub status: JobStatus,
    /// Fingerprint of the model the job was started against.
    pub fingerprint: String,
    pub request: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct AppState {
    session: RwLock<Arc<Session>>,
    sources: Option<Sources>,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: AtomicU64,
    started_at: u64,
}

impl AppState {
    pub fn new(session: Session, sources: Option<Sources>) -> Arc<Self> {
        Arc::new(AppState {
            session: RwLock::new(Arc::new(session)),
            sources,
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            started_at: session::now(),
        })
    }

    pub fn load(sources: Sources) -> fpt_core::Result<Arc<Self>> {
        let session = Session::load(&sources)?;
        Ok(AppState::new(session, Some(sources)))
    }

    /// The current model version.
    pub fn session(&self) -> Arc<Session> {
        self.session.read().expect("session lock").clone()
    }

    /// Installs `session` and returns the one it replaced.
    pub fn swap(&self, session: Session) -> Arc<Session> {
        std::mem::replace(&mut *self.session.write().expect("session lock"), Arc::new(session))
    }

    pub fn sources(&self) -> Option<&Sources> {
        self.sources.as_ref()
    }

    pub fn started_at(&self) -> u64 {
        self.started_at
    }

    pub fn job(&self, id: u64) -> Option<Job> {
        self.jobs.lock().expect("job lock").get(&id).cloned()
    }

    fn add_job(&self, fingerprint: &str, request: Value) -> u64 {
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        let job = Job {
            id,
            status: JobStatus::Running,
            fingerprint: fingerprint.to_string(),
            request,
            result: None,
            error: None,
        };
        self.jobs.lock().expect("job lock").insert(id, job);
        id
    }

    fn finish_job(&self, id: u64, outcome: Result<Value, String>) {
        if let Some(job) = self.jobs.lock().expect("job lock").get_mut(&id) {
            match outcome {
                Ok(result) => {
                    job.status = JobStatus::Done;
                    job.result = Some(result);
                }
                Err(error) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(error);
                }
            }
        }
    }
}

/// All routes. `dev` adds permissive CORS headers for a locally served UI.
pub fn router(state: Arc<AppState>, dev: bool) -> Router {
    let router = Router::new()
        .route("/model", get(api::model))
        .route("/tree", get(api::tree))
        .route("/fuzzy/{variable}", get(api::fuzzy))
        .route("/predict", post(api::predict))
        .route("/counterfactual", post(api::counterfactual))
        .route("/conditional", post(api::conditional))
        .route("/evaluate", post(api::evaluate))
        .route("/evaluate/{id}", get(api::evaluation))
        .route("/reload", post(api::reload))
        .fallback(api::not_found)
        .with_state(state);
    if dev {
        router.layer(CorsLayer::permissive())
    } else {
        router
    }
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, dev: bool) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving model {} on http://{}",
        &state.session().fingerprint[..12],
        listener.local_addr()?
    );
    axum::serve(listener, router(state, dev))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
