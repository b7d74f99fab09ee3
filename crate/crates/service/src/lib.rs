//! HTTP service for DeepView: projects pair a dataset bundle with a
//! classifier, runs execute the pipeline in the background, and finished
//! payloads can be queried by point or by region.
//!
//! Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/projects` | `{bundle_manifest, classifier_spec}` -> `{project_id}` |
//! | POST | `/api/projects/{id}/runs` | `RunConfig` -> `{run_id}` |
//! | GET | `/api/projects/{id}/runs/{run_id}` | status, or the payload once done |
//! | GET | `/api/projects/{id}/points/{point_id}` | bundle record |
//! | POST | `/api/projects/{id}/runs/{run_id}/region-query` | points in a box, most uncertain first |
//!
//! [`classifier_router`] serves any [`Classifier`] over the `/v1/info` and
//! `/v1/predict` prediction protocol.

mod api;
mod protocol;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use deepview_core::classifier::Classifier;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub use api::{ApiError, RegionEntry, RegionQuery};
pub use protocol::classifier_router;
pub use store::{ProjectStore, RunState};

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Projects, run statuses and payloads live here.
    pub data_dir: PathBuf,
    /// Built explorer UI, served at `/` when set.
    pub static_dir: Option<PathBuf>,
}

/// Full application router. `model`, when given, is also exposed under
/// `/v1` so the service can double as a prediction endpoint.
pub fn app(store: Arc<ProjectStore>, static_dir: Option<PathBuf>, model: Option<Arc<dyn Classifier>>) -> Router {
    let mut router = api::router(store);
    if let Some(m) = model {
        router = router.merge(classifier_router(m));
    }
    if let Some(dir) = static_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    router.layer(CorsLayer::permissive())
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig, model: Option<Arc<dyn Classifier>>) -> std::io::Result<()> {
    let store = Arc::new(ProjectStore::open(&config.data_dir).map_err(std::io::Error::other)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app(store, config.static_dir, model)).await
}
