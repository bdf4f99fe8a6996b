#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use intentbridge_core::backend::HttpBackendOptions;
use intentbridge_core::{HttpBackend, LmBackend, Pipeline, PipelineConfig};
use intentbridge_server::{router, AppState, SessionLog};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn demo_config() -> PipelineConfig {
    PipelineConfig::load(Some(&data_dir().join("demo.toml")), Vec::new()).expect("demo config")
}

pub fn demo_pipeline() -> Pipeline {
    Pipeline::from_config(demo_config()).expect("demo pipeline")
}

/// A pipeline whose backends point at a port nothing listens on.
pub fn unreachable_pipeline() -> Pipeline {
    let backend: Arc<dyn LmBackend> = Arc::new(
        HttpBackend::new(
            "http://127.0.0.1:9",
            HttpBackendOptions {
                timeout: Duration::from_secs(2),
                max_retries: 0,
                retry_backoff: Duration::from_millis(1),
            },
        )
        .unwrap(),
    );
    let demo = demo_pipeline();
    Pipeline::new(demo.config().clone(), backend.clone(), backend, demo.catalog().clone())
}

/// Serves `state` on an ephemeral port and returns its base URL.
pub async fn spawn(state: AppState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    format!("http://{addr}")
}

pub fn demo_state() -> AppState {
    AppState::new(demo_pipeline(), SessionLog::in_memory())
}
