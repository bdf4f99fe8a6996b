use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use intentbridge_core::backend::{wire, HttpBackendOptions};
use intentbridge_core::{BackendError, GenerationRequest, HttpBackend, LmBackend};
use serde_json::Value;

#[derive(Default)]
struct Stub {
    bodies: Mutex<Vec<String>>,
    calls: AtomicUsize,
    /// Number of leading calls answered with 503.
    fail_first: usize,
    echo_prompt: bool,
}

async fn generate(State(stub): State<Arc<Stub>>, body: String) -> Result<Json<Value>, StatusCode> {
    let n = stub.calls.fetch_add(1, Ordering::SeqCst);
    stub.bodies.lock().unwrap().push(body.clone());
    if n < stub.fail_first {
        return Err(StatusCode::SERVICE_UNAVAILABLE);
    }
    let req: wire::GenerateRequest = serde_json::from_str(&body).map_err(|_| StatusCode::BAD_REQUEST)?;
    if req.prompt == "reject me" {
        return Err(StatusCode::UNPROCESSABLE_ENTITY);
    }
    let text = if stub.echo_prompt {
        format!("{} OpenTable", req.prompt)
    } else {
        " OpenTable".to_string()
    };
    Ok(Json(serde_json::json!({ "texts": [text], "logprobs": [-0.25] })))
}

async fn score(State(stub): State<Arc<Stub>>, Json(req): Json<wire::ScoreRequest>) -> Json<Value> {
    stub.calls.fetch_add(1, Ordering::SeqCst);
    let n = req.continuation.split_whitespace().count() as u32;
    Json(serde_json::json!({ "total_logprob": -(n as f64), "num_tokens": n }))
}

async fn spawn(stub: Arc<Stub>) -> String {
    let app = Router::new()
        .route("/generate", post(generate))
        .route("/score", post(score))
        .with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn options(max_retries: u32) -> HttpBackendOptions {
    HttpBackendOptions {
        timeout: Duration::from_secs(5),
        max_retries,
        retry_backoff: Duration::from_millis(1),
    }
}

fn request(prompt: &str) -> GenerationRequest {
    GenerationRequest {
        prompt: prompt.into(),
        max_new_tokens: 50,
        temperature: 0.01,
        top_p: 0.9,
        num_beams: 1,
        num_return: 1,
        stop_sequences: vec!["\n".into()],
    }
}

#[tokio::test]
async fn decoding_parameters_are_forwarded_exactly() {
    let stub = Arc::new(Stub::default());
    let backend = HttpBackend::new(spawn(stub.clone()).await, options(0)).unwrap();
    let out = backend
        .generate(&request("The user needs to eat by using a popular app called"))
        .await
        .unwrap();
    assert_eq!(out.texts, vec![" OpenTable".to_string()]);
    assert_eq!(out.logprobs, Some(vec![-0.25]));

    let body: Value = serde_json::from_str(&stub.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(body["max_new_tokens"], 50);
    assert_eq!(body["temperature"].as_f64().unwrap().to_bits(), 0.01f64.to_bits());
    assert_eq!(body["top_p"].as_f64().unwrap().to_bits(), 0.9f64.to_bits());
    assert_eq!(body["num_beams"], 1);
    assert_eq!(body["num_return"], 1);
    assert_eq!(body["stop"], serde_json::json!(["\n"]));
    let mut keys: Vec<_> = body.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        ["max_new_tokens", "num_beams", "num_return", "prompt", "stop", "temperature", "top_p"]
    );
}

#[tokio::test]
async fn retries_are_bounded_and_do_not_duplicate() {
    let stub = Arc::new(Stub {
        fail_first: 2,
        ..Default::default()
    });
    let url = spawn(stub.clone()).await;
    let backend = HttpBackend::new(url.clone(), options(2)).unwrap();
    let out = backend.generate(&request("p")).await.unwrap();
    assert_eq!(out.texts.len(), 1);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);

    let stub = Arc::new(Stub {
        fail_first: 10,
        ..Default::default()
    });
    let backend = HttpBackend::new(spawn(stub.clone()).await, options(1)).unwrap();
    let err = backend.generate(&request("p")).await.unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let stub = Arc::new(Stub::default());
    let backend = HttpBackend::new(spawn(stub.clone()).await, options(3)).unwrap();
    let err = backend.generate(&request("reject me")).await.unwrap_err();
    assert!(matches!(err, BackendError::InvalidRequest(_)));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn echoed_prompt_is_stripped() {
    let stub = Arc::new(Stub {
        echo_prompt: true,
        ..Default::default()
    });
    let backend = HttpBackend::new(spawn(stub).await, options(0)).unwrap();
    let out = backend.generate(&request("a popular app called")).await.unwrap();
    assert_eq!(out.texts, vec![" OpenTable".to_string()]);
}

#[tokio::test]
async fn score_round_trip() {
    let stub = Arc::new(Stub::default());
    let backend = HttpBackend::new(spawn(stub).await, options(0)).unwrap();
    let s = backend.score("<s> u xNeed [GEN] </s>", "open the app now").await.unwrap();
    assert_eq!(s.total_logprob, -4.0);
    assert_eq!(s.num_tokens, 4);
    assert_eq!(s.mean_logprob, -1.0);
    assert!(matches!(
        backend.score("", "x").await,
        Err(BackendError::InvalidRequest(_))
    ));
}

#[tokio::test]
async fn unreachable_server_is_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let backend = HttpBackend::new(url, options(1)).unwrap();
    assert!(matches!(
        backend.generate(&request("p")).await,
        Err(BackendError::Unavailable(_))
    ));
}
