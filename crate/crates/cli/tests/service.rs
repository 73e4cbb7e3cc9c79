mod common;

use std::fs;
use std::net::SocketAddr;
use std::sync::Arc;

use common::{fer, stdout};
use fer_cli::input::encode_pgm;
use fer_cli::service::{serve, PredictResponse, BODY_LIMIT};
use fer_core::data::CLASS_NAMES;
use fer_core::nn::{Model, Preset};
use fer_core::store::save_model;
use fer_core::{Rng, IMAGE_PIXELS};
use reqwest::StatusCode;
use serde_json::json;

fn model() -> Model {
    Model::preset(Preset::FerTiny, &mut Rng::new(8)).unwrap()
}

async fn start(static_dir: Option<std::path::PathBuf>) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, Arc::new(model()), static_dir));
    addr
}

fn ramp() -> Vec<u8> {
    (0..IMAGE_PIXELS).map(|i| (i * 13 % 256) as u8).collect()
}

async fn post_json(addr: SocketAddr, body: &serde_json::Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("http://{addr}/api/v1/predict"))
        .json(body)
        .send()
        .await
        .unwrap()
}

async fn error_message(response: reqwest::Response) -> String {
    let body: serde_json::Value = response.json().await.unwrap();
    body["error"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn healthz() {
    let addr = start(None).await;
    let response = reqwest::get(format!("http://{addr}/healthz")).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert_eq!(response.text().await.unwrap(), "ok");
}

#[tokio::test]
async fn zeros_give_a_distribution() {
    let addr = start(None).await;
    let response = post_json(addr, &json!({ "pixels": vec![0; IMAGE_PIXELS] })).await;
    assert_eq!(response.status(), StatusCode::OK);
    let body: PredictResponse = response.json().await.unwrap();
    assert_eq!(body.probabilities.len(), 7);
    assert!(CLASS_NAMES.iter().all(|c| body.probabilities.contains_key(*c)));
    let sum: f64 = body.probabilities.values().map(|&p| p as f64).sum();
    assert!((sum - 1.0).abs() <= 1e-6, "{sum}");
    let top = body.probabilities.values().cloned().fold(f32::MIN, f32::max);
    assert_eq!(body.probabilities[&body.label], top);
    assert!(body.latency_ms >= 0.0);
}

#[tokio::test]
async fn malformed_input_is_400_with_a_message() {
    let addr = start(None).await;
    let short = post_json(addr, &json!({ "pixels": vec![0; 2303] })).await;
    assert_eq!(short.status(), StatusCode::BAD_REQUEST);
    assert!(error_message(short).await.contains("2303"));

    let mut pixels = vec![0; IMAGE_PIXELS];
    pixels[10] = 256;
    let range = post_json(addr, &json!({ "pixels": pixels })).await;
    assert_eq!(range.status(), StatusCode::BAD_REQUEST);
    assert!(error_message(range).await.contains("256"));

    let missing = post_json(addr, &json!({ "image": [] })).await;
    assert_eq!(missing.status(), StatusCode::BAD_REQUEST);

    let garbage = reqwest::Client::new()
        .post(format!("http://{addr}/api/v1/predict"))
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(garbage.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversized_body_is_413() {
    let addr = start(None).await;
    let response = reqwest::Client::new()
        .post(format!("http://{addr}/api/v1/predict"))
        .header("content-type", "application/json")
        .body(vec![b' '; BODY_LIMIT + 1])
        .send()
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn multipart_pgm_matches_json() {
    let addr = start(None).await;
    let json_body: PredictResponse = post_json(addr, &json!({ "pixels": ramp() })).await.json().await.unwrap();
    let part = reqwest::multipart::Part::bytes(encode_pgm(&ramp())).file_name("face.pgm");
    let form = reqwest::multipart::Form::new().part("image", part);
    let response = reqwest::Client::new()
        .post(format!("http://{addr}/api/v1/predict"))
        .multipart(form)
        .send()
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let multipart_body: PredictResponse = response.json().await.unwrap();
    assert_eq!(multipart_body.probabilities, json_body.probabilities);

    let part = reqwest::multipart::Part::bytes(b"P5\n47 48\n255\n".to_vec());
    let form = reqwest::multipart::Form::new().part("image", part);
    let response = reqwest::Client::new()
        .post(format!("http://{addr}/api/v1/predict"))
        .multipart(form)
        .send()
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_requests_agree() {
    let addr = start(None).await;
    let handles: Vec<_> = (0..8)
        .map(|_| {
            tokio::spawn(async move {
                let response = post_json(addr, &json!({ "pixels": ramp() })).await;
                response.json::<PredictResponse>().await.unwrap().probabilities
            })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        bodies.push(h.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn http_and_cli_probabilities_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.ferm");
    save_model(&model(), &model_path).unwrap();
    let pgm = dir.path().join("face.pgm");
    fs::write(&pgm, encode_pgm(&ramp())).unwrap();
    let cli = fer(&["predict", "--model", model_path.to_str().unwrap(), pgm.to_str().unwrap()]);
    let printed: Vec<(String, f32)> = stdout(&cli)
        .lines()
        .skip(1)
        .map(|l| {
            let mut parts = l.split_whitespace();
            (parts.next().unwrap().to_string(), parts.next().unwrap().parse().unwrap())
        })
        .collect();

    let addr = start(None).await;
    let body: PredictResponse = post_json(addr, &json!({ "pixels": ramp() })).await.json().await.unwrap();
    for (name, p) in printed {
        assert_eq!(body.probabilities[&name].to_bits(), p.to_bits(), "{name}");
    }
}

#[tokio::test]
async fn static_assets_at_root() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("index.html"), "<h1>demo</h1>").unwrap();
    fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let addr = start(Some(dir.path().to_path_buf())).await;
    let index = reqwest::get(format!("http://{addr}/")).await.unwrap();
    assert_eq!(index.status(), StatusCode::OK);
    assert_eq!(index.text().await.unwrap(), "<h1>demo</h1>");
    let js = reqwest::get(format!("http://{addr}/app.js")).await.unwrap();
    assert_eq!(js.status(), StatusCode::OK);
    let health = reqwest::get(format!("http://{addr}/healthz")).await.unwrap();
    assert_eq!(health.text().await.unwrap(), "ok");
    let missing = reqwest::get(format!("http://{addr}/nope.css")).await.unwrap();
    assert_eq!(missing.status(), StatusCode::NOT_FOUND);
}
