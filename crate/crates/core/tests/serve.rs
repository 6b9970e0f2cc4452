//! HTTP endpoints exercised in-process, plus parity with `specqa rank`.

use std::path::{Path, PathBuf};
use std::process::Command;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use specqa::data::{save_jsonl, SpecProduct};
use specqa::serve::{router, AppState, Catalog, Snapshot};
use specqa::synth::{generate, SynthConfig};
use specqa::text::DEFAULT_OOV_SEED;
use specqa::train::{file_digest, fit, save_checkpoint, TrainConfig};
use specqa::Model;
use tempfile::TempDir;
use tower::ServiceExt;

struct Served {
    _dir: TempDir,
    ckpt: PathBuf,
    catalog: PathBuf,
    vocab_size: usize,
}

fn microwave() -> SpecProduct {
    SpecProduct::new(
        "207025690",
        "Microwaves",
        vec![
            ("Capacity (cu. ft.)", "1.1"),
            ("Wattage (watts)", "1100"),
            ("Color Family", "Stainless Steel"),
            ("Product Depth (in.)", "15.5"),
            ("Number of Power Levels", "10"),
        ],
    )
}

fn setup() -> Served {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&SynthConfig {
        products: 6,
        source_records: 20,
        embedding_dim: 6,
        ..Default::default()
    })
    .unwrap();
    let pairs = data.target_pairs().unwrap();
    let cfg = TrainConfig {
        hidden: 4,
        epochs_max: 1,
        ..Default::default()
    };
    let mut model = Model::new(
        cfg.model_config(),
        data.vocab.clone(),
        data.embeddings.clone(),
        cfg.seed,
        DEFAULT_OOV_SEED,
    )
    .unwrap();
    let ckpt_data = fit(&mut model, &pairs, &pairs, &cfg).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&ckpt, &ckpt_data).unwrap();

    let mut products = data.catalog.clone();
    products.push(microwave());
    products.push(SpecProduct::new("bare", "tools", vec![]));
    let catalog = dir.path().join("catalog.jsonl");
    save_jsonl(&catalog, &products).unwrap();
    Served {
        vocab_size: data.vocab.len(),
        _dir: dir,
        ckpt,
        catalog,
    }
}

fn loaded(s: &Served) -> AppState {
    AppState::loaded(Snapshot::load(&s.ckpt, &s.catalog, None).unwrap())
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, Value) {
    let req = Request::get(uri).body(Body::empty()).unwrap();
    send(state, req).await
}

async fn post(state: &AppState, body: Value) -> (StatusCode, Value) {
    post_raw(state, body.to_string()).await
}

async fn post_raw(state: &AppState, body: String) -> (StatusCode, Value) {
    let req = Request::post("/rank")
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    send(state, req).await
}

async fn send(state: &AppState, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn not_ready_until_installed() {
    let s = setup();
    let state = AppState::new();
    for uri in ["/healthz", "/products"] {
        let (status, body) = get(&state, uri).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(body["code"], "not_ready");
    }
    let (status, _) = post(&state, json!({"product_id": "207025690", "question": "how big ?"})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    assert!(state.install(Snapshot::load(&s.ckpt, &s.catalog, None).unwrap()));
    let (status, _) = get(&state, "/healthz").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn healthz_reports_checkpoint_digest() {
    let s = setup();
    let (status, body) = get(&loaded(&s), "/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["checkpoint_digest"], file_digest(&s.ckpt).unwrap());
    assert_eq!(body["vocab_size"], s.vocab_size);
}

#[tokio::test]
async fn products_are_sorted_summaries() {
    let s = setup();
    let (status, body) = get(&loaded(&s), "/products").await;
    assert_eq!(status, StatusCode::OK);
    let list = body.as_array().unwrap();
    assert_eq!(list.len(), 8);
    let ids: Vec<&str> = list.iter().map(|p| p["product_id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let mw = list.iter().find(|p| p["product_id"] == "207025690").unwrap();
    assert_eq!(mw["category"], "Microwaves");
    assert_eq!(mw["spec_count"], 5);
}

#[tokio::test]
async fn empty_catalog_lists_nothing() {
    let s = setup();
    let empty = s.catalog.with_file_name("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let state = AppState::loaded(Snapshot::load(&s.ckpt, &empty, None).unwrap());
    let (status, body) = get(&state, "/products").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn rank_orders_all_specs_and_renders_answer() {
    let s = setup();
    let (status, body) = post(
        &loaded(&s),
        json!({"product_id": "207025690", "question": "What is the wattage of this microwave?"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["product_id"], "207025690");
    let ranked = body["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 5);
    let probs: Vec<f64> = ranked.iter().map(|r| r["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
    assert!(probs.iter().all(|p| *p > 0.0 && *p < 1.0));
    let top = &ranked[0];
    assert_eq!(
        body["answer_sentence"],
        format!("The {} is {}.", top["spec_name"].as_str().unwrap(), top["spec_value"].as_str().unwrap())
    );
}

#[tokio::test]
async fn top_k_truncates() {
    let s = setup();
    let state = loaded(&s);
    let q = "What is the wattage of this microwave?";
    let (_, full) = post(&state, json!({"product_id": "207025690", "question": q})).await;
    let (status, body) = post(&state, json!({"product_id": "207025690", "question": q, "top_k": 2})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["ranked"].as_array().unwrap()[..], full["ranked"].as_array().unwrap()[..2]);
    let (status, body) = post(&state, json!({"product_id": "207025690", "question": q, "top_k": 9})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["ranked"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn rank_errors_map_to_status_codes() {
    let s = setup();
    let state = loaded(&s);
    let cases = [
        (json!({"product_id": "missing", "question": "how big ?"}), StatusCode::NOT_FOUND, "unknown_product"),
        (json!({"product_id": "207025690", "question": "  \t "}), StatusCode::BAD_REQUEST, "empty_question"),
        (json!({"product_id": "207025690", "question": "how big ?", "top_k": 0}), StatusCode::BAD_REQUEST, "bad_request"),
        (json!({"product_id": "bare", "question": "how big ?"}), StatusCode::UNPROCESSABLE_ENTITY, "no_specifications"),
        (json!({"question": "how big ?"}), StatusCode::BAD_REQUEST, "bad_request"),
    ];
    for (body, status, code) in cases {
        let (got, err) = post(&state, body.clone()).await;
        assert_eq!(got, status, "{body}");
        assert_eq!(err["code"], code, "{body}");
    }
    let (got, err) = post_raw(&state, "{not json".into()).await;
    assert_eq!(got, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "bad_request");
}

fn cli_rank(ckpt: &Path, catalog: &Path, product: &str, question: &str) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_specqa"))
        .args(["rank", "--ckpt"])
        .arg(ckpt)
        .arg("--product-file")
        .arg(catalog)
        .args(["--product-id", product, "--question", question, "--json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[tokio::test]
async fn http_and_command_line_agree() {
    let s = setup();
    let state = loaded(&s);
    let catalog = Catalog::load(&s.catalog).unwrap();
    for summary in catalog.summaries().into_iter().filter(|p| p.spec_count > 0).take(3) {
        let q = "what is the kw3 of this cf1 ?";
        let (status, http) = post(&state, json!({"product_id": summary.product_id, "question": q})).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(http, cli_rank(&s.ckpt, &s.catalog, &summary.product_id, q));
    }
}
