//! HTTP ranking service over a checkpoint and a product catalog.
//!
//! The model, catalog and templates are loaded once into an immutable
//! [`Snapshot`]. Until that happens every endpoint answers 503.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};

use crate::data::{load_jsonl, SpecProduct};
use crate::error::{Error, Result};
use crate::eval::rank_candidates;
use crate::model::Model;
use crate::text::tokenize;
use crate::train::{file_digest, load_checkpoint};

pub const DEFAULT_TEMPLATE: &str = "The {spec_name} is {spec_value}.";

const PLACEHOLDERS: [&str; 2] = ["spec_name", "spec_value"];

/// Answer patterns: a global default plus optional per-category overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerTemplates {
    #[serde(default = "default_pattern")]
    pub default: String,
    #[serde(default)]
    pub categories: BTreeMap<String, String>,
}

fn default_pattern() -> String {
    DEFAULT_TEMPLATE.to_string()
}

impl Default for AnswerTemplates {
    fn default() -> Self {
        AnswerTemplates {
            default: default_pattern(),
            categories: BTreeMap::new(),
        }
    }
}

/// Rejects unbalanced braces and placeholders other than `{spec_name}` and
/// `{spec_value}`.
fn check_pattern(pattern: &str) -> std::result::Result<(), String> {
    let mut rest = pattern;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(format!("unmatched '}}' in {pattern:?}"));
        }
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| format!("unclosed '{{' in {pattern:?}"))?;
        let name = &after[..close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(format!("unknown placeholder {{{name}}} in {pattern:?}"));
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

impl AnswerTemplates {
    pub fn validate(&self) -> Result<()> {
        std::iter::once(&self.default)
            .chain(self.categories.values())
            .try_for_each(|p| check_pattern(p).map_err(Error::Config))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let templates: AnswerTemplates = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        templates.validate()?;
        Ok(templates)
    }

    pub fn pattern(&self, category: &str) -> &str {
        self.categories.get(category).unwrap_or(&self.default)
    }

    pub fn render(&self, category: &str, spec_name: &str, spec_value: &str) -> String {
        self.pattern(category)
            .replace("{spec_name}", spec_name)
            .replace("{spec_value}", spec_value)
    }
}

/// Products keyed and listed by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Catalog {
    products: BTreeMap<String, SpecProduct>,
}

impl Catalog {
    pub fn new(products: Vec<SpecProduct>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, p) in products.into_iter().enumerate() {
            let id = p.product_id.clone();
            if map.insert(id.clone(), p).is_some() {
                return Err(Error::Format {
                    path: "<catalog>".into(),
                    line: i + 1,
                    message: format!("duplicate product_id {id:?}"),
                });
            }
        }
        Ok(Catalog { products: map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Catalog::new(load_jsonl(path)?).map_err(|e| match e {
            Error::Format { line, message, .. } => Error::Format {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn get(&self, product_id: &str) -> Option<&SpecProduct> {
        self.products.get(product_id)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn summaries(&self) -> Vec<ProductSummary> {
        self.products
            .values()
            .map(|p| ProductSummary {
                product_id: p.product_id.clone(),
                category: p.category.clone(),
                spec_count: p.specs.len(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSummary {
    pub product_id: String,
    pub category: String,
    pub spec_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRequest {
    pub product_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedSpec {
    pub spec_name: String,
    pub spec_value: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub product_id: String,
    pub ranked: Vec<RankedSpec>,
    pub answer_sentence: String,
}

/// Ranks a product's specifications for `question` and renders the answer
/// from the top one. Used by both the HTTP handler and the command line.
pub fn rank_product(
    model: &Model,
    product: &SpecProduct,
    question: &str,
    top_k: Option<usize>,
    templates: &AnswerTemplates,
) -> Result<RankResponse> {
    let names: Vec<&str> = product.specs.iter().map(|s| s.name.as_str()).collect();
    let ranked = rank_candidates(model, question, &names)?;
    let top = &product.specs[ranked[0].index];
    let answer_sentence = templates.render(&product.category, &top.name, &top.value);
    let keep = top_k.unwrap_or(ranked.len()).min(ranked.len());
    Ok(RankResponse {
        product_id: product.product_id.clone(),
        ranked: ranked
            .into_iter()
            .take(keep)
            .map(|r| {
                let spec = &product.specs[r.index];
                RankedSpec {
                    spec_name: spec.name.clone(),
                    spec_value: spec.value.clone(),
                    probability: r.probability,
                }
            })
            .collect(),
        answer_sentence,
    })
}

/// Everything a request reads.
#[derive(Debug)]
pub struct Snapshot {
    pub model: Model,
    pub checkpoint_digest: String,
    pub catalog: Catalog,
    pub templates: AnswerTemplates,
}

impl Snapshot {
    pub fn load(checkpoint: &Path, catalog: &Path, templates: Option<&Path>) -> Result<Self> {
        let ckpt = load_checkpoint(checkpoint)?;
        let model = ckpt.to_model()?;
        let templates = match templates {
            Some(p) => AnswerTemplates::load(p)?,
            None => AnswerTemplates::default(),
        };
        Ok(Snapshot {
            model,
            checkpoint_digest: file_digest(checkpoint)?,
            catalog: Catalog::load(catalog)?,
            templates,
        })
    }
}

/// Shared handle; empty until [`AppState::install`] is called.
#[derive(Clone, Debug, Default)]
pub struct AppState {
    snapshot: Arc<OnceLock<Snapshot>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn loaded(snapshot: Snapshot) -> Self {
        let state = Self::new();
        state.install(snapshot);
        state
    }

    /// First call wins; later calls are ignored.
    pub fn install(&self, snapshot: Snapshot) -> bool {
        self.snapshot.set(snapshot).is_ok()
    }

    pub fn snapshot(&self) -> Option<&Snapshot> {
        self.snapshot.get()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Failure(
            status,
            ApiError {
                code: code.into(),
                message: message.into(),
            },
        )
    }

    fn not_ready() -> Self {
        Failure::new(StatusCode::SERVICE_UNAVAILABLE, "not_ready", "checkpoint is still loading")
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub checkpoint_digest: String,
    pub vocab_size: usize,
}

async fn healthz(State(state): State<AppState>) -> std::result::Result<Json<Health>, Failure> {
    let snap = state.snapshot().ok_or_else(Failure::not_ready)?;
    Ok(Json(Health {
        status: "ok".into(),
        checkpoint_digest: snap.checkpoint_digest.clone(),
        vocab_size: snap.model.vocab().len(),
    }))
}

async fn products(State(state): State<AppState>) -> std::result::Result<Json<Vec<ProductSummary>>, Failure> {
    let snap = state.snapshot().ok_or_else(Failure::not_ready)?;
    Ok(Json(snap.catalog.summaries()))
}

async fn rank(
    State(state): State<AppState>,
    body: std::result::Result<Json<RankRequest>, JsonRejection>,
) -> std::result::Result<Json<RankResponse>, Failure> {
    let snap = state.snapshot().ok_or_else(Failure::not_ready)?;
    let Json(req) = body.map_err(|e| Failure::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let product = snap.catalog.get(&req.product_id).ok_or_else(|| {
        Failure::new(
            StatusCode::NOT_FOUND,
            "unknown_product",
            format!("no product with id {:?}", req.product_id),
        )
    })?;
    if tokenize(&req.question).is_empty() {
        return Err(Failure::new(StatusCode::BAD_REQUEST, "empty_question", "question has no tokens"));
    }
    if req.top_k == Some(0) {
        return Err(Failure::new(StatusCode::BAD_REQUEST, "bad_request", "top_k must be at least 1"));
    }
    if product.specs.is_empty() {
        return Err(Failure::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "no_specifications",
            format!("product {:?} has no specifications", req.product_id),
        ));
    }
    rank_product(&snap.model, product, &req.question, req.top_k, &snap.templates)
        .map(Json)
        .map_err(|e| {
            error!("rank failed for {}: {e}", req.product_id);
            Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/products", get(products))
        .route("/rank", post(rank))
        .with_state(state)
}

/// Where [`run`] loads its snapshot from.
#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub checkpoint: PathBuf,
    pub catalog: PathBuf,
    pub templates: Option<PathBuf>,
}

/// Binds, then loads the snapshot in the background; the listener answers
/// 503 until loading finishes. A failed load is returned after the server
/// is shut down.
pub async fn run(config: ServeConfig) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|e| Error::io(format!("bind {}", config.addr), e))?;
    info!("listening on {}", config.addr);
    let state = AppState::new();
    let loader = {
        let state = state.clone();
        tokio::task::spawn_blocking(move || {
            let snap = Snapshot::load(&config.checkpoint, &config.catalog, config.templates.as_deref())?;
            info!("loaded checkpoint {}", snap.checkpoint_digest);
            state.install(snap);
            Ok::<_, Error>(())
        })
    };
    let (tx, rx) = tokio::sync::oneshot::channel::<Error>();
    tokio::spawn(async move {
        match loader.await {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                let _ = tx.send(e);
            }
            Err(join) => {
                let _ = tx.send(Error::Numeric(format!("loader panicked: {join}")));
            }
        }
    });
    let failed: Arc<OnceLock<Error>> = Arc::new(OnceLock::new());
    let failed_in = failed.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async move {
            tokio::select! {
                Ok(e) = rx => {
                    let _ = failed_in.set(e);
                }
                _ = tokio::signal::ctrl_c() => {}
            }
        })
        .await
        .map_err(|e| Error::io("serve", e))?;
    match Arc::try_unwrap(failed).ok().and_then(|f| f.into_inner()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns() {
        assert!(check_pattern(DEFAULT_TEMPLATE).is_ok());
        assert!(check_pattern("no placeholders").is_ok());
        assert!(check_pattern("The {spec} is").is_err());
        assert!(check_pattern("The {spec_name").is_err());
        assert!(check_pattern("x } y").is_err());
    }

    #[test]
    fn render_uses_category_override() {
        let mut t = AnswerTemplates::default();
        t.categories
            .insert("Microwaves".into(), "This microwave has {spec_value} for {spec_name}.".into());
        assert_eq!(
            t.render("Tools", "Wattage (watts)", "1100"),
            "The Wattage (watts) is 1100."
        );
        assert_eq!(
            t.render("Microwaves", "Wattage (watts)", "1100"),
            "This microwave has 1100 for Wattage (watts)."
        );
    }

    #[test]
    fn templates_json_defaults() {
        let t: AnswerTemplates = serde_json::from_str(r#"{"categories": {"a": "{spec_name}"}}"#).unwrap();
        assert_eq!(t.default, DEFAULT_TEMPLATE);
        let bad: AnswerTemplates = serde_json::from_str(r#"{"default": "{oops}"}"#).unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn catalog_orders_and_rejects_duplicates() {
        let c = Catalog::new(vec![
            SpecProduct::new("b", "x", vec![("n", "v")]),
            SpecProduct::new("a", "y", vec![]),
        ])
        .unwrap();
        let ids: Vec<_> = c.summaries().into_iter().map(|s| s.product_id).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(Catalog::new(vec![
            SpecProduct::new("a", "x", vec![]),
            SpecProduct::new("a", "y", vec![]),
        ])
        .is_err());
    }
}
