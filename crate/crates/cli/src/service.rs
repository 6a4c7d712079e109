//! HTTP prediction service.
//!
//! `POST /api/v1/predict` takes `{review_text, rating, product_id}`, embeds
//! the text with the paragraph-vector model, looks up the product embedding
//! (zeros when the product is unknown), classifies the concatenation and
//! reports whether the predicted sentiment disagrees with the rating.
//! `GET /api/v1/health` lists which model artifacts are loaded.
//!
//! Models are loaded once into an immutable bundle shared by all handlers.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ndarray::Array1;
use reviewsense::paravec::PvError;
use reviewsense::product_embed::load_store;
use reviewsense::{label_from_rating, preprocess, EmbeddingStore, PvModel, SentimentClass, SvmModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct PredictRequest {
    pub review_text: String,
    pub rating: i64,
    pub product_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct PredictResponse {
    pub predicted_class: SentimentClass,
    pub rating_class: SentimentClass,
    pub mismatch: bool,
    pub product_known: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct ArtifactStatus {
    pub name: String,
    pub loaded: bool,
    pub version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct HealthResponse {
    /// `ok` when every artifact is loaded, `degraded` otherwise.
    pub status: String,
    pub artifacts: Vec<ArtifactStatus>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

/// Mismatch flag and the warning shown to the user (empty when they agree).
pub fn feedback(predicted: SentimentClass, rating: u8, rating_class: SentimentClass) -> (bool, String) {
    if predicted == rating_class {
        return (false, String::new());
    }
    let message = format!(
        "The review text reads as {predicted}, but a {rating}-star rating means {rating_class}. \
         Consider updating the rating."
    );
    (true, message)
}

pub const PV_ARTIFACT: &str = "pv.model";
pub const STORE_ARTIFACT: &str = "products.emb";
pub const SVM_ARTIFACT: &str = "svm.model";

/// Everything the predict handler reads. Any artifact may be absent; the
/// service still starts and reports itself degraded.
#[derive(Debug, Default)]
pub struct ModelBundle {
    pub pv: Option<PvModel>,
    pub store: Option<EmbeddingStore>,
    pub svm: Option<SvmModel>,
}

impl ModelBundle {
    /// Loads whichever paths are given and exist. A file that exists but
    /// fails to parse is an error.
    pub fn load(pv: Option<&Path>, store: Option<&Path>, svm: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let present = |p: Option<&Path>| p.filter(|p| p.exists()).map(Path::to_path_buf);
        let mut bundle = Self::default();
        if let Some(p) = present(pv) {
            let mut model = PvModel::load(&p).with_context(|| format!("loading {}", p.display()))?;
            if let Some(seed) = seed {
                model.config.seed = seed;
            }
            bundle.pv = Some(model);
        }
        if let Some(p) = present(store) {
            bundle.store = Some(load_store(&p).with_context(|| format!("loading {}", p.display()))?);
        }
        if let Some(p) = present(svm) {
            bundle.svm = Some(SvmModel::load(&p).with_context(|| format!("loading {}", p.display()))?);
        }
        Ok(bundle)
    }

    pub fn health(&self) -> HealthResponse {
        let artifacts = vec![
            ArtifactStatus {
                name: PV_ARTIFACT.into(),
                loaded: self.pv.is_some(),
                version: self.pv.as_ref().map(|m| format!("v1 dim={} docs={}", m.dim(), m.doc_count())),
            },
            ArtifactStatus {
                name: STORE_ARTIFACT.into(),
                loaded: self.store.is_some(),
                version: self.store.as_ref().map(|s| format!("v1 dim={} count={}", s.dim(), s.len())),
            },
            ArtifactStatus {
                name: SVM_ARTIFACT.into(),
                loaded: self.svm.is_some(),
                version: self.svm.as_ref().map(|m| format!("v1 dim={} classes={}", m.dim, m.machines.len())),
            },
        ];
        let missing: Vec<String> = artifacts.iter().filter(|a| !a.loaded).map(|a| a.name.clone()).collect();
        HealthResponse {
            status: if missing.is_empty() { "ok" } else { "degraded" }.into(),
            artifacts,
            missing,
        }
    }

    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, ApiError> {
        let (Some(pv), Some(store), Some(svm)) = (&self.pv, &self.store, &self.svm) else {
            return Err(ApiError::ModelNotLoaded(self.health().missing));
        };
        let rating = u8::try_from(req.rating)
            .ok()
            .filter(|r| (1..=5).contains(r))
            .ok_or(ApiError::BadRating(req.rating))?;
        let rating_class = label_from_rating(rating).map_err(|_| ApiError::BadRating(req.rating))?;
        let review = pv.infer_vector(&preprocess(&req.review_text)).map_err(|e| match e {
            PvError::NoKnownTokens => ApiError::EmptyReview,
            other => ApiError::Internal(other.to_string()),
        })?;
        let (product, product_known) = store.get_or_zero(&req.product_id);
        let feature: Array1<f64> = review.iter().chain(product.iter()).copied().collect();
        let predicted_class = svm.predict(feature.view()).map_err(|e| ApiError::Internal(e.to_string()))?;
        let (mismatch, message) = feedback(predicted_class, rating, rating_class);
        Ok(PredictResponse { predicted_class, rating_class, mismatch, product_known, message })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    EmptyReview,
    BadRating(i64),
    BadRequest(String),
    ModelNotLoaded(Vec<String>),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, message) = match self {
            ApiError::EmptyReview => (
                StatusCode::BAD_REQUEST,
                "EmptyReview",
                "the review has no words the model knows".to_string(),
            ),
            ApiError::BadRating(r) => (StatusCode::BAD_REQUEST, "BadRating", format!("rating {r} is not in 1..5")),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest", m),
            ApiError::ModelNotLoaded(missing) => (
                StatusCode::SERVICE_UNAVAILABLE,
                "ModelNotLoaded",
                format!("missing artifacts: {}", missing.join(", ")),
            ),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "Internal", m),
        };
        (status, Json(ErrorBody { error: error.into(), message })).into_response()
    }
}

async fn predict_handler(
    State(bundle): State<Arc<ModelBundle>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<PredictResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    // inference is CPU-bound; keep it off the async workers
    tokio::task::spawn_blocking(move || bundle.predict(&req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map(Json)
}

async fn health_handler(State(bundle): State<Arc<ModelBundle>>) -> Json<HealthResponse> {
    Json(bundle.health())
}

pub fn router(bundle: Arc<ModelBundle>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/predict", post(predict_handler))
        .route("/api/v1/health", get(health_handler))
        .with_state(bundle);
    match static_dir.filter(|d| d.is_dir()) {
        Some(dir) => api.fallback(move |uri: Uri| serve_static(dir.clone(), uri)),
        None => api,
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Files under `dir`; `/` and directories map to `index.html`.
async fn serve_static(dir: PathBuf, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let mut path = dir.clone();
    for part in rel.split('/').filter(|p| !p.is_empty()) {
        if part == ".." || part == "." || part.contains('\\') {
            return StatusCode::NOT_FOUND.into_response();
        }
        path.push(part);
    }
    if path.is_dir() {
        path.push("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Binds `addr` and serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, bundle: ModelBundle, static_dir: Option<PathBuf>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let health = bundle.health();
    eprintln!("listening on http://{} ({})", listener.local_addr()?, health.status);
    for name in &health.missing {
        eprintln!("warning: {name} not loaded; predictions will return 503");
    }
    axum::serve(listener, router(Arc::new(bundle), static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
