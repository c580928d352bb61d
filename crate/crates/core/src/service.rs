//! HTTP sampling service.
//!
//! Requests run on a bounded pool: `workers` concurrent samples, at most
//! `queue_depth` more waiting, each bounded by `timeout_ms`. Model weights
//! are shared read-only, so concurrent requests match serial execution.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use customnet_autograd::ParamStore;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::camera::{RelativePose, SphericalPose};
use crate::conditioning::ConditionBundle;
use crate::config::RunConfig;
use crate::datapipe::{fitted_render, BBox};
use crate::diffusion::{sample, Checkpoint, CustomNet, NoiseSchedule, SamplerConfig};
use crate::error::{Error, Result};
use crate::eval::{identity_score, ObjectEncoder};
use crate::world::{Caption, Color, PrimitiveObject, RgbImage, RgbaImage, Shape};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A built-in reference object.
#[derive(Clone, Debug)]
pub struct GalleryItem {
    pub id: String,
    pub object: PrimitiveObject,
    pub reference: RgbaImage,
}

const GALLERY_COLORS: [Color; 4] = [Color::Red, Color::Blue, Color::Yellow, Color::Green];

/// Every shape in four colors, rendered from a fixed viewpoint.
pub fn gallery(res: usize) -> Result<Vec<GalleryItem>> {
    let pose = SphericalPose::new(FRAC_PI_3, FRAC_PI_4, 1.75)?;
    let mut items = Vec::new();
    for (i, (shape, color)) in Shape::ALL
        .iter()
        .flat_map(|s| GALLERY_COLORS.iter().map(move |c| (*s, *c)))
        .enumerate()
    {
        let object = PrimitiveObject::new(shape, color.rgb(), 0.45, i as u64)?;
        let (reference, _) = fitted_render(&object, &pose, res)?;
        items.push(GalleryItem {
            id: format!("{}-{}", color.name(), shape.name()),
            object,
            reference,
        });
    }
    Ok(items)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireBBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// The arguments of one generation. Exactly one of `object_id` and
/// `reference` names the object; `prompt` selects the generation branch,
/// `background` the composition branch, and neither generates with the
/// null prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    #[serde(default)]
    pub object_id: Option<String>,
    /// Base64 PNG with alpha.
    #[serde(default)]
    pub reference: Option<String>,
    /// `[Δθ, Δφ, Δr]`.
    pub rel_pose: [f64; 3],
    pub bbox: WireBBox,
    #[serde(default)]
    pub prompt: Option<String>,
    /// Base64 PNG.
    #[serde(default)]
    pub background: Option<String>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub guidance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuickMetrics {
    /// Cosine similarity of the generated bbox crop and the reference
    /// under the model's object encoder.
    pub identity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub image: String,
    pub metrics: Option<QuickMetrics>,
    pub seed: u64,
    pub timing_ms: u64,
}

/// Shared read-only state.
pub struct AppState {
    pub config: RunConfig,
    pub model: CustomNet,
    pub params: ParamStore<f32>,
    pub schedule: NoiseSchedule,
    pub checkpoint_digest: String,
    pub gallery: Vec<GalleryItem>,
    workers: Semaphore,
    admitted: Semaphore,
}

impl AppState {
    /// Refuses checkpoints whose architecture does not match `config`.
    pub fn new(config: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        config.validate()?;
        ckpt.check_digest(&config.architecture_digest())?;
        let model = CustomNet::new(ckpt.meta.model.clone())?;
        let schedule = NoiseSchedule::from_config(&ckpt.meta.schedule)?;
        let svc = &config.service;
        if svc.workers == 0 {
            return Err(Error::invalid("service.workers", "must be positive"));
        }
        Ok(Self {
            gallery: gallery(config.data.pipeline.resolution)?,
            model,
            params: ckpt.inference_params().clone(),
            schedule,
            checkpoint_digest: ckpt.digest()?,
            workers: Semaphore::new(svc.workers),
            admitted: Semaphore::new(svc.workers + svc.queue_depth),
            config,
        })
    }

    pub fn load(config: RunConfig, checkpoint: &Path) -> Result<Self> {
        Self::new(config, &Checkpoint::load(checkpoint)?)
    }

    fn resolution(&self) -> usize {
        self.config.data.pipeline.resolution
    }

    fn decode_png<T>(&self, field: &str, b64: &str, decode: impl Fn(&[u8]) -> Result<T>) -> Result<T> {
        let bytes = B64
            .decode(b64)
            .map_err(|e| Error::invalid(field, format!("not base64: {e}")))?;
        decode(&bytes).map_err(|e| Error::invalid(field, format!("not a PNG: {e}")))
    }

    /// Validates a request into conditions and sampler settings.
    pub fn prepare(&self, req: &SampleRequest) -> Result<(ConditionBundle, SamplerConfig, RgbaImage)> {
        let res = self.resolution();
        let reference = match (&req.object_id, &req.reference) {
            (Some(id), None) => self
                .gallery
                .iter()
                .find(|g| &g.id == id)
                .map(|g| g.reference.clone())
                .ok_or_else(|| Error::invalid("object_id", format!("unknown object {id:?}")))?,
            (None, Some(b64)) => {
                let img = self.decode_png("reference", b64, RgbaImage::from_png_bytes)?;
                if img.width() != res || img.height() != res {
                    return Err(Error::invalid("reference", format!("expected {res}x{res}")));
                }
                img
            }
            _ => return Err(Error::invalid("object_id", "give exactly one of object_id and reference")),
        };
        let [dt, dp, dr] = req.rel_pose;
        if !(dt.is_finite() && dp.is_finite() && dr.is_finite()) {
            return Err(Error::invalid("rel_pose", "entries must be finite"));
        }
        let rel = RelativePose::from_deltas(dt, dp, dr);
        let b = req.bbox;
        let bbox = BBox::new(b.x, b.y, b.w, b.h)?;
        let (caption, background) = match (&req.prompt, &req.background) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid("background", "give a prompt or a background, not both"))
            }
            (Some(p), None) => (Caption::from_text(p).map_err(|e| Error::invalid("prompt", e.to_string()))?, None),
            (None, Some(b64)) => {
                let bg = self.decode_png("background", b64, RgbImage::from_png_bytes)?;
                if bg.width() != res || bg.height() != res {
                    return Err(Error::invalid("background", format!("expected {res}x{res}")));
                }
                (Caption::empty(), Some(bg))
            }
            (None, None) => (Caption::empty(), None),
        };
        let mut cfg = self.config.eval.sampler;
        if let Some(s) = req.steps {
            if s == 0 || s > self.config.service.max_steps {
                return Err(Error::invalid(
                    "steps",
                    format!("{s} outside 1..={}", self.config.service.max_steps),
                ));
            }
            cfg.steps = s;
        }
        if let Some(g) = req.guidance {
            cfg.guidance = g;
        }
        cfg.validate(&self.schedule)?;
        let bundle = ConditionBundle::new(reference.clone(), &rel, bbox, caption, background, res)?;
        Ok((bundle, cfg, reference))
    }

    /// Samples the request's image.
    pub fn generate(&self, req: &SampleRequest) -> Result<RgbImage> {
        let (bundle, cfg, _) = self.prepare(req)?;
        sample(&self.model, &self.params, &self.schedule, &bundle, req.seed, &cfg)
    }

    /// Runs one request synchronously.
    pub fn run(&self, req: &SampleRequest) -> Result<SampleResponse> {
        let start = Instant::now();
        let (bundle, cfg, reference) = self.prepare(req)?;
        let img = sample(&self.model, &self.params, &self.schedule, &bundle, req.seed, &cfg)?;
        let encoder = ObjectEncoder {
            params: &self.params,
            config: &self.model.config.encoders,
        };
        let identity = identity_score(&encoder, &img, &bundle.bbox, &reference)?;
        Ok(SampleResponse {
            image: B64.encode(img.png_bytes()?),
            metrics: Some(QuickMetrics { identity }),
            seed: req.seed,
            timing_ms: start.elapsed().as_millis() as u64,
        })
    }
}

/// JSON error body with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: String,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind: kind.into(),
            field: None,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let field = match &e {
            Error::InvalidInput { field, .. } => Some(field.clone()),
            _ => None,
        };
        let status = if e.is_user_error() {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        Self {
            status,
            kind: e.kind().into(),
            field,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let message = r.body_text();
        // serde messages look like "bbox: missing field `h` at ..." or
        // "unknown field `x`, expected ..."
        let detail = message.rsplit("target type: ").next().unwrap_or_default();
        let path = detail
            .split_once(": ")
            .map(|(p, _)| p)
            .filter(|p| !p.contains(' '));
        let name = detail.split('`').nth(1).filter(|_| detail.contains(" field `"));
        let field = match (path, name) {
            (Some(p), Some(n)) => Some(format!("{p}.{n}")),
            (Some(p), None) => Some(p.to_string()),
            (None, n) => n.map(str::to_string),
        };
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: "invalid_input".into(),
            field,
            message,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"kind": self.kind, "field": self.field, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({"version": VERSION, "checkpoint_digest": s.checkpoint_digest}))
}

async fn objects(State(s): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let mut items = Vec::new();
    for g in &s.gallery {
        items.push(json!({
            "id": g.id,
            "shape": g.object.shape,
            "color": Color::nearest(g.object.albedo),
            "thumbnail": B64.encode(g.reference.png_bytes()?),
        }));
    }
    Ok(Json(json!({ "objects": items })))
}

async fn config(State(s): State<Arc<AppState>>) -> Json<RunConfig> {
    Json(s.config.clone())
}

async fn sample_handler(
    State(s): State<Arc<AppState>>,
    body: Result<Json<SampleRequest>, JsonRejection>,
) -> Result<Json<SampleResponse>, ApiError> {
    let Json(req) = body?;
    // validate before queueing so bad requests fail fast
    s.prepare(&req)?;
    let _admitted = s
        .admitted
        .try_acquire()
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "queue_full", "sampling queue is full"))?;
    let timeout = Duration::from_millis(s.config.service.timeout_ms);
    let work = async {
        let _worker = s.workers.acquire().await.expect("semaphore never closed");
        let state = s.clone();
        tokio::task::spawn_blocking(move || state.run(&req))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
            .map_err(ApiError::from)
    };
    match tokio::time::timeout(timeout, work).await {
        Ok(r) => r.map(Json),
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "timeout",
            format!("sampling exceeded {} ms", timeout.as_millis()),
        )),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/objects", get(objects))
        .route("/api/config", get(config))
        .route("/api/sample", post(sample_handler))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
