//! Local HTTP API for the viewer.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use nbpurpose_core::annotations::format_timestamp;
use nbpurpose_core::export::{export, ExportOptions};
use nbpurpose_core::{
    Annotation, AnnotationError, AnnotationStore, Color, ExportFormat, ViewState, GENERATOR_VERSION,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::commands::{load_source, Fatal, Loaded, Outcome};
use crate::ServeArgs;

const FALLBACK_INDEX: &str = include_str!("../assets/index.html");

pub struct AppState {
    pub loaded: Loaded,
    /// Where accepted annotations are written; None keeps them in memory.
    pub sidecar: Option<PathBuf>,
    pub viewer: Option<PathBuf>,
    pub store: Mutex<AnnotationStore>,
}

impl AppState {
    pub fn new(loaded: Loaded, persist: bool, viewer: Option<PathBuf>) -> Self {
        let store = Mutex::new(loaded.store.clone());
        let sidecar = persist.then(|| loaded.annotations_path.clone());
        Self {
            loaded,
            sidecar,
            viewer,
            store,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/overlay", get(get_overlay))
        .route("/annotations", get(list_annotations).post(add_annotation))
        .route("/export", get(get_export))
        .route("/export/attachments/{name}", get(get_attachment))
        .fallback(get(static_asset))
        .with_state(state)
}

pub fn serve(args: &ServeArgs) -> Result<Outcome, Fatal> {
    let loaded = load_source(&args.source)?;
    let state = Arc::new(AppState::new(loaded, true, args.viewer.clone()));
    let rt = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", args.port))
            .await
            .with_context(|| format!("cannot listen on port {}", args.port))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .await
            .context("server failed")
    })?;
    Ok(Outcome::Clean)
}

fn error(status: StatusCode, name: &str, message: impl ToString) -> Response {
    (
        status,
        axum::Json(json!({"error": name, "message": message.to_string()})),
    )
        .into_response()
}

async fn get_overlay(State(s): State<Arc<AppState>>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        s.loaded.overlay_bytes.clone(),
    )
        .into_response()
}

#[derive(Debug, Deserialize)]
struct AnnotationQuery {
    cell: Option<usize>,
    color: Option<String>,
}

async fn list_annotations(
    State(s): State<Arc<AppState>>,
    Query(q): Query<AnnotationQuery>,
) -> Response {
    let color = match q.color.as_deref().map(str::parse::<Color>).transpose() {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedRequest", e),
    };
    let store = s.store.lock().await;
    axum::Json(store.query(q.cell, color)).into_response()
}

fn now_iso() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64);
    format_timestamp(secs).expect("current time is representable")
}

async fn add_annotation(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    let mut value: Value = match serde_json::from_slice(&body) {
        Ok(v @ Value::Object(_)) => v,
        Ok(_) => {
            return error(
                StatusCode::BAD_REQUEST,
                "MalformedRequest",
                "expected a JSON object",
            )
        }
        Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedRequest", e),
    };
    let obj = value.as_object_mut().expect("checked above");
    obj.entry("id")
        .or_insert_with(|| uuid::Uuid::new_v4().to_string().into());
    obj.entry("created_at").or_insert_with(|| now_iso().into());
    obj.entry("comment").or_insert_with(|| "".into());
    obj.entry("author").or_insert_with(|| "".into());
    let ann: Annotation = match serde_json::from_value(value) {
        Ok(a) => a,
        Err(e) => return error(StatusCode::BAD_REQUEST, "MalformedRequest", e),
    };

    let mut store = s.store.lock().await;
    if let Err(e) = store.add(&s.loaded.notebook, ann.clone()) {
        let status = match e {
            AnnotationError::AnchorOutOfBounds { .. } | AnnotationError::UnknownCell(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            AnnotationError::DuplicateId(_) => StatusCode::CONFLICT,
            AnnotationError::MalformedStoreFile(_) => StatusCode::BAD_REQUEST,
        };
        return error(status, e.name(), &e);
    }
    if let Some(path) = &s.sidecar {
        if let Err(e) = fs::write(path, store.to_json()) {
            store.annotations.pop();
            return error(StatusCode::INTERNAL_SERVER_ERROR, "StoreWriteFailed", e);
        }
    }
    (StatusCode::CREATED, axum::Json(ann)).into_response()
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
    expand: Option<String>,
}

fn content_type(format: ExportFormat) -> &'static str {
    match format {
        ExportFormat::Markdown => "text/markdown; charset=utf-8",
        ExportFormat::Html => "text/html; charset=utf-8",
        ExportFormat::SnapshotJson => "application/json",
    }
}

async fn run_export(
    s: &AppState,
    format: ExportFormat,
    expand: &str,
) -> Result<nbpurpose_core::ExportDocument, Response> {
    let overlay = &s.loaded.overlay;
    let view = ViewState::parse_spec(expand, overlay)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "InvalidViewState", e))?;
    let opts = ExportOptions {
        generator_version: GENERATOR_VERSION.to_string(),
        exported_at: None,
    };
    let store = s.store.lock().await;
    export(overlay, &s.loaded.notebook, &store, &view, format, &opts)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "InvalidViewState", e))
}

async fn get_export(State(s): State<Arc<AppState>>, Query(q): Query<ExportQuery>) -> Response {
    let format: ExportFormat = match q.format.as_deref().unwrap_or("snapshot-json").parse() {
        Ok(f) => f,
        Err(e) => return error(StatusCode::BAD_REQUEST, "UnknownFormat", e),
    };
    match run_export(&s, format, q.expand.as_deref().unwrap_or("none")).await {
        Ok(doc) => ([(header::CONTENT_TYPE, content_type(format))], doc.bytes).into_response(),
        Err(resp) => resp,
    }
}

async fn get_attachment(
    State(s): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
) -> Response {
    let doc = match run_export(&s, ExportFormat::Markdown, "all").await {
        Ok(doc) => doc,
        Err(resp) => return resp,
    };
    match doc.attachments.into_iter().find(|(n, _)| *n == name) {
        Some((n, bytes)) => {
            ([(header::CONTENT_TYPE, mime_for(Path::new(&n)))], bytes).into_response()
        }
        None => error(StatusCode::NOT_FOUND, "NotFound", name),
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

async fn static_asset(State(s): State<Arc<AppState>>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel_path = Path::new(rel);
    if rel_path
        .components()
        .any(|c| !matches!(c, Component::Normal(_)))
    {
        return error(StatusCode::NOT_FOUND, "NotFound", rel);
    }
    if let Some(dir) = &s.viewer {
        if let Ok(bytes) = fs::read(dir.join(rel_path)) {
            return ([(header::CONTENT_TYPE, mime_for(rel_path))], bytes).into_response();
        }
    }
    if rel == "index.html" {
        return (
            [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
            FALLBACK_INDEX,
        )
            .into_response();
    }
    error(StatusCode::NOT_FOUND, "NotFound", rel)
}
