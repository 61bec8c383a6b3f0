//! HTTP API over the inspection engine.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/recipes` | | `[{id, version}]` |
//! | PUT | `/recipes/{id}` | multipart `recipe`, `source`, `version` | `{id, version}`; 201 created, 200 replaced |
//! | GET | `/recipes/{id}` | | canonical recipe JSON, version in `ETag` and `X-Recipe-Version` |
//! | GET | `/recipes/{id}/source.png` | | reference image |
//! | POST | `/recipes/{id}/runs` | multipart `image` | `RunRecord` |
//! | GET | `/recipes/{id}/runs` | | `[RunRecord]` |
//! | GET | `/recipes/{id}/stats` | | `Stats` over stored runs |
//! | POST | `/recipes/{id}/dryrun` | multipart `image` plus optional `recipe`, `graph`, `tolerances` | `{report, annotations}` |
//! | GET | `/runs/{run}/report.json`, `overlay.png`, `annotations.json` | | stored asset |
//!
//! Errors are JSON `{error, diagnostics?}`: 400 malformed request, 404 unknown
//! id, 409 version conflict, 422 invalid recipe or image.

pub mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use registra_core::flowchart::canonical_json;
use serde::Serialize;
use serde_json::json;

pub use store::{DryRunEdits, RecipeSummary, RunRecord, Store, StoreError};

/// Uploads are whole images; the default 2 MB cap is too small.
const BODY_LIMIT: usize = 64 * 1024 * 1024;

pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = self.0;
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::BadRequest(_) => StatusCode::BAD_REQUEST,
            StoreError::VersionConflict { .. } => StatusCode::CONFLICT,
            StoreError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = match &e {
            StoreError::Invalid { diagnostics, .. } => json!({"error": e.to_string(), "diagnostics": diagnostics}),
            StoreError::VersionConflict { current, .. } => json!({"error": e.to_string(), "current_version": current}),
            _ => json!({"error": e.to_string()}),
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn canonical<T: Serialize>(v: &T) -> Response {
    let text = canonical_json(&serde_json::to_value(v).expect("response serializes"));
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, StoreError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| StoreError::Io(format!("worker: {e}")))?.map_err(ApiError)
}

#[derive(Default)]
struct Form {
    fields: Vec<(String, Option<String>, Vec<u8>)>,
}

impl Form {
    async fn read(mut mp: Multipart) -> ApiResult<Form> {
        let bad = |e: axum::extract::multipart::MultipartError| StoreError::BadRequest(format!("multipart: {e}"));
        let mut form = Form::default();
        while let Some(field) = mp.next_field().await.map_err(bad)? {
            let name = field.name().unwrap_or_default().to_string();
            let file = field.file_name().map(str::to_string);
            let bytes = field.bytes().await.map_err(bad)?;
            form.fields.push((name, file, bytes.to_vec()));
        }
        Ok(form)
    }

    fn bytes(&self, name: &str) -> Option<&[u8]> {
        self.fields.iter().find(|f| f.0 == name).map(|f| f.2.as_slice())
    }

    fn file_name(&self, name: &str) -> Option<&str> {
        self.fields.iter().find(|f| f.0 == name).and_then(|f| f.1.as_deref())
    }

    fn text(&self, name: &str) -> ApiResult<Option<String>> {
        self.bytes(name)
            .map(|b| {
                String::from_utf8(b.to_vec())
                    .map_err(|_| StoreError::BadRequest(format!("field {name:?} is not UTF-8")).into())
            })
            .transpose()
    }

    fn require(&self, name: &str) -> ApiResult<Vec<u8>> {
        self.bytes(name)
            .map(<[u8]>::to_vec)
            .ok_or_else(|| StoreError::BadRequest(format!("missing field {name:?}")).into())
    }

    /// Image name for reports: explicit `name` field, else the upload's file name.
    fn image_name(&self) -> ApiResult<String> {
        Ok(self
            .text("name")?
            .or_else(|| self.file_name("image").map(str::to_string))
            .unwrap_or_else(|| "upload".into()))
    }
}

async fn list_recipes(State(store): State<Arc<Store>>) -> Response {
    canonical(&store.list())
}

async fn get_recipe(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = store.get(&id)?;
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    headers.insert(header::ETAG, HeaderValue::from_str(&format!("\"{}\"", r.version)).expect("ascii"));
    headers.insert("x-recipe-version", HeaderValue::from(r.version));
    Ok((headers, r.text.clone()).into_response())
}

async fn put_recipe(State(store): State<Arc<Store>>, Path(id): Path<String>, mp: Multipart) -> ApiResult<Response> {
    let form = Form::read(mp).await?;
    let text = form.text("recipe")?.ok_or_else(|| StoreError::BadRequest("missing field \"recipe\"".into()))?;
    let source = form.bytes("source").map(<[u8]>::to_vec);
    let expected = match form.text("version")? {
        None => None,
        Some(v) => Some(v.trim().parse::<u64>().map_err(|_| StoreError::BadRequest(format!("bad version {v:?}")))?),
    };
    let id2 = id.clone();
    let (created, version) = blocking(move || store.put(&id2, &text, source.as_deref(), expected)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, canonical(&RecipeSummary { id, version })).into_response())
}

async fn source_png(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = store.source_png(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn post_run(State(store): State<Arc<Store>>, Path(id): Path<String>, mp: Multipart) -> ApiResult<Response> {
    let form = Form::read(mp).await?;
    let image = form.require("image")?;
    let name = form.image_name()?;
    let record = blocking(move || store.run(&id, &image, &name)).await?;
    Ok(canonical(&record))
}

async fn list_runs(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let runs = store.runs(&id)?;
    Ok(canonical(&runs.iter().map(|r| r.as_ref()).collect::<Vec<_>>()))
}

async fn stats(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(canonical(&store.stats(&id)?))
}

async fn dryrun(State(store): State<Arc<Store>>, Path(id): Path<String>, mp: Multipart) -> ApiResult<Response> {
    let form = Form::read(mp).await?;
    let image = form.require("image")?;
    let name = form.image_name()?;
    let edits =
        DryRunEdits { recipe: form.text("recipe")?, graph: form.text("graph")?, tolerances: form.text("tolerances")? };
    let result = blocking(move || store.dryrun(&id, &image, &name, &edits)).await?;
    Ok(canonical(&result))
}

async fn run_asset(State(store): State<Arc<Store>>, Path((run, asset)): Path<(String, String)>) -> ApiResult<Response> {
    let ty = match asset.as_str() {
        "report.json" | "annotations.json" => "application/json",
        "overlay.png" => "image/png",
        _ => return Err(StoreError::NotFound(format!("asset {asset:?}")).into()),
    };
    let bytes = store.run_asset(&run, &asset)?;
    Ok(([(header::CONTENT_TYPE, ty)], bytes).into_response())
}

/// Builds the API router. With `ui_dir`, unmatched paths serve static files from it.
pub fn router(store: Arc<Store>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/recipes", get(list_recipes))
        .route("/recipes/{id}", get(get_recipe).put(put_recipe))
        .route("/recipes/{id}/source.png", get(source_png))
        .route("/recipes/{id}/runs", post(post_run).get(list_runs))
        .route("/recipes/{id}/stats", get(stats))
        .route("/recipes/{id}/dryrun", post(dryrun))
        .route("/runs/{run}/{asset}", get(run_asset))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}
