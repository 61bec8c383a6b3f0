//! Recipes, tolerance evaluation, reports and batch runs.

mod batch;
pub mod demo;
mod report;

pub use batch::{batch_run, csv_text, BatchItem, BatchResult, MeasurementStats, Stats};
pub use report::{
    evaluate, inspect, inspect_with, Evaluation, Inspection, InspectionReport, MeasurementReport, RegistrationSummary,
    Timing, Verdict,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::flowchart::{canonical_json, validate, Band, Diagnostic, FlowError, FlowGraph};
use crate::geometry::Roi;
use crate::raster::{self, Image, RasterError};
use crate::registration::{RegistrationError, RegistrationModel, SearchParams};
use crate::tools::MeasurementKind;

pub const RECIPE_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("recipe is not valid JSON: {0}")]
    Json(String),
    #[error("recipe schema: {0}")]
    Schema(#[from] FlowError),
    #[error("unsupported recipe version {0}, expected {RECIPE_VERSION}")]
    Version(u64),
    #[error("graph is invalid: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("registration setup: {0}")]
    Model(#[from] RegistrationError),
    #[error("tolerances: {0}")]
    Tolerance(String),
}

impl RecipeError {
    pub fn is_io(&self) -> bool {
        matches!(self, RecipeError::Io { .. })
    }

    fn schema(path: &str, reason: impl std::fmt::Display) -> Self {
        RecipeError::Schema(FlowError::SchemaError { path: path.into(), reason: reason.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationConfig {
    pub template_roi: Roi,
    #[serde(default)]
    pub search: SearchParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub measurement: String,
    pub min: f64,
    pub max: f64,
}

/// The recipe file as written on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeDoc {
    pub id: Option<String>,
    /// Relative to the recipe file's directory.
    pub source_image: String,
    pub registration: RegistrationConfig,
    pub graph: FlowGraph,
    pub tolerances: Vec<ToleranceSpec>,
    /// Report-time conversion factor for lengths, e.g. mm per pixel.
    pub units_per_px: Option<f64>,
}

const RECIPE_KEYS: [&str; 7] = ["version", "id", "source_image", "registration", "graph", "tolerances", "units_per_px"];

impl RecipeDoc {
    pub fn parse(text: &str) -> Result<RecipeDoc, RecipeError> {
        let v: Value = serde_json::from_str(text).map_err(|e| RecipeError::Json(e.to_string()))?;
        RecipeDoc::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<RecipeDoc, RecipeError> {
        let obj = v.as_object().ok_or_else(|| RecipeError::schema("$", "expected an object"))?;
        if let Some(k) = obj.keys().find(|k| !RECIPE_KEYS.contains(&k.as_str())) {
            return Err(RecipeError::schema(k, "unknown field"));
        }
        let version = obj
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| RecipeError::schema("version", "expected an integer"))?;
        if version != RECIPE_VERSION {
            return Err(RecipeError::Version(version));
        }
        fn field<T: serde::de::DeserializeOwned>(
            obj: &Map<String, Value>,
            key: &str,
        ) -> Result<Option<T>, RecipeError> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| RecipeError::schema(key, e)),
            }
        }
        let id: Option<String> = field(obj, "id")?;
        let source_image: String =
            field(obj, "source_image")?.ok_or_else(|| RecipeError::schema("source_image", "missing"))?;
        let registration = field(obj, "registration")?.ok_or_else(|| RecipeError::schema("registration", "missing"))?;
        let graph = FlowGraph::from_value(obj.get("graph").unwrap_or(&Value::Null), "graph")?;
        let tolerances: Vec<ToleranceSpec> = field(obj, "tolerances")?.unwrap_or_default();
        let units_per_px: Option<f64> = field(obj, "units_per_px")?;
        if units_per_px.is_some_and(|u| !(u.is_finite() && u > 0.0)) {
            return Err(RecipeError::schema("units_per_px", "must be positive"));
        }
        Ok(RecipeDoc { id, source_image, registration, graph, tolerances, units_per_px })
    }

    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("version".into(), Value::from(RECIPE_VERSION));
        if let Some(id) = &self.id {
            m.insert("id".into(), Value::String(id.clone()));
        }
        m.insert("source_image".into(), Value::String(self.source_image.clone()));
        m.insert("registration".into(), serde_json::to_value(&self.registration).expect("serializable"));
        m.insert("graph".into(), self.graph.to_value());
        m.insert("tolerances".into(), serde_json::to_value(&self.tolerances).expect("serializable"));
        if let Some(u) = self.units_per_px {
            m.insert("units_per_px".into(), Value::from(u));
        }
        Value::Object(m)
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(&self.to_value())
    }

    /// Recipe list plus `tolerance_check` bands, keyed by measurement name.
    /// Names must exist and may be toleranced only once.
    pub fn effective_tolerances(&self) -> Result<BTreeMap<String, Band>, RecipeError> {
        let produced = self.graph.measurement_names();
        let mut out = BTreeMap::new();
        let listed = self
            .tolerances
            .iter()
            .map(|t| (format!("tolerance {:?}", t.measurement), t.measurement.clone(), Band::new(t.min, t.max)));
        let checks = self
            .graph
            .check_bands()
            .into_iter()
            .map(|(block, name, band)| (format!("block {block:?}"), name, Some(band)));
        for (origin, name, band) in listed.chain(checks) {
            let band = band.ok_or_else(|| RecipeError::Tolerance(format!("{origin}: need finite min <= max")))?;
            if !produced.contains_key(&name) {
                return Err(RecipeError::Tolerance(format!("{origin} names no measurement {name:?}")));
            }
            if out.insert(name.clone(), band).is_some() {
                return Err(RecipeError::Tolerance(format!("{name:?} is toleranced more than once")));
            }
        }
        Ok(out)
    }
}

/// A loaded, validated recipe ready to inspect images.
#[derive(Debug, Clone)]
pub struct Recipe {
    pub id: String,
    pub doc: RecipeDoc,
    pub model: RegistrationModel,
    pub tolerances: BTreeMap<String, Band>,
    pub kinds: BTreeMap<String, MeasurementKind>,
}

impl Recipe {
    /// Reads the recipe and its source image. The id defaults to the file stem.
    pub fn load(path: &Path) -> Result<Recipe, RecipeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RecipeError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let doc = RecipeDoc::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let src_path = dir.join(&doc.source_image);
        let source = load_image(&src_path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "recipe".into());
        Recipe::from_doc(doc, source, &stem)
    }

    pub fn from_doc(doc: RecipeDoc, source: Image, default_id: &str) -> Result<Recipe, RecipeError> {
        let diagnostics = validate(&doc.graph);
        if !diagnostics.is_empty() {
            return Err(RecipeError::Invalid(diagnostics));
        }
        let tolerances = doc.effective_tolerances()?;
        let model =
            RegistrationModel::build(Arc::new(source), doc.registration.template_roi, doc.registration.search.clone())?;
        let id = doc.id.clone().unwrap_or_else(|| default_id.to_string());
        let kinds = doc.graph.measurement_names();
        Ok(Recipe { id, doc, model, tolerances, kinds })
    }

    pub fn source(&self) -> &Image {
        self.model.source()
    }
}

/// Loads an image, reporting every failure as an I/O-class recipe error.
pub fn load_image(path: &Path) -> Result<Image, RecipeError> {
    raster::load(path).map_err(|e| {
        let message = match &e {
            RasterError::IoFailure { source, .. } => source.to_string(),
            other => other.to_string(),
        };
        RecipeError::Io { path: path.to_path_buf(), message }
    })
}
