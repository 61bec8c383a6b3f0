//! File-system persistence for recipes and runs.
//!
//! ```text
//! <root>/recipes/<id>/{recipe.json, source.png, meta.json}
//! <root>/runs/<run>/{record.json, report.json, annotations.json, overlay.png}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use registra_core::flowchart::{canonical_json, Diagnostic, FlowGraph};
use registra_core::inspection::{
    inspect, BatchItem, InspectionReport, Recipe, RecipeDoc, RecipeError, Stats, ToleranceSpec,
};
use registra_core::overlay::{self, MappedAnnotation};
use registra_core::raster::{self, Image};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("recipe {id} is at version {current}; got {given:?}")]
    VersionConflict { id: String, current: u64, given: Option<u64> },
    #[error("{message}")]
    Invalid { message: String, diagnostics: Vec<Diagnostic> },
    #[error("storage: {0}")]
    Io(String),
}

impl StoreError {
    fn invalid(message: impl Into<String>) -> Self {
        StoreError::Invalid { message: message.into(), diagnostics: Vec::new() }
    }
}

impl From<RecipeError> for StoreError {
    fn from(e: RecipeError) -> Self {
        match e {
            RecipeError::Invalid(diagnostics) => {
                StoreError::Invalid { message: RecipeError::Invalid(diagnostics.clone()).to_string(), diagnostics }
            }
            other => StoreError::invalid(other.to_string()),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io(format!("{}: {e}", path.display()))
}

/// Recipe and run ids become directory names, so keep them tame.
pub fn check_id(id: &str) -> Result<(), StoreError> {
    let ok =
        !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(StoreError::BadRequest(format!("invalid id {id:?}: use 1-64 of [A-Za-z0-9_-]")))
    }
}

#[derive(Debug)]
pub struct StoredRecipe {
    pub version: u64,
    /// Canonical JSON exactly as served.
    pub text: String,
    pub recipe: Arc<Recipe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLinks {
    pub report: String,
    pub overlay: String,
    pub annotations: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    /// Monotonic per recipe, from 1.
    pub seq: u64,
    pub recipe_id: String,
    pub recipe_version: u64,
    pub created_at_ms: u64,
    pub report: InspectionReport,
    pub links: RunLinks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeSummary {
    pub id: String,
    pub version: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DryRun {
    pub report: InspectionReport,
    pub annotations: Vec<MappedAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    version: u64,
}

/// Replacement pieces for a dry run; each is optional.
#[derive(Debug, Default)]
pub struct DryRunEdits {
    pub recipe: Option<String>,
    pub graph: Option<String>,
    pub tolerances: Option<String>,
}

pub struct Store {
    root: PathBuf,
    recipes: RwLock<BTreeMap<String, Arc<StoredRecipe>>>,
    runs: Mutex<BTreeMap<String, RunIndex>>,
}

#[derive(Default)]
struct RunIndex {
    next_seq: u64,
    /// Completed runs, ascending by `seq`.
    done: Vec<Arc<RunRecord>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io(path, e))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Store {
    /// Opens (creating if needed) a data directory and indexes its contents.
    pub fn open(root: &Path) -> Result<Store, StoreError> {
        for sub in ["recipes", "runs"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        }
        let store = Store {
            root: root.to_path_buf(),
            recipes: RwLock::new(BTreeMap::new()),
            runs: Mutex::new(BTreeMap::new()),
        };
        for id in store.list_dir("recipes")? {
            let loaded = store.load_recipe(&id)?;
            store.recipes.write().unwrap().insert(id, Arc::new(loaded));
        }
        let mut runs: BTreeMap<String, RunIndex> = BTreeMap::new();
        for run in store.list_dir("runs")? {
            let path = root.join("runs").join(&run).join("record.json");
            let Ok(text) = std::fs::read_to_string(&path) else {
                // a run that crashed before its record was written
                continue;
            };
            let rec: RunRecord = serde_json::from_str(&text).map_err(|e| io(&path, e))?;
            let index = runs.entry(rec.recipe_id.clone()).or_default();
            index.next_seq = index.next_seq.max(rec.seq + 1);
            index.done.push(Arc::new(rec));
        }
        for index in runs.values_mut() {
            index.done.sort_by_key(|r| r.seq);
        }
        *store.runs.lock().unwrap() = runs;
        Ok(store)
    }

    fn list_dir(&self, sub: &str) -> Result<Vec<String>, StoreError> {
        let d = self.root.join(sub);
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&d).map_err(|e| io(&d, e))? {
            let entry = entry.map_err(|e| io(&d, e))?;
            if entry.path().is_dir() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    fn recipe_dir(&self, id: &str) -> PathBuf {
        self.root.join("recipes").join(id)
    }

    fn run_dir(&self, run: &str) -> PathBuf {
        self.root.join("runs").join(run)
    }

    fn load_recipe(&self, id: &str) -> Result<StoredRecipe, StoreError> {
        let dir = self.recipe_dir(id);
        let meta_path = dir.join("meta.json");
        let meta: Meta = serde_json::from_slice(&std::fs::read(&meta_path).map_err(|e| io(&meta_path, e))?)
            .map_err(|e| io(&meta_path, e))?;
        let text_path = dir.join("recipe.json");
        let text = std::fs::read_to_string(&text_path).map_err(|e| io(&text_path, e))?;
        let doc = RecipeDoc::parse(&text)?;
        let source = raster::load(dir.join("source.png")).map_err(|e| io(&dir, e))?;
        let recipe = Recipe::from_doc(doc, source, id)?;
        Ok(StoredRecipe { version: meta.version, text, recipe: Arc::new(recipe) })
    }

    pub fn list(&self) -> Vec<RecipeSummary> {
        self.recipes
            .read()
            .unwrap()
            .iter()
            .map(|(id, r)| RecipeSummary { id: id.clone(), version: r.version })
            .collect()
    }

    pub fn get(&self, id: &str) -> Result<Arc<StoredRecipe>, StoreError> {
        self.recipes.read().unwrap().get(id).cloned().ok_or_else(|| StoreError::NotFound(format!("recipe {id:?}")))
    }

    pub fn source_png(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        self.get(id)?;
        let path = self.recipe_dir(id).join("source.png");
        std::fs::read(&path).map_err(|e| io(&path, e))
    }

    /// Creates or replaces a recipe. Replacement requires `expected` to
    /// equal the stored version. Returns whether it was created, and the
    /// new version.
    pub fn put(
        &self,
        id: &str,
        text: &str,
        source: Option<&[u8]>,
        expected: Option<u64>,
    ) -> Result<(bool, u64), StoreError> {
        check_id(id)?;
        let doc = RecipeDoc::parse(text)?;
        if let Some(doc_id) = &doc.id {
            if doc_id != id {
                return Err(StoreError::invalid(format!("recipe id {doc_id:?} does not match URL id {id:?}")));
            }
        }
        let source: Image = match source {
            Some(bytes) => raster::decode(bytes).map_err(|e| StoreError::invalid(format!("source image: {e}")))?,
            None => match self.recipes.read().unwrap().get(id) {
                Some(old) => old.recipe.source().clone(),
                None => return Err(StoreError::invalid("a source image is required for a new recipe")),
            },
        };
        let canonical = doc.to_canonical_json();
        let recipe = Recipe::from_doc(doc, source, id)?;

        let mut recipes = self.recipes.write().unwrap();
        let current = recipes.get(id).map(|r| r.version);
        let ok = match current {
            Some(v) => expected == Some(v),
            None => matches!(expected, None | Some(0)),
        };
        if !ok {
            return Err(StoreError::VersionConflict { id: id.into(), current: current.unwrap_or(0), given: expected });
        }
        let version = current.unwrap_or(0) + 1;
        let dir = self.recipe_dir(id);
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let png = raster::encode_png(recipe.source()).map_err(|e| io(&dir, e))?;
        write_atomic(&dir.join("source.png"), &png)?;
        write_atomic(&dir.join("recipe.json"), canonical.as_bytes())?;
        write_atomic(&dir.join("meta.json"), serde_json::to_string(&Meta { version }).unwrap().as_bytes())?;
        recipes.insert(id.into(), Arc::new(StoredRecipe { version, text: canonical, recipe: Arc::new(recipe) }));
        Ok((current.is_none(), version))
    }

    /// Inspects an uploaded image and persists the run.
    pub fn run(&self, id: &str, image: &[u8], image_name: &str) -> Result<RunRecord, StoreError> {
        let stored = self.get(id)?;
        let target = raster::decode(image).map_err(|e| StoreError::invalid(format!("image: {e}")))?;
        let result = inspect(&stored.recipe, &target, image_name);

        // A failed write burns its number; sequence numbers stay monotonic.
        let seq = {
            let mut runs = self.runs.lock().unwrap();
            let index = runs.entry(id.to_string()).or_default();
            index.next_seq = index.next_seq.max(1);
            index.next_seq += 1;
            index.next_seq - 1
        };
        let run_id = format!("{id}-{seq:06}");
        let dir = self.run_dir(&run_id);
        let record = RunRecord {
            run_id: run_id.clone(),
            seq,
            recipe_id: id.into(),
            recipe_version: stored.version,
            created_at_ms: now_ms(),
            report: result.report.clone(),
            links: RunLinks {
                report: format!("/runs/{run_id}/report.json"),
                overlay: format!("/runs/{run_id}/overlay.png"),
                annotations: format!("/runs/{run_id}/annotations.json"),
            },
        };
        let written = (|| {
            std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
            write_atomic(&dir.join("report.json"), result.report.to_canonical_json().as_bytes())?;
            write_atomic(&dir.join("annotations.json"), result.annotations_json().as_bytes())?;
            write_atomic(&dir.join("overlay.png"), &result.overlay_png(&target))?;
            let text = canonical_json(&serde_json::to_value(&record).expect("record serializes"));
            // written last: its presence marks the run complete
            write_atomic(&dir.join("record.json"), text.as_bytes())
        })();
        if let Err(e) = written {
            let _ = std::fs::remove_dir_all(&dir);
            return Err(e);
        }
        let mut runs = self.runs.lock().unwrap();
        let done = &mut runs.get_mut(id).expect("created above").done;
        let pos = done.partition_point(|r| r.seq < seq);
        done.insert(pos, Arc::new(record.clone()));
        Ok(record)
    }

    /// Completed runs of a recipe in sequence order.
    pub fn runs(&self, id: &str) -> Result<Vec<Arc<RunRecord>>, StoreError> {
        self.get(id)?;
        let runs = self.runs.lock().unwrap();
        Ok(runs.get(id).map(|i| i.done.clone()).unwrap_or_default())
    }

    pub fn stats(&self, id: &str) -> Result<Stats, StoreError> {
        let items: Vec<BatchItem> =
            self.runs(id)?.iter().map(|r| BatchItem::Done(Box::new(r.report.clone()))).collect();
        Ok(Stats::from_items(&items))
    }

    /// Reads one stored run asset (`report.json`, `overlay.png` or `annotations.json`).
    pub fn run_asset(&self, run: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        check_id(run).map_err(|_| StoreError::NotFound(format!("run {run:?}")))?;
        let dir = self.run_dir(run);
        if !dir.join("record.json").is_file() {
            return Err(StoreError::NotFound(format!("run {run:?}")));
        }
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| io(&path, e))
    }

    /// Inspects with transient edits applied to the stored recipe. Nothing
    /// is written.
    pub fn dryrun(&self, id: &str, image: &[u8], image_name: &str, edits: &DryRunEdits) -> Result<DryRun, StoreError> {
        let stored = self.get(id)?;
        let target = raster::decode(image).map_err(|e| StoreError::invalid(format!("image: {e}")))?;
        let mut doc = match &edits.recipe {
            Some(text) => RecipeDoc::parse(text)?,
            None => stored.recipe.doc.clone(),
        };
        if let Some(text) = &edits.graph {
            doc.graph = FlowGraph::parse(text).map_err(RecipeError::from)?;
        }
        if let Some(text) = &edits.tolerances {
            doc.tolerances = serde_json::from_str::<Vec<ToleranceSpec>>(text)
                .map_err(|e| StoreError::invalid(format!("tolerances: {e}")))?;
        }
        let recipe = Recipe::from_doc(doc, stored.recipe.source().clone(), id)?;
        let result = inspect(&recipe, &target, image_name);
        Ok(DryRun { annotations: overlay::map_all(&result.annotations), report: result.report })
    }
}
