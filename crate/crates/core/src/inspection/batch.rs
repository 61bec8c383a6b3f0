//! Parallel batch inspection and aggregate statistics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inspect, load_image, InspectionReport, Recipe, Verdict};

#[derive(Debug, Clone)]
pub enum BatchItem {
    Done(Box<InspectionReport>),
    IoError { image: String, message: String },
}

impl BatchItem {
    pub fn image(&self) -> &str {
        match self {
            BatchItem::Done(r) => &r.image,
            BatchItem::IoError { image, .. } => image,
        }
    }

    /// Verdict string; unreadable images report `IO-ERROR`.
    pub fn verdict_str(&self) -> &'static str {
        match self {
            BatchItem::Done(r) => r.overall.as_str(),
            BatchItem::IoError { .. } => "IO-ERROR",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// In input order, whatever the thread count.
    pub items: Vec<BatchItem>,
    pub stats: Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl MeasurementStats {
    pub fn from_values(values: &[f64]) -> Option<MeasurementStats> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        // shifted two-pass: subtract the first value before summing
        let k = values[0];
        let mean_d = values.iter().map(|v| v - k).sum::<f64>() / n as f64;
        let mean = k + mean_d;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some(MeasurementStats {
            count: n,
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Stats {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub reject: usize,
    pub io_error: usize,
    /// Over every image that produced the measurement.
    pub measurements: BTreeMap<String, MeasurementStats>,
}

impl Stats {
    pub fn from_items(items: &[BatchItem]) -> Stats {
        let mut s = Stats { total: items.len(), ..Stats::default() };
        let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for item in items {
            match item {
                BatchItem::IoError { .. } => s.io_error += 1,
                BatchItem::Done(r) => {
                    match r.overall {
                        Verdict::Pass => s.pass += 1,
                        Verdict::Fail => s.fail += 1,
                        Verdict::Reject => s.reject += 1,
                    }
                    for m in &r.measurements {
                        if let Some(v) = m.value {
                            values.entry(m.name.as_str()).or_default().push(v);
                        }
                    }
                }
            }
        }
        s.measurements = values
            .into_iter()
            .filter_map(|(k, v)| MeasurementStats::from_values(&v).map(|st| (k.to_string(), st)))
            .collect();
        s
    }
}

fn run_one(recipe: &Recipe, path: &Path) -> BatchItem {
    let image = path.to_string_lossy().into_owned();
    match load_image(path) {
        Ok(img) => BatchItem::Done(Box::new(inspect(recipe, &img, &image).report)),
        Err(e) => BatchItem::IoError { image, message: e.to_string() },
    }
}

/// Inspects every path on `jobs` worker threads (0 = one per core).
pub fn batch_run(recipe: &Recipe, paths: &[PathBuf], jobs: usize) -> BatchResult {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    let items: Vec<BatchItem> = pool.install(|| paths.par_iter().map(|p| run_one(recipe, p)).collect());
    let stats = Stats::from_items(&items);
    BatchResult { items, stats }
}

/// One row per image: `image, verdict, registration_score`, then every
/// toleranced measurement in name order. Missing values are empty cells.
pub fn csv_text(recipe: &Recipe, items: &[BatchItem]) -> String {
    let names: Vec<&String> = recipe.tolerances.keys().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image".to_string(), "verdict".into(), "registration_score".into()];
    header.extend(names.iter().map(|n| n.to_string()));
    w.write_record(&header).expect("in-memory write");
    for item in items {
        let mut row = vec![item.image().to_string(), item.verdict_str().to_string()];
        match item {
            BatchItem::Done(r) => {
                row.push(r.registration.score.map(|s| s.to_string()).unwrap_or_default());
                row.extend(names.iter().map(|n| r.value(n).map(|v| v.to_string()).unwrap_or_default()));
            }
            BatchItem::IoError { .. } => row.extend(std::iter::repeat_n(String::new(), names.len() + 1)),
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
