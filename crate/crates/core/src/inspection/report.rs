//! Tolerance evaluation and single-image inspection.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Recipe;
use crate::flowchart::{canonical_json, execute, Band, FlowError, RegistrationMode};
use crate::geometry::{Similarity, Transform};
use crate::overlay::{self, Annotation, Style};
use crate::raster::Image;
use crate::registration::RegistrationError;
use crate::tools::MeasurementKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "REJECT-NO-REGISTRATION")]
    Reject,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Reject => "REJECT-NO-REGISTRATION",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSummary {
    /// Best score found, when the search got that far.
    pub score: Option<f64>,
    /// Decomposed `T`; absent for a rejected part.
    pub transform: Option<Similarity>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub name: String,
    pub kind: MeasurementKind,
    /// Source-frame units.
    pub value: Option<f64>,
    /// `value` converted with the recipe's `units_per_px`, for lengths and areas.
    pub value_mm: Option<f64>,
    pub error: Option<String>,
    pub tolerance: Option<Band>,
    pub verdict: Option<Verdict>,
}

/// Wall-clock time per stage. Not part of the canonical report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    pub recipe_id: String,
    pub image: String,
    pub registration: RegistrationSummary,
    pub measurements: Vec<MeasurementReport>,
    pub overall: Verdict,
    #[serde(skip)]
    pub timing: Timing,
}

impl InspectionReport {
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.name == name).and_then(|m| m.value)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.measurements.iter().filter(|m| m.verdict == Some(Verdict::Fail)).map(|m| m.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Per measurement, in input order; `None` when untoleranced.
    pub verdicts: Vec<Option<Verdict>>,
    pub overall: Verdict,
}

/// Inclusive band check of every toleranced measurement. Overall PASS
/// requires every toleranced value in band and no errored measurement.
pub fn evaluate(measurements: &[(String, Result<f64, String>)], tolerances: &BTreeMap<String, Band>) -> Evaluation {
    let mut pass = true;
    let verdicts = measurements
        .iter()
        .map(|(name, value)| {
            let band = tolerances.get(name);
            let verdict = match (value, band) {
                (Err(_), Some(_)) => Some(Verdict::Fail),
                (Err(_), None) => {
                    pass = false;
                    None
                }
                (Ok(v), Some(b)) => Some(if b.contains(*v) { Verdict::Pass } else { Verdict::Fail }),
                (Ok(_), None) => None,
            };
            pass &= verdict != Some(Verdict::Fail);
            verdict
        })
        .collect();
    // a toleranced measurement that was never produced also fails
    let missing = tolerances.keys().any(|k| !measurements.iter().any(|(n, _)| n == k));
    Evaluation { verdicts, overall: if pass && !missing { Verdict::Pass } else { Verdict::Fail } }
}

#[derive(Debug, Clone)]
pub struct Inspection {
    pub report: InspectionReport,
    /// Styled by verdict, in the order the blocks emitted them.
    pub annotations: Vec<Annotation>,
}

impl Inspection {
    /// Target-frame annotations as canonical JSON.
    pub fn annotations_json(&self) -> String {
        canonical_json(&serde_json::to_value(overlay::map_all(&self.annotations)).expect("annotations serialize"))
    }

    /// Renders the annotations over a copy of `target`.
    pub fn overlay_png(&self, target: &Image) -> Vec<u8> {
        overlay::render_png(target, &self.annotations)
    }
}

pub fn inspect(recipe: &Recipe, target: &Image, image_name: &str) -> Inspection {
    inspect_with(recipe, target, image_name, RegistrationMode::Model(&recipe.model), None)
}

/// Inspection with an explicit registration mode and optional replacement
/// tolerances (used for dry runs).
pub fn inspect_with(
    recipe: &Recipe,
    target: &Image,
    image_name: &str,
    mode: RegistrationMode<'_>,
    tolerances: Option<&BTreeMap<String, Band>>,
) -> Inspection {
    let start = Instant::now();
    let tolerances = tolerances.unwrap_or(&recipe.tolerances);
    let exec = match execute(&recipe.doc.graph, target, mode) {
        Ok(e) => e,
        Err(FlowError::CyclicGraph(ids)) => panic!("validated recipe graph has a cycle through {ids:?}"),
        Err(e) => panic!("validated recipe graph failed to execute: {e}"),
    };
    let mut report = InspectionReport {
        recipe_id: recipe.id.clone(),
        image: image_name.to_string(),
        registration: RegistrationSummary { score: None, transform: None, error: None },
        measurements: Vec::new(),
        overall: Verdict::Reject,
        timing: Timing::default(),
    };
    let mut annotations = exec.annotations;

    match &exec.registration {
        Err(e) => {
            report.registration.error = Some(e.to_string());
            if let RegistrationError::RegistrationFailed { score, .. } = e {
                report.registration.score = Some(*score);
            }
        }
        Ok(r) => {
            report.registration.score = Some(r.score);
            report.registration.transform = Some(canonical_similarity(&r.transform));
            let pairs: Vec<(String, Result<f64, String>)> =
                exec.measurements.iter().map(|m| (m.name.clone(), m.value.clone())).collect();
            let eval = evaluate(&pairs, tolerances);
            let mut overall = eval.overall;
            if !exec.failures.is_empty() {
                overall = Verdict::Fail;
            }
            report.overall = overall;
            let units = recipe.doc.units_per_px;
            for (m, verdict) in exec.measurements.iter().zip(eval.verdicts) {
                let value = m.value.as_ref().ok().copied();
                let value_mm = match (value, units, m.kind.length_power()) {
                    (Some(v), Some(u), Some(p)) => Some(v * u.powi(p)),
                    _ => None,
                };
                report.measurements.push(MeasurementReport {
                    name: m.name.clone(),
                    kind: m.kind,
                    value,
                    value_mm,
                    error: m.value.as_ref().err().cloned(),
                    tolerance: tolerances.get(&m.name).copied(),
                    verdict,
                });
            }
            // Style each block's annotations after its worst verdict.
            let mut block_style: BTreeMap<&str, Style> = BTreeMap::new();
            for (m, r) in exec.measurements.iter().zip(&report.measurements) {
                let s = match r.verdict {
                    Some(Verdict::Fail) => Style::Fail,
                    Some(_) => Style::Pass,
                    None => continue,
                };
                let e = block_style.entry(m.block.as_str()).or_insert(s);
                if s == Style::Fail {
                    *e = Style::Fail;
                }
            }
            for f in &exec.failures {
                block_style.insert(f.block.as_str(), Style::Fail);
            }
            for a in annotations.iter_mut() {
                if let Some(s) = block_style.get(a.block.as_str()) {
                    a.style = *s;
                }
            }
        }
    }
    report.timing.total_ms = start.elapsed().as_secs_f64() * 1e3;
    Inspection { report, annotations }
}

/// Decomposition with signed zeros normalized, so reports never contain `-0.0`.
fn canonical_similarity(t: &Transform) -> Similarity {
    let s = t.decompose();
    Similarity { tx: s.tx + 0.0, ty: s.ty + 0.0, theta_deg: s.theta_deg + 0.0, scale: s.scale }
}
