//! Measurement tools.
//!
//! Every tool receives a [`ToolContext`] carrying the source→target transform
//! `T` and the target image. ROIs are defined in the source frame; a tool
//! maps its sampling grid through `D = T · roi_to_parent(roi)` and reads the
//! target by bilinear point sampling. All geometric outputs are expressed in
//! the source frame.

mod blob;
mod edge;
mod measure;

pub use blob::{extract_blobs, label_components, Blob, BlobParams, BlobPolarity};
pub use edge::{extract_line, extract_line_detailed, EdgeParams, LineExtraction, LineModel, Polarity, Smoothing};
pub use measure::{measure_angle, measure_distance, measure_intensity, AngleMode, Geometry, IntensityStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Roi, Transform};
use crate::raster::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("ROI {0:?} maps outside the target image")]
    RoiOutsideTarget(Roi),
    #[error("only {found} scanline(s) produced an edge, need at least 2")]
    InsufficientEdgePoints { found: usize },
    #[error("edge points have zero scatter")]
    DegenerateFit,
    #[error("invalid tool parameters: {0}")]
    InvalidParams(String),
}

/// What a tool needs from the engine: the registration result and the
/// target image it is mapped onto.
#[derive(Debug, Clone, Copy)]
pub struct ToolContext<'a> {
    pub transform: Transform,
    pub target: &'a Image,
    /// `decompose(T).scale`.
    pub scale_hint: f64,
}

impl<'a> ToolContext<'a> {
    pub fn new(transform: Transform, target: &'a Image) -> Self {
        ToolContext { transform, target, scale_hint: transform.scale() }
    }

    /// Display/sampling transform for an ROI: ROI-local → target.
    pub fn roi_transform(&self, roi: &Roi) -> Transform {
        self.transform.compose(&roi.to_parent())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    AngleDeg,
    DistancePx,
    IntensityMean,
    IntensityMin,
    IntensityMax,
    BlobCount,
    BlobAreaPx2,
    Score,
}

impl MeasurementKind {
    /// Length-like kinds converted by `units_per_px` at report time, with
    /// the power the factor is raised to.
    pub fn length_power(self) -> Option<i32> {
        match self {
            MeasurementKind::DistancePx => Some(1),
            MeasurementKind::BlobAreaPx2 => Some(2),
            _ => None,
        }
    }
}

/// A named scalar result. Geometric kinds are always in source-frame units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub kind: MeasurementKind,
    pub value: f64,
}

impl Measurement {
    pub fn new(name: impl Into<String>, kind: MeasurementKind, value: f64) -> Self {
        Measurement { name: name.into(), kind, value }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Regular local sampling grid of an ROI at one source pixel pitch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Grid {
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn for_roi(roi: &Roi) -> Grid {
        Grid { nx: ((roi.width + 1e-9).floor() as usize).max(1), ny: ((roi.height + 1e-9).floor() as usize).max(1) }
    }
}

/// Fails unless every listed local point maps inside the target.
pub(crate) fn ensure_inside(
    ctx: &ToolContext<'_>,
    roi: &Roi,
    d: &Transform,
    local: &[Point2],
) -> Result<(), ToolError> {
    if local.iter().all(|p| ctx.target.contains(d.apply(*p))) {
        Ok(())
    } else {
        Err(ToolError::RoiOutsideTarget(*roi))
    }
}
