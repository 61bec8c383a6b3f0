//! Recovery of the source→target similarity by normalized cross-correlation.
//!
//! A [`RegistrationModel`] keeps the whole source image and a user-chosen
//! template rectangle. [`register`] searches translation × rotation × scale
//! coarse-to-fine over a 2×2-mean pyramid and returns the transform that
//! carries template content at source position `p` to `T·p` in the target.
//! Rotated/scaled templates are produced by point-sampling the source; the
//! target is only ever read, never resampled.

mod oracle;
mod search;

pub use oracle::register_translation_bruteforce;
pub use search::{register, register_detailed, SearchDetail};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Roi, Transform};
use crate::raster::{Image, Rect};

pub const MIN_TEMPLATE_SIDE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("template has zero intensity variance")]
    FlatTemplate,
    #[error("template ROI {0:?} is not inside the source image")]
    TemplateOutOfBounds(Roi),
    #[error("template must be at least {MIN_TEMPLATE_SIDE} px on each side (got {width}×{height})")]
    TemplateTooSmall { width: usize, height: usize },
    #[error("template ROI must be axis-aligned (theta {0}°)")]
    RotatedTemplate(f64),
    #[error("registration failed: best score {score:.4} below minimum {min_score}")]
    RegistrationFailed { score: f64, min_score: f64 },
    #[error("target {target_width}×{target_height} smaller than template {template_width}×{template_height}")]
    DimensionMismatch { target_width: usize, target_height: usize, template_width: usize, template_height: usize },
    #[error("sequence has zero variance")]
    ZeroVariance,
    #[error("sequences differ in length or are shorter than 2 ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
}

/// Search grid and acceptance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Half-width of the rotation search, degrees.
    pub theta_range: f64,
    pub theta_step: f64,
    pub theta_fine_step: f64,
    /// Inclusive `[min, max]` scale search interval.
    pub scale_range: [f64; 2],
    pub scale_step: f64,
    pub scale_fine_step: f64,
    pub pyramid_levels: usize,
    pub min_score: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            theta_range: 10.0,
            theta_step: 1.0,
            theta_fine_step: 0.1,
            scale_range: [0.9, 1.1],
            scale_step: 0.02,
            scale_fine_step: 0.005,
            pyramid_levels: 3,
            min_score: 0.6,
        }
    }
}

impl SearchParams {
    /// Translation-only search at unit scale.
    pub fn translation_only() -> Self {
        SearchParams { theta_range: 0.0, scale_range: [1.0, 1.0], ..SearchParams::default() }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: &str| Err(RegistrationError::InvalidParams(m.to_string()));
        let finite = [
            self.theta_range,
            self.theta_step,
            self.theta_fine_step,
            self.scale_range[0],
            self.scale_range[1],
            self.scale_step,
            self.scale_fine_step,
            self.min_score,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("parameters must be finite");
        }
        if self.theta_range < 0.0 || self.theta_range >= 180.0 {
            return bad("theta_range must be in [0, 180)");
        }
        if !(self.theta_step > 0.0 && self.theta_fine_step > 0.0) {
            return bad("theta steps must be positive");
        }
        if !(self.scale_range[0] > 0.0 && self.scale_range[0] <= self.scale_range[1]) {
            return bad("scale_range must satisfy 0 < min <= max");
        }
        if !(self.scale_step > 0.0 && self.scale_fine_step > 0.0) {
            return bad("scale steps must be positive");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1");
        }
        if !(self.min_score > 0.0 && self.min_score <= 1.0) {
            return bad("min_score must be in (0, 1]");
        }
        Ok(())
    }

    pub(crate) fn rotates(&self) -> bool {
        self.theta_range > 0.0
    }

    pub(crate) fn scales(&self) -> bool {
        self.scale_range[1] > self.scale_range[0]
    }
}

/// Reference image plus the template region and search configuration.
#[derive(Debug, Clone)]
pub struct RegistrationModel {
    source: Arc<Image>,
    template_roi: Roi,
    template: Rect,
    search: SearchParams,
    /// Decimated source levels 1.., level 0 is `source`.
    pyramid: Vec<Image>,
}

impl RegistrationModel {
    pub fn build(source: Arc<Image>, template_roi: Roi, search: SearchParams) -> Result<Self, RegistrationError> {
        search.validate()?;
        if template_roi.theta_deg != 0.0 {
            return Err(RegistrationError::RotatedTemplate(template_roi.theta_deg));
        }
        let x0 = template_roi.origin.x.round();
        let y0 = template_roi.origin.y.round();
        let w = template_roi.width.round();
        let h = template_roi.height.round();
        if x0 < 0.0 || y0 < 0.0 || x0 + w > source.width() as f64 || y0 + h > source.height() as f64 {
            return Err(RegistrationError::TemplateOutOfBounds(template_roi));
        }
        let template = Rect::new(x0 as usize, y0 as usize, w as usize, h as usize);
        if template.width < MIN_TEMPLATE_SIDE || template.height < MIN_TEMPLATE_SIDE {
            return Err(RegistrationError::TemplateTooSmall { width: template.width, height: template.height });
        }
        let view = source.view(template).map_err(|_| RegistrationError::TemplateOutOfBounds(template_roi))?;
        let values: Vec<f64> = view.iter().map(f64::from).collect();
        if variance(&values) <= 1e-12 {
            return Err(RegistrationError::FlatTemplate);
        }

        let levels = usable_levels(&template, search.pyramid_levels);
        let mut pyramid: Vec<Image> = Vec::with_capacity(levels - 1);
        for _ in 1..levels {
            let next = pyramid.last().unwrap_or(&source).decimate();
            pyramid.push(next);
        }
        Ok(RegistrationModel { source, template_roi, template, search, pyramid })
    }

    pub fn source(&self) -> &Image {
        &self.source
    }

    pub fn source_arc(&self) -> &Arc<Image> {
        &self.source
    }

    pub fn template_roi(&self) -> &Roi {
        &self.template_roi
    }

    /// Template pixel rectangle in the source.
    pub fn template_rect(&self) -> Rect {
        self.template
    }

    pub fn search(&self) -> &SearchParams {
        &self.search
    }

    pub fn levels(&self) -> usize {
        self.pyramid.len() + 1
    }

    pub(crate) fn source_level(&self, level: usize) -> &Image {
        if level == 0 {
            &self.source
        } else {
            &self.pyramid[level - 1]
        }
    }

    /// Template centre (pixel-centre convention) in source coordinates.
    pub fn template_center(&self) -> Point2 {
        Point2::new(
            self.template.x as f64 + (self.template.width as f64 - 1.0) / 2.0,
            self.template.y as f64 + (self.template.height as f64 - 1.0) / 2.0,
        )
    }
}

/// Levels are dropped while the coarsest template side would fall below 6 px.
fn usable_levels(template: &Rect, requested: usize) -> usize {
    let side = template.width.min(template.height);
    let mut levels = requested.max(1);
    while levels > 1 && side >> (levels - 1) < 6 {
        levels -= 1;
    }
    levels
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    /// Source→target transform.
    pub transform: Transform,
    pub score: f64,
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Normalized cross-correlation of two equal-length sequences, in `[-1, 1]`.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64, RegistrationError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(RegistrationError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let da = x - ma;
        let db = y - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 1e-18 || sbb <= 1e-18 {
        return Err(RegistrationError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
