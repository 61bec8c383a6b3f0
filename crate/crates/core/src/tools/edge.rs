//! Caliper-style edge extraction and total-least-squares line fitting.

use serde::{Deserialize, Serialize};

use super::{ensure_inside, Grid, ToolContext, ToolError};
use crate::geometry::{Point2, Roi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Intensity rises along the profile direction (local +x).
    DarkToLight,
    LightToDark,
    #[default]
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// `[1, 2, 1] / 4`
    #[default]
    Binomial3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeParams {
    pub polarity: Polarity,
    pub min_contrast: f64,
    pub num_scanlines: usize,
    pub smoothing: Smoothing,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams { polarity: Polarity::Any, min_contrast: 0.1, num_scanlines: 16, smoothing: Smoothing::Binomial3 }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<(), ToolError> {
        if !(self.min_contrast > 0.0 && self.min_contrast <= 1.0) {
            return Err(ToolError::InvalidParams("min_contrast must be in (0, 1]".into()));
        }
        if self.num_scanlines < 2 {
            return Err(ToolError::InvalidParams("num_scanlines must be >= 2".into()));
        }
        Ok(())
    }
}

/// A fitted line in the source frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineModel {
    pub point: Point2,
    /// Unit direction, oriented along the ROI's local y-axis.
    pub dir: Point2,
    pub support: usize,
    pub rms_residual: f64,
}

impl LineModel {
    pub fn normal(&self) -> Point2 {
        Point2::new(-self.dir.y, self.dir.x)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        (p - self.point).cross(self.dir).abs()
    }

    /// Orthogonal projection of `p` onto the line.
    pub fn foot(&self, p: Point2) -> Point2 {
        self.point + self.dir * (p - self.point).dot(self.dir)
    }

    /// The part of the line inside `roi`, in ROI-local coordinates.
    pub fn clip_to_roi(&self, roi: &Roi) -> Option<(Point2, Point2)> {
        let inv = roi.to_parent().invert();
        let p = inv.apply(self.point);
        let d = inv.apply_vector(self.dir);
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for (pc, dc, hi) in [(p.x, d.x, roi.width), (p.y, d.y, roi.height)] {
            if dc.abs() < 1e-12 {
                if pc < 0.0 || pc > hi {
                    return None;
                }
                continue;
            }
            let a = (0.0 - pc) / dc;
            let b = (hi - pc) / dc;
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1).then(|| (p + d * t0, p + d * t1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineExtraction {
    pub line: LineModel,
    /// Accepted edge points in ROI-local coordinates.
    pub edges_local: Vec<Point2>,
}

pub fn extract_line(ctx: &ToolContext<'_>, roi: &Roi, params: &EdgeParams) -> Result<LineModel, ToolError> {
    extract_line_detailed(ctx, roi, params).map(|e| e.line)
}

/// Casts `num_scanlines` profiles along the ROI's local x-axis, stacked
/// along local y, locates the strongest matching gradient on each, and fits
/// a line through the edge points in the source frame.
pub fn extract_line_detailed(
    ctx: &ToolContext<'_>,
    roi: &Roi,
    params: &EdgeParams,
) -> Result<LineExtraction, ToolError> {
    params.validate()?;
    let d = ctx.roi_transform(roi);
    let nx = Grid::for_roi(roi).nx;
    let n = params.num_scanlines;
    let ys: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * roi.height / n as f64).collect();
    let last_x = (nx - 1) as f64;
    ensure_inside(
        ctx,
        roi,
        &d,
        &[
            Point2::new(0.0, ys[0]),
            Point2::new(last_x, ys[0]),
            Point2::new(0.0, ys[n - 1]),
            Point2::new(last_x, ys[n - 1]),
        ],
    )?;

    let mut profile = vec![0.0; nx];
    let mut smooth = vec![0.0; nx];
    let mut edges_local = Vec::with_capacity(n);
    for &y in &ys {
        for (i, v) in profile.iter_mut().enumerate() {
            let p = d.apply(Point2::new(i as f64, y));
            *v = ctx.target.sample_clamped(p.x, p.y);
        }
        let prof = match params.smoothing {
            Smoothing::None => &profile,
            Smoothing::Binomial3 => {
                for i in 0..nx {
                    let l = profile[i.saturating_sub(1)];
                    let r = profile[(i + 1).min(nx - 1)];
                    smooth[i] = 0.25 * l + 0.5 * profile[i] + 0.25 * r;
                }
                &smooth
            }
        };
        if let Some(x) = strongest_edge(prof, params) {
            edges_local.push(Point2::new(x, y));
        }
    }
    if edges_local.len() < 2 {
        return Err(ToolError::InsufficientEdgePoints { found: edges_local.len() });
    }

    // Found in the target; reported in the source frame.
    let t_inv = ctx.transform.invert();
    let points: Vec<Point2> = edges_local.iter().map(|p| t_inv.apply(d.apply(*p))).collect();
    let axis = roi.to_parent().apply_vector(Point2::new(0.0, 1.0));
    let line = fit_line_tls(&points, axis)?;
    Ok(LineExtraction { line, edges_local })
}

/// Subpixel position of the strongest gradient extremum matching the
/// polarity, or `None` if nothing reaches `min_contrast`.
fn strongest_edge(profile: &[f64], params: &EdgeParams) -> Option<f64> {
    let n = profile.len();
    if n < 5 {
        return None;
    }
    let grad: Vec<f64> =
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.0 } else { 0.5 * (profile[i + 1] - profile[i - 1]) }).collect();
    let signed = |g: f64| match params.polarity {
        Polarity::DarkToLight => g,
        Polarity::LightToDark => -g,
        Polarity::Any => g.abs(),
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in grad.iter().enumerate().take(n - 2).skip(2) {
        let s = signed(*g);
        if s >= params.min_contrast && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (i, s0) = best?;
    let sm = signed(grad[i - 1]);
    let sp = signed(grad[i + 1]);
    let denom = sm - 2.0 * s0 + sp;
    let delta = if denom < 0.0 { (0.5 * (sm - sp) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Some(i as f64 + delta)
}

/// Total-least-squares fit: principal axis of the scatter matrix, oriented so
/// that `dir · orient >= 0`.
pub(crate) fn fit_line_tls(points: &[Point2], orient: Point2) -> Result<LineModel, ToolError> {
    if points.len() < 2 {
        return Err(ToolError::InsufficientEdgePoints { found: points.len() });
    }
    let n = points.len() as f64;
    let c = points.iter().fold(Point2::ORIGIN, |a, p| a + *p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if sxx + syy <= 1e-18 {
        return Err(ToolError::DegenerateFit);
    }
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut dir = Point2::new(phi.cos(), phi.sin());
    if dir.dot(orient) < 0.0 {
        dir = dir * -1.0;
    }
    let normal = Point2::new(-dir.y, dir.x);
    let ss: f64 = points.iter().map(|p| (*p - c).dot(normal).powi(2)).sum();
    Ok(LineModel { point: c, dir, support: points.len(), rms_residual: (ss / n).sqrt() })
}
