//! Thresholding and connected-component blob extraction.

use serde::{Deserialize, Serialize};

use super::{ensure_inside, Grid, ToolContext, ToolError};
use crate::geometry::{Point2, Roi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlobPolarity {
    /// Foreground is `sample >= threshold`.
    #[default]
    Bright,
    /// Foreground is `sample < threshold`.
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobParams {
    pub threshold: f64,
    pub polarity: BlobPolarity,
    pub exclude_border: bool,
    /// Components smaller than this many samples are dropped.
    pub min_area: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams { threshold: 0.5, polarity: BlobPolarity::Bright, exclude_border: false, min_area: 1.0 }
    }
}

impl BlobParams {
    pub fn validate(&self) -> Result<(), ToolError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ToolError::InvalidParams("threshold must be in (0, 1)".into()));
        }
        if !(self.min_area.is_finite() && self.min_area >= 0.0) {
            return Err(ToolError::InvalidParams("min_area must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Source-frame px².
    pub area: f64,
    /// Source frame.
    pub centroid: Point2,
    /// Axis-aligned bounding box in the target frame.
    pub bbox: Roi,
    pub touches_border: bool,
}

/// 8-connected labeling of a row-major binary grid. Background is 0;
/// components are numbered from 1 in raster order of their first pixel.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> Vec<u32> {
    assert_eq!(mask.len(), width * height, "mask size");
    let mut parent: Vec<u32> = vec![0];
    let mut labels = vec![0u32; mask.len()];

    fn find(parent: &mut [u32], mut a: u32) -> u32 {
        while parent[a as usize] != a {
            parent[a as usize] = parent[parent[a as usize] as usize];
            a = parent[a as usize];
        }
        a
    }

    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !mask[i] {
                continue;
            }
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = labels[i - 1];
            }
            if y > 0 {
                let up = i - width;
                if x > 0 {
                    neighbours[1] = labels[up - 1];
                }
                neighbours[2] = labels[up];
                if x + 1 < width {
                    neighbours[3] = labels[up + 1];
                }
            }
            let mut root = 0;
            for &n in neighbours.iter().filter(|&&n| n != 0) {
                let r = find(&mut parent, n);
                if root == 0 {
                    root = r;
                } else if r != root {
                    let (lo, hi) = (root.min(r), root.max(r));
                    parent[hi as usize] = lo;
                    root = lo;
                }
            }
            if root == 0 {
                root = parent.len() as u32;
                parent.push(root);
            }
            labels[i] = root;
        }
    }

    let mut compact = vec![0u32; parent.len()];
    let mut next = 0;
    for l in labels.iter_mut().filter(|l| **l != 0) {
        let r = find(&mut parent, *l) as usize;
        if compact[r] == 0 {
            next += 1;
            compact[r] = next;
        }
        *l = compact[r];
    }
    labels
}

#[derive(Default)]
struct Accum {
    count: usize,
    sx: f64,
    sy: f64,
    min: Point2,
    max: Point2,
    border: bool,
}

/// Binarizes the ROI's local sampling grid and returns its connected
/// components, largest first.
pub fn extract_blobs(ctx: &ToolContext<'_>, roi: &Roi, params: &BlobParams) -> Result<Vec<Blob>, ToolError> {
    params.validate()?;
    let d = ctx.roi_transform(roi);
    let Grid { nx, ny } = Grid::for_roi(roi);
    let (lx, ly) = ((nx - 1) as f64, (ny - 1) as f64);
    ensure_inside(
        ctx,
        roi,
        &d,
        &[Point2::new(0.0, 0.0), Point2::new(lx, 0.0), Point2::new(0.0, ly), Point2::new(lx, ly)],
    )?;

    let mut mask = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let p = d.apply(Point2::new(x as f64, y as f64));
            let v = ctx.target.sample_clamped(p.x, p.y);
            mask.push(match params.polarity {
                BlobPolarity::Bright => v >= params.threshold,
                BlobPolarity::Dark => v < params.threshold,
            });
        }
    }
    let labels = label_components(&mask, nx, ny);

    let mut acc: Vec<Accum> = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            let l = labels[y * nx + x] as usize;
            if l == 0 {
                continue;
            }
            if acc.len() < l {
                acc.resize_with(l, Accum::default);
            }
            let p = d.apply(Point2::new(x as f64, y as f64));
            let a = &mut acc[l - 1];
            if a.count == 0 {
                a.min = p;
                a.max = p;
            }
            a.count += 1;
            a.sx += x as f64;
            a.sy += y as f64;
            a.min = Point2::new(a.min.x.min(p.x), a.min.y.min(p.y));
            a.max = Point2::new(a.max.x.max(p.x), a.max.y.max(p.y));
            a.border |= x == 0 || y == 0 || x == nx - 1 || y == ny - 1;
        }
    }

    let local_to_source = roi.to_parent();
    let mut blobs: Vec<Blob> = acc
        .into_iter()
        .filter(|a| !(params.exclude_border && a.border) && a.count as f64 >= params.min_area.max(1.0))
        .map(|a| {
            let n = a.count as f64;
            let centroid = local_to_source.apply(Point2::new(a.sx / n, a.sy / n));
            let bbox =
                Roi { origin: a.min, width: a.max.x - a.min.x + 1.0, height: a.max.y - a.min.y + 1.0, theta_deg: 0.0 };
            // One sample per source pixel, so the count is already in source px².
            Blob { area: n, centroid, bbox, touches_border: a.border }
        })
        .collect();
    blobs.sort_by(|a, b| {
        b.area
            .total_cmp(&a.area)
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then(a.centroid.x.total_cmp(&b.centroid.x))
    });
    Ok(blobs)
}
