//! Angle, distance and intensity measurements.

use serde::{Deserialize, Serialize};

use super::{ensure_inside, Grid, LineModel, Measurement, MeasurementKind, ToolContext, ToolError};
use crate::geometry::{Point2, Roi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// Angle between undirected lines, in [0, 90].
    #[default]
    Undirected,
    /// Angle from `a.dir` to `b.dir`, in [0, 180).
    Directed,
}

/// Source-frame geometry produced by a tool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Point(Point2),
    Line(LineModel),
}

pub fn measure_angle(a: &LineModel, b: &LineModel, mode: AngleMode) -> Measurement {
    let cross = a.dir.cross(b.dir);
    let dot = a.dir.dot(b.dir);
    let deg = match mode {
        AngleMode::Undirected => cross.abs().atan2(dot.abs()).to_degrees(),
        AngleMode::Directed => {
            let d = cross.atan2(dot).to_degrees().rem_euclid(180.0);
            if d >= 180.0 {
                0.0
            } else {
                d
            }
        }
    };
    Measurement::new("angle", MeasurementKind::AngleDeg, deg)
}

/// Point–point distance, or the perpendicular distance from `b` to line `a`.
pub fn measure_distance(a: &Geometry, b: Point2) -> Measurement {
    let d = match a {
        Geometry::Point(p) => p.distance(b),
        Geometry::Line(l) => l.distance_to(b),
    };
    Measurement::new("distance", MeasurementKind::DistancePx, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

/// Statistics of bilinear samples on the ROI's integer local grid.
pub fn measure_intensity(ctx: &ToolContext<'_>, roi: &Roi) -> Result<IntensityStats, ToolError> {
    let d = ctx.roi_transform(roi);
    let Grid { nx, ny } = Grid::for_roi(roi);
    let (lx, ly) = ((nx - 1) as f64, (ny - 1) as f64);
    ensure_inside(
        ctx,
        roi,
        &d,
        &[Point2::new(0.0, 0.0), Point2::new(lx, 0.0), Point2::new(0.0, ly), Point2::new(lx, ly)],
    )?;
    let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for y in 0..ny {
        for x in 0..nx {
            let p = d.apply(Point2::new(x as f64, y as f64));
            let v = ctx.target.sample_clamped(p.x, p.y);
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
    }
    let samples = nx * ny;
    Ok(IntensityStats { mean: sum / samples as f64, min, max, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Transform;
    use crate::raster::Image;

    fn line(deg: f64) -> LineModel {
        let r = deg.to_radians();
        LineModel { point: Point2::ORIGIN, dir: Point2::new(r.cos(), r.sin()), support: 2, rms_residual: 0.0 }
    }

    #[test]
    fn angles() {
        let m = measure_angle(&line(0.0), &line(90.0), AngleMode::Undirected);
        assert!((m.value - 90.0).abs() < 1e-12);
        assert_eq!(m.kind, MeasurementKind::AngleDeg);
        assert!((measure_angle(&line(0.0), &line(150.0), AngleMode::Undirected).value - 30.0).abs() < 1e-9);
        assert!((measure_angle(&line(0.0), &line(150.0), AngleMode::Directed).value - 150.0).abs() < 1e-9);
        assert!((measure_angle(&line(150.0), &line(0.0), AngleMode::Directed).value - 30.0).abs() < 1e-9);
        assert!((measure_angle(&line(10.0), &line(-170.0), AngleMode::Directed).value).abs() < 1e-9);
    }

    #[test]
    fn distances() {
        let p = Geometry::Point(Point2::new(0.0, 0.0));
        assert_eq!(measure_distance(&p, Point2::new(3.0, 4.0)).value, 5.0);
        let l = Geometry::Line(LineModel { point: Point2::new(0.0, 2.0), ..line(0.0) });
        assert!((measure_distance(&l, Point2::new(7.0, 5.0)).value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn intensity_of_ramp() {
        let img = Image::from_fn(50, 50, |x, _| x as f64 / 49.0);
        let ctx = ToolContext::new(Transform::identity(), &img);
        let roi = Roi::axis_aligned(10.0, 10.0, 11.0, 5.0).unwrap();
        let s = measure_intensity(&ctx, &roi).unwrap();
        assert_eq!(s.samples, 55);
        assert!((s.mean - 15.0 / 49.0).abs() < 1e-6);
        assert!((s.min - 10.0 / 49.0).abs() < 1e-6 && (s.max - 20.0 / 49.0).abs() < 1e-6);
    }

    #[test]
    fn intensity_outside() {
        let img = Image::filled(20, 20, 0.5);
        let ctx = ToolContext::new(Transform::identity(), &img);
        let roi = Roi::new(Point2::new(10.0, 10.0), 15.0, 3.0, 0.0).unwrap();
        assert!(matches!(measure_intensity(&ctx, &roi), Err(ToolError::RoiOutsideTarget(_))));
    }
}
