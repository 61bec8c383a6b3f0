//! The bundled demo recipe for the synthetic plate scene in [`crate::synth::demo`].

use std::path::{Path, PathBuf};

use super::{RecipeDoc, RecipeError, RegistrationConfig, ToleranceSpec};
use crate::flowchart::{AngleParams, Band, BlockSpec, Connection, FlowGraph, Params};
use crate::geometry::{sin_cos_deg, Point2, Roi, Transform};
use crate::raster;
use crate::registration::SearchParams;
use crate::synth::{self, demo as scene};
use crate::tools::{BlobParams, BlobPolarity, EdgeParams, Polarity};

pub const UNITS_PER_PX: f64 = 0.05;

/// Pose of the bundled `warped.png`.
pub const WARP: (f64, f64, f64, f64) = (14.0, -9.0, 4.0, 1.02);

fn roi(x: f64, y: f64, w: f64, h: f64) -> Roi {
    Roi::axis_aligned(x, y, w, h).expect("valid demo roi")
}

/// ROI straddling the tilted top edge of the plate, scanning across it.
fn top_edge_roi() -> Roi {
    let theta = 90.0 - scene::TOP_EDGE_DEG;
    let (s, c) = sin_cos_deg(theta);
    let (w, h) = (40.0, 120.0);
    let (ts, tc) = sin_cos_deg(scene::TOP_EDGE_DEG);
    let centre = Point2::new(320.0, 160.0 - 120.0 * ts / tc);
    let half = Point2::new(c * w / 2.0 - s * h / 2.0, s * w / 2.0 + c * h / 2.0);
    Roi::new(Point2::new(centre.x - half.x, centre.y - half.y), w, h, theta).expect("valid demo roi")
}

pub fn recipe_doc(source_image: &str) -> RecipeDoc {
    let edge = EdgeParams { polarity: Polarity::DarkToLight, ..EdgeParams::default() };
    let holes = BlobParams { polarity: BlobPolarity::Dark, threshold: 0.5, ..BlobParams::default() };
    let blocks = vec![
        BlockSpec::new("in", Params::Input),
        BlockSpec::new("reg", Params::Registration),
        BlockSpec::new("left_edge", Params::ExtractLine(edge)).with_roi(roi(180.0, 200.0, 40.0, 120.0)),
        BlockSpec::new("top_edge", Params::ExtractLine(edge)).with_roi(top_edge_roi()),
        BlockSpec::new("angle", Params::MeasureAngle(AngleParams::default())),
        BlockSpec::new("angle_check", Params::ToleranceCheck(Band { min: 74.5, max: 75.5 })),
        BlockSpec::new("hole_blobs", Params::ExtractBlobs(holes)).with_roi(roi(240.0, 220.0, 170.0, 120.0)),
        BlockSpec::new("hole_offset", Params::MeasureDistance),
        BlockSpec::new("plate_level", Params::MeasureIntensity).with_roi(roi(215.0, 175.0, 60.0, 30.0)),
        BlockSpec::new("out", Params::Output),
    ];
    let connections = vec![
        Connection::new(("in", "image"), ("reg", "image")),
        Connection::new(("in", "image"), ("left_edge", "image")),
        Connection::new(("in", "image"), ("top_edge", "image")),
        Connection::new(("in", "image"), ("hole_blobs", "image")),
        Connection::new(("in", "image"), ("plate_level", "image")),
        Connection::new(("left_edge", "line"), ("angle", "a")),
        Connection::new(("top_edge", "line"), ("angle", "b")),
        Connection::new(("angle", "angle"), ("angle_check", "value")),
        Connection::new(("angle_check", "verdict"), ("out", "angle_ok")),
        Connection::new(("left_edge", "line"), ("hole_offset", "a")),
        Connection::new(("hole_blobs", "centroid"), ("hole_offset", "b")),
        Connection::new(("hole_offset", "distance"), ("out", "hole_offset")),
        Connection::new(("hole_blobs", "count"), ("out", "hole_count")),
        Connection::new(("plate_level", "mean"), ("out", "plate_level")),
    ];
    let tol = |m: &str, min: f64, max: f64| ToleranceSpec { measurement: m.into(), min, max };
    RecipeDoc {
        id: Some("demo-plate".into()),
        source_image: source_image.into(),
        registration: RegistrationConfig {
            template_roi: roi(120.0, 80.0, 160.0, 160.0),
            search: SearchParams { pyramid_levels: 4, ..SearchParams::default() },
        },
        graph: FlowGraph { blocks, connections },
        tolerances: vec![
            tol("hole_offset", 119.0, 121.0),
            tol("plate_level", 0.75, 0.85),
            tol("hole_blobs.area", 585.0, 647.0),
            tol("hole_blobs", 3.0, 3.0),
        ],
        units_per_px: Some(UNITS_PER_PX),
    }
}

pub fn warp() -> Transform {
    Transform::from_similarity(WARP.0, WARP.1, WARP.2, WARP.3).expect("valid warp")
}

/// Writes `source.png`, `recipe.json` and the sample parts into `dir`:
/// `warped.png` (good part, moved), `defect.png` (hole shifted 10 px) and
/// `noise.png` (pure noise, no part), plus `texture.png`, a textured
/// registration test source. Returns the paths written.
pub fn write_demo(dir: &Path) -> Result<Vec<PathBuf>, RecipeError> {
    let io =
        |path: &Path, e: &dyn std::fmt::Display| RecipeError::Io { path: path.to_path_buf(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
    let source = scene::render(false);
    let defect = synth::synth_target(&scene::render(true), &warp(), 0.01, scene::SEED + 2);
    let images = [
        ("source.png", source.clone()),
        ("warped.png", synth::synth_target(&source, &warp(), 0.01, scene::SEED + 1)),
        ("defect.png", defect),
        ("noise.png", synth::add_noise(&raster::Image::filled(scene::WIDTH, scene::HEIGHT, 0.5), 0.2, scene::SEED + 3)),
        ("texture.png", synth::textured_source(scene::WIDTH, scene::HEIGHT, scene::SEED)),
    ];
    let mut written = Vec::new();
    for (name, img) in &images {
        let path = dir.join(name);
        raster::save(img, &path).map_err(|e| io(&path, &e))?;
        written.push(path);
    }
    let path = dir.join("recipe.json");
    std::fs::write(&path, recipe_doc("source.png").to_canonical_json()).map_err(|e| io(&path, &e))?;
    written.push(path);
    Ok(written)
}
