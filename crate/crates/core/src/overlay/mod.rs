//! Annotations and overlay rendering.
//!
//! An annotation is drawn in the local frame of the ROI that produced it and
//! carries the display transform `D` (ROI-local → target). Rendering maps
//! every coordinate through `D` onto a fresh RGB copy of the target; the
//! target itself is never modified.

mod font;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Roi, Transform};
use crate::raster::{instrument, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    Pass,
    Fail,
    #[default]
    Info,
}

impl Style {
    pub fn color(self) -> [u8; 3] {
        match self {
            Style::Pass => [0, 200, 0],
            Style::Fail => [230, 0, 0],
            Style::Info => [255, 210, 0],
        }
    }
}

/// Shape in ROI-local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Segment { p0: Point2, p1: Point2 },
    Marker { p: Point2 },
    Polyline { points: Vec<Point2> },
    RoiOutline { roi: Roi },
    Label { text: String, anchor: Point2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Id of the block that emitted it.
    pub block: String,
    pub shape: Shape,
    /// ROI-local → target.
    pub d: Transform,
    pub style: Style,
}

impl Annotation {
    pub fn new(block: impl Into<String>, shape: Shape, d: Transform) -> Self {
        Annotation { block: block.into(), shape, d, style: Style::Info }
    }
}

/// Shape in target pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MappedShape {
    Segment {
        p0: Point2,
        p1: Point2,
    },
    Marker {
        p: Point2,
    },
    Polyline {
        points: Vec<Point2>,
    },
    /// Closed outline of a mapped ROI, corners in local order.
    Polygon {
        points: Vec<Point2>,
    },
    Label {
        text: String,
        anchor: Point2,
    },
}

/// Target-frame annotation, as exported for client-side drawing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedAnnotation {
    pub block: String,
    pub style: Style,
    pub shape: MappedShape,
}

pub fn map_annotation(a: &Annotation) -> MappedShape {
    let d = &a.d;
    match &a.shape {
        Shape::Segment { p0, p1 } => MappedShape::Segment { p0: d.apply(*p0), p1: d.apply(*p1) },
        Shape::Marker { p } => MappedShape::Marker { p: d.apply(*p) },
        Shape::Polyline { points } => MappedShape::Polyline { points: points.iter().map(|p| d.apply(*p)).collect() },
        Shape::RoiOutline { roi } => {
            MappedShape::Polygon { points: roi.parent_corners().iter().map(|p| d.apply(*p)).collect() }
        }
        Shape::Label { text, anchor } => MappedShape::Label { text: text.clone(), anchor: d.apply(*anchor) },
    }
}

pub fn map_all(annotations: &[Annotation]) -> Vec<MappedAnnotation> {
    annotations
        .iter()
        .map(|a| MappedAnnotation { block: a.block.clone(), style: a.style, shape: map_annotation(a) })
        .collect()
}

/// Half-length of a marker cross, pixels.
const MARKER_ARM: i64 = 3;

/// Draws `annotations` over an RGB copy of `target`.
pub fn render(target: &Image, annotations: &[Annotation]) -> RgbImage {
    instrument::record_overlay_render();
    let (w, h) = (target.width() as u32, target.height() as u32);
    let gray = target.to_u8();
    let mut out = RgbImage::from_fn(w, h, |x, y| {
        let v = gray[(y * w + x) as usize];
        Rgb([v, v, v])
    });
    for a in annotations {
        draw(&mut out, &map_annotation(a), Rgb(a.style.color()));
    }
    out
}

/// PNG encoding of [`render`].
pub fn render_png(target: &Image, annotations: &[Annotation]) -> Vec<u8> {
    let img = render(target, annotations);
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .expect("PNG encoding to memory cannot fail");
    bytes
}

fn draw(img: &mut RgbImage, shape: &MappedShape, color: Rgb<u8>) {
    match shape {
        MappedShape::Segment { p0, p1 } => line(img, *p0, *p1, color),
        MappedShape::Marker { p } => {
            let (x, y) = (round(p.x), round(p.y));
            for k in -MARKER_ARM..=MARKER_ARM {
                put(img, x + k, y, color);
                put(img, x, y + k, color);
            }
        }
        MappedShape::Polyline { points } => {
            for pair in points.windows(2) {
                line(img, pair[0], pair[1], color);
            }
        }
        MappedShape::Polygon { points } => {
            for i in 0..points.len() {
                line(img, points[i], points[(i + 1) % points.len()], color);
            }
        }
        MappedShape::Label { text, anchor } => {
            let (mut x, y) = (round(anchor.x), round(anchor.y));
            for ch in text.chars() {
                let glyph = font::glyph(ch);
                for (row, bits) in glyph.iter().enumerate() {
                    for col in 0..font::WIDTH {
                        if bits & (1 << (font::WIDTH - 1 - col)) != 0 {
                            put(img, x + col as i64, y + row as i64, color);
                        }
                    }
                }
                x += font::ADVANCE;
            }
        }
    }
}

fn round(v: f64) -> i64 {
    v.round() as i64
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// 1 px Bresenham line between the rounded endpoints.
fn line(img: &mut RgbImage, a: Point2, b: Point2, color: Rgb<u8>) {
    let (mut x0, mut y0, x1, y1) = (round(a.x), round(a.y), round(b.x), round(b.y));
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
