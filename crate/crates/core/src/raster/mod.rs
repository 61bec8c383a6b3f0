//! Grayscale image container, zero-copy views and point sampling.

pub mod instrument;
mod io;

pub use io::{decode, encode_pgm, encode_png, load, save, ImageFormat};

use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::geometry::{Point2, Transform};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("point ({x}, {y}) outside {width}×{height} image")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },
    #[error("rectangle {x},{y} {w}×{h} outside {width}×{height} image")]
    RectOutOfBounds { x: usize, y: usize, w: usize, h: usize, width: usize, height: usize },
    #[error("invalid image data: {0}")]
    InvalidData(String),
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}×{})", self.width, self.height)
    }
}

impl Clone for Image {
    fn clone(&self) -> Self {
        instrument::record_copy(self.pixels.len());
        Image { width: self.width, height: self.height, pixels: self.pixels.clone() }
    }
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidData(format!("empty dimensions {width}×{height}")));
        }
        if pixels.len() != width * height {
            return Err(RasterError::InvalidData(format!("{} pixels for a {width}×{height} image", pixels.len())));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RasterError::InvalidData(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Image { width, height, pixels })
    }

    /// Builds an image from a generator; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                pixels.push(v as f32);
            }
        }
        Image { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image::from_fn(width, height, |_, _| value)
    }

    /// Converts 8-bit samples, normalizing by 255.
    pub fn from_u8(width: usize, height: usize, data: &[u8]) -> Result<Self, RasterError> {
        Image::new(width, height, data.iter().map(|&v| v as f32 / 255.0).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Quantizes to 8 bits (round to nearest).
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Order-sensitive hash of the dimensions and pixel bits.
    pub fn checksum(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.width.hash(&mut h);
        self.height.hash(&mut h);
        for v in &self.pixels {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn contains(&self, p: Point2) -> bool {
        const EPS: f64 = 1e-9;
        p.x >= -EPS && p.y >= -EPS && p.x <= (self.width - 1) as f64 + EPS && p.y <= (self.height - 1) as f64 + EPS
    }

    /// Bilinear blend of the four neighbours of `p`; exact at integer
    /// coordinates. Points outside `[0, w-1]×[0, h-1]` are an error.
    pub fn sample_bilinear(&self, p: Point2) -> Result<f64, RasterError> {
        if !self.contains(p) {
            return Err(RasterError::OutOfBounds { x: p.x, y: p.y, width: self.width, height: self.height });
        }
        Ok(self.sample_clamped(p.x, p.y))
    }

    /// Bilinear sample with coordinates clamped into the image. Callers are
    /// expected to have bounds-checked the region they sample.
    #[inline]
    pub(crate) fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        let x = x.clamp(0.0, maxx);
        let y = y.clamp(0.0, maxy);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        let top = p00 * (1.0 - fx) + p10 * fx;
        let bottom = p01 * (1.0 - fx) + p11 * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn view(&self, rect: Rect) -> Result<ImageView<'_>, RasterError> {
        ImageView::new(self, rect)
    }

    pub fn full_view(&self) -> ImageView<'_> {
        ImageView { image: self, rect: Rect { x: 0, y: 0, width: self.width, height: self.height } }
    }

    /// Half-resolution image by 2×2 block means; odd trailing rows/columns
    /// are dropped. Used only to build registration search pyramids.
    pub fn decimate(&self) -> Image {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        instrument::record_decimation();
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            let y0 = (2 * y).min(self.height - 1);
            let y1 = (2 * y + 1).min(self.height - 1);
            let r0 = self.row(y0);
            let r1 = self.row(y1);
            for x in 0..w {
                let x0 = (2 * x).min(self.width - 1);
                let x1 = (2 * x + 1).min(self.width - 1);
                pixels.push((r0[x0] + r0[x1] + r1[x0] + r1[x1]) * 0.25);
            }
        }
        Image { width: w, height: h, pixels }
    }
}

/// Axis-aligned integer rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect { x, y, width, height }
    }
}

/// Read-only window into an [`Image`]; creating one copies no pixels.
#[derive(Debug, Clone, Copy)]
pub struct ImageView<'a> {
    image: &'a Image,
    rect: Rect,
}

impl<'a> ImageView<'a> {
    pub fn new(image: &'a Image, rect: Rect) -> Result<Self, RasterError> {
        let fits = rect.width > 0
            && rect.height > 0
            && rect.x.checked_add(rect.width).is_some_and(|e| e <= image.width)
            && rect.y.checked_add(rect.height).is_some_and(|e| e <= image.height);
        if !fits {
            return Err(RasterError::RectOutOfBounds {
                x: rect.x,
                y: rect.y,
                w: rect.width,
                h: rect.height,
                width: image.width,
                height: image.height,
            });
        }
        Ok(ImageView { image, rect })
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn width(&self) -> usize {
        self.rect.width
    }

    pub fn height(&self) -> usize {
        self.rect.height
    }

    pub fn image(&self) -> &'a Image {
        self.image
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        debug_assert!(x < self.rect.width && y < self.rect.height);
        self.image.get(self.rect.x + x, self.rect.y + y)
    }

    pub fn row(&self, y: usize) -> &'a [f32] {
        let r = self.image.row(self.rect.y + y);
        &r[self.rect.x..self.rect.x + self.rect.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = f32> + 'a {
        let view = *self;
        (0..view.rect.height).flat_map(move |y| view.row(y).iter().copied())
    }

    /// Materializes the view. Counted as a copy by the instrumentation.
    pub fn to_image(&self) -> Image {
        let pixels: Vec<f32> = self.iter().collect();
        instrument::record_copy(pixels.len());
        Image { width: self.rect.width, height: self.rect.height, pixels }
    }
}

/// Resamples `img` under `t`: `out(p) = img(t⁻¹ p)` with bilinear sampling,
/// `fill` where the preimage falls outside. Test support for building
/// synthetic targets; never called on the inspection path.
pub fn warp_similarity(img: &Image, t: &Transform, fill: f64) -> Image {
    instrument::record_resample();
    let inv = t.invert();
    Image::from_fn(img.width, img.height, |x, y| {
        let q = inv.apply(Point2::new(x as f64, y as f64));
        if img.contains(q) {
            img.sample_clamped(q.x, q.y)
        } else {
            fill
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0)
    }

    #[test]
    fn bilinear_exact_at_integers() {
        let img = ramp(9, 8);
        assert_eq!(img.sample_bilinear(Point2::new(3.0, 5.0)).unwrap(), img.get(3, 5) as f64);
        assert_eq!(img.sample_bilinear(Point2::new(8.0, 7.0)).unwrap(), img.get(8, 7) as f64);
        assert_eq!(img.sample_bilinear(Point2::new(0.0, 0.0)).unwrap(), img.get(0, 0) as f64);
    }

    #[test]
    fn bilinear_midpoint_and_constant() {
        let img = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(img.sample_bilinear(Point2::new(0.5, 0.0)).unwrap(), 0.5);
        let flat = Image::filled(5, 5, 0.25);
        for p in [Point2::new(0.3, 3.7), Point2::new(4.0, 1.1), Point2::new(2.5, 2.5)] {
            assert!((flat.sample_bilinear(p).unwrap() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_out_of_bounds_is_error() {
        let img = ramp(4, 4);
        assert!(matches!(img.sample_bilinear(Point2::new(3.5, 1.0)), Err(RasterError::OutOfBounds { .. })));
        assert!(img.sample_bilinear(Point2::new(-0.01, 1.0)).is_err());
        assert!(img.sample_bilinear(Point2::new(3.0, 3.0)).is_ok());
    }

    #[test]
    fn bilinear_is_lipschitz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let img = Image::from_fn(12, 10, |_, _| rng.random::<f64>());
            let mut max_grad = 0.0f64;
            for y in 0..img.height() {
                for x in 0..img.width() {
                    if x + 1 < img.width() {
                        max_grad = max_grad.max((img.get(x + 1, y) - img.get(x, y)).abs() as f64);
                    }
                    if y + 1 < img.height() {
                        max_grad = max_grad.max((img.get(x, y + 1) - img.get(x, y)).abs() as f64);
                    }
                }
            }
            let lip = 2.0 * max_grad;
            for _ in 0..200 {
                let p = Point2::new(rng.random_range(0.0..11.0), rng.random_range(0.0..9.0));
                let q = p + Point2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                if !img.contains(q) {
                    continue;
                }
                let d = (img.sample_bilinear(p).unwrap() - img.sample_bilinear(q).unwrap()).abs();
                assert!(d <= lip * p.distance(q) + 1e-9);
            }
        }
    }

    #[test]
    fn views_alias_without_copying() {
        let img = ramp(20, 10);
        let full = img.full_view();
        for y in 0..img.height() {
            for x in 0..img.width() {
                assert_eq!(full.get(x, y), img.get(x, y));
            }
        }
        let one = img.view(Rect::new(7, 3, 1, 1)).unwrap();
        assert_eq!(one.get(0, 0), img.get(7, 3));
        assert!(std::ptr::eq(one.image(), &img));
        assert!(img.view(Rect::new(18, 0, 3, 1)).is_err());
        assert!(img.view(Rect::new(0, 0, 0, 1)).is_err());
    }

    #[test]
    fn view_rows() {
        let img = ramp(6, 4);
        let v = img.view(Rect::new(2, 1, 3, 2)).unwrap();
        assert_eq!(v.row(1), &img.row(2)[2..5]);
        assert_eq!(v.iter().count(), 6);
    }

    #[test]
    fn warp_identity_and_shift() {
        let img = ramp(16, 12);
        let same = warp_similarity(&img, &Transform::identity(), 0.0);
        assert_eq!(same.pixels(), img.pixels());
        let shifted = warp_similarity(&img, &Transform::translation(1.0, 0.0), 0.0);
        for y in 0..12 {
            for x in 1..16 {
                assert_eq!(shifted.get(x, y), img.get(x - 1, y));
            }
            assert_eq!(shifted.get(0, y), 0.0);
        }
    }

    #[test]
    fn decimate_means() {
        let img = Image::new(3, 2, vec![0.0, 1.0, 0.5, 1.0, 0.0, 0.5]).unwrap();
        let d = img.decimate();
        assert_eq!((d.width(), d.height()), (1, 1));
        assert_eq!(d.get(0, 0), 0.5);
    }

    #[test]
    fn rejects_bad_pixels() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![1.5]).is_err());
        assert!(Image::new(0, 1, vec![]).is_err());
    }
}
