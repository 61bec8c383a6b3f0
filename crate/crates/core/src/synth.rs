//! Synthetic scenes and targets for tests, benchmarks and the demo recipe.
//!
//! The demo scene is a bright quadrilateral plate with three dark round
//! holes on a textured background. Its geometry is known exactly, so tools
//! measured on it have analytic expected values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Point2, Transform};
use crate::raster::{warp_similarity, Image};

/// Smooth multi-octave value noise in roughly [-1, 1].
pub fn value_noise(width: usize, height: usize, seed: u64, cells: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; width * height];
    let mut total = 0.0;
    for (octave, &cell) in cells.iter().enumerate() {
        let amp = 1.0 / (octave as f64 + 1.0);
        total += amp;
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..height {
            let fy = y as f64 / cell;
            let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..width {
                let fx = x as f64 / cell;
                let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let g = |i: usize, j: usize| grid[j * gw + i];
                let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
                let bottom = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
                out[y * width + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// General-purpose registration texture with values in [0.1, 0.9].
pub fn textured_source(width: usize, height: usize, seed: u64) -> Image {
    let n = value_noise(width, height, seed, &[48.0, 16.0, 6.0]);
    Image::from_fn(width, height, |x, y| 0.5 + 0.4 * n[y * width + x].clamp(-1.0, 1.0))
}

/// Adds zero-mean Gaussian noise, clamping to [0, 1].
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    if sigma <= 0.0 {
        return Image::from_fn(img.width(), img.height(), |x, y| img.get(x, y) as f64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    let w = img.width();
    let noise: Vec<f64> = (0..w * img.height()).map(|_| normal.sample(&mut rng)).collect();
    Image::from_fn(w, img.height(), |x, y| img.get(x, y) as f64 + noise[y * w + x])
}

/// `warp_similarity` with the image mean as fill, plus optional noise.
pub fn synth_target(img: &Image, t: &Transform, sigma: f64, seed: u64) -> Image {
    let mean = img.pixels().iter().map(|&v| v as f64).sum::<f64>() / img.pixels().len() as f64;
    let warped = warp_similarity(img, t, mean);
    if sigma > 0.0 {
        add_noise(&warped, sigma, seed)
    } else {
        warped
    }
}

/// Ground truth of the demo scene, in source pixels.
pub mod demo {
    use super::*;

    pub const WIDTH: usize = 640;
    pub const HEIGHT: usize = 480;
    pub const SEED: u64 = 7;
    /// Slope of the plate's top edge, degrees (rising to the right).
    pub const TOP_EDGE_DEG: f64 = 15.0;
    pub const PLATE_LEVEL: f64 = 0.8;
    pub const BACKGROUND_LEVEL: f64 = 0.3;
    pub const HOLE_LEVEL: f64 = 0.1;

    /// Plate corners: top-left, bottom-left, bottom-right, top-right.
    pub fn plate() -> [Point2; 4] {
        let rise = 240.0 * TOP_EDGE_DEG.to_radians().tan();
        [
            Point2::new(200.0, 160.0),
            Point2::new(200.0, 360.0),
            Point2::new(440.0, 360.0),
            Point2::new(440.0, 160.0 - rise),
        ]
    }

    /// (centre, radius) of each hole; the first is the largest.
    pub fn holes(defect: bool) -> [(Point2, f64); 3] {
        let big = if defect { Point2::new(330.0, 260.0) } else { Point2::new(320.0, 260.0) };
        [(big, 14.0), (Point2::new(380.0, 305.0), 8.0), (Point2::new(265.0, 320.0), 5.0)]
    }

    /// Renders the scene with 4×4 supersampled coverage. Pixel (x, y)
    /// covers [x-0.5, x+0.5]×[y-0.5, y+0.5].
    pub fn render(defect: bool) -> Image {
        let bg = value_noise(WIDTH, HEIGHT, SEED, &[40.0, 12.0]);
        let fg = value_noise(WIDTH, HEIGHT, SEED + 1, &[24.0, 8.0]);
        let corners = plate();
        let holes = holes(defect);
        let inside_plate = |p: Point2| {
            (0..4).all(|i| {
                let (a, b) = (corners[i], corners[(i + 1) % 4]);
                // counter-clockwise on screen in y-down coordinates
                (b - a).cross(p - a) <= 0.0
            })
        };
        const S: usize = 4;
        Image::from_fn(WIDTH, HEIGHT, |x, y| {
            let i = y * WIDTH + x;
            let back = BACKGROUND_LEVEL + 0.12 * bg[i];
            let front = PLATE_LEVEL + 0.05 * fg[i];
            let mut acc = 0.0;
            for sy in 0..S {
                for sx in 0..S {
                    let p = Point2::new(
                        x as f64 - 0.5 + (sx as f64 + 0.5) / S as f64,
                        y as f64 - 0.5 + (sy as f64 + 0.5) / S as f64,
                    );
                    acc += if !inside_plate(p) {
                        back
                    } else if holes.iter().any(|(c, r)| p.distance(*c) <= *r) {
                        HOLE_LEVEL
                    } else {
                        front
                    };
                }
            }
            acc / (S * S) as f64
        })
    }
}
