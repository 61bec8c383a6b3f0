//! Planar similarity transforms stored as 4×4 homogeneous matrices, points,
//! and rotated rectangular ROIs with their own local frames.
//!
//! Conventions: image coordinates (origin top-left, x right, y down), angles
//! in degrees, positive angles rotate the x-axis toward the y-axis.
//! `compose(a, b)` applies `b` first, then `a`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Elementwise tolerance used for the similarity-structure checks.
pub const SIMILARITY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("matrix is not a planar similarity: {0}")]
    NotSimilarity(String),
    #[error("ROI width and height must be positive (got {width}×{height})")]
    EmptyRoi { width: f64, height: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
}

/// Normalizes an angle in degrees to `[-180, 180)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let r = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can land exactly on 360 for tiny negative inputs
    if r >= 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let d = deg.rem_euclid(360.0);
    if d == 0.0 {
        (0.0, 1.0)
    } else if d == 90.0 {
        (1.0, 0.0)
    } else if d == 180.0 {
        (0.0, -1.0)
    } else if d == 270.0 {
        (-1.0, 0.0)
    } else {
        deg.to_radians().sin_cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

impl Serialize for Point2 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        let p = Point2::new(x, y);
        if !p.is_finite() {
            return Err(serde::de::Error::custom("point coordinates must be finite"));
        }
        Ok(p)
    }
}

/// Parameters of a similarity: translation, rotation (degrees) and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub tx: f64,
    pub ty: f64,
    pub theta_deg: f64,
    pub scale: f64,
}

/// A planar similarity embedded in a 4×4 homogeneous matrix (row-major).
///
/// The third row and column equal the identity's and the bottom row is
/// `(0, 0, 0, 1)`. The upper-left 2×2 block is `s·R(θ)`.
#[derive(Clone, Copy, PartialEq)]
pub struct Transform {
    m: [[f64; 4]; 4],
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.decompose();
        write!(f, "Transform(t=({:.6}, {:.6}), θ={:.6}°, s={:.6})", p.tx, p.ty, p.theta_deg, p.scale)
    }
}

impl Default for Transform {
    fn default() -> Self {
        Transform::identity()
    }
}

impl Transform {
    pub const fn identity() -> Self {
        Transform { m: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]] }
    }

    pub fn from_similarity(tx: f64, ty: f64, theta_deg: f64, scale: f64) -> Result<Self, GeometryError> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(GeometryError::NonPositiveScale(scale));
        }
        if !(tx.is_finite() && ty.is_finite() && theta_deg.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let (sin, cos) = sin_cos_deg(theta_deg);
        let a = scale * cos;
        let b = scale * sin;
        Ok(Transform::from_parts(a, b, tx, ty))
    }

    pub fn from_params(p: Similarity) -> Result<Self, GeometryError> {
        Transform::from_similarity(p.tx, p.ty, p.theta_deg, p.scale)
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Transform::from_parts(1.0, 0.0, tx, ty)
    }

    /// Rotation about the origin.
    pub fn rotation(theta_deg: f64) -> Self {
        let (sin, cos) = sin_cos_deg(theta_deg);
        Transform::from_parts(cos, sin, 0.0, 0.0)
    }

    // [[a, -b, 0, tx], [b, a, 0, ty], [0, 0, 1, 0], [0, 0, 0, 1]]
    fn from_parts(a: f64, b: f64, tx: f64, ty: f64) -> Self {
        // `+ 0.0` folds negative zeros so serialized matrices stay canonical
        let (a, b, tx, ty) = (a + 0.0, b + 0.0, tx + 0.0, ty + 0.0);
        Transform { m: [[a, 0.0 - b, 0.0, tx], [b, a, 0.0, ty], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]] }
    }

    /// Builds a transform from a row-major 4×4 matrix, checking the
    /// similarity invariants.
    pub fn from_matrix(m: [[f64; 4]; 4]) -> Result<Self, GeometryError> {
        let t = Transform { m };
        t.check()?;
        Ok(t)
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self, GeometryError> {
        if v.len() != 16 {
            return Err(GeometryError::NotSimilarity(format!("expected 16 elements, got {}", v.len())));
        }
        let mut m = [[0.0; 4]; 4];
        for (i, x) in v.iter().enumerate() {
            m[i / 4][i % 4] = *x;
        }
        Transform::from_matrix(m)
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.m[r][c];
            }
        }
        out
    }

    /// Verifies every structural invariant of a planar similarity.
    pub fn check(&self) -> Result<(), GeometryError> {
        let m = &self.m;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::NotSimilarity("bottom row must be (0,0,0,1)".into()));
        }
        if m[2] != [0.0, 0.0, 1.0, 0.0] || m[0][2] != 0.0 || m[1][2] != 0.0 {
            return Err(GeometryError::NotSimilarity("third row/column must match the identity".into()));
        }
        if (m[0][0] - m[1][1]).abs() > SIMILARITY_EPS || (m[0][1] + m[1][0]).abs() > SIMILARITY_EPS {
            return Err(GeometryError::NotSimilarity("upper-left block is not a scaled rotation".into()));
        }
        let s2 = m[0][0] * m[0][0] + m[1][0] * m[1][0];
        if s2.is_nan() || s2 <= 0.0 {
            return Err(GeometryError::NotSimilarity("zero scale".into()));
        }
        Ok(())
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &Transform) -> Transform {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, out) in row.iter_mut().enumerate() {
                *out = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c] + a[r][3] * b[3][c] + 0.0;
            }
        }
        Transform { m }
    }

    /// Analytic inverse of the similarity.
    pub fn invert(&self) -> Transform {
        let a = self.m[0][0];
        let b = self.m[1][0];
        let tx = self.m[0][3];
        let ty = self.m[1][3];
        let k = a * a + b * b;
        let ia = a / k;
        let ib = -b / k;
        // inverse linear part is [[ia, -ib], [ib, ia]]
        let itx = -(ia * tx - ib * ty);
        let ity = -(ib * tx + ia * ty);
        Transform::from_parts(ia, ib, itx, ity)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(m[0][0] * p.x + m[0][1] * p.y + m[0][3], m[1][0] * p.x + m[1][1] * p.y + m[1][3])
    }

    /// Applies only the linear part (for direction vectors).
    pub fn apply_vector(&self, v: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
    }

    pub fn decompose(&self) -> Similarity {
        let a = self.m[0][0];
        let b = self.m[1][0];
        Similarity {
            tx: self.m[0][3],
            ty: self.m[1][3],
            theta_deg: normalize_deg(b.atan2(a).to_degrees()),
            scale: a.hypot(b),
        }
    }

    pub fn scale(&self) -> f64 {
        self.m[0][0].hypot(self.m[1][0])
    }

    /// Largest elementwise difference to another transform.
    pub fn max_abs_diff(&self, other: &Transform) -> f64 {
        self.m.iter().flatten().zip(other.m.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Mul for Transform {
    type Output = Transform;
    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

impl Serialize for Transform {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Transform::from_row_major(&v).map_err(serde::de::Error::custom)
    }
}

/// A rotated rectangular region with its own coordinate frame.
///
/// Local `(0, 0)` sits at `origin` in the parent frame; the local x-axis is
/// rotated by `theta_deg` relative to the parent x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Roi {
    pub origin: Point2,
    pub width: f64,
    pub height: f64,
    pub theta_deg: f64,
}

impl Roi {
    pub fn new(origin: Point2, width: f64, height: f64, theta_deg: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(GeometryError::EmptyRoi { width, height });
        }
        if !origin.is_finite() || !theta_deg.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Roi { origin, width, height, theta_deg: normalize_deg(theta_deg) })
    }

    pub fn axis_aligned(x: f64, y: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Roi::new(Point2::new(x, y), width, height, 0.0)
    }

    /// Maps ROI-local coordinates to the parent frame.
    pub fn to_parent(&self) -> Transform {
        let (sin, cos) = sin_cos_deg(self.theta_deg);
        Transform::from_parts(cos, sin, self.origin.x, self.origin.y)
    }

    /// Corners in local coordinates, counter-clockwise from the origin.
    pub fn local_corners(&self) -> [Point2; 4] {
        [
            Point2::ORIGIN,
            Point2::new(self.width, 0.0),
            Point2::new(self.width, self.height),
            Point2::new(0.0, self.height),
        ]
    }

    pub fn parent_corners(&self) -> [Point2; 4] {
        let t = self.to_parent();
        self.local_corners().map(|p| t.apply(p))
    }
}

/// Free-function spelling of [`Roi::to_parent`].
pub fn roi_to_parent(roi: &Roi) -> Transform {
    roi.to_parent()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoiRepr {
    origin: Point2,
    width: f64,
    height: f64,
    #[serde(default)]
    theta_deg: f64,
}

impl<'de> Deserialize<'de> for Roi {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = RoiRepr::deserialize(d)?;
        Roi::new(r.origin, r.width, r.height, r.theta_deg).map_err(serde::de::Error::custom)
    }
}
