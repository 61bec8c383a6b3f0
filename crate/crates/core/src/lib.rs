//! Inspection engine for discrete-part visual quality control.
//!
//! Measurements are defined once on a reference (source) image. Each
//! inspected (target) image is registered against the source to recover a
//! similarity `T`, and every tool maps its source-frame ROI through `T` to
//! sample the target in place. The target is never warped or copied; results
//! are reported in source-frame units so tolerances drawn on the reference
//! apply unchanged.
//!
//! Modules, bottom-up:
//! - [`geometry`]: 4×4 similarity transforms, points, rotated ROIs.
//! - [`raster`]: grayscale images, views, PGM/PNG I/O, bilinear sampling.
//! - [`registration`]: pyramid NCC search for `T`.
//! - [`tools`]: edge/line, angle, distance, intensity and blob tools.
//! - [`flowchart`]: typed block graphs with implicit `T`/`D` wiring.
//! - [`overlay`]: annotations mapped through `D` and rasterized.
//! - [`inspection`]: recipes, tolerances, reports, batch statistics.
//! - [`synth`]: synthetic scenes and warps for tests and demos.

pub mod flowchart;
pub mod geometry;
pub mod inspection;
pub mod overlay;
pub mod raster;
pub mod registration;
pub mod synth;
pub mod tools;

pub use geometry::{Point2, Roi, Similarity, Transform};
pub use raster::{Image, ImageView, Rect};
pub use registration::{RegistrationModel, RegistrationResult, SearchParams};
