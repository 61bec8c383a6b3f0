//! Process-wide counters for operations that create image data.
//!
//! The inspection path must never resample or copy the target image. Every
//! place in the crate that does either bumps one of these counters so tests
//! can assert on deltas around an inspection run.

use std::sync::atomic::{AtomicU64, Ordering};

static RESAMPLES: AtomicU64 = AtomicU64::new(0);
static FULL_COPIES: AtomicU64 = AtomicU64::new(0);
static COPIED_PIXELS: AtomicU64 = AtomicU64::new(0);
static DECIMATIONS: AtomicU64 = AtomicU64::new(0);
static OVERLAY_RENDERS: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    /// Geometric resamples of a whole image (`warp_similarity`).
    pub resamples: u64,
    /// Whole-image or view-to-image copies.
    pub full_copies: u64,
    pub copied_pixels: u64,
    /// 2×2 mean decimations built for search pyramids.
    pub decimations: u64,
    /// RGB overlay images allocated by the renderer.
    pub overlay_renders: u64,
}

impl Counters {
    pub fn since(&self, earlier: &Counters) -> Counters {
        Counters {
            resamples: self.resamples - earlier.resamples,
            full_copies: self.full_copies - earlier.full_copies,
            copied_pixels: self.copied_pixels - earlier.copied_pixels,
            decimations: self.decimations - earlier.decimations,
            overlay_renders: self.overlay_renders - earlier.overlay_renders,
        }
    }
}

pub fn snapshot() -> Counters {
    Counters {
        resamples: RESAMPLES.load(Ordering::SeqCst),
        full_copies: FULL_COPIES.load(Ordering::SeqCst),
        copied_pixels: COPIED_PIXELS.load(Ordering::SeqCst),
        decimations: DECIMATIONS.load(Ordering::SeqCst),
        overlay_renders: OVERLAY_RENDERS.load(Ordering::SeqCst),
    }
}

pub(crate) fn record_resample() {
    RESAMPLES.fetch_add(1, Ordering::SeqCst);
}

pub(crate) fn record_copy(pixels: usize) {
    FULL_COPIES.fetch_add(1, Ordering::SeqCst);
    COPIED_PIXELS.fetch_add(pixels as u64, Ordering::SeqCst);
}

pub(crate) fn record_decimation() {
    DECIMATIONS.fetch_add(1, Ordering::SeqCst);
}

pub(crate) fn record_overlay_render() {
    OVERLAY_RENDERS.fetch_add(1, Ordering::SeqCst);
}
