//! Single-level exhaustive translation search. Slow and simple; exists to
//! check the pyramid search against.

use super::{ncc, RegistrationError, RegistrationModel};
use crate::raster::{Image, Rect};

/// Integer translation `(tx, ty)` maximizing NCC of the full-resolution
/// template over every window of `target`, with its score. Ties go to the
/// smallest `ty`, then the smallest `tx`.
pub fn register_translation_bruteforce(
    model: &RegistrationModel,
    target: &Image,
) -> Result<(i64, i64, f64), RegistrationError> {
    let rect = model.template_rect();
    if target.width() < rect.width || target.height() < rect.height {
        return Err(RegistrationError::DimensionMismatch {
            target_width: target.width(),
            target_height: target.height(),
            template_width: rect.width,
            template_height: rect.height,
        });
    }
    let template: Vec<f64> =
        model.source().view(rect).expect("template checked at build").iter().map(f64::from).collect();
    let mut window = Vec::with_capacity(template.len());
    let mut best: Option<(i64, i64, f64)> = None;
    for y in 0..=target.height() - rect.height {
        for x in 0..=target.width() - rect.width {
            window.clear();
            let view = target.view(Rect::new(x, y, rect.width, rect.height)).expect("in bounds");
            window.extend(view.iter().map(f64::from));
            let score = match ncc(&template, &window) {
                Ok(s) => s,
                Err(RegistrationError::ZeroVariance) => continue,
                Err(e) => return Err(e),
            };
            if best.is_none_or(|b| score > b.2) {
                best = Some((x as i64 - rect.x as i64, y as i64 - rect.y as i64, score));
            }
        }
    }
    let min_score = model.search().min_score;
    match best {
        Some(b) if b.2 >= min_score => Ok(b),
        Some(b) => Err(RegistrationError::RegistrationFailed { score: b.2, min_score }),
        None => Err(RegistrationError::RegistrationFailed { score: -1.0, min_score }),
    }
}
