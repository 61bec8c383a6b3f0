//! Coarse-to-fine NCC search.
//!
//! At the coarsest pyramid level every window position is scored for every
//! (θ, s) pair of the coarse grid. The best few local maxima are carried down
//! the pyramid and re-searched in a small neighbourhood at each level. The
//! winner is re-searched at full resolution on the fine (θ, s) grid and then
//! polished by coordinate ascent over (x, y, θ, s) with parabola steps.

use log::debug;

use super::{RegistrationError, RegistrationModel, RegistrationResult, SearchParams};
use crate::geometry::{sin_cos_deg, Point2, Transform};
use crate::raster::Image;

/// Local maxima of the coarse score map carried down the pyramid.
const CANDIDATES: usize = 6;
/// Translation neighbourhood (level pixels) re-searched at finer levels.
const REFINE_RADIUS: i64 = 2;
/// Variance below which a target window counts as flat.
const FLAT_WINDOW: f64 = 1e-10;
/// Halvings of the continuous refinement bracket.
const POLISH_ROUNDS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchDetail {
    pub result: RegistrationResult,
    pub levels_used: usize,
    /// Top-left of the winning full-resolution window before subpixel refinement.
    pub peak_window: (usize, usize),
    /// Integer peak centre minus template centre. For a translation-only
    /// search this is the integer translation of the peak.
    pub integer_shift: (i64, i64),
    /// Best coarse-level score.
    pub coarse_score: f64,
}

/// Sampling layout of the rotated/scaled template at one level.
#[derive(Debug, Clone, Copy)]
struct Layout {
    nu: usize,
    nv: usize,
    cu: f64,
    cv: f64,
    /// Template centre in this level's source coordinates.
    center: Point2,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    /// Template centre in this level's target coordinates.
    cx: f64,
    cy: f64,
    wx: usize,
    wy: usize,
    theta: f64,
    scale: f64,
    score: f64,
}

pub fn register(model: &RegistrationModel, target: &Image) -> Result<RegistrationResult, RegistrationError> {
    register_detailed(model, target).map(|d| d.result)
}

pub fn register_detailed(model: &RegistrationModel, target: &Image) -> Result<SearchDetail, RegistrationError> {
    let tpl = model.template_rect();
    if target.width() < tpl.width || target.height() < tpl.height {
        return Err(RegistrationError::DimensionMismatch {
            target_width: target.width(),
            target_height: target.height(),
            template_width: tpl.width,
            template_height: tpl.height,
        });
    }
    let params = model.search();
    let theta_bound =
        if params.rotates() { params.theta_range + params.theta_step + params.theta_fine_step } else { 0.0 };
    let scale_floor = if params.scales() {
        (params.scale_range[0] - params.scale_step - params.scale_fine_step).max(0.05)
    } else {
        params.scale_range[0]
    };

    let layouts: Vec<Layout> = (0..model.levels()).map(|l| layout(model, l, theta_bound, scale_floor)).collect();
    if layouts[0].nu > target.width() || layouts[0].nv > target.height() {
        return Err(RegistrationError::DimensionMismatch {
            target_width: target.width(),
            target_height: target.height(),
            template_width: layouts[0].nu,
            template_height: layouts[0].nv,
        });
    }

    // Only as many target levels as fit the coarse template.
    let mut targets: Vec<Image> = Vec::new();
    let mut levels = 1;
    while levels < model.levels() {
        let next = targets.last().unwrap_or(target).decimate();
        let lay = &layouts[levels];
        if next.width() < lay.nu + 2 || next.height() < lay.nv + 2 {
            break;
        }
        targets.push(next);
        levels += 1;
    }
    let target_level = |l: usize| if l == 0 { target } else { &targets[l - 1] };

    let top = levels - 1;
    let thetas = coarse_thetas(params);
    let scales = coarse_scales(params);
    let mut candidates = coarse_search(model.source_level(top), target_level(top), &layouts[top], &thetas, &scales);
    let coarse_score = candidates.first().map(|c| c.score).unwrap_or(-1.0);
    debug!("coarse level {top}: {} candidates, best {coarse_score:.4}", candidates.len());

    for level in (0..top).rev() {
        let lay = &layouts[level];
        let src = model.source_level(level);
        let tgt = target_level(level);
        candidates = candidates
            .iter()
            .filter_map(|c| {
                let cx = 2.0 * c.cx + 0.5;
                let cy = 2.0 * c.cy + 0.5;
                let ts = neighbour_thetas(params, c.theta);
                let ss = neighbour_scales(params, c.scale);
                refine(src, tgt, lay, cx, cy, &ts, &ss, REFINE_RADIUS)
            })
            .collect();
    }

    let Some(best) = pick_best(&candidates) else {
        return Err(RegistrationError::RegistrationFailed { score: -1.0, min_score: params.min_score });
    };
    let lay = &layouts[0];
    let src = model.source_level(0);
    let mut best = finish(src, target, lay, params, best);
    best.score = best.score.clamp(-1.0, 1.0);

    let c0 = model.template_center();
    let (sin, cos) = sin_cos_deg(best.theta);
    let (s, q) = (best.scale, Point2::new(best.cx, best.cy));
    let tx = q.x - s * (cos * c0.x - sin * c0.y);
    let ty = q.y - s * (sin * c0.x + cos * c0.y);
    let transform = Transform::from_similarity(tx, ty, best.theta, s)
        .map_err(|e| RegistrationError::InvalidParams(e.to_string()))?;
    let peak_center = Point2::new(best.wx as f64 + lay.cu, best.wy as f64 + lay.cv);
    let detail = SearchDetail {
        result: RegistrationResult { transform, score: best.score },
        levels_used: levels,
        peak_window: (best.wx, best.wy),
        integer_shift: ((peak_center.x - c0.x).round() as i64, (peak_center.y - c0.y).round() as i64),
        coarse_score,
    };
    debug!("registered {:?} score {:.4}", transform, best.score);
    if best.score < params.min_score {
        return Err(RegistrationError::RegistrationFailed { score: best.score, min_score: params.min_score });
    }
    Ok(detail)
}

fn layout(model: &RegistrationModel, level: usize, theta_bound: f64, scale_floor: f64) -> Layout {
    let f = (1usize << level) as f64;
    let rect = model.template_rect();
    let c0 = model.template_center();
    let off = (f - 1.0) / 2.0;
    let center = Point2::new((c0.x - off) / f, (c0.y - off) / f);
    let hw = ((rect.width as f64 - f) / (2.0 * f)).max(0.0);
    let hh = ((rect.height as f64 - f) / (2.0 * f)).max(0.0);
    // Largest k such that the preimage of [-k·hw, k·hw]×[-k·hh, k·hh] under
    // every searched (θ, s) stays within the template.
    let k = if theta_bound == 0.0 {
        scale_floor
    } else {
        let (sin, cos) = sin_cos_deg(theta_bound.min(90.0));
        let kx = if hw > 0.0 { hw / (hw * cos + hh * sin) } else { 1.0 };
        let ky = if hh > 0.0 { hh / (hw * sin + hh * cos) } else { 1.0 };
        scale_floor * kx.min(ky)
    };
    // Parity chosen so the identity pose samples exactly on source pixels.
    let fit = |half: f64, c: f64| {
        let n = (2.0 * k * half + 1e-9).floor() as usize + 1;
        let want_even = (c.rem_euclid(1.0) - 0.5).abs() < 0.25;
        if n > 1 && (n % 2 == 0) != want_even {
            n - 1
        } else {
            n
        }
    };
    let nu = fit(hw, center.x);
    let nv = fit(hh, center.y);
    Layout { nu, nv, cu: (nu as f64 - 1.0) / 2.0, cv: (nv as f64 - 1.0) / 2.0, center }
}

fn coarse_thetas(p: &SearchParams) -> Vec<f64> {
    if !p.rotates() {
        return vec![0.0];
    }
    let m = (p.theta_range / p.theta_step + 1e-9).floor() as i64;
    (-m..=m).map(|k| k as f64 * p.theta_step).collect()
}

fn coarse_scales(p: &SearchParams) -> Vec<f64> {
    if !p.scales() {
        return vec![p.scale_range[0]];
    }
    let n = ((p.scale_range[1] - p.scale_range[0]) / p.scale_step + 1e-9).floor() as i64;
    (0..=n).map(|k| p.scale_range[0] + k as f64 * p.scale_step).collect()
}

fn neighbour_thetas(p: &SearchParams, theta: f64) -> Vec<f64> {
    if !p.rotates() {
        return vec![0.0];
    }
    let lim = p.theta_range + 1e-9;
    [theta - p.theta_step, theta, theta + p.theta_step].into_iter().filter(|t| t.abs() <= lim).collect()
}

fn neighbour_scales(p: &SearchParams, scale: f64) -> Vec<f64> {
    if !p.scales() {
        return vec![p.scale_range[0]];
    }
    let (lo, hi) = (p.scale_range[0] - 1e-9, p.scale_range[1] + 1e-9);
    [scale - p.scale_step, scale, scale + p.scale_step].into_iter().filter(|s| (lo..=hi).contains(s)).collect()
}

/// Fine grid spanning one coarse step either side, allowed one fine step past
/// the configured range so edge peaks can still be interpolated.
fn fine_grid(center: f64, coarse: f64, fine: f64, lo: f64, hi: f64) -> Vec<f64> {
    let m = (coarse / fine).round().max(1.0) as i64;
    let (lo, hi) = (lo - fine - 1e-9, hi + fine + 1e-9);
    (-m..=m).map(|k| center + k as f64 * fine).filter(|v| (lo..=hi).contains(v)).collect()
}

/// Samples the template for (θ, s) into `out`, zero-mean and unit norm.
/// Returns false when the sampled template is flat.
fn sample_template(src: &Image, lay: &Layout, theta: f64, scale: f64, out: &mut Vec<f64>) -> bool {
    sample_template_at(src, lay, theta, scale, (0.0, 0.0), out)
}

/// As [`sample_template`], for a template centre that sits `offset` away
/// from the window centre (subpixel poses).
fn sample_template_at(
    src: &Image,
    lay: &Layout,
    theta: f64,
    scale: f64,
    offset: (f64, f64),
    out: &mut Vec<f64>,
) -> bool {
    let (sin, cos) = sin_cos_deg(theta);
    let inv = 1.0 / scale;
    out.clear();
    for v in 0..lay.nv {
        let dy = v as f64 - lay.cv - offset.1;
        for u in 0..lay.nu {
            let dx = u as f64 - lay.cu - offset.0;
            let sx = lay.center.x + inv * (cos * dx + sin * dy);
            let sy = lay.center.y + inv * (cos * dy - sin * dx);
            out.push(src.sample_clamped(sx, sy));
        }
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let mut norm = 0.0;
    for v in out.iter_mut() {
        *v -= mean;
        norm += *v * *v;
    }
    if norm <= 1e-12 {
        return false;
    }
    let inv_norm = 1.0 / norm.sqrt();
    out.iter_mut().for_each(|v| *v *= inv_norm);
    true
}

/// NCC of a normalized template against the target window at (x, y).
fn score_at(tgt: &Image, tpl: &[f64], lay: &Layout, x: usize, y: usize) -> f64 {
    let (mut dot, mut sum, mut sq) = (0.0, 0.0, 0.0);
    for v in 0..lay.nv {
        let row = &tgt.row(y + v)[x..x + lay.nu];
        let trow = &tpl[v * lay.nu..(v + 1) * lay.nu];
        for (t, b) in trow.iter().zip(row) {
            let b = *b as f64;
            dot += t * b;
            sum += b;
            sq += b * b;
        }
    }
    let n = (lay.nu * lay.nv) as f64;
    let var = sq - sum * sum / n;
    if var <= FLAT_WINDOW * n {
        return 0.0;
    }
    dot / var.sqrt()
}

fn coarse_search(src: &Image, tgt: &Image, lay: &Layout, thetas: &[f64], scales: &[f64]) -> Vec<Candidate> {
    let (w, h) = (tgt.width(), tgt.height());
    let nx = w - lay.nu + 1;
    let ny = h - lay.nv + 1;
    let n = (lay.nu * lay.nv) as f64;

    // Window sums from integral images; inverse std-dev per position.
    let stride = w + 1;
    let mut s1 = vec![0.0f64; stride * (h + 1)];
    let mut s2 = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let (mut r1, mut r2) = (0.0, 0.0);
        for (x, &v) in tgt.row(y).iter().enumerate() {
            let v = v as f64;
            r1 += v;
            r2 += v * v;
            s1[(y + 1) * stride + x + 1] = s1[y * stride + x + 1] + r1;
            s2[(y + 1) * stride + x + 1] = s2[y * stride + x + 1] + r2;
        }
    }
    let boxsum = |s: &[f64], x: usize, y: usize| {
        s[(y + lay.nv) * stride + x + lay.nu] - s[y * stride + x + lay.nu] - s[(y + lay.nv) * stride + x]
            + s[y * stride + x]
    };
    let mut inv_sd = vec![0.0f32; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let a = boxsum(&s1, x, y);
            let var = boxsum(&s2, x, y) - a * a / n;
            if var > FLAT_WINDOW * n {
                inv_sd[y * nx + x] = (1.0 / var.sqrt()) as f32;
            }
        }
    }
    drop((s1, s2));

    let mut best = vec![f32::NEG_INFINITY; nx * ny];
    let mut best_combo = vec![(0.0f64, 0.0f64); nx * ny];
    let mut acc = vec![0.0f32; nx * ny];
    let mut tpl = Vec::with_capacity(lay.nu * lay.nv);
    let mut weights = vec![0.0f32; lay.nu * lay.nv];
    let pixels = tgt.pixels();

    for &theta in thetas {
        for &scale in scales {
            if !sample_template(src, lay, theta, scale, &mut tpl) {
                continue;
            }
            for (w32, t) in weights.iter_mut().zip(&tpl) {
                *w32 = *t as f32;
            }
            for y in 0..ny {
                let arow = &mut acc[y * nx..(y + 1) * nx];
                arow.fill(0.0);
                for v in 0..lay.nv {
                    let trow = &pixels[(y + v) * w..(y + v + 1) * w];
                    for (u, &wt) in weights[v * lay.nu..(v + 1) * lay.nu].iter().enumerate() {
                        for (a, b) in arow.iter_mut().zip(&trow[u..u + nx]) {
                            *a += wt * b;
                        }
                    }
                }
            }
            for i in 0..nx * ny {
                let sc = acc[i] * inv_sd[i];
                if sc > best[i] {
                    best[i] = sc;
                    best_combo[i] = (theta, scale);
                }
            }
        }
    }

    // Local maxima; earlier raster neighbours must be strictly lower.
    let mut peaks: Vec<Candidate> = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            let v = best[y * nx + x];
            if v.is_nan() || v <= 0.0 {
                continue;
            }
            let mut is_peak = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                    if xx < 0 || yy < 0 || xx >= nx as i64 || yy >= ny as i64 {
                        continue;
                    }
                    let o = best[yy as usize * nx + xx as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if o > v || (earlier && o == v) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                let (theta, scale) = best_combo[y * nx + x];
                peaks.push(Candidate {
                    cx: x as f64 + lay.cu,
                    cy: y as f64 + lay.cv,
                    wx: x,
                    wy: y,
                    theta,
                    scale,
                    score: v as f64,
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.wy.cmp(&b.wy)).then(a.wx.cmp(&b.wx)));
    peaks.truncate(CANDIDATES);
    peaks
}

/// Re-searches translation within `radius` of the predicted window and every
/// listed (θ, s). First maximum in (θ, s, y, x) order wins.
#[allow(clippy::too_many_arguments)]
fn refine(
    src: &Image,
    tgt: &Image,
    lay: &Layout,
    cx: f64,
    cy: f64,
    thetas: &[f64],
    scales: &[f64],
    radius: i64,
) -> Option<Candidate> {
    let x0 = (cx - lay.cu).round() as i64;
    let y0 = (cy - lay.cv).round() as i64;
    let max_x = (tgt.width() - lay.nu) as i64;
    let max_y = (tgt.height() - lay.nv) as i64;
    let mut tpl = Vec::with_capacity(lay.nu * lay.nv);
    let mut best: Option<Candidate> = None;
    for &theta in thetas {
        for &scale in scales {
            if !sample_template(src, lay, theta, scale, &mut tpl) {
                continue;
            }
            for y in (y0 - radius).max(0)..=(y0 + radius).min(max_y) {
                for x in (x0 - radius).max(0)..=(x0 + radius).min(max_x) {
                    let score = score_at(tgt, &tpl, lay, x as usize, y as usize);
                    if best.is_none_or(|b| score > b.score) {
                        best = Some(Candidate {
                            cx: x as f64 + lay.cu,
                            cy: y as f64 + lay.cv,
                            wx: x as usize,
                            wy: y as usize,
                            theta,
                            scale,
                            score,
                        });
                    }
                }
            }
        }
    }
    best
}

fn pick_best(cands: &[Candidate]) -> Option<Candidate> {
    cands.iter().copied().reduce(|a, b| {
        let better = b.score > a.score || (b.score == a.score && (b.wy, b.wx) < (a.wy, a.wx));
        if better {
            b
        } else {
            a
        }
    })
}

fn parabola_offset(minus: f64, center: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * center + plus;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
}

/// Full-resolution fine grid, then parabola fits for θ, s and translation.
fn finish(src: &Image, tgt: &Image, lay: &Layout, p: &SearchParams, c: Candidate) -> Candidate {
    let thetas = if p.rotates() {
        fine_grid(c.theta, p.theta_step, p.theta_fine_step, -p.theta_range, p.theta_range)
    } else {
        vec![0.0]
    };
    let scales = if p.scales() {
        fine_grid(c.scale, p.scale_step, p.scale_fine_step, p.scale_range[0], p.scale_range[1])
    } else {
        vec![p.scale_range[0]]
    };
    let grid = refine(src, tgt, lay, c.cx, c.cy, &thetas, &scales, 1).unwrap_or(c);
    let grid = refine(src, tgt, lay, grid.cx, grid.cy, &[grid.theta], &[grid.scale], 1).unwrap_or(grid);

    // Integer hill-climb at the grid (θ, s) so the window is a local maximum.
    let mut tpl = Vec::with_capacity(lay.nu * lay.nv);
    if !sample_template(src, lay, grid.theta, grid.scale, &mut tpl) {
        return grid;
    }
    let max_x = tgt.width() - lay.nu;
    let max_y = tgt.height() - lay.nv;
    let (mut x, mut y) = (grid.wx, grid.wy);
    let mut center = score_at(tgt, &tpl, lay, x, y);
    for _ in 0..4 {
        let mut moved = false;
        for (dx, dy) in [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)] {
            let (xx, yy) = (x as i64 + dx, y as i64 + dy);
            if xx < 0 || yy < 0 || xx > max_x as i64 || yy > max_y as i64 {
                continue;
            }
            let s = score_at(tgt, &tpl, lay, xx as usize, yy as usize);
            if s > center {
                center = s;
                x = xx as usize;
                y = yy as usize;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let start = Candidate { cx: x as f64 + lay.cu, cy: y as f64 + lay.cv, wx: x, wy: y, score: center, ..grid };
    polish(src, tgt, lay, p, start)
}

/// NCC of the template posed with centre `(cx, cy)` in the target. The
/// window is the nearest integer one; the subpixel remainder is absorbed by
/// sampling the source.
fn pose_score(
    src: &Image,
    tgt: &Image,
    lay: &Layout,
    pose: [f64; 4],
    tpl: &mut Vec<f64>,
) -> Option<(f64, usize, usize)> {
    let [cx, cy, theta, scale] = pose;
    let max_x = (tgt.width() - lay.nu) as f64;
    let max_y = (tgt.height() - lay.nv) as f64;
    let wx = (cx - lay.cu).round().clamp(0.0, max_x);
    let wy = (cy - lay.cv).round().clamp(0.0, max_y);
    let offset = (cx - lay.cu - wx, cy - lay.cv - wy);
    if offset.0.abs() > 1.0 || offset.1.abs() > 1.0 || scale <= 0.0 {
        return None;
    }
    if !sample_template_at(src, lay, theta, scale, offset, tpl) {
        return None;
    }
    Some((score_at(tgt, tpl, lay, wx as usize, wy as usize), wx as usize, wy as usize))
}

/// Coordinate ascent on (x, y, θ, s) with parabola steps and a shrinking
/// bracket, starting from the grid optimum.
fn polish(src: &Image, tgt: &Image, lay: &Layout, p: &SearchParams, c: Candidate) -> Candidate {
    let mut tpl = Vec::with_capacity(lay.nu * lay.nv);
    let mut pose = [c.cx, c.cy, c.theta, c.scale];
    let mut best = c.score;
    let mut steps = [0.5, 0.5, p.theta_fine_step, p.scale_fine_step];
    let active = [true, true, p.rotates(), p.scales()];
    let mut eval = |pose: [f64; 4]| pose_score(src, tgt, lay, pose, &mut tpl).map_or(f64::NEG_INFINITY, |r| r.0);
    for _ in 0..POLISH_ROUNDS {
        for k in (0..4).filter(|&k| active[k]) {
            let mut lo = pose;
            lo[k] -= steps[k];
            let mut hi = pose;
            hi[k] += steps[k];
            let (fl, fh) = (eval(lo), eval(hi));
            let mut next = pose;
            next[k] += parabola_offset(fl, best, fh) * 2.0 * steps[k];
            let mut candidates = [(next, f64::NEG_INFINITY), (lo, fl), (hi, fh)];
            if next != pose {
                candidates[0].1 = eval(next);
            }
            for (q, f) in candidates {
                if f > best {
                    best = f;
                    pose = q;
                }
            }
        }
        steps.iter_mut().for_each(|s| *s *= 0.5);
    }
    Candidate { cx: pose[0], cy: pose[1], wx: c.wx, wy: c.wy, theta: pose[2], scale: pose[3], score: best }
}
