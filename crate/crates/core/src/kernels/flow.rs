//! Pyramidal Lucas-Kanade sparse optical flow with forward-backward
//! verification.

use super::pyramid::{ImagePyramid, Plane};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkParams {
    /// Square window side in pixels (odd).
    pub win: usize,
    /// Pyramid levels to use, starting from full resolution.
    pub levels: usize,
    /// Iteration cap per level.
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration update, in pixels.
    pub eps: f32,
    /// Maximum forward-backward error for an accepted track, in pixels.
    pub fb_thresh: f32,
}

impl Default for LkParams {
    fn default() -> Self {
        LkParams {
            win: 21,
            levels: 3,
            max_iters: 30,
            eps: 0.03,
            fb_thresh: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    /// Tracked position per input point (the input position when tracking
    /// failed before producing an estimate).
    pub points: Vec<[f32; 2]>,
    /// True when the track converged at every level, stayed inside the
    /// frame margin, and passed the forward-backward check.
    pub status: Vec<bool>,
    /// Forward-backward error in pixels; infinity for failed tracks.
    pub errors: Vec<f32>,
}

/// Patches with a minimum tensor eigenvalue (per pixel) below this are
/// untrackable and rejected.
const MIN_EIGEN: f64 = 1e-4;

/// Tracks `points` from `prev` into `next`. A point is accepted only if the
/// iteration converged at every pyramid level in both directions, start and
/// end positions keep a margin of win/2 from the frame edge, and the
/// backward track returns to within `fb_thresh` of the start.
pub fn lk_track(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    points: &[[f32; 2]],
    params: &LkParams,
) -> TrackResult {
    let base = &prev.levels[0];
    assert_eq!(
        (base.width, base.height),
        (next.levels[0].width, next.levels[0].height),
        "frame dimensions must match"
    );
    let margin = params.win as f32 / 2.0;
    let in_margin = |p: &[f32; 2]| {
        p[0] >= margin
            && p[1] >= margin
            && p[0] <= base.width as f32 - 1.0 - margin
            && p[1] <= base.height as f32 - 1.0 - margin
    };

    let tracked = parallel::map_collect(points, |p| {
        if !in_margin(p) {
            return (*p, false, f32::INFINITY);
        }
        let mut scratch = Scratch::new(params.win);
        let fwd = match track_one(prev, next, *p, params, &mut scratch) {
            Some(q) => q,
            None => return (*p, false, f32::INFINITY),
        };
        if !in_margin(&fwd) {
            return (fwd, false, f32::INFINITY);
        }
        let back = match track_one(next, prev, fwd, params, &mut scratch) {
            Some(b) => b,
            None => return (fwd, false, f32::INFINITY),
        };
        let err = ((back[0] - p[0]).powi(2) + (back[1] - p[1]).powi(2)).sqrt();
        (fwd, err <= params.fb_thresh, err)
    });

    let mut out = TrackResult {
        points: Vec::with_capacity(points.len()),
        status: Vec::with_capacity(points.len()),
        errors: Vec::with_capacity(points.len()),
    };
    for (p, s, e) in tracked {
        out.points.push(p);
        out.status.push(s);
        out.errors.push(e);
    }
    out
}

struct Scratch {
    /// (win+2)^2 template samples; the extra ring feeds central differences.
    template: Vec<f32>,
    /// win^2 target samples, refreshed per iteration.
    target: Vec<f32>,
    ix: Vec<f32>,
    iy: Vec<f32>,
}

impl Scratch {
    fn new(win: usize) -> Self {
        Scratch {
            template: vec![0.0; (win + 2) * (win + 2)],
            target: vec![0.0; win * win],
            ix: vec![0.0; win * win],
            iy: vec![0.0; win * win],
        }
    }
}

/// Coarse-to-fine Gauss-Newton refinement of one point. Returns the target
/// position, or None when any level fails to converge, the local structure
/// is too weak to solve, or the estimate diverges.
fn track_one(
    from: &ImagePyramid,
    to: &ImagePyramid,
    start: [f32; 2],
    params: &LkParams,
    scratch: &mut Scratch,
) -> Option<[f32; 2]> {
    let levels = params.levels.min(from.level_count()).min(to.level_count());
    let win = params.win;
    let hw = (win / 2) as i64;
    let mut d = [0.0f32; 2];

    for lvl in (0..levels).rev() {
        let src = &from.levels[lvl];
        let dst = &to.levels[lvl];
        let inv = 1.0 / (1u32 << lvl) as f32;
        let (cx, cy) = (start[0] * inv, start[1] * inv);

        sample_patch(src, cx, cy, hw + 1, &mut scratch.template);
        let tw = win + 2;
        let mut gxx = 0.0f64;
        let mut gxy = 0.0f64;
        let mut gyy = 0.0f64;
        for j in 0..win {
            for i in 0..win {
                let c = (j + 1) * tw + (i + 1);
                let ix = 0.5 * (scratch.template[c + 1] - scratch.template[c - 1]);
                let iy = 0.5 * (scratch.template[c + tw] - scratch.template[c - tw]);
                scratch.ix[j * win + i] = ix;
                scratch.iy[j * win + i] = iy;
                gxx += (ix * ix) as f64;
                gxy += (ix * iy) as f64;
                gyy += (iy * iy) as f64;
            }
        }
        let tr = gxx + gyy;
        let det = gxx * gyy - gxy * gxy;
        let min_eig = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
        if min_eig / (win * win) as f64 <= MIN_EIGEN {
            return None;
        }
        let inv_det = 1.0 / det;

        let diverge = (src.width + src.height) as f32;
        let mut converged = false;
        for _ in 0..params.max_iters {
            sample_patch(dst, cx + d[0], cy + d[1], hw, &mut scratch.target);
            let mut bx = 0.0f64;
            let mut by = 0.0f64;
            for j in 0..win {
                for i in 0..win {
                    let c = (j + 1) * tw + (i + 1);
                    let r = scratch.template[c] - scratch.target[j * win + i];
                    bx += (r * scratch.ix[j * win + i]) as f64;
                    by += (r * scratch.iy[j * win + i]) as f64;
                }
            }
            let ux = ((gyy * bx - gxy * by) * inv_det) as f32;
            let uy = ((gxx * by - gxy * bx) * inv_det) as f32;
            if !ux.is_finite() || !uy.is_finite() {
                return None;
            }
            d[0] += ux;
            d[1] += uy;
            if (ux * ux + uy * uy).sqrt() < params.eps {
                converged = true;
                break;
            }
            if d[0].abs() > diverge || d[1].abs() > diverge {
                return None;
            }
        }
        if !converged {
            return None;
        }
        if lvl > 0 {
            d[0] *= 2.0;
            d[1] *= 2.0;
        }
    }
    Some([start[0] + d[0], start[1] + d[1]])
}

/// Fills `out` with a (2*half+1)^2 bilinear patch centered at (cx, cy).
/// All taps share one fractional weight set; border taps clamp.
fn sample_patch(plane: &Plane, cx: f32, cy: f32, half: i64, out: &mut [f32]) {
    let n = (2 * half + 1) as usize;
    debug_assert_eq!(out.len(), n * n);
    let x0f = cx.floor();
    let y0f = cy.floor();
    let fx = cx - x0f;
    let fy = cy - y0f;
    let x0 = x0f as i64;
    let y0 = y0f as i64;
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w01 = fx * (1.0 - fy);
    let w10 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    let (w, h) = (plane.width as i64, plane.height as i64);

    if x0 - half >= 0 && y0 - half >= 0 && x0 + half + 1 < w && y0 + half + 1 < h {
        let stride = plane.width;
        for oy in 0..n as i64 {
            let row = ((y0 - half + oy) as usize) * stride + (x0 - half) as usize;
            let r0 = &plane.data[row..row + n + 1];
            let r1 = &plane.data[row + stride..row + stride + n + 1];
            let dst = &mut out[(oy as usize) * n..(oy as usize + 1) * n];
            for i in 0..n {
                dst[i] = w00 * r0[i] + w01 * r0[i + 1] + w10 * r1[i] + w11 * r1[i + 1];
            }
        }
    } else {
        for oy in 0..n as i64 {
            for ox in 0..n as i64 {
                let x = x0 - half + ox;
                let y = y0 - half + oy;
                out[(oy * n as i64 + ox) as usize] = w00 * plane.get(x, y)
                    + w01 * plane.get(x + 1, y)
                    + w10 * plane.get(x, y + 1)
                    + w11 * plane.get(x + 1, y + 1);
            }
        }
    }
}
