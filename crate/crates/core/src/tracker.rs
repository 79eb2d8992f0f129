//! Patchwise sparse-flow retention tracking.
//!
//! Corners are seeded into a patch grid and tracked frame to frame. Each
//! patch remembers how many corners it held at the last reseed; the ratio of
//! surviving tracks to that denominator is its retention. When enough
//! patches fall below the retention threshold at once the frame is an event:
//! the corner set and all denominators are rebuilt there. Between events the
//! corner set is refreshed every frame (survivors kept preferentially,
//! topped up with fresh detections) but denominators stay fixed, so decay
//! keeps accumulating against the same baseline.

use crate::kernels::{lk_track, shi_tomasi_corners, Corner, ImagePyramid, LkParams};
use crate::media::{FrameBuffer, MediaError, VideoSource};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 frames, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Media(#[from] MediaError),
}

/// Half-open axis-aligned rectangle: contains (x, y) iff
/// x0 <= x < x1 and y0 <= y < y1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl Rect {
    #[inline]
    pub fn contains(&self, x: f32, y: f32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Base grid tiling the frame exactly, optionally augmented with centroidal
/// patches of the same size centered on the interior grid crossings so
/// structure straddling base boundaries is still monitored.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    width: u32,
    height: u32,
    rows: usize,
    cols: usize,
    base_count: usize,
    patches: Vec<Rect>,
    /// Base row/col boundaries in pixels, rows+1 and cols+1 entries.
    row_bounds: Vec<u32>,
    col_bounds: Vec<u32>,
}

impl PatchGrid {
    pub fn new(width: u32, height: u32, rows: usize, cols: usize, centroidal: bool) -> Self {
        assert!(rows >= 1 && cols >= 1 && width >= 1 && height >= 1);
        let row_bounds: Vec<u32> = (0..=rows)
            .map(|r| (r as u64 * height as u64 / rows as u64) as u32)
            .collect();
        let col_bounds: Vec<u32> = (0..=cols)
            .map(|c| (c as u64 * width as u64 / cols as u64) as u32)
            .collect();
        let mut patches = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                patches.push(Rect {
                    x0: col_bounds[c] as f32,
                    y0: row_bounds[r] as f32,
                    x1: col_bounds[c + 1] as f32,
                    y1: row_bounds[r + 1] as f32,
                });
            }
        }
        let base_count = patches.len();
        if centroidal && rows > 1 && cols > 1 {
            let pw = width as f32 / cols as f32;
            let ph = height as f32 / rows as f32;
            for r in 1..rows {
                for c in 1..cols {
                    let cx = col_bounds[c] as f32;
                    let cy = row_bounds[r] as f32;
                    patches.push(Rect {
                        x0: (cx - pw / 2.0).max(0.0),
                        y0: (cy - ph / 2.0).max(0.0),
                        x1: (cx + pw / 2.0).min(width as f32),
                        y1: (cy + ph / 2.0).min(height as f32),
                    });
                }
            }
        }
        PatchGrid {
            width,
            height,
            rows,
            cols,
            base_count,
            patches,
            row_bounds,
            col_bounds,
        }
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn patches(&self) -> &[Rect] {
        &self.patches
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Index of the unique base patch containing (x, y); None outside the
    /// frame.
    pub fn base_patch_of(&self, x: f32, y: f32) -> Option<usize> {
        if x < 0.0 || y < 0.0 || x >= self.width as f32 || y >= self.height as f32 {
            return None;
        }
        let col = (0..self.cols)
            .find(|&c| x < self.col_bounds[c + 1] as f32)
            .unwrap_or(self.cols - 1);
        let row = (0..self.rows)
            .find(|&r| y < self.row_bounds[r + 1] as f32)
            .unwrap_or(self.rows - 1);
        Some(row * self.cols + col)
    }

    /// Counts points per patch. A point inside several patches (base plus a
    /// straddling centroidal one) increments each of them; counts and
    /// reseed denominators are computed with this same rule so ratios stay
    /// comparable.
    pub fn count_per_patch(&self, points: impl Iterator<Item = (f32, f32)> + Clone) -> Vec<u32> {
        let mut counts = vec![0u32; self.patches.len()];
        for (j, rect) in self.patches.iter().enumerate() {
            counts[j] = points.clone().filter(|&(x, y)| rect.contains(x, y)).count() as u32;
        }
        counts
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PsfrConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Adds (rows-1)*(cols-1) patches over the interior grid crossings.
    pub centroidal: bool,
    /// Per-patch corner budget at seeding (m).
    pub max_per_patch: usize,
    /// Global corner cap (C).
    pub max_corners: usize,
    /// Minimum corner spacing in pixels (rho).
    pub dedup_radius: f32,
    /// Retention ratio below which a patch counts as low (tau_r).
    pub retention_thresh: f32,
    /// Low patches required to fire an event (k_min); capped at the number
    /// of active patches when few have corners.
    pub min_low_patches: usize,
    /// Corner detector quality fraction of the maximum response.
    pub quality: f64,
    pub lk: LkParamsConfig,
}

/// Serializable mirror of [`LkParams`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LkParamsConfig {
    pub win: usize,
    pub levels: usize,
    pub max_iters: usize,
    pub eps: f32,
    pub fb_thresh: f32,
}

impl From<LkParamsConfig> for LkParams {
    fn from(c: LkParamsConfig) -> Self {
        LkParams {
            win: c.win,
            levels: c.levels,
            max_iters: c.max_iters,
            eps: c.eps,
            fb_thresh: c.fb_thresh,
        }
    }
}

impl Default for PsfrConfig {
    fn default() -> Self {
        PsfrConfig {
            grid_rows: 4,
            grid_cols: 4,
            centroidal: true,
            max_per_patch: 20,
            max_corners: 400,
            dedup_radius: 8.0,
            retention_thresh: 0.5,
            // ceil(0.4 * 25) for the default 4x4 + centroidal layout.
            min_low_patches: 10,
            quality: 0.01,
            lk: LkParamsConfig {
                win: 21,
                levels: 3,
                max_iters: 30,
                eps: 0.03,
                fb_thresh: 1.0,
            },
        }
    }
}

impl PsfrConfig {
    pub fn patch_count(&self) -> usize {
        let base = self.grid_rows * self.grid_cols;
        if self.centroidal && self.grid_rows > 1 && self.grid_cols > 1 {
            base + (self.grid_rows - 1) * (self.grid_cols - 1)
        } else {
            base
        }
    }

    /// Default event threshold for a grid layout: ceil(0.4 * patch count).
    pub fn default_min_low(patch_count: usize) -> usize {
        (2 * patch_count).div_ceil(5).max(1)
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let fail = |msg: String| Err(TrackerError::InvalidConfig(msg));
        if self.grid_rows < 1 || self.grid_cols < 1 {
            return fail(format!(
                "grid must be at least 1x1, got {}x{}",
                self.grid_rows, self.grid_cols
            ));
        }
        if self.max_per_patch < 1 {
            return fail("max_per_patch must be >= 1".into());
        }
        if self.max_corners < self.max_per_patch {
            return fail(format!(
                "max_corners {} below max_per_patch {}",
                self.max_corners, self.max_per_patch
            ));
        }
        if !(self.retention_thresh > 0.0 && self.retention_thresh < 1.0) {
            return fail(format!(
                "retention_thresh must lie in (0, 1), got {}",
                self.retention_thresh
            ));
        }
        if self.min_low_patches < 1 || self.min_low_patches > self.patch_count() {
            return fail(format!(
                "min_low_patches {} outside 1..={}",
                self.min_low_patches,
                self.patch_count()
            ));
        }
        if !(self.quality > 0.0 && self.quality < 1.0) {
            return fail(format!("quality must lie in (0, 1), got {}", self.quality));
        }
        if self.dedup_radius < 0.0 {
            return fail("dedup_radius must be non-negative".into());
        }
        let lk = &self.lk;
        if lk.win < 5 || lk.win % 2 == 0 {
            return fail(format!("lk.win must be odd and >= 5, got {}", lk.win));
        }
        if lk.levels < 1 || lk.max_iters < 1 || lk.eps <= 0.0 || lk.fb_thresh <= 0.0 {
            return fail("lk levels/iters/eps/fb_thresh must be positive".into());
        }
        Ok(())
    }
}

/// Tracker state between frames: the live corner set, the frame index of the
/// last reseed, and the per-patch corner counts frozen at that reseed.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub reseed_index: usize,
    pub corners: Vec<Corner>,
    pub denominators: Vec<u32>,
}

/// Everything stage two needs from one tracking step.
#[derive(Debug, Clone)]
pub struct PsfrFrameOutcome {
    pub frame_index: usize,
    /// Accepted track positions in the new frame.
    pub survivors: Vec<[f32; 2]>,
    /// Survivors per patch.
    pub counts: Vec<u32>,
    /// Retention per patch; None where the reseed denominator is zero.
    pub ratios: Vec<Option<f32>>,
    /// Patches with a denominator and retention below threshold (L).
    pub low_retention: usize,
    pub is_event: bool,
    /// Mean displacement of accepted tracks, pixels.
    pub motion_mag: f32,
}

impl PsfrFrameOutcome {
    /// Frame 0 carries no tracking information; its outcome is zeroed so
    /// outcome lists stay aligned one-to-one with frames.
    pub fn sentinel(frame_index: usize, patch_count: usize) -> Self {
        PsfrFrameOutcome {
            frame_index,
            survivors: Vec::new(),
            counts: vec![0; patch_count],
            ratios: vec![None; patch_count],
            low_retention: 0,
            is_event: false,
            motion_mag: 0.0,
        }
    }
}

pub struct RetentionSummary {
    pub counts: Vec<u32>,
    pub ratios: Vec<Option<f32>>,
    pub low: usize,
}

/// Per-patch survivor counts and retention ratios against the given reseed
/// denominators. Survivors outside every patch (off-frame) count nowhere.
pub fn retention_ratios(
    survivors: &[[f32; 2]],
    grid: &PatchGrid,
    denominators: &[u32],
    retention_thresh: f32,
) -> RetentionSummary {
    assert_eq!(denominators.len(), grid.patch_count());
    let counts = grid.count_per_patch(survivors.iter().map(|p| (p[0], p[1])));
    let mut ratios = Vec::with_capacity(counts.len());
    let mut low = 0usize;
    for (j, &c) in counts.iter().enumerate() {
        let n = denominators[j];
        if n == 0 {
            ratios.push(None);
        } else {
            let r = c as f32 / n as f32;
            if r < retention_thresh {
                low += 1;
            }
            ratios.push(Some(r));
        }
    }
    RetentionSummary { counts, ratios, low }
}

/// Builds the next corner set for a frame: existing corners are kept
/// preferentially, fresh detections fill remaining capacity. Per base patch
/// at most `max_per_patch` corners, no two corners within `dedup_radius`,
/// at most `max_corners` total (kept in descending response order). Corners
/// too close to the border to track (win/2) are excluded. Idempotent: seeding
/// with its own output returns the same set.
pub fn seed_corners(
    gray: &[u8],
    grid: &PatchGrid,
    existing: &[Corner],
    cfg: &PsfrConfig,
) -> Vec<Corner> {
    let (w, h) = grid.dimensions();
    let margin = cfg.lk.win as f32 / 2.0;
    let in_margin = |x: f32, y: f32| {
        x >= margin && y >= margin && x <= w as f32 - 1.0 - margin && y <= h as f32 - 1.0 - margin
    };

    let fresh = shi_tomasi_corners(
        gray,
        w as usize,
        h as usize,
        cfg.max_corners.saturating_mul(2),
        cfg.quality,
        cfg.dedup_radius,
    );
    let mut preferred: Vec<Corner> = existing.to_vec();
    preferred.sort_by(by_response_desc);

    let mut spacing = crate::kernels::SpacingGrid::new(w as usize, h as usize, cfg.dedup_radius);
    let mut patch_load = vec![0usize; grid.base_count()];
    let mut accepted: Vec<Corner> = Vec::new();
    for c in preferred.iter().chain(fresh.iter()) {
        if !in_margin(c.x, c.y) {
            continue;
        }
        let Some(patch) = grid.base_patch_of(c.x, c.y) else {
            continue;
        };
        if patch_load[patch] >= cfg.max_per_patch {
            continue;
        }
        if !spacing.is_clear(c.x, c.y) {
            continue;
        }
        spacing.insert(c.x, c.y);
        patch_load[patch] += 1;
        accepted.push(*c);
    }
    accepted.sort_by(by_response_desc);
    accepted.truncate(cfg.max_corners);
    accepted
}

fn by_response_desc(a: &Corner, b: &Corner) -> std::cmp::Ordering {
    b.response
        .partial_cmp(&a.response)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
        .then(a.x.partial_cmp(&b.x).unwrap_or(std::cmp::Ordering::Equal))
}

/// Incremental tracker that caches the previous frame's pyramid, so a video
/// pass builds one pyramid per frame.
pub struct Tracker {
    cfg: PsfrConfig,
    grid: PatchGrid,
    state: TrackerState,
    pyramid: ImagePyramid,
}

impl Tracker {
    pub fn new(first: &FrameBuffer, cfg: PsfrConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let grid = PatchGrid::new(
            first.width,
            first.height,
            cfg.grid_rows,
            cfg.grid_cols,
            cfg.centroidal,
        );
        let pyramid = ImagePyramid::build(
            &first.gray,
            first.width as usize,
            first.height as usize,
            cfg.lk.levels,
        );
        let corners = seed_corners(&first.gray, &grid, &[], &cfg);
        let denominators = grid.count_per_patch(corners.iter().map(|c| (c.x, c.y)));
        Ok(Tracker {
            state: TrackerState {
                reseed_index: first.index,
                corners,
                denominators,
            },
            cfg,
            grid,
            pyramid,
        })
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    /// Tracks into `next` and updates the internal state. Emits the outcome
    /// for `next`.
    pub fn advance(&mut self, next: &FrameBuffer) -> PsfrFrameOutcome {
        assert_eq!(
            (next.width, next.height),
            self.grid.dimensions(),
            "frame size changed mid-video"
        );
        let next_pyr = ImagePyramid::build(
            &next.gray,
            next.width as usize,
            next.height as usize,
            self.cfg.lk.levels,
        );
        let outcome = advance_state(
            &mut self.state,
            &self.cfg,
            &self.grid,
            &self.pyramid,
            &next_pyr,
            &next.gray,
            next.index,
        );
        self.pyramid = next_pyr;
        outcome
    }
}

fn advance_state(
    state: &mut TrackerState,
    cfg: &PsfrConfig,
    grid: &PatchGrid,
    prev_pyr: &ImagePyramid,
    next_pyr: &ImagePyramid,
    next_gray: &[u8],
    next_index: usize,
) -> PsfrFrameOutcome {
    let points: Vec<[f32; 2]> = state.corners.iter().map(|c| [c.x, c.y]).collect();
    let lk: LkParams = cfg.lk.into();
    let tracked = lk_track(prev_pyr, next_pyr, &points, &lk);

    let mut survivors = Vec::with_capacity(points.len());
    let mut survivor_corners = Vec::with_capacity(points.len());
    let mut motion = 0.0f64;
    for i in 0..points.len() {
        if !tracked.status[i] {
            continue;
        }
        let p = tracked.points[i];
        survivors.push(p);
        survivor_corners.push(Corner {
            x: p[0],
            y: p[1],
            response: state.corners[i].response,
        });
        let (dx, dy) = (p[0] - points[i][0], p[1] - points[i][1]);
        motion += ((dx * dx + dy * dy) as f64).sqrt();
    }
    let motion_mag = if survivors.is_empty() {
        0.0
    } else {
        (motion / survivors.len() as f64) as f32
    };

    let summary = retention_ratios(&survivors, grid, &state.denominators, cfg.retention_thresh);
    let active = state.denominators.iter().filter(|&&n| n > 0).count();
    let is_event = active > 0 && summary.low >= cfg.min_low_patches.min(active);

    state.corners = seed_corners(next_gray, grid, &survivor_corners, cfg);
    if is_event {
        state.reseed_index = next_index;
        state.denominators = grid.count_per_patch(state.corners.iter().map(|c| (c.x, c.y)));
    }

    PsfrFrameOutcome {
        frame_index: next_index,
        survivors,
        counts: summary.counts,
        ratios: summary.ratios,
        low_retention: summary.low,
        is_event,
        motion_mag,
    }
}

/// One tracking step as a pure state transition. Builds both pyramids; use
/// [`Tracker`] for whole-video passes where the previous pyramid can be
/// reused.
pub fn step(
    mut state: TrackerState,
    prev: &FrameBuffer,
    next: &FrameBuffer,
    cfg: &PsfrConfig,
) -> Result<(TrackerState, PsfrFrameOutcome), TrackerError> {
    cfg.validate()?;
    if state.denominators.len() != cfg.patch_count() {
        return Err(TrackerError::InvalidConfig(format!(
            "state has {} denominators, config implies {}",
            state.denominators.len(),
            cfg.patch_count()
        )));
    }
    let grid = PatchGrid::new(prev.width, prev.height, cfg.grid_rows, cfg.grid_cols, cfg.centroidal);
    let prev_pyr = ImagePyramid::build(
        &prev.gray,
        prev.width as usize,
        prev.height as usize,
        cfg.lk.levels,
    );
    let next_pyr = ImagePyramid::build(
        &next.gray,
        next.width as usize,
        next.height as usize,
        cfg.lk.levels,
    );
    let outcome = advance_state(
        &mut state,
        cfg,
        &grid,
        &prev_pyr,
        &next_pyr,
        &next.gray,
        next.index,
    );
    Ok((state, outcome))
}

/// Runs the tracker over an in-memory or lazily produced frame sequence.
/// The first outcome is the frame-0 sentinel, so the result has exactly one
/// outcome per frame.
pub fn run_frames<I>(frames: I, cfg: &PsfrConfig) -> Result<Vec<PsfrFrameOutcome>, TrackerError>
where
    I: IntoIterator<Item = Result<FrameBuffer, MediaError>>,
{
    let mut iter = frames.into_iter();
    let first = iter.next().ok_or(TrackerError::TooShort(0))??;
    let first_index = first.index;
    let mut tracker = Tracker::new(&first, cfg.clone())?;
    let mut outcomes = vec![PsfrFrameOutcome::sentinel(
        first_index,
        tracker.grid.patch_count(),
    )];
    for frame in iter {
        outcomes.push(tracker.advance(&frame?));
    }
    if outcomes.len() < 2 {
        return Err(TrackerError::TooShort(1));
    }
    Ok(outcomes)
}

/// Runs the tracker over every frame of a video source.
pub fn run_video(src: &VideoSource, cfg: &PsfrConfig) -> Result<Vec<PsfrFrameOutcome>, TrackerError> {
    if src.count() < 2 {
        return Err(TrackerError::TooShort(src.count()));
    }
    run_frames((0..src.count()).map(|t| src.load_frame(t)), cfg)
}
