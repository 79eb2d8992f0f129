//! Keyframe selection over cached signal tracks.
//!
//! Two selectors share one contract (subset of the candidate list, at most
//! K indices, strictly increasing): a uniform rank sampler used as the
//! baseline, and the signal-driven selector that partitions candidates into
//! slots by cumulative histogram change, scores each slot by weighted
//! quality plus change minus a redundancy penalty, and suppresses picks
//! that land too close together.

use crate::kernels::cosine;
use crate::signals::{normalize_column, SignalTrack, RAW_MOTION, SIGNAL_DIM};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("invalid selection request: {0}")]
    InvalidRequest(String),
    #[error("invalid selector params: {0}")]
    InvalidParams(String),
}

/// A selection problem: which frames of `track` may be chosen (`candidates`,
/// strictly increasing) and how many at most (`budget`).
#[derive(Debug, Clone, Copy)]
pub struct SelectionRequest<'a> {
    pub track: &'a SignalTrack,
    pub candidates: &'a [usize],
    pub budget: usize,
}

impl SelectionRequest<'_> {
    pub fn validate(&self) -> Result<(), SelectorError> {
        if self.candidates.is_empty() {
            return Err(SelectorError::EmptyCandidates);
        }
        if self.budget == 0 {
            return Err(SelectorError::InvalidRequest("budget must be >= 1".into()));
        }
        let frames = self.track.frames();
        if !self.candidates.windows(2).all(|w| w[0] < w[1]) {
            return Err(SelectorError::InvalidRequest(
                "candidates must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.candidates.last() {
            if last >= frames {
                return Err(SelectorError::InvalidRequest(format!(
                    "candidate {last} beyond track of {frames} frames"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotMode {
    /// Slot boundaries at equal quantiles of cumulative histogram change.
    CumulativeChange,
    /// Slot boundaries at equal candidate spans.
    UniformTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorParams {
    /// Weights over the five normalized signal cues.
    pub w: [f32; SIGNAL_DIM],
    /// Weight on the per-frame histogram change.
    pub w_change: f32,
    /// Penalty on similarity to already-picked frames.
    pub lambda_div: f32,
    /// Minimum frame-index gap between picks; also the snap radius for
    /// peak alignment.
    pub nms_gap: usize,
    pub slot_mode: SlotMode,
    /// Snap slot boundaries to nearby local maxima of the change curve.
    pub peak_align: bool,
    /// Add the normalized raw motion cue to the quality score.
    pub use_motion: bool,
    pub w_motion: f32,
}

impl Default for SelectorParams {
    fn default() -> Self {
        SelectorParams {
            w: [0.25, 0.15, 0.2, 0.2, 0.2],
            w_change: 0.5,
            lambda_div: 0.3,
            nms_gap: 3,
            slot_mode: SlotMode::CumulativeChange,
            peak_align: true,
            use_motion: false,
            w_motion: 0.0,
        }
    }
}

impl SelectorParams {
    pub fn validate(&self) -> Result<(), SelectorError> {
        if !self.w.iter().all(|v| v.is_finite()) {
            return Err(SelectorError::InvalidParams("w must be finite".into()));
        }
        for (name, v) in [
            ("w_change", self.w_change),
            ("lambda_div", self.lambda_div),
            ("w_motion", self.w_motion),
        ] {
            if !v.is_finite() {
                return Err(SelectorError::InvalidParams(format!("{name} must be finite")));
            }
        }
        if self.lambda_div < 0.0 {
            return Err(SelectorError::InvalidParams(
                "lambda_div must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A selection with its wall-clock cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Strictly increasing frame indices, a subset of the candidates.
    pub indices: Vec<usize>,
    pub elapsed_s: f64,
}

/// Contract violations a selection can commit. Values, not errors: scoring
/// treats a violating selection as worthless rather than aborting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("index {index} outside the candidate set")]
    OutOfCandidates { index: usize },
    #[error("selected {len} frames with budget {budget}")]
    BudgetExceeded { len: usize, budget: usize },
    #[error("index {index} selected more than once")]
    Duplicate { index: usize },
    #[error("indices are not sorted ascending")]
    NotSorted,
    #[error("elapsed {elapsed_s}s over time budget {budget_s}s")]
    TimeExceeded { elapsed_s: f64, budget_s: f64 },
}

/// Checks a selection against its request: subset, budget, uniqueness,
/// ordering, and optionally a wall-clock cap.
pub fn validate_selection(
    indices: &[usize],
    candidates: &[usize],
    budget: usize,
    elapsed_s: f64,
    time_budget_s: Option<f64>,
) -> Result<(), Violation> {
    if indices.len() > budget {
        return Err(Violation::BudgetExceeded {
            len: indices.len(),
            budget,
        });
    }
    for w in indices.windows(2) {
        if w[0] == w[1] {
            return Err(Violation::Duplicate { index: w[0] });
        }
        if w[0] > w[1] {
            return Err(Violation::NotSorted);
        }
    }
    for &i in indices {
        if candidates.binary_search(&i).is_err() {
            return Err(Violation::OutOfCandidates { index: i });
        }
    }
    if let Some(budget_s) = time_budget_s {
        if elapsed_s > budget_s {
            return Err(Violation::TimeExceeded { elapsed_s, budget_s });
        }
    }
    Ok(())
}

/// Uniform rank sampler: the whole candidate list when it fits the budget,
/// otherwise K evenly spaced ranks including both endpoints.
pub fn uniform_select(req: &SelectionRequest) -> Result<SelectionResult, SelectorError> {
    let start = Instant::now();
    req.validate()?;
    let a = req.candidates;
    let k = req.budget;
    let indices = if a.len() <= k {
        a.to_vec()
    } else if k == 1 {
        vec![a[0]]
    } else {
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let rank = (i as f64 * (a.len() - 1) as f64 / (k - 1) as f64).round() as usize;
            out.push(a[rank]);
        }
        out.dedup();
        out
    };
    Ok(SelectionResult {
        indices,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Per-frame histogram change over the whole track: d_0 = 0 and
/// d_t = 1 - cos(h_{t-1}, h_t).
pub fn change_signal(track: &SignalTrack) -> Vec<f64> {
    let all: Vec<usize> = (0..track.frames()).collect();
    change_over(track, &all)
}

/// Change curve restricted to an ordered frame subsequence. Values are
/// clamped into [0, 2] so rounding noise on identical histograms cannot
/// produce negative change.
fn change_over(track: &SignalTrack, frames: &[usize]) -> Vec<f64> {
    let mut d = Vec::with_capacity(frames.len());
    for (i, &t) in frames.iter().enumerate() {
        if i == 0 {
            d.push(0.0);
        } else {
            let c = cosine(track.histogram(frames[i - 1]), track.histogram(t));
            d.push((1.0 - c).clamp(0.0, 2.0));
        }
    }
    d
}

/// Weighted quality of one frame: w . s_t, plus the motion term when
/// enabled.
pub fn quality_score(signal_row: &[f32], params: &SelectorParams, motion_norm: Option<f64>) -> f64 {
    debug_assert_eq!(signal_row.len(), SIGNAL_DIM);
    let mut q = 0.0f64;
    for (w, s) in params.w.iter().zip(signal_row) {
        q += *w as f64 * *s as f64;
    }
    if params.use_motion {
        q += params.w_motion as f64 * motion_norm.unwrap_or(0.0);
    }
    q
}

/// End-exclusive slot boundaries over `n` candidate positions: K+1 entries,
/// first 0, last n, strictly increasing (every slot non-empty). Requires
/// n >= k.
fn slot_bounds(cum: &[f64], n: usize, k: usize, mode: SlotMode) -> Vec<usize> {
    debug_assert!(n >= k && k >= 1);
    let total = *cum.last().expect("n >= 1");
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0usize);
    if mode == SlotMode::CumulativeChange && total > 0.0 {
        // Equal-mass quantiles of the cumulative curve: boundary s is the
        // first position whose cumulative change reaches s/k of the total.
        // A plateau-and-jump curve (scene structure) therefore splits at
        // the jumps, one scene per slot when the masses allow it.
        for s in 1..k {
            let q = s as f64 * total / k as f64;
            bounds.push(cum.partition_point(|&v| v < q).min(n - 1));
        }
        bounds.push(n);
    } else {
        // Uniform-time: equal candidate spans.
        for s in 1..=k {
            bounds.push(s * n / k);
        }
    }
    enforce_nonempty(&mut bounds, n, k);
    bounds
}

/// Clamps boundaries so every slot keeps at least one candidate while the
/// last always ends at n.
fn enforce_nonempty(bounds: &mut [usize], n: usize, k: usize) {
    bounds[0] = 0;
    bounds[k] = n;
    for s in 1..k {
        let lo = bounds[s - 1] + 1;
        let hi = n - (k - s);
        bounds[s] = bounds[s].clamp(lo, hi);
    }
}

/// Positions (into the candidate list) that are local maxima of d.
fn change_peaks(d: &[f64]) -> Vec<usize> {
    let n = d.len();
    (0..n)
        .filter(|&i| {
            d[i] > 0.0
                && (i == 0 || d[i] >= d[i - 1])
                && (i + 1 == n || d[i] >= d[i + 1])
        })
        .collect()
}

/// Signal-driven selector. Candidates are split into `budget` slots, one
/// frame is picked per slot by score, and picks closer than `nms_gap`
/// frames to the previous kept pick are dropped.
pub fn psfr_select(
    req: &SelectionRequest,
    params: &SelectorParams,
) -> Result<SelectionResult, SelectorError> {
    let start = Instant::now();
    req.validate()?;
    params.validate()?;
    let a = req.candidates;
    let k = req.budget;
    if a.len() <= k {
        return Ok(SelectionResult {
            indices: a.to_vec(),
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }

    let track = req.track;
    let n = a.len();
    let d = change_over(track, a);
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for &v in &d {
        acc += v;
        cum.push(acc);
    }

    let motion_norm: Option<Vec<f64>> = params.use_motion.then(|| {
        let col: Vec<f64> = track
            .raw_column(RAW_MOTION)
            .into_iter()
            .map(|v| v as f64)
            .collect();
        normalize_column(&col)
    });

    let mut bounds = slot_bounds(&cum, n, k, params.slot_mode);
    if params.peak_align && params.nms_gap > 0 {
        let peaks = change_peaks(&d);
        for s in 1..k {
            let b = bounds[s];
            // Nearest peak within the snap radius, measured in frame
            // indices; ties go to the smaller position.
            let mut best: Option<(usize, usize)> = None;
            for &p in &peaks {
                let gap = a[p].abs_diff(a[b.min(n - 1)]);
                if gap <= params.nms_gap && best.map_or(true, |(bg, _)| gap < bg) {
                    best = Some((gap, p));
                }
            }
            if let Some((_, p)) = best {
                bounds[s] = p;
            }
        }
        bounds.sort_unstable();
        enforce_nonempty(&mut bounds, n, k);
    }

    let mut picked_pos: Vec<usize> = Vec::with_capacity(k);
    for s in 0..k {
        let (lo, hi) = (bounds[s], bounds[s + 1]);
        debug_assert!(lo < hi);
        let mut best_pos = lo;
        let mut best_score = f64::NEG_INFINITY;
        for i in lo..hi {
            let q = quality_score(
                track.signal(a[i]),
                params,
                motion_norm.as_ref().map(|m| m[a[i]]),
            );
            let mut redundancy = 0.0f64;
            for &p in &picked_pos {
                let c = cosine(track.histogram(a[i]), track.histogram(a[p]));
                if c > redundancy {
                    redundancy = c;
                }
            }
            let score = q + params.w_change as f64 * d[i] - params.lambda_div as f64 * redundancy;
            if score > best_score {
                best_score = score;
                best_pos = i;
            }
        }
        picked_pos.push(best_pos);
    }

    let mut indices = Vec::with_capacity(picked_pos.len());
    let mut last_kept: Option<usize> = None;
    for &pos in &picked_pos {
        let frame = a[pos];
        if let Some(prev) = last_kept {
            if frame - prev < params.nms_gap {
                continue;
            }
        }
        indices.push(frame);
        last_kept = Some(frame);
    }

    Ok(SelectionResult {
        indices,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
