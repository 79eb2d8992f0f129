//! Per-frame signal extraction and caching.
//!
//! Each frame yields six raw cues (tracked corners, central-window corners,
//! edge density, entropy, motion magnitude, low-retention patches) plus an
//! HSV histogram. Five of the cues are robustly normalized per video into
//! the selector's signal rows; motion stays in the raw block only. Tracks
//! serialize to a compact binary cache so extraction runs once per video.

use crate::kernels::{
    canny_edge_density, grayscale_entropy, hsv_histogram, KernelError, HIST_BINS,
};
use crate::media::{FrameBuffer, MediaError, VideoSource};
use crate::tracker::{PsfrConfig, PsfrFrameOutcome, Tracker, TrackerError};
use std::io::{Read as _, Write as _};
use std::path::Path;
use thiserror::Error;

pub const SIGNAL_DIM: usize = 5;
pub const HIST_DIM: usize = HIST_BINS;
pub const RAW_DIM: usize = 6;

/// Raw block column order.
pub const RAW_CORNERS: usize = 0;
pub const RAW_CENTRAL: usize = 1;
pub const RAW_EDGE: usize = 2;
pub const RAW_ENTROPY: usize = 3;
pub const RAW_MOTION: usize = 4;
pub const RAW_LOW: usize = 5;

const MAGIC: &[u8; 4] = b"PSFC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("corrupt signal cache {path}: {reason}")]
    CorruptCache { path: String, reason: String },
    #[error("invalid signal config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct SignalConfig {
    pub psfr: PsfrConfig,
    /// Central window side as a fraction of min(width, height).
    pub central_frac: f32,
    pub canny_lo: f32,
    pub canny_hi: f32,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            psfr: PsfrConfig::default(),
            central_frac: 0.5,
            canny_lo: 50.0,
            canny_hi: 150.0,
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        self.psfr
            .validate()
            .map_err(|e| SignalError::InvalidConfig(e.to_string()))?;
        if !(self.central_frac > 0.0 && self.central_frac <= 1.0) {
            return Err(SignalError::InvalidConfig(format!(
                "central_frac must lie in (0, 1], got {}",
                self.central_frac
            )));
        }
        if !(self.canny_lo >= 0.0 && self.canny_lo < self.canny_hi) {
            return Err(SignalError::InvalidConfig(format!(
                "canny thresholds must satisfy 0 <= lo < hi, got lo={} hi={}",
                self.canny_lo, self.canny_hi
            )));
        }
        Ok(())
    }
}

/// Unnormalized cues for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCues {
    /// Tracked-corner survivor count (c).
    pub corners: f32,
    /// Survivors inside the central window (z).
    pub central: f32,
    /// Canny edge density (e).
    pub edge_density: f32,
    /// Normalized grayscale entropy (H).
    pub entropy: f32,
    /// Mean accepted track displacement in pixels (m).
    pub motion: f32,
    /// Low-retention patch count (L).
    pub low_patches: f32,
}

impl RawCues {
    pub fn as_row(&self) -> [f32; RAW_DIM] {
        [
            self.corners,
            self.central,
            self.edge_density,
            self.entropy,
            self.motion,
            self.low_patches,
        ]
    }
}

/// Cues for one frame from its pixels and tracking outcome. The central
/// window is a square of side `central_frac * min(W, H)` centered on the
/// frame; containment is inclusive at both edges.
pub fn compute_raw_cues(
    frame: &FrameBuffer,
    outcome: &PsfrFrameOutcome,
    cfg: &SignalConfig,
) -> Result<RawCues, SignalError> {
    let (w, h) = (frame.width as usize, frame.height as usize);
    let half = 0.5 * cfg.central_frac * frame.width.min(frame.height) as f32;
    let cx = (frame.width as f32 - 1.0) / 2.0;
    let cy = (frame.height as f32 - 1.0) / 2.0;
    let central = outcome
        .survivors
        .iter()
        .filter(|p| (p[0] - cx).abs() <= half && (p[1] - cy).abs() <= half)
        .count();
    let edge_density = canny_edge_density(&frame.gray, w, h, cfg.canny_lo, cfg.canny_hi)?;
    Ok(RawCues {
        corners: outcome.survivors.len() as f32,
        central: central as f32,
        edge_density: edge_density as f32,
        entropy: grayscale_entropy(&frame.gray) as f32,
        motion: outcome.motion_mag,
        low_patches: outcome.low_retention as f32,
    })
}

/// Percentile with linear interpolation between order statistics:
/// rank = p/100 * (len - 1), value = lerp between the flanking entries.
/// `sorted` must be ascending.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Robust min-max of one column: clip((x - p5) / (p95 - p5), 0, 1).
/// A spread of zero marks the column constant and maps it to 0.5.
pub fn normalize_column(values: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("cue columns are finite"));
    let p5 = percentile_sorted(&sorted, 5.0);
    let p95 = percentile_sorted(&sorted, 95.0);
    if p95 <= p5 {
        return vec![0.5; values.len()];
    }
    let spread = p95 - p5;
    values
        .iter()
        .map(|&x| ((x - p5) / spread).clamp(0.0, 1.0))
        .collect()
}

/// Normalizes the five signal cues per video; the motion column is carried
/// in the raw block but excluded here.
pub fn robust_normalize(raw: &[[f32; RAW_DIM]]) -> Vec<[f32; SIGNAL_DIM]> {
    assert!(!raw.is_empty());
    let mut out = vec![[0.0f32; SIGNAL_DIM]; raw.len()];
    for (slot, col) in [RAW_CORNERS, RAW_CENTRAL, RAW_EDGE, RAW_ENTROPY, RAW_LOW]
        .into_iter()
        .enumerate()
    {
        let column: Vec<f64> = raw.iter().map(|r| r[col] as f64).collect();
        for (t, v) in normalize_column(&column).into_iter().enumerate() {
            out[t][slot] = v as f32;
        }
    }
    out
}

/// Per-video signal bundle: normalized signals, histograms, and raw cues,
/// all row-aligned by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrack {
    pub video_id: String,
    frames: usize,
    signals: Vec<f32>,
    histograms: Vec<f32>,
    raw: Vec<f32>,
}

impl SignalTrack {
    pub fn new(
        video_id: impl Into<String>,
        signals: Vec<f32>,
        histograms: Vec<f32>,
        raw: Vec<f32>,
    ) -> Result<Self, SignalError> {
        if signals.len() % SIGNAL_DIM != 0 {
            return Err(SignalError::Shape(format!(
                "signal block of {} floats is not a multiple of {SIGNAL_DIM}",
                signals.len()
            )));
        }
        let frames = signals.len() / SIGNAL_DIM;
        if frames == 0 {
            return Err(SignalError::Shape("track has zero frames".into()));
        }
        if histograms.len() != frames * HIST_DIM {
            return Err(SignalError::Shape(format!(
                "histogram block has {} floats, want {}",
                histograms.len(),
                frames * HIST_DIM
            )));
        }
        if raw.len() != frames * RAW_DIM {
            return Err(SignalError::Shape(format!(
                "raw block has {} floats, want {}",
                raw.len(),
                frames * RAW_DIM
            )));
        }
        Ok(SignalTrack {
            video_id: video_id.into(),
            frames,
            signals,
            histograms,
            raw,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn signal(&self, t: usize) -> &[f32] {
        &self.signals[t * SIGNAL_DIM..(t + 1) * SIGNAL_DIM]
    }

    pub fn histogram(&self, t: usize) -> &[f32] {
        &self.histograms[t * HIST_DIM..(t + 1) * HIST_DIM]
    }

    pub fn raw(&self, t: usize) -> &[f32] {
        &self.raw[t * RAW_DIM..(t + 1) * RAW_DIM]
    }

    pub fn raw_column(&self, col: usize) -> Vec<f32> {
        assert!(col < RAW_DIM);
        (0..self.frames).map(|t| self.raw(t)[col]).collect()
    }
}

/// Extracts the full signal track from a lazily produced frame sequence.
pub fn extract_from_iter<I>(
    video_id: &str,
    frames: I,
    cfg: &SignalConfig,
) -> Result<SignalTrack, SignalError>
where
    I: IntoIterator<Item = Result<FrameBuffer, MediaError>>,
{
    cfg.validate()?;
    let mut iter = frames.into_iter();
    let first = match iter.next() {
        Some(f) => f?,
        None => return Err(TrackerError::TooShort(0).into()),
    };
    let mut tracker = Tracker::new(&first, cfg.psfr.clone())?;
    let sentinel = PsfrFrameOutcome::sentinel(first.index, tracker.grid().patch_count());

    let mut raw_rows: Vec<[f32; RAW_DIM]> = Vec::new();
    let mut histograms: Vec<f32> = Vec::new();
    let push = |frame: &FrameBuffer,
                    outcome: &PsfrFrameOutcome,
                    raw_rows: &mut Vec<[f32; RAW_DIM]>,
                    histograms: &mut Vec<f32>|
     -> Result<(), SignalError> {
        raw_rows.push(compute_raw_cues(frame, outcome, cfg)?.as_row());
        histograms.extend_from_slice(&hsv_histogram(frame));
        Ok(())
    };
    push(&first, &sentinel, &mut raw_rows, &mut histograms)?;
    for frame in iter {
        let frame = frame?;
        let outcome = tracker.advance(&frame);
        push(&frame, &outcome, &mut raw_rows, &mut histograms)?;
    }
    if raw_rows.len() < 2 {
        return Err(TrackerError::TooShort(raw_rows.len()).into());
    }

    let signals: Vec<f32> = robust_normalize(&raw_rows)
        .into_iter()
        .flatten()
        .collect();
    let raw: Vec<f32> = raw_rows.into_iter().flatten().collect();
    SignalTrack::new(video_id, signals, histograms, raw)
}

/// Extracts signals for a whole video source.
pub fn extract_signals(src: &VideoSource, cfg: &SignalConfig) -> Result<SignalTrack, SignalError> {
    if src.count() < 2 {
        return Err(TrackerError::TooShort(src.count()).into());
    }
    extract_from_iter(src.id(), (0..src.count()).map(|t| src.load_frame(t)), cfg)
}

/// Serializes a track: magic, version, frame count, the three row widths,
/// then the signal, histogram, and raw blocks as little-endian f32.
pub fn write_cache(track: &SignalTrack, path: &Path) -> Result<(), SignalError> {
    let mut bytes = Vec::with_capacity(
        24 + 4 * (track.signals.len() + track.histograms.len() + track.raw.len()),
    );
    bytes.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        track.frames as u32,
        SIGNAL_DIM as u32,
        HIST_DIM as u32,
        RAW_DIM as u32,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for block in [&track.signals, &track.histograms, &track.raw] {
        for v in block.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads a cache written by [`write_cache`]. The video id is recovered from
/// the file stem, which is how caches are laid out on disk.
pub fn read_cache(path: &Path) -> Result<SignalTrack, SignalError> {
    let corrupt = |reason: String| SignalError::CorruptCache {
        path: path.display().to_string(),
        reason,
    };
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 24];
    file.read_exact(&mut header)
        .map_err(|e| corrupt(format!("short header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(corrupt(format!("bad magic {:?}", &header[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, frames) = (word(0), word(1) as usize);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dims = [word(2) as usize, word(3) as usize, word(4) as usize];
    if dims != [SIGNAL_DIM, HIST_DIM, RAW_DIM] {
        return Err(corrupt(format!(
            "row widths {dims:?}, want [{SIGNAL_DIM}, {HIST_DIM}, {RAW_DIM}]"
        )));
    }
    let total = frames * (SIGNAL_DIM + HIST_DIM + RAW_DIM);
    let mut body = Vec::new();
    file.read_to_end(&mut body)?;
    if body.len() != 4 * total {
        return Err(corrupt(format!(
            "body is {} bytes, want {}",
            body.len(),
            4 * total
        )));
    }
    let mut floats = Vec::with_capacity(total);
    for chunk in body.chunks_exact(4) {
        floats.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let hist_start = frames * SIGNAL_DIM;
    let raw_start = hist_start + frames * HIST_DIM;
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SignalTrack::new(
        video_id,
        floats[..hist_start].to_vec(),
        floats[hist_start..raw_start].to_vec(),
        floats[raw_start..].to_vec(),
    )
}
