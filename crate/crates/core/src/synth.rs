//! Deterministic synthetic video generation for tests and benchmarks.
//!
//! Videos are rendered procedurally from a compact spec: every pixel is a
//! pure function of (seed, scene, frame, x, y), so corpora are reproducible
//! byte for byte and frames can be rendered lazily in any order. Scenes are
//! textured enough to seed and track corners; a scene change replaces the
//! texture phase entirely, which reliably kills sparse tracks.

use crate::media::FrameBuffer;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    /// Two-octave smooth value noise; dense corners everywhere.
    Noise,
    /// Soft discs over a fine noise floor.
    Blobs,
    /// Hard-edged cells with interior noise.
    Checker,
    /// Horizontal ramp with a weak noise floor; few strong corners.
    Gradient,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub frames: usize,
    pub texture: TextureKind,
    /// Per-frame camera translation in pixels (applied to texture lookup).
    #[serde(default)]
    pub pan: [f32; 2],
}

impl SceneSpec {
    pub fn fixed(frames: usize, texture: TextureKind) -> Self {
        SceneSpec {
            frames,
            texture,
            pan: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VideoSpec {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub scenes: Vec<SceneSpec>,
}

impl VideoSpec {
    /// Static multi-scene video with the given scene lengths, rotating
    /// through the texture kinds.
    pub fn multi_scene(name: &str, width: u32, height: u32, seed: u64, lengths: &[usize]) -> Self {
        const ROTATION: [TextureKind; 3] =
            [TextureKind::Noise, TextureKind::Blobs, TextureKind::Checker];
        VideoSpec {
            name: name.to_string(),
            width,
            height,
            seed,
            scenes: lengths
                .iter()
                .enumerate()
                .map(|(i, &n)| SceneSpec::fixed(n, ROTATION[i % ROTATION.len()]))
                .collect(),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.scenes.iter().map(|s| s.frames).sum()
    }

    /// Frame index where each scene after the first begins.
    pub fn cut_positions(&self) -> Vec<usize> {
        let mut cuts = Vec::new();
        let mut acc = 0usize;
        for s in &self.scenes[..self.scenes.len().saturating_sub(1)] {
            acc += s.frames;
            cuts.push(acc);
        }
        cuts
    }

    pub fn scene_ranges(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::with_capacity(self.scenes.len());
        let mut acc = 0usize;
        for s in &self.scenes {
            ranges.push(acc..acc + s.frames);
            acc += s.frames;
        }
        ranges
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.name.is_empty() {
            return Err(SynthError::InvalidSpec("video name is empty".into()));
        }
        if self
            .name
            .chars()
            .any(|c| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(SynthError::InvalidSpec(format!(
                "video name {:?} must be alphanumeric with - or _",
                self.name
            )));
        }
        if !(16..=8192).contains(&self.width) || !(16..=8192).contains(&self.height) {
            return Err(SynthError::InvalidSpec(format!(
                "dimensions {}x{} outside 16..=8192",
                self.width, self.height
            )));
        }
        if self.scenes.is_empty() {
            return Err(SynthError::InvalidSpec(format!(
                "video {} has no scenes",
                self.name
            )));
        }
        for (i, s) in self.scenes.iter().enumerate() {
            if s.frames == 0 {
                return Err(SynthError::InvalidSpec(format!(
                    "video {} scene {i} has zero frames",
                    self.name
                )));
            }
            if !s.pan.iter().all(|v| v.is_finite() && v.abs() <= 8.0) {
                return Err(SynthError::InvalidSpec(format!(
                    "video {} scene {i} pan {:?} outside +-8 px/frame",
                    self.name, s.pan
                )));
            }
        }
        if self.total_frames() < 2 {
            return Err(SynthError::InvalidSpec(format!(
                "video {} must have at least 2 frames",
                self.name
            )));
        }
        Ok(())
    }
}

/// Converts sorted cut positions into scene lengths covering `total` frames.
pub fn scene_lengths(cuts: &[usize], total: usize) -> Vec<usize> {
    assert!(cuts.windows(2).all(|w| w[0] < w[1]), "cuts must be sorted");
    assert!(
        cuts.iter().all(|&c| c > 0 && c < total),
        "cuts must lie strictly inside the video"
    );
    let mut lengths = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0usize;
    for &c in cuts {
        lengths.push(c - prev);
        prev = c;
    }
    lengths.push(total - prev);
    lengths
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_unit(seed: u64, xi: i64, yi: i64) -> f32 {
    let h = mix64(seed ^ mix64(xi as u64).wrapping_add(mix64((yi as u64).rotate_left(32))));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth value noise: bilinear blend of lattice hashes with smoothstep
/// weights. Defined for all real coordinates.
fn value_noise(seed: u64, scale: f32, x: f32, y: f32) -> f32 {
    let gx = x / scale;
    let gy = y / scale;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let fx = smooth(gx - x0);
    let fy = smooth(gy - y0);
    let (xi, yi) = (x0 as i64, y0 as i64);
    let v00 = hash_unit(seed, xi, yi);
    let v10 = hash_unit(seed, xi + 1, yi);
    let v01 = hash_unit(seed, xi, yi + 1);
    let v11 = hash_unit(seed, xi + 1, yi + 1);
    let top = v00 + (v10 - v00) * fx;
    let bot = v01 + (v11 - v01) * fx;
    top + (bot - top) * fy
}

fn texture_value(kind: TextureKind, seed: u64, width: u32, x: f32, y: f32) -> f32 {
    match kind {
        TextureKind::Noise => {
            0.55 * value_noise(seed, 8.0, x, y) + 0.45 * value_noise(mix64(seed ^ 1), 17.0, x, y)
        }
        TextureKind::Blobs => {
            let field = value_noise(seed, 23.0, x, y);
            let disc = smooth(((field - 0.42) / 0.28).clamp(0.0, 1.0));
            0.18 + 0.52 * disc + 0.30 * value_noise(mix64(seed ^ 2), 7.0, x, y)
        }
        TextureKind::Checker => {
            let cell = 12.0;
            let parity = (((x / cell).floor() as i64) + ((y / cell).floor() as i64)).rem_euclid(2);
            0.12 + 0.45 * parity as f32 + 0.43 * value_noise(mix64(seed ^ 3), 6.0, x, y)
        }
        TextureKind::Gradient => {
            let span = (width.max(2) - 1) as f32;
            let ramp = (x / span).rem_euclid(1.0);
            0.15 + 0.6 * ramp + 0.25 * value_noise(mix64(seed ^ 4), 9.0, x, y)
        }
    }
}

fn scene_seed(spec: &VideoSpec, scene: usize) -> u64 {
    mix64(spec.seed ^ mix64(scene as u64 + 0x5EED))
}

/// Per-scene RGB channel gains so scenes differ in color, not just phase.
fn scene_tint(seed: u64) -> [f32; 3] {
    let mut t = [0.0f32; 3];
    for (c, slot) in t.iter_mut().enumerate() {
        *slot = 0.45 + 0.55 * hash_unit(mix64(seed ^ (c as u64 + 11)), 0, 0);
    }
    t
}

/// Scene index containing frame `t`, with the frame offset inside it.
pub fn scene_of(spec: &VideoSpec, t: usize) -> (usize, usize) {
    let mut acc = 0usize;
    for (i, s) in spec.scenes.iter().enumerate() {
        if t < acc + s.frames {
            return (i, t - acc);
        }
        acc += s.frames;
    }
    panic!("frame {t} beyond video of {} frames", acc);
}

/// Renders one frame. Pure function of the spec and `t`.
pub fn render_frame(spec: &VideoSpec, t: usize) -> FrameBuffer {
    let (scene_idx, local_t) = scene_of(spec, t);
    let scene = &spec.scenes[scene_idx];
    let seed = scene_seed(spec, scene_idx);
    let tint = scene_tint(seed);
    let (w, h) = (spec.width, spec.height);
    let ox = scene.pan[0] * local_t as f32;
    let oy = scene.pan[1] * local_t as f32;
    let mut rgb = Vec::with_capacity((w as usize) * (h as usize) * 3);
    for y in 0..h {
        for x in 0..w {
            let v = texture_value(scene.texture, seed, w, x as f32 + ox, y as f32 + oy)
                .clamp(0.0, 1.0);
            for &g in &tint {
                rgb.push(((v * g).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    FrameBuffer::from_rgb(w, h, rgb, t)
}

/// Renders every frame into memory. Convenience for tests on short videos.
pub fn render_video(spec: &VideoSpec) -> Vec<FrameBuffer> {
    (0..spec.total_frames()).map(|t| render_frame(spec, t)).collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EvidenceRule {
    /// One single-frame evidence set per cut.
    CutFrames,
    /// One evidence set per scene holding its frames with `margin` trimmed
    /// from each end.
    SceneInterior { margin: usize },
}

/// Ground-truth evidence sets for a synthetic video under a placement rule.
pub fn evidence_sets(spec: &VideoSpec, rule: EvidenceRule) -> Vec<Vec<usize>> {
    match rule {
        EvidenceRule::CutFrames => spec
            .cut_positions()
            .into_iter()
            .map(|c| vec![c])
            .collect(),
        EvidenceRule::SceneInterior { margin } => spec
            .scene_ranges()
            .into_iter()
            .map(|r| (r.start + margin..r.end.saturating_sub(margin)).collect())
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub evidence: EvidenceRule,
    pub videos: Vec<CorpusVideo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusVideo {
    pub name: String,
    pub scenes: Vec<SceneSpec>,
}

impl CorpusSpec {
    /// Expands each corpus entry into a renderable video spec. Per-video
    /// seeds are derived from the corpus seed and position, so adding a
    /// video does not reshuffle the others.
    pub fn video_specs(&self) -> Vec<VideoSpec> {
        self.videos
            .iter()
            .enumerate()
            .map(|(i, v)| VideoSpec {
                name: v.name.clone(),
                width: self.width,
                height: self.height,
                seed: mix64(self.seed ^ mix64(i as u64 + 0xC0FFEE)),
                scenes: v.scenes.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.videos.is_empty() {
            return Err(SynthError::InvalidSpec("corpus has no videos".into()));
        }
        let specs = self.video_specs();
        for spec in &specs {
            spec.validate()?;
            if let EvidenceRule::SceneInterior { margin } = self.evidence {
                for (i, s) in spec.scenes.iter().enumerate() {
                    if s.frames <= 2 * margin {
                        return Err(SynthError::InvalidSpec(format!(
                            "video {} scene {i}: {} frames leave no interior at margin {margin}",
                            spec.name, s.frames
                        )));
                    }
                }
            }
        }
        let mut names: Vec<&str> = self.videos.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(SynthError::InvalidSpec("duplicate video names".into()));
        }
        Ok(())
    }
}

/// Writes a rendered corpus to disk: one PNG sequence per video under
/// `out_dir/<name>/frame_NNNNN.png`. Returns the expanded video specs in
/// corpus order.
pub fn write_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<Vec<VideoSpec>, SynthError> {
    spec.validate()?;
    let specs = spec.video_specs();
    for video in &specs {
        let dir = out_dir.join(&video.name);
        std::fs::create_dir_all(&dir).map_err(|source| SynthError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        for t in 0..video.total_frames() {
            let frame = render_frame(video, t);
            let path = dir.join(format!("frame_{t:05}.png"));
            let rgb = frame.rgb.as_deref().expect("synthetic frames carry rgb");
            let img: image::RgbImage =
                image::ImageBuffer::from_raw(video.width, video.height, rgb.to_vec())
                    .expect("buffer sized w*h*3");
            let mut bytes = Vec::new();
            img.write_to(
                &mut std::io::Cursor::new(&mut bytes),
                image::ImageFormat::Png,
            )
            .expect("png encoding is infallible for valid buffers");
            write_atomic(&path, &bytes).map_err(|source| SynthError::Write {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    Ok(specs)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
