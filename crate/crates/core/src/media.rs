//! Frame ingestion: image directories and raw gray archives, with a
//! deterministic resize so every downstream stage sees identical pixels
//! regardless of platform.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Magic bytes of the raw gray archive format.
const PGRY_MAGIC: &[u8; 4] = b"PGRY";
const PGRY_VERSION: u32 = 1;
const PGRY_HEADER_LEN: u64 = 20;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("no decodable frames in {dir}")]
    NoFrames { dir: PathBuf },
    #[error(
        "frame dimensions differ ({first_w}x{first_h} vs {w}x{h} in {path}) and no resize target is set"
    )]
    DimensionMismatch {
        first_w: u32,
        first_h: u32,
        w: u32,
        h: u32,
        path: PathBuf,
    },
    #[error("frame {index} is corrupt: {reason}")]
    CorruptFrame { index: usize, reason: String },
    #[error("frame index {index} out of range (frame count {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("corrupt gray archive {path}: {reason}")]
    CorruptArchive { path: PathBuf, reason: String },
    #[error("resize target {width}x{height} outside supported range 16..=8192")]
    InvalidResize { width: u32, height: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One decoded frame at working resolution. The gray plane is always present;
/// RGB is kept when the source had color (image files) and absent for raw
/// gray archives.
#[derive(Debug, Clone)]
pub struct FrameBuffer {
    pub width: u32,
    pub height: u32,
    /// Row-major luma plane, `width * height` bytes.
    pub gray: Vec<u8>,
    /// Row-major interleaved RGB, `width * height * 3` bytes when present.
    pub rgb: Option<Vec<u8>>,
    /// Position of this frame in its source video.
    pub index: usize,
}

impl FrameBuffer {
    pub fn from_rgb(width: u32, height: u32, rgb: Vec<u8>, index: usize) -> Self {
        assert_eq!(rgb.len(), width as usize * height as usize * 3);
        let gray = rgb_to_gray(&rgb);
        FrameBuffer {
            width,
            height,
            gray,
            rgb: Some(rgb),
            index,
        }
    }

    pub fn from_gray(width: u32, height: u32, gray: Vec<u8>, index: usize) -> Self {
        assert_eq!(gray.len(), width as usize * height as usize);
        FrameBuffer {
            width,
            height,
            gray,
            rgb: None,
            index,
        }
    }
}

/// BT.601 luma: round(0.299 r + 0.587 g + 0.114 b). Integer arithmetic, so
/// the rounding is identical everywhere.
pub fn rgb_to_gray(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3)
        .map(|p| {
            let y = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((y + 500) / 1000) as u8
        })
        .collect()
}

/// Target working resolution. Both sides must lie in 16..=8192.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResizeSpec {
    pub width: u32,
    pub height: u32,
}

impl ResizeSpec {
    pub fn new(width: u32, height: u32) -> Result<Self, MediaError> {
        if !(16..=8192).contains(&width) || !(16..=8192).contains(&height) {
            return Err(MediaError::InvalidResize { width, height });
        }
        Ok(ResizeSpec { width, height })
    }
}

#[derive(Debug, Clone)]
enum FrameStore {
    /// Image files in playback order.
    Images(Vec<PathBuf>),
    /// One raw gray archive holding all frames contiguously.
    Archive {
        path: PathBuf,
        width: u32,
        height: u32,
        count: usize,
    },
}

/// An ordered, seekable sequence of frames.
#[derive(Debug, Clone)]
pub struct VideoSource {
    id: String,
    store: FrameStore,
    resize: Option<ResizeSpec>,
}

impl VideoSource {
    /// Opens a directory of PNG/JPEG frames, or a directory holding a single
    /// `.pgry` archive. Image files are ordered by natural numeric filename
    /// comparison, so `frame_2.png` sorts before `frame_10.png`. Without a
    /// resize target every frame must share one resolution; with one, frames
    /// of any size are accepted.
    pub fn open_frame_dir(
        dir: impl AsRef<Path>,
        resize: Option<ResizeSpec>,
    ) -> Result<Self, MediaError> {
        let dir = dir.as_ref();
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".to_string());

        let mut images = Vec::new();
        let mut archives = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if !path.is_file() {
                continue;
            }
            match path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| e.to_ascii_lowercase())
                .as_deref()
            {
                Some("png") | Some("jpg") | Some("jpeg") => images.push(path),
                Some("pgry") => archives.push(path),
                _ => {}
            }
        }

        if !images.is_empty() {
            images.sort_by(|a, b| natural_cmp(&name_of(a), &name_of(b)));
            if resize.is_none() {
                let (first_w, first_h) = probe_dimensions(&images[0], 0)?;
                for (i, path) in images.iter().enumerate().skip(1) {
                    let (w, h) = probe_dimensions(path, i)?;
                    if (w, h) != (first_w, first_h) {
                        return Err(MediaError::DimensionMismatch {
                            first_w,
                            first_h,
                            w,
                            h,
                            path: path.clone(),
                        });
                    }
                }
            }
            return Ok(VideoSource {
                id,
                store: FrameStore::Images(images),
                resize,
            });
        }

        if archives.len() == 1 {
            // The archive names the video; the directory is just a shell.
            let path = archives.remove(0);
            let id = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or(id);
            return Self::open_archive_inner(id, path, resize);
        }
        Err(MediaError::NoFrames { dir: dir.to_path_buf() })
    }

    /// Opens one raw gray archive directly.
    pub fn open_archive(
        path: impl AsRef<Path>,
        resize: Option<ResizeSpec>,
    ) -> Result<Self, MediaError> {
        let path = path.as_ref();
        let id = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".to_string());
        Self::open_archive_inner(id, path.to_path_buf(), resize)
    }

    fn open_archive_inner(
        id: String,
        path: PathBuf,
        resize: Option<ResizeSpec>,
    ) -> Result<Self, MediaError> {
        let corrupt = |reason: &str| MediaError::CorruptArchive {
            path: path.clone(),
            reason: reason.to_string(),
        };
        let mut file = File::open(&path)?;
        let mut header = [0u8; PGRY_HEADER_LEN as usize];
        file.read_exact(&mut header)
            .map_err(|_| corrupt("truncated header"))?;
        if &header[0..4] != PGRY_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let field = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        if field(4) != PGRY_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let count = field(8) as usize;
        let width = field(12);
        let height = field(16);
        if count == 0 || width == 0 || height == 0 {
            return Err(corrupt("empty archive"));
        }
        let expected = PGRY_HEADER_LEN + count as u64 * width as u64 * height as u64;
        if file.metadata()?.len() != expected {
            return Err(corrupt("size does not match header"));
        }
        Ok(VideoSource {
            id,
            store: FrameStore::Archive {
                path,
                width,
                height,
                count,
            },
            resize,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn count(&self) -> usize {
        match &self.store {
            FrameStore::Images(paths) => paths.len(),
            FrameStore::Archive { count, .. } => *count,
        }
    }

    pub fn resize(&self) -> Option<ResizeSpec> {
        self.resize
    }

    /// Decodes frame `t`, applying the resize target when set.
    pub fn load_frame(&self, t: usize) -> Result<FrameBuffer, MediaError> {
        if t >= self.count() {
            return Err(MediaError::IndexOutOfRange {
                index: t,
                count: self.count(),
            });
        }
        let frame = match &self.store {
            FrameStore::Images(paths) => {
                let img = image::open(&paths[t]).map_err(|e| MediaError::CorruptFrame {
                    index: t,
                    reason: e.to_string(),
                })?;
                let rgb = img.into_rgb8();
                FrameBuffer::from_rgb(rgb.width(), rgb.height(), rgb.into_raw(), t)
            }
            FrameStore::Archive {
                path,
                width,
                height,
                ..
            } => {
                let plane_len = *width as u64 * *height as u64;
                let mut file = File::open(path)?;
                file.seek(SeekFrom::Start(PGRY_HEADER_LEN + t as u64 * plane_len))?;
                let mut gray = vec![0u8; plane_len as usize];
                file.read_exact(&mut gray)
                    .map_err(|_| MediaError::CorruptArchive {
                        path: path.clone(),
                        reason: format!("short read at frame {t}"),
                    })?;
                FrameBuffer::from_gray(*width, *height, gray, t)
            }
        };
        Ok(match self.resize {
            Some(spec) => resize_deterministic(&frame, spec),
            None => frame,
        })
    }
}

fn name_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn probe_dimensions(path: &Path, index: usize) -> Result<(u32, u32), MediaError> {
    image::image_dimensions(path).map_err(|e| MediaError::CorruptFrame {
        index,
        reason: e.to_string(),
    })
}

/// Lexicographic comparison where maximal digit runs compare as integers.
/// Leading zeros do not change the value; full-name byte order breaks ties.
pub fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let (a_bytes, b_bytes) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < a_bytes.len() && j < b_bytes.len() {
        let (ca, cb) = (a_bytes[i], b_bytes[j]);
        if ca.is_ascii_digit() && cb.is_ascii_digit() {
            let (ra, ia) = digit_run(a_bytes, i);
            let (rb, ib) = digit_run(b_bytes, j);
            // Compare stripped digit strings by length, then lexically:
            // equivalent to numeric comparison without overflow.
            let ord = ra.len().cmp(&rb.len()).then_with(|| ra.cmp(rb));
            if ord != Ordering::Equal {
                return ord;
            }
            i = ia;
            j = ib;
        } else {
            let ord = ca.cmp(&cb);
            if ord != Ordering::Equal {
                return ord;
            }
            i += 1;
            j += 1;
        }
    }
    (a_bytes.len() - i)
        .cmp(&(b_bytes.len() - j))
        .then_with(|| a.cmp(b))
}

fn digit_run(bytes: &[u8], start: usize) -> (&[u8], usize) {
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    let mut s = start;
    while s + 1 < end && bytes[s] == b'0' {
        s += 1;
    }
    (&bytes[s..end], end)
}

/// Bilinear resize in 16.16 fixed point with half-pixel centers and
/// round-half-up quantization. Pure integer arithmetic: output bytes are
/// identical on every platform. Resizing to the source dimensions is the
/// identity.
pub fn resize_deterministic(frame: &FrameBuffer, spec: ResizeSpec) -> FrameBuffer {
    let (sw, sh) = (frame.width as usize, frame.height as usize);
    let (dw, dh) = (spec.width as usize, spec.height as usize);
    let rgb = frame
        .rgb
        .as_ref()
        .map(|rgb| resize_plane(rgb, sw, sh, 3, dw, dh));
    let gray = match &rgb {
        // Keep gray consistent with the resized color plane.
        Some(rgb) => rgb_to_gray(rgb),
        None => resize_plane(&frame.gray, sw, sh, 1, dw, dh),
    };
    FrameBuffer {
        width: spec.width,
        height: spec.height,
        gray,
        rgb,
        index: frame.index,
    }
}

/// Maps destination index to (low source index, Q16 fraction) per axis.
fn axis_map(src: usize, dst: usize) -> Vec<(usize, u64)> {
    (0..dst)
        .map(|o| {
            // sx*2^16 = ((2o+1)*src*2^16) / (2*dst) - 2^15, floored.
            let num = (2 * o as i64 + 1) * src as i64 * 65536;
            let q = num.div_euclid(2 * dst as i64) - 32768;
            if q < 0 {
                (0, 0)
            } else {
                let i0 = (q >> 16) as usize;
                let frac = (q & 0xFFFF) as u64;
                if i0 >= src - 1 {
                    (src - 1, 0)
                } else {
                    (i0, frac)
                }
            }
        })
        .collect()
}

fn resize_plane(
    src: &[u8],
    sw: usize,
    sh: usize,
    channels: usize,
    dw: usize,
    dh: usize,
) -> Vec<u8> {
    let xs = axis_map(sw, dw);
    let ys = axis_map(sh, dh);
    let mut out = vec![0u8; dw * dh * channels];
    let row_stride = sw * channels;
    for (oy, &(y0, fy)) in ys.iter().enumerate() {
        let y1 = (y0 + 1).min(sh - 1);
        let (wy0, wy1) = (65536 - fy, fy);
        let row0 = &src[y0 * row_stride..y0 * row_stride + row_stride];
        let row1 = &src[y1 * row_stride..y1 * row_stride + row_stride];
        let dst_row = &mut out[oy * dw * channels..(oy + 1) * dw * channels];
        for (ox, &(x0, fx)) in xs.iter().enumerate() {
            let x1 = (x0 + 1).min(sw - 1);
            let (wx0, wx1) = (65536 - fx, fx);
            for c in 0..channels {
                let v00 = row0[x0 * channels + c] as u64;
                let v01 = row0[x1 * channels + c] as u64;
                let v10 = row1[x0 * channels + c] as u64;
                let v11 = row1[x1 * channels + c] as u64;
                let top = v00 * wx0 + v01 * wx1;
                let bot = v10 * wx0 + v11 * wx1;
                let acc = top * wy0 + bot * wy1;
                dst_row[ox * channels + c] = ((acc + (1 << 31)) >> 32) as u8;
            }
        }
    }
    out
}

/// Streaming writer for the raw gray archive format: magic `PGRY`, then
/// little-endian u32 version, frame count, width, height, then the frames as
/// contiguous row-major gray planes. Writes to a temp file and renames on
/// finish so readers never observe a partial archive.
pub struct PgryWriter {
    out: BufWriter<File>,
    tmp_path: PathBuf,
    final_path: PathBuf,
    width: u32,
    height: u32,
    count: u32,
}

impl PgryWriter {
    pub fn create(path: impl AsRef<Path>, width: u32, height: u32) -> Result<Self, MediaError> {
        let final_path = path.as_ref().to_path_buf();
        let tmp_path = final_path.with_extension("pgry.tmp");
        let mut out = BufWriter::new(File::create(&tmp_path)?);
        out.write_all(PGRY_MAGIC)?;
        out.write_all(&PGRY_VERSION.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&width.to_le_bytes())?;
        out.write_all(&height.to_le_bytes())?;
        Ok(PgryWriter {
            out,
            tmp_path,
            final_path,
            width,
            height,
            count: 0,
        })
    }

    pub fn push(&mut self, gray: &[u8]) -> Result<(), MediaError> {
        assert_eq!(gray.len(), self.width as usize * self.height as usize);
        self.out.write_all(gray)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<(), MediaError> {
        let mut file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(8))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.sync_all()?;
        drop(file);
        fs::rename(&self.tmp_path, &self.final_path)?;
        Ok(())
    }
}

/// Convenience wrapper over [`PgryWriter`] for in-memory frame lists.
pub fn write_pgry(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    frames: &[impl AsRef<[u8]>],
) -> Result<(), MediaError> {
    let mut w = PgryWriter::create(path, width, height)?;
    for f in frames {
        w.push(f.as_ref())?;
    }
    w.finish()
}
