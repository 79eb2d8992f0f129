//! Whole-frame statistics: grayscale entropy and a coarse HSV color
//! histogram used as the frame appearance descriptor.

use crate::media::FrameBuffer;

/// 12 hue x 6 saturation x 6 value bins.
pub const HIST_BINS: usize = 432;

/// Shannon entropy of the 256-bin intensity histogram, normalized by the
/// 8-bit maximum so the result lies in [0, 1].
pub fn grayscale_entropy(gray: &[u8]) -> f64 {
    if gray.is_empty() {
        return 0.0;
    }
    let mut hist = [0u64; 256];
    for &v in gray {
        hist[v as usize] += 1;
    }
    let total = gray.len() as f64;
    let mut h = 0.0f64;
    for &c in &hist {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    h / 8.0
}

/// L2-normalized HSV histogram. Color frames convert per pixel; gray-only
/// frames land in the zero-saturation column with hue 0. Output is all
/// non-negative with unit L2 norm (all zeros only for an empty frame).
pub fn hsv_histogram(frame: &FrameBuffer) -> Vec<f32> {
    let mut counts = [0u64; HIST_BINS];
    match &frame.rgb {
        Some(rgb) => {
            for p in rgb.chunks_exact(3) {
                counts[bin_of(p[0], p[1], p[2])] += 1;
            }
        }
        None => {
            // r = g = b: saturation 0, hue 0; only the value axis varies.
            let mut by_value = [0u64; 256];
            for &v in &frame.gray {
                by_value[v as usize] += 1;
            }
            for (v, &c) in by_value.iter().enumerate() {
                if c > 0 {
                    // Same quantizer as bin_of with r = g = b = v.
                    let vbin = (6 * v / 255).min(5);
                    counts[vbin] += c;
                }
            }
        }
    }
    let norm = counts
        .iter()
        .map(|&c| (c as f64) * (c as f64))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return vec![0.0; HIST_BINS];
    }
    counts.iter().map(|&c| (c as f64 / norm) as f32).collect()
}

/// Bin index from exact integer arithmetic, so boundary pixels always land
/// on the same side regardless of float rounding. Hue uses the hexagonal
/// formula h = base + 60 * p / delta with base in {0, 120, 240}; dividing by
/// the 30 degree bin width keeps everything in integers.
fn bin_of(r: u8, g: u8, b: u8) -> usize {
    let (ri, gi, bi) = (r as i64, g as i64, b as i64);
    let max = ri.max(gi).max(bi);
    let min = ri.min(gi).min(bi);
    let delta = max - min;

    let vbin = ((6 * max) / 255).min(5) as usize;
    let sbin = if max == 0 {
        0
    } else {
        ((6 * delta) / max).min(5) as usize
    };
    let hbin = if delta == 0 {
        0
    } else {
        // floor(h / 30) = floor((60 * p / delta + 30 * base) / 30)
        //              = base + floor(2p / delta), wrapped into 0..12.
        let (base, p) = if max == ri {
            (0, gi - bi)
        } else if max == gi {
            (4, bi - ri)
        } else {
            (8, ri - gi)
        };
        (base + (2 * p).div_euclid(delta)).rem_euclid(12) as usize
    };
    hbin * 36 + sbin * 6 + vbin
}

/// Cosine similarity between two histograms. Unit-norm inputs make this a
/// plain dot product, but the norms are included so callers may pass any
/// non-negative vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
