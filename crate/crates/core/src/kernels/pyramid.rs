//! Gaussian image pyramid used by the sparse-flow tracker.

/// Single-channel f32 image plane.
#[derive(Debug, Clone)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> f32 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[yc * self.width + xc]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Coarse-to-fine pyramid. Level 0 is the full-resolution frame; each level
/// halves the previous one after a 5-tap Gaussian prefilter. Construction
/// stops early rather than produce a level smaller than 8 px on a side.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    pub levels: Vec<Plane>,
}

impl ImagePyramid {
    pub fn build(gray: &[u8], width: usize, height: usize, levels: usize) -> Self {
        assert_eq!(gray.len(), width * height);
        assert!(levels >= 1);
        let mut out = Vec::with_capacity(levels);
        let mut base = Plane {
            width,
            height,
            data: gray.iter().map(|&v| v as f32).collect(),
        };
        for _ in 1..levels {
            let next = downsample(&base);
            out.push(base);
            if next.width < 8 || next.height < 8 {
                return ImagePyramid { levels: out };
            }
            base = next;
        }
        out.push(base);
        ImagePyramid { levels: out }
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }
}

/// Separable [1 4 6 4 1]/16 prefilter, then decimation by two. Output side
/// lengths are ceil(n/2), matching the point mapping p -> p / 2 per level.
fn downsample(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let (dw, dh) = (w.div_ceil(2), h.div_ceil(2));
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

    // Horizontal pass at decimated columns only.
    let mut tmp = vec![0.0f32; dw * h];
    for y in 0..h {
        let row = src.row(y);
        for ox in 0..dw {
            let cx = (ox * 2) as i64;
            let mut acc = 0.0f32;
            for (i, k) in K.iter().enumerate() {
                let x = (cx + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += k * row[x];
            }
            tmp[y * dw + ox] = acc;
        }
    }
    let mut out = Plane::new(dw, dh);
    for oy in 0..dh {
        let cy = (oy * 2) as i64;
        for ox in 0..dw {
            let mut acc = 0.0f32;
            for (i, k) in K.iter().enumerate() {
                let y = (cy + i as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += k * tmp[y * dw + ox];
            }
            out.data[oy * dw + ox] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant_at_every_level() {
        let gray = vec![137u8; 64 * 64];
        let pyr = ImagePyramid::build(&gray, 64, 64, 4);
        assert_eq!(pyr.level_count(), 4);
        for (l, plane) in pyr.levels.iter().enumerate() {
            for &v in &plane.data {
                assert!((v - 137.0).abs() < 1e-3, "level {l} drifted: {v}");
            }
        }
    }

    #[test]
    fn level_dimensions_halve() {
        let gray = vec![0u8; 100 * 50];
        let pyr = ImagePyramid::build(&gray, 100, 50, 3);
        let dims: Vec<_> = pyr.levels.iter().map(|p| (p.width, p.height)).collect();
        assert_eq!(dims, vec![(100, 50), (50, 25), (25, 13)]);
    }

    #[test]
    fn small_images_get_fewer_levels() {
        let gray = vec![0u8; 20 * 20];
        let pyr = ImagePyramid::build(&gray, 20, 20, 5);
        // 20 -> 10 -> 5(too small): stops at two levels.
        assert_eq!(pyr.level_count(), 2);
    }
}
