//! Shi-Tomasi corner detection: minimum eigenvalue of the 3x3 box-summed
//! structure tensor over Sobel gradients.

/// Detected corner. Position is the pixel center; response is the raw
/// minimum eigenvalue of the summed structure tensor at that pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: f32,
    pub y: f32,
    pub response: f64,
}

/// Minimum-eigenvalue response map. Pixels whose Sobel or summing window
/// leaves the image (a 2 px border) get response 0.
pub fn min_eigen_map(gray: &[u8], width: usize, height: usize) -> Vec<f64> {
    let mut resp = vec![0.0f64; width * height];
    if width < 5 || height < 5 {
        return resp;
    }
    let px = |x: usize, y: usize| gray[y * width + x] as i32;
    // Sobel gradients on the 1 px interior.
    let mut gx = vec![0i32; width * height];
    let mut gy = vec![0i32; width * height];
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let i = y * width + x;
            gx[i] = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            gy[i] = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
        }
    }
    // Rows are independent, so the tensor pass fans out when built with
    // the parallel feature; results are bit-identical either way.
    let rows = crate::parallel::map_range(height - 4, |r| {
        let y = r + 2;
        let mut row = vec![0.0f64; width];
        for (x, slot) in row.iter_mut().enumerate().take(width - 2).skip(2) {
            let (mut sxx, mut sxy, mut syy) = (0i64, 0i64, 0i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let i = (y as i64 + dy) as usize * width + (x as i64 + dx) as usize;
                    let (a, b) = (gx[i] as i64, gy[i] as i64);
                    sxx += a * a;
                    sxy += a * b;
                    syy += b * b;
                }
            }
            let (sxx, sxy, syy) = (sxx as f64, sxy as f64, syy as f64);
            let tr = sxx + syy;
            let disc = ((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy).sqrt();
            *slot = 0.5 * (tr - disc);
        }
        row
    });
    for (r, row) in rows.into_iter().enumerate() {
        let y = r + 2;
        resp[y * width..(y + 1) * width].copy_from_slice(&row);
    }
    resp
}

/// Detects up to `max_count` corners. Kept corners are 3x3 local maxima of
/// the response map with response >= quality * global max, pairwise at least
/// `min_dist` apart, returned in descending response order. Ties break
/// toward smaller (y, x) so the result is a pure function of the image.
pub fn shi_tomasi_corners(
    gray: &[u8],
    width: usize,
    height: usize,
    max_count: usize,
    quality: f64,
    min_dist: f32,
) -> Vec<Corner> {
    if width < 5 || height < 5 || max_count == 0 {
        return Vec::new();
    }
    let resp = min_eigen_map(gray, width, height);
    let max_resp = resp.iter().cloned().fold(0.0f64, f64::max);
    if max_resp <= 0.0 {
        return Vec::new();
    }
    let thresh = quality * max_resp;

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in 2..height - 2 {
        for x in 2..width - 2 {
            let r = resp[y * width + x];
            if r < thresh || r <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let ni = (y as i64 + dy) as usize * width + (x as i64 + dx) as usize;
                    if resp[ni] > r {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((r, y, x));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut kept: Vec<Corner> = Vec::new();
    let mut grid = SpacingGrid::new(width, height, min_dist);
    for (r, y, x) in candidates {
        let (xf, yf) = (x as f32, y as f32);
        if grid.is_clear(xf, yf) {
            grid.insert(xf, yf);
            kept.push(Corner { x: xf, y: yf, response: r });
            if kept.len() == max_count {
                break;
            }
        }
    }
    kept
}

/// Bucket grid for minimum-distance suppression; cell size equals the
/// radius so only the 3x3 neighborhood needs checking.
pub(crate) struct SpacingGrid {
    cell: f32,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<(f32, f32)>>,
}

impl SpacingGrid {
    pub fn new(width: usize, height: usize, min_dist: f32) -> Self {
        let cell = min_dist.max(1.0);
        let cols = (width as f32 / cell).ceil() as usize + 1;
        let rows = (height as f32 / cell).ceil() as usize + 1;
        SpacingGrid {
            cell: if min_dist > 0.0 { min_dist } else { 0.0 },
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        }
    }

    fn bucket_of(&self, x: f32, y: f32) -> (usize, usize) {
        let cell = self.cell.max(1.0);
        (
            ((x / cell) as usize).min(self.cols - 1),
            ((y / cell) as usize).min(self.rows - 1),
        )
    }

    pub fn is_clear(&self, x: f32, y: f32) -> bool {
        if self.cell <= 0.0 {
            return true;
        }
        let (cx, cy) = self.bucket_of(x, y);
        let r2 = self.cell * self.cell;
        for by in cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1) {
            for bx in cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1) {
                for &(px, py) in &self.buckets[by * self.cols + bx] {
                    let (dx, dy) = (px - x, py - y);
                    if dx * dx + dy * dy < r2 {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn insert(&mut self, x: f32, y: f32) {
        let (cx, cy) = self.bucket_of(x, y);
        self.buckets[cy * self.cols + cx].push((x, y));
    }
}
