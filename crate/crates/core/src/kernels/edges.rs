//! Canny edge density: Gaussian blur (sigma 1.4), Sobel, non-maximum
//! suppression along the quantized gradient direction, and two-threshold
//! hysteresis. Returns the fraction of pixels marked as edges.

use super::KernelError;

const SIGMA: f64 = 1.4;
const RADIUS: i64 = 5;

fn gaussian_kernel() -> [f32; (2 * RADIUS + 1) as usize] {
    let mut k = [0.0f64; (2 * RADIUS + 1) as usize];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    let mut out = [0.0f32; (2 * RADIUS + 1) as usize];
    for (o, v) in out.iter_mut().zip(&k) {
        *o = (v / sum) as f32;
    }
    out
}

/// tan(22.5 degrees): the sector boundary for direction quantization.
const TAN_22_5: f32 = 0.414_213_56;

pub fn canny_edge_density(
    gray: &[u8],
    width: usize,
    height: usize,
    lo: f32,
    hi: f32,
) -> Result<f64, KernelError> {
    if !(lo < hi) || lo < 0.0 {
        return Err(KernelError::InvalidThresholds { lo, hi });
    }
    if width < 3 || height < 3 {
        return Ok(0.0);
    }
    let kernel = gaussian_kernel();
    let clamp_x = |x: i64| x.clamp(0, width as i64 - 1) as usize;
    let clamp_y = |y: i64| y.clamp(0, height as i64 - 1) as usize;

    // Separable blur: horizontal then vertical, borders clamped.
    let mut hpass = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f32;
            for (i, k) in kernel.iter().enumerate() {
                let sx = clamp_x(x as i64 + i as i64 - RADIUS);
                acc += k * gray[y * width + sx] as f32;
            }
            hpass[y * width + x] = acc;
        }
    }
    let mut blur = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f32;
            for (i, k) in kernel.iter().enumerate() {
                let sy = clamp_y(y as i64 + i as i64 - RADIUS);
                acc += k * hpass[sy * width + x];
            }
            blur[y * width + x] = acc;
        }
    }

    // Sobel magnitude and quantized direction on the interior.
    let mut mag = vec![0.0f32; width * height];
    let mut dir = vec![0u8; width * height];
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let v = |dx: i64, dy: i64| blur[(y as i64 + dy) as usize * width + (x as i64 + dx) as usize];
            let gx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
            let gy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
            let i = y * width + x;
            mag[i] = (gx * gx + gy * gy).sqrt();
            dir[i] = quantize_direction(gx, gy);
        }
    }

    // Non-maximum suppression along the gradient; plateaus survive so
    // symmetric edges are not erased entirely.
    let mut strong = Vec::new();
    let mut state = vec![0u8; width * height]; // 0 none, 1 weak, 2 strong
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let i = y * width + x;
            let m = mag[i];
            if m < lo {
                continue;
            }
            let (dx, dy) = DIRECTION_OFFSETS[dir[i] as usize];
            let n1 = mag[(y as i64 + dy) as usize * width + (x as i64 + dx) as usize];
            let n2 = mag[(y as i64 - dy) as usize * width + (x as i64 - dx) as usize];
            if m >= n1 && m >= n2 {
                if m >= hi {
                    state[i] = 2;
                    strong.push(i);
                } else {
                    state[i] = 1;
                }
            }
        }
    }

    // Hysteresis: weak pixels survive only when 8-connected to a strong one.
    let mut edges = 0usize;
    let mut stack = strong;
    let mut visited = vec![false; width * height];
    for &i in &stack {
        visited[i] = true;
    }
    while let Some(i) = stack.pop() {
        edges += 1;
        let (x, y) = (i % width, i / width);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let ni = ny as usize * width + nx as usize;
                if !visited[ni] && state[ni] >= 1 {
                    visited[ni] = true;
                    stack.push(ni);
                }
            }
        }
    }
    Ok(edges as f64 / (width * height) as f64)
}

/// Neighbor step per quantized direction: 0 = E/W, 1 = NE/SW diagonal,
/// 2 = N/S, 3 = NW/SE diagonal (image coordinates, y down).
const DIRECTION_OFFSETS: [(i64, i64); 4] = [(1, 0), (1, 1), (0, 1), (1, -1)];

fn quantize_direction(gx: f32, gy: f32) -> u8 {
    let (ax, ay) = (gx.abs(), gy.abs());
    if ay <= TAN_22_5 * ax {
        0
    } else if ax <= TAN_22_5 * ay {
        2
    } else if (gx >= 0.0) == (gy >= 0.0) {
        1
    } else {
        3
    }
}
