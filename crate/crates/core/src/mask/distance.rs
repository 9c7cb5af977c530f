//! Exact Euclidean distance transform.
//!
//! Two-pass algorithm over squared distances in integer arithmetic: a
//! column sweep finds per-column vertical distances, then a row sweep takes
//! the lower envelope of the parabolas `(x-u)² + g[u]²`. Envelope
//! intersections are compared with exact integer math, so the result equals
//! a brute-force nearest-target scan bit for bit.

use super::BinaryMask;

/// Per-pixel Euclidean distance to the nearest background pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest target
/// pixel; `None` when no pixel is a target.
pub(crate) fn squared_distance_to_targets(
    height: usize,
    width: usize,
    is_target: impl Fn(usize, usize) -> bool,
) -> Option<Vec<i64>> {
    if height == 0 || width == 0 {
        return Some(Vec::new());
    }
    // Any g ≥ big marks a column with no target; such parabolas exceed every
    // true squared distance, which is < (height-1)² + (width-1)².
    let big = (height + width) as i64;
    let mut any_target = false;

    // Column pass: vertical distance to the nearest target in the column.
    let mut g = vec![0i64; height * width];
    for c in 0..width {
        for r in 0..height {
            g[r * width + c] = if is_target(r, c) {
                any_target = true;
                0
            } else if r > 0 {
                g[(r - 1) * width + c] + 1
            } else {
                big
            };
        }
        for r in (0..height - 1).rev() {
            let below = g[(r + 1) * width + c];
            if below + 1 < g[r * width + c] {
                g[r * width + c] = below + 1;
            }
        }
    }
    if !any_target {
        return None;
    }

    // Row pass: lower envelope of parabolas (x-u)² + g[u]².
    let mut d2 = vec![0i64; height * width];
    let mut s = vec![0usize; width];
    let mut t = vec![0i64; width];
    for r in 0..height {
        let grow = &g[r * width..(r + 1) * width];
        let f = |x: i64, i: usize| {
            let dx = x - i as i64;
            dx * dx + grow[i] * grow[i]
        };
        // Intersection abscissa below which parabola i beats parabola u
        // (i < u). The numerator is non-negative at every call site, so
        // truncating division is floor division.
        let sep = |i: usize, u: usize| {
            let (i, u) = (i as i64, u as i64);
            (u * u - i * i + grow[u as usize] * grow[u as usize]
                - grow[i as usize] * grow[i as usize])
                / (2 * (u - i))
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..width {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let start = 1 + sep(s[q as usize], u);
                if start < width as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = start;
                }
            }
        }
        for x in (0..width).rev() {
            d2[r * width + x] = f(x as i64, s[q as usize]);
            if x as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    Some(d2)
}

/// Exact Euclidean distance from each pixel to the nearest background pixel;
/// 0 on background. A mask with no background pixel at all gets +∞
/// everywhere (the documented sentinel).
pub fn distance_transform(mask: &BinaryMask) -> DistanceField {
    let (h, w) = (mask.height(), mask.width());
    let values = match squared_distance_to_targets(h, w, |r, c| !mask.get(r, c)) {
        Some(d2) => d2.into_iter().map(|v| (v as f64).sqrt()).collect(),
        None => vec![f64::INFINITY; h * w],
    };
    DistanceField { height: h, width: w, values }
}
