//! Structural region properties and fixed-order feature vectors.
//!
//! Conventions, frozen for reproducibility:
//! * Moments are taken over pixel centers with no pixel-extent (+1/12)
//!   correction.
//! * The convex hull is the hull of pixel centers; `convex_area` counts
//!   pixels whose centers fall inside or on it. A plus-shape therefore has
//!   solidity 1.0. Collinear regions degenerate to `convex_area = area`.
//! * Perimeter is the length of the closed outer contour walked through
//!   border-pixel centers (axial step 1, diagonal step √2), starting at the
//!   region's raster-first pixel and turning clockwise. A single pixel has
//!   perimeter 0. Disconnected regions are traced from the raster-first
//!   pixel's 8-connected component.

use crate::mask::InstanceMask;

/// Number of entries in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = 11;

/// Column names matching the [`FeatureVector`] order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "area",
    "perimeter",
    "eccentricity",
    "major_axis",
    "minor_axis",
    "convex_area",
    "solidity",
    "bbox_extent",
    "equiv_diameter",
    "centroid_r",
    "centroid_c",
];

/// Fixed-order numeric features for one instance.
pub type FeatureVector = [f64; FEATURE_COUNT];

/// Structural descriptors of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProperties {
    pub area: usize,
    pub perimeter: f64,
    /// Mean of pixel center coordinates, (row, col).
    pub centroid: (f64, f64),
    pub bbox_extent: f64,
    pub eccentricity: f64,
    pub major_axis_length: f64,
    pub minor_axis_length: f64,
    pub convex_area: usize,
    pub solidity: f64,
    pub equivalent_diameter: f64,
}

/// Clockwise Moore neighborhood starting East.
const DIRS: [(i64, i64); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

fn contains(inst: &InstanceMask, p: (i64, i64)) -> bool {
    p.0 >= 0 && p.1 >= 0 && inst.contains(p.0 as usize, p.1 as usize)
}

fn dir_index(from: (i64, i64), to: (i64, i64)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    DIRS.iter().position(|&o| o == d).expect("adjacent pixels")
}

fn step_len(a: (i64, i64), b: (i64, i64)) -> f64 {
    if a.0 != b.0 && a.1 != b.1 {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// One Moore step: scan clockwise from the backtrack pixel around `cur`;
/// returns the next contour pixel and the background pixel scanned just
/// before it.
fn moore_step(
    inst: &InstanceMask,
    cur: (i64, i64),
    backtrack: (i64, i64),
) -> Option<((i64, i64), (i64, i64))> {
    let start = dir_index(cur, backtrack);
    for k in 1..=8 {
        let idx = (start + k) % 8;
        let cand = (cur.0 + DIRS[idx].0, cur.1 + DIRS[idx].1);
        if contains(inst, cand) {
            let prev = (start + k - 1) % 8;
            let new_backtrack = (cur.0 + DIRS[prev].0, cur.1 + DIRS[prev].1);
            return Some((cand, new_backtrack));
        }
    }
    None
}

/// Contour length of the 8-connected component holding the raster-first
/// pixel. Terminates when the start pixel is re-entered with the same
/// outgoing move as the first step.
fn trace_perimeter(inst: &InstanceMask) -> f64 {
    let (r0, c0) = inst.first_pixel();
    let b0 = (r0 as i64, c0 as i64);
    // The raster-first pixel has background on its West and entire North side.
    let bt0 = (b0.0, b0.1 - 1);
    let Some((b1, bt1)) = moore_step(inst, b0, bt0) else {
        return 0.0;
    };
    let mut total = step_len(b0, b1);
    let (mut cur, mut bt) = (b1, bt1);
    let cap = 16 * inst.area() + 16;
    for _ in 0..cap {
        let (next, nbt) = moore_step(inst, cur, bt).expect("contour pixel has a neighbor");
        if cur == b0 && next == b1 {
            return total;
        }
        total += step_len(cur, next);
        cur = next;
        bt = nbt;
    }
    panic!("contour trace failed to close");
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain convex hull over points already sorted raster order
/// (lexicographic). Collinear boundary points are dropped.
fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let n = points.len();
    if n < 3 {
        return points.to_vec();
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * n);
    for &p in points {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Counts pixels of the bounding box whose centers lie inside or on the
/// hull, by exact integer half-plane tests.
fn convex_area(inst: &InstanceMask) -> usize {
    let points: Vec<(i64, i64)> = inst.pixels().map(|(r, c)| (r as i64, c as i64)).collect();
    let hull = convex_hull(&points);
    if hull.len() < 3 {
        return inst.area();
    }
    let b = inst.bbox();
    let mut count = 0;
    for r in b.min_row..=b.max_row {
        for c in b.min_col..=b.max_col {
            let p = (r as i64, c as i64);
            let mut pos = true;
            let mut neg = true;
            for i in 0..hull.len() {
                let s = cross(hull[i], hull[(i + 1) % hull.len()], p);
                pos &= s >= 0;
                neg &= s <= 0;
            }
            if pos || neg {
                count += 1;
            }
        }
    }
    count
}

/// Computes all structural properties of one instance.
pub fn compute_properties(inst: &InstanceMask) -> RegionProperties {
    let n = inst.area();
    let nf = n as f64;
    let (mut sr, mut sc, mut srr, mut scc, mut src) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for (r, c) in inst.pixels() {
        let (r, c) = (r as i64, c as i64);
        sr += r;
        sc += c;
        srr += r * r;
        scc += c * c;
        src += r * c;
    }
    let centroid = (sr as f64 / nf, sc as f64 / nf);
    let mu20 = (srr as f64 / nf - centroid.0 * centroid.0).max(0.0);
    let mu02 = (scc as f64 / nf - centroid.1 * centroid.1).max(0.0);
    let mu11 = src as f64 / nf - centroid.0 * centroid.1;

    let half_trace = (mu20 + mu02) / 2.0;
    let gap = ((mu20 - mu02) / 2.0).hypot(mu11);
    let lambda1 = half_trace + gap;
    let lambda2 = (half_trace - gap).max(0.0);
    let eccentricity = if lambda1 > 0.0 {
        (1.0 - lambda2 / lambda1).max(0.0).sqrt()
    } else {
        0.0
    };

    let hull_area = convex_area(inst);
    let bbox = inst.bbox();
    RegionProperties {
        area: n,
        perimeter: trace_perimeter(inst),
        centroid,
        bbox_extent: nf / bbox.area() as f64,
        eccentricity,
        major_axis_length: 4.0 * lambda1.sqrt(),
        minor_axis_length: 4.0 * lambda2.sqrt(),
        convex_area: hull_area,
        solidity: nf / hull_area as f64,
        equivalent_diameter: (4.0 * nf / std::f64::consts::PI).sqrt(),
    }
}

/// Packs properties into the fixed column order. Centroid coordinates are
/// normalized by the image side lengths; everything else is copied as is.
pub fn feature_vector(
    props: &RegionProperties,
    image_height: usize,
    image_width: usize,
) -> FeatureVector {
    [
        props.area as f64,
        props.perimeter,
        props.eccentricity,
        props.major_axis_length,
        props.minor_axis_length,
        props.convex_area as f64,
        props.solidity,
        props.bbox_extent,
        props.equivalent_diameter,
        props.centroid.0 / image_height as f64,
        props.centroid.1 / image_width as f64,
    ]
}
