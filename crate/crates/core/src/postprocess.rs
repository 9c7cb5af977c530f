//! Prediction cleanup: small-mask removal, marker-controlled watershed
//! splitting, distance-based overlap resolution, and the composed pipeline.

use std::collections::{BinaryHeap, HashMap};

use crate::error::MaskError;
use crate::mask::{
    connected_components, distance_transform, fill_holes, instances_from_label_map,
    squared_distance_to_targets, BinaryMask, Connectivity, InstanceMask, LabelMap,
};

/// What happens to mask components the flood never reaches (no marker).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarkerlessPolicy {
    /// Each leftover component gets a fresh label after the marker labels.
    #[default]
    NewLabel,
    /// Leftover pixels stay background.
    Drop,
}

/// Elevation the flood ascends.
#[derive(Debug, Clone, Default)]
pub enum ElevationSource {
    /// Negative exact distance-to-background of the mask: basin centers are
    /// the points deepest inside the foreground.
    #[default]
    NegDistance,
    /// Caller-provided row-major grid (for example a negated probability
    /// map). Must match the mask dimensions.
    Grid(Vec<f64>),
}

/// Watershed behavior knobs.
#[derive(Debug, Clone)]
pub struct WatershedConfig {
    pub flood_connectivity: Connectivity,
    pub elevation: ElevationSource,
    pub markerless_policy: MarkerlessPolicy,
}

impl Default for WatershedConfig {
    fn default() -> Self {
        WatershedConfig {
            flood_connectivity: Connectivity::Four,
            elevation: ElevationSource::NegDistance,
            markerless_policy: MarkerlessPolicy::NewLabel,
        }
    }
}

/// Keeps instances with `area ≥ min_area`, preserving order.
pub fn remove_small(instances: Vec<InstanceMask>, min_area: usize) -> Vec<InstanceMask> {
    instances.into_iter().filter(|m| m.area() >= min_area).collect()
}

struct Frontier {
    elevation: f64,
    seq: u64,
    row: usize,
    col: usize,
    label: u32,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Reversed so BinaryHeap pops the lowest elevation; equal elevations pop
    // in enqueue order (FIFO).
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .elevation
            .total_cmp(&self.elevation)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Marker-controlled priority flood restricted to the mask.
///
/// Markers are the 8-connected components of `mask AND NOT borders`. The
/// flood repeatedly pops the unassigned frontier pixel with the lowest
/// elevation (FIFO among ties) and assigns it the label of the pixel that
/// enqueued it. Mask components the flood never reaches are labeled fresh or
/// dropped per `markerless_policy`.
pub fn watershed_split(
    mask: &BinaryMask,
    borders: &BinaryMask,
    cfg: &WatershedConfig,
) -> Result<LabelMap, MaskError> {
    let (h, w) = (mask.height(), mask.width());
    if borders.height() != h || borders.width() != w {
        return Err(MaskError::DimensionMismatch(format!(
            "mask is {h}x{w}, borders are {}x{}",
            borders.height(),
            borders.width()
        )));
    }
    let elevation: Vec<f64> = match &cfg.elevation {
        ElevationSource::NegDistance => {
            distance_transform(mask).values().iter().map(|&v| -v).collect()
        }
        ElevationSource::Grid(g) => {
            if g.len() != h * w {
                return Err(MaskError::DimensionMismatch(format!(
                    "elevation grid has {} entries, expected {}x{}",
                    g.len(),
                    h,
                    w
                )));
            }
            g.clone()
        }
    };

    let marker_mask =
        BinaryMask::from_fn(h, w, |r, c| mask.get(r, c) && !borders.get(r, c));
    let mut labels = connected_components(&marker_mask, Connectivity::Eight);
    let marker_count = labels.instance_ids().len() as u32;

    let offsets = cfg.flood_connectivity.offsets();
    let mut heap: BinaryHeap<Frontier> = BinaryHeap::new();
    let mut seq = 0u64;
    let push_neighbors =
        |labels: &LabelMap, heap: &mut BinaryHeap<Frontier>, seq: &mut u64, r: usize, c: usize| {
            let label = labels.get(r, c);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as i64 + dr as i64, c as i64 + dc as i64);
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if mask.get(nr, nc) && labels.get(nr, nc) == 0 {
                    heap.push(Frontier {
                        elevation: elevation[nr * w + nc],
                        seq: *seq,
                        row: nr,
                        col: nc,
                        label,
                    });
                    *seq += 1;
                }
            }
        };

    for r in 0..h {
        for c in 0..w {
            if labels.get(r, c) != 0 {
                push_neighbors(&labels, &mut heap, &mut seq, r, c);
            }
        }
    }
    while let Some(front) = heap.pop() {
        if labels.get(front.row, front.col) != 0 {
            continue;
        }
        labels.set(front.row, front.col, front.label);
        push_neighbors(&labels, &mut heap, &mut seq, front.row, front.col);
    }

    if matches!(cfg.markerless_policy, MarkerlessPolicy::NewLabel) {
        let leftover =
            BinaryMask::from_fn(h, w, |r, c| mask.get(r, c) && labels.get(r, c) == 0);
        let fresh = connected_components(&leftover, cfg.flood_connectivity);
        for r in 0..h {
            for c in 0..w {
                let v = fresh.get(r, c);
                if v != 0 {
                    labels.set(r, c, marker_count + v);
                }
            }
        }
    }
    Ok(labels)
}

/// Splits doubly-claimed pixels between their claimants.
///
/// A contested pixel goes to the contender whose nearest exclusive pixel
/// (pixels only it claims) is closest in Euclidean distance; ties go to the
/// lower id. A contender with no exclusive pixels loses every contested
/// pixel; if no contender has exclusive pixels the pixel is lost entirely.
/// Instances left empty are dropped. Order and ids are preserved.
pub fn resolve_overlaps(instances: &[InstanceMask]) -> Vec<InstanceMask> {
    if instances.len() < 2 {
        return instances.to_vec();
    }
    let h = instances.iter().map(|m| m.bbox().max_row).max().unwrap() + 1;
    let w = instances.iter().map(|m| m.bbox().max_col).max().unwrap() + 1;
    let mut claims = vec![0u32; h * w];
    for inst in instances {
        for (r, c) in inst.pixels() {
            claims[r * w + c] += 1;
        }
    }
    if claims.iter().all(|&n| n < 2) {
        return instances.to_vec();
    }

    let mut contenders: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, inst) in instances.iter().enumerate() {
        for (r, c) in inst.pixels() {
            if claims[r * w + c] >= 2 {
                contenders.entry(r * w + c).or_default().push(i);
            }
        }
    }

    // Exact squared distance from every bbox pixel to the contender's
    // exclusive set; None when it has no exclusive pixels. Both endpoints of
    // any relevant distance lie inside the bbox, so the window is sufficient.
    let wants_field: Vec<bool> = {
        let mut v = vec![false; instances.len()];
        for list in contenders.values() {
            for &i in list {
                v[i] = true;
            }
        }
        v
    };
    let fields: Vec<Option<Vec<i64>>> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            if !wants_field[i] {
                return None;
            }
            let b = inst.bbox();
            squared_distance_to_targets(b.height(), b.width(), |lr, lc| {
                let (r, c) = (b.min_row + lr, b.min_col + lc);
                inst.contains(r, c) && claims[r * w + c] == 1
            })
        })
        .collect();

    let winner_of = |idx: usize, list: &[usize]| -> Option<usize> {
        list.iter()
            .filter_map(|&i| {
                let b = instances[i].bbox();
                let (r, c) = (idx / w, idx % w);
                let local = (r - b.min_row) * b.width() + (c - b.min_col);
                fields[i]
                    .as_ref()
                    .map(|f| (f[local], instances[i].id(), i))
            })
            .min()
            .map(|(_, _, i)| i)
    };
    let mut winners: HashMap<usize, usize> = HashMap::new();
    for (&idx, list) in &contenders {
        if let Some(win) = winner_of(idx, list) {
            winners.insert(idx, win);
        }
    }

    let mut out = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let px: Vec<(usize, usize)> = inst
            .pixels()
            .filter(|&(r, c)| {
                let idx = r * w + c;
                claims[idx] == 1 || winners.get(&idx) == Some(&i)
            })
            .collect();
        if !px.is_empty() {
            out.push(InstanceMask::from_pixels(inst.id(), &px).expect("nonempty"));
        }
    }
    out
}

/// Raw per-image prediction, either an instance labeling or the two
/// network-style channels.
#[derive(Debug, Clone)]
pub enum RawPrediction {
    Map(LabelMap),
    Channels { mask: BinaryMask, borders: BinaryMask },
}

/// Cleaning-pipeline knobs.
#[derive(Debug, Clone)]
pub struct CleanConfig {
    pub min_area: usize,
    pub watershed: WatershedConfig,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig { min_area: 10, watershed: WatershedConfig::default() }
    }
}

/// Fills enclosed background inside one instance, relative to the instance
/// itself (a 1-pixel pad keeps box-edge cavities open).
fn fill_instance_holes(inst: &InstanceMask) -> InstanceMask {
    let b = inst.bbox();
    let (bh, bw) = (b.height(), b.width());
    let local = BinaryMask::from_fn(bh + 2, bw + 2, |r, c| {
        r >= 1 && c >= 1 && r <= bh && c <= bw && inst.contains(b.min_row + r - 1, b.min_col + c - 1)
    });
    let filled = fill_holes(&local);
    let px: Vec<(usize, usize)> = filled
        .iter_set()
        .map(|(r, c)| (b.min_row + r - 1, b.min_col + c - 1))
        .collect();
    InstanceMask::from_pixels(inst.id(), &px).expect("filling cannot empty a mask")
}

/// Full cleanup: hole filling, watershed splitting (channel input), overlap
/// resolution, then small-mask removal.
pub fn clean_pipeline(
    raw: &RawPrediction,
    cfg: &CleanConfig,
) -> Result<Vec<InstanceMask>, MaskError> {
    let instances = match raw {
        RawPrediction::Map(map) => instances_from_label_map(map)
            .iter()
            .map(fill_instance_holes)
            .collect::<Vec<_>>(),
        RawPrediction::Channels { mask, borders } => {
            let filled = fill_holes(mask);
            let split = watershed_split(&filled, borders, &cfg.watershed)?;
            instances_from_label_map(&split)
        }
    };
    let resolved = resolve_overlaps(&instances);
    Ok(remove_small(resolved, cfg.min_area))
}
