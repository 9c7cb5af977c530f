//! Mask data model and pixel-level primitives.
//!
//! A segmentation of one image is either a [`LabelMap`] (dense integer grid,
//! 0 = background) or a list of [`InstanceMask`]s (per-instance bounding box +
//! bitmask). The two views convert losslessly while instances are disjoint;
//! the instance view additionally represents overlapping candidates, which
//! label maps cannot.
//!
//! Grids are row-major. A pixel is addressed as `(row, col)` with row 0 at
//! the top. Image sides are capped at 2^15 pixels so squared distances and
//! moment sums stay exact in 64-bit integers.

mod components;
mod distance;
mod morphology;

pub use components::connected_components;
pub use distance::{distance_transform, DistanceField};
pub(crate) use distance::squared_distance_to_targets;
pub use morphology::{fill_holes, morphology, MorphOp, StructuringElement};

use crate::error::MaskError;

/// Maximum image side length. Keeps `row*row + col*col` and moment sums
/// exactly representable in i64.
pub const MAX_SIDE: usize = 1 << 15;

/// Pixel-neighborhood connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    /// Neighbor offsets in raster order (row-major, top-left first).
    pub fn offsets(self) -> &'static [(i32, i32)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// How `label_map_from_instances` treats pixels claimed by two instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapPolicy {
    /// Any doubly-claimed pixel is an error.
    Error,
    /// Contested pixels take the smallest claiming id.
    LowestIdWins,
}

fn check_side(height: usize, width: usize) -> Result<(), MaskError> {
    if height > MAX_SIDE || width > MAX_SIDE {
        return Err(MaskError::Config(format!(
            "image {height}x{width} exceeds the {MAX_SIDE} per-side limit"
        )));
    }
    Ok(())
}

/// Dense per-pixel instance labeling. 0 = background, k > 0 = instance k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self, MaskError> {
        check_side(height, width)?;
        if labels.len() != height * width {
            return Err(MaskError::DimensionMismatch(format!(
                "label grid has {} entries, expected {}x{}",
                labels.len(),
                height,
                width
            )));
        }
        Ok(LabelMap { height, width, labels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        check_side(height, width).expect("dimension cap");
        LabelMap { height, width, labels: vec![0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: u32) {
        self.labels[row * self.width + col] = value;
    }

    /// Distinct nonzero labels in ascending order.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&v| v != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Foreground = nonzero pixels.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.labels.iter().map(|&v| v != 0).collect(),
        }
    }

    /// Relabels nonzero values to 1..n in raster order of each label's first
    /// pixel. Idempotent.
    pub fn canonicalized(&self) -> LabelMap {
        let mut mapping: Vec<(u32, u32)> = Vec::new();
        let mut next = 0u32;
        let mut labels = self.labels.clone();
        for v in &mut labels {
            if *v == 0 {
                continue;
            }
            let new = match mapping.iter().find(|&&(old, _)| old == *v) {
                Some(&(_, new)) => new,
                None => {
                    next += 1;
                    mapping.push((*v, next));
                    next
                }
            };
            *v = new;
        }
        LabelMap { height: self.height, width: self.width, labels }
    }
}

/// Per-pixel boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        check_side(height, width)?;
        if bits.len() != height * width {
            return Err(MaskError::DimensionMismatch(format!(
                "bit grid has {} entries, expected {}x{}",
                bits.len(),
                height,
                width
            )));
        }
        Ok(BinaryMask { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        check_side(height, width).expect("dimension cap");
        BinaryMask { height, width, bits: vec![false; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        check_side(height, width).expect("dimension cap");
        BinaryMask { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels in raster order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b)
            .map(move |(i, _)| (i / width, i % width))
    }
}

/// Inclusive bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.max_row - self.min_row + 1
    }

    pub fn width(&self) -> usize {
        self.max_col - self.min_col + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.min_row && row <= self.max_row && col >= self.min_col && col <= self.max_col
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let min_row = self.min_row.max(other.min_row);
        let min_col = self.min_col.max(other.min_col);
        let max_row = self.max_row.min(other.max_row);
        let max_col = self.max_col.min(other.max_col);
        if min_row > max_row || min_col > max_col {
            None
        } else {
            Some(BBox { min_row, min_col, max_row, max_col })
        }
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_row: self.min_row.min(other.min_row),
            min_col: self.min_col.min(other.min_col),
            max_row: self.max_row.max(other.max_row),
            max_col: self.max_col.max(other.max_col),
        }
    }
}

/// One instance: id, tight bounding box, and a bitmask over the box.
///
/// Invariants held by construction: area ≥ 1, every set bit lies inside the
/// box, and each edge row/column of the box contains a set bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    id: u32,
    bbox: BBox,
    bits: Vec<bool>,
    area: usize,
}

impl InstanceMask {
    /// Builds an instance from absolute pixel coordinates. Duplicates are
    /// collapsed.
    pub fn from_pixels(id: u32, pixels: &[(usize, usize)]) -> Result<Self, MaskError> {
        if id == 0 {
            return Err(MaskError::Config("instance id must be positive".into()));
        }
        let mut iter = pixels.iter();
        let &(r0, c0) = iter.next().ok_or(MaskError::EmptyRegion)?;
        let mut bbox = BBox { min_row: r0, min_col: c0, max_row: r0, max_col: c0 };
        for &(r, c) in iter {
            bbox.min_row = bbox.min_row.min(r);
            bbox.min_col = bbox.min_col.min(c);
            bbox.max_row = bbox.max_row.max(r);
            bbox.max_col = bbox.max_col.max(c);
        }
        check_side(bbox.max_row + 1, bbox.max_col + 1)?;
        let (bh, bw) = (bbox.height(), bbox.width());
        let mut bits = vec![false; bh * bw];
        let mut area = 0;
        for &(r, c) in pixels {
            let idx = (r - bbox.min_row) * bw + (c - bbox.min_col);
            if !bits[idx] {
                bits[idx] = true;
                area += 1;
            }
        }
        Ok(InstanceMask { id, bbox, bits, area })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.area
    }

    /// Same pixels under a different id.
    pub fn with_id(&self, id: u32) -> Result<Self, MaskError> {
        if id == 0 {
            return Err(MaskError::Config("instance id must be positive".into()));
        }
        let mut out = self.clone();
        out.id = id;
        Ok(out)
    }

    /// Membership test in absolute image coordinates.
    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.bbox.contains(row, col)
            && self.bits[(row - self.bbox.min_row) * self.bbox.width() + (col - self.bbox.min_col)]
    }

    /// Absolute pixel coordinates in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let bw = self.bbox.width();
        let (r0, c0) = (self.bbox.min_row, self.bbox.min_col);
        self.bits
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b)
            .map(move |(i, _)| (r0 + i / bw, c0 + i % bw))
    }

    /// Raster-first pixel (minimal row, then minimal column).
    pub fn first_pixel(&self) -> (usize, usize) {
        self.pixels().next().expect("area >= 1")
    }
}

/// |a ∩ b| by scanning the bounding-box overlap window.
pub fn intersection_area(a: &InstanceMask, b: &InstanceMask) -> usize {
    let Some(window) = a.bbox().intersect(&b.bbox()) else {
        return 0;
    };
    let mut count = 0;
    for r in window.min_row..=window.max_row {
        for c in window.min_col..=window.max_col {
            if a.contains(r, c) && b.contains(r, c) {
                count += 1;
            }
        }
    }
    count
}

/// Intersection over union of two pixel sets.
pub fn iou(a: &InstanceMask, b: &InstanceMask) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0 {
        return 0.0;
    }
    inter as f64 / (a.area() + b.area() - inter) as f64
}

/// Matrix of `iou(preds[i], gts[j])`.
pub fn pairwise_iou(preds: &[InstanceMask], gts: &[InstanceMask]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| iou(p, g)).collect())
        .collect()
}

/// One `InstanceMask` per distinct nonzero label, ordered by ascending id.
pub fn instances_from_label_map(map: &LabelMap) -> Vec<InstanceMask> {
    let mut by_id: std::collections::BTreeMap<u32, Vec<(usize, usize)>> =
        std::collections::BTreeMap::new();
    for r in 0..map.height() {
        for c in 0..map.width() {
            let v = map.get(r, c);
            if v != 0 {
                by_id.entry(v).or_default().push((r, c));
            }
        }
    }
    by_id
        .into_iter()
        .map(|(id, px)| InstanceMask::from_pixels(id, &px).expect("nonempty pixel list"))
        .collect()
}

/// Paints instances onto a fresh map.
pub fn label_map_from_instances(
    instances: &[InstanceMask],
    height: usize,
    width: usize,
    policy: OverlapPolicy,
) -> Result<LabelMap, MaskError> {
    let mut map = LabelMap::new(height, width, vec![0; height * width])?;
    for inst in instances {
        let b = inst.bbox();
        if b.max_row >= height || b.max_col >= width {
            return Err(MaskError::OutOfBounds { id: inst.id(), height, width });
        }
        for (r, c) in inst.pixels() {
            let existing = map.get(r, c);
            if existing == 0 {
                map.set(r, c, inst.id());
            } else {
                match policy {
                    OverlapPolicy::Error => {
                        return Err(MaskError::Overlap {
                            a: existing.min(inst.id()),
                            b: existing.max(inst.id()),
                            row: r,
                            col: c,
                        });
                    }
                    OverlapPolicy::LowestIdWins => {
                        if inst.id() < existing {
                            map.set(r, c, inst.id());
                        }
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Union of all instance pixels as one binary mask.
pub fn foreground_union(
    instances: &[InstanceMask],
    height: usize,
    width: usize,
) -> Result<BinaryMask, MaskError> {
    let mut mask = BinaryMask::new(height, width, vec![false; height * width])?;
    for inst in instances {
        let b = inst.bbox();
        if b.max_row >= height || b.max_col >= width {
            return Err(MaskError::OutOfBounds { id: inst.id(), height, width });
        }
        for (r, c) in inst.pixels() {
            mask.set(r, c, true);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: u32, px: &[(usize, usize)]) -> InstanceMask {
        InstanceMask::from_pixels(id, px).unwrap()
    }

    #[test]
    fn empty_map_yields_no_instances() {
        let map = LabelMap::zeros(4, 4);
        assert!(instances_from_label_map(&map).is_empty());
    }

    #[test]
    fn single_label_round_trip() {
        let mut map = LabelMap::zeros(4, 4);
        map.set(1, 1, 7);
        map.set(1, 2, 7);
        map.set(2, 1, 7);
        let instances = instances_from_label_map(&map);
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].id(), 7);
        assert_eq!(instances[0].area(), 3);
        let back = label_map_from_instances(&instances, 4, 4, OverlapPolicy::Error).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn bbox_is_tight() {
        let m = inst(1, &[(2, 3), (4, 5), (3, 4)]);
        assert_eq!(
            m.bbox(),
            BBox { min_row: 2, min_col: 3, max_row: 4, max_col: 5 }
        );
        assert_eq!(m.area(), 3);
        assert_eq!(m.first_pixel(), (2, 3));
    }

    #[test]
    fn duplicate_pixels_collapse() {
        let m = inst(1, &[(0, 0), (0, 0), (0, 1)]);
        assert_eq!(m.area(), 2);
    }

    #[test]
    fn empty_pixel_list_rejected() {
        assert!(matches!(
            InstanceMask::from_pixels(1, &[]),
            Err(MaskError::EmptyRegion)
        ));
    }

    #[test]
    fn zero_id_rejected() {
        assert!(InstanceMask::from_pixels(0, &[(0, 0)]).is_err());
    }

    #[test]
    fn overlap_error_policy() {
        let a = inst(1, &[(0, 0), (0, 1)]);
        let b = inst(2, &[(0, 1), (0, 2)]);
        let err = label_map_from_instances(&[a, b], 2, 4, OverlapPolicy::Error).unwrap_err();
        assert!(matches!(err, MaskError::Overlap { a: 1, b: 2, row: 0, col: 1 }));
    }

    #[test]
    fn overlap_lowest_id_wins() {
        let a = inst(5, &[(0, 0), (0, 1)]);
        let b = inst(2, &[(0, 1), (0, 2)]);
        let map =
            label_map_from_instances(&[a, b], 1, 3, OverlapPolicy::LowestIdWins).unwrap();
        assert_eq!(map.labels(), &[5, 2, 2]);
    }

    #[test]
    fn out_of_bounds_instance_rejected() {
        let a = inst(1, &[(0, 5)]);
        assert!(matches!(
            label_map_from_instances(&[a], 4, 4, OverlapPolicy::Error),
            Err(MaskError::OutOfBounds { id: 1, .. })
        ));
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = inst(1, &[(0, 0), (0, 1)]);
        let b = inst(2, &[(5, 5)]);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_partial_overlap() {
        let a = inst(1, &[(0, 0), (0, 1)]);
        let b = inst(2, &[(0, 1), (0, 2)]);
        assert_eq!(iou(&a, &b), 1.0 / 3.0);
    }

    #[test]
    fn pairwise_matches_elementwise() {
        let preds = vec![inst(1, &[(0, 0)]), inst(2, &[(1, 1), (1, 2)])];
        let gts = vec![inst(1, &[(0, 0), (0, 1)]), inst(2, &[(1, 2)])];
        let m = pairwise_iou(&preds, &gts);
        for (i, p) in preds.iter().enumerate() {
            for (j, g) in gts.iter().enumerate() {
                assert_eq!(m[i][j], iou(p, g));
            }
        }
    }

    #[test]
    fn pairwise_empty() {
        let m = pairwise_iou(&[], &[]);
        assert!(m.is_empty());
    }

    #[test]
    fn canonicalize_raster_order() {
        let map = LabelMap::new(2, 3, vec![0, 9, 9, 4, 4, 9]).unwrap();
        let canon = map.canonicalized();
        assert_eq!(canon.labels(), &[0, 1, 1, 2, 2, 1]);
        assert_eq!(canon.canonicalized(), canon);
    }

    #[test]
    fn instance_ids_sorted() {
        let map = LabelMap::new(1, 4, vec![3, 0, 1, 3]).unwrap();
        assert_eq!(map.instance_ids(), vec![1, 3]);
    }
}
