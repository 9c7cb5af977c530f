//! Connected-component labeling.

use std::collections::VecDeque;

use super::{BinaryMask, Connectivity, LabelMap};

/// Labels each maximal connected foreground region. Labels are assigned
/// 1..n in raster order of each region's first pixel; background stays 0.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (h, w) = (mask.height(), mask.width());
    let mut map = LabelMap::zeros(h, w);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) || map.get(r, c) != 0 {
                continue;
            }
            next += 1;
            map.set(r, c, next);
            queue.push_back((r, c));
            while let Some((qr, qc)) = queue.pop_front() {
                for &(dr, dc) in connectivity.offsets() {
                    let (nr, nc) = (qr as i64 + dr as i64, qc as i64 + dc as i64);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if mask.get(nr, nc) && map.get(nr, nc) == 0 {
                        map.set(nr, nc, next);
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_components() {
        let map = connected_components(&BinaryMask::empty(3, 3), Connectivity::Four);
        assert!(map.instance_ids().is_empty());
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let mut mask = BinaryMask::empty(2, 2);
        mask.set(0, 0, true);
        mask.set(1, 1, true);
        let four = connected_components(&mask, Connectivity::Four);
        assert_eq!(four.instance_ids().len(), 2);
        let eight = connected_components(&mask, Connectivity::Eight);
        assert_eq!(eight.instance_ids().len(), 1);
    }

    #[test]
    fn labels_follow_raster_order_of_first_pixels() {
        // Two regions: one starting at (0, 2), one at (1, 0).
        let mut mask = BinaryMask::empty(3, 3);
        mask.set(0, 2, true);
        mask.set(1, 2, true);
        mask.set(1, 0, true);
        mask.set(2, 0, true);
        let map = connected_components(&mask, Connectivity::Four);
        assert_eq!(map.get(0, 2), 1);
        assert_eq!(map.get(1, 2), 1);
        assert_eq!(map.get(1, 0), 2);
        assert_eq!(map.get(2, 0), 2);
    }

    #[test]
    fn full_mask_is_one_component() {
        let mask = BinaryMask::from_fn(4, 5, |_, _| true);
        let map = connected_components(&mask, Connectivity::Four);
        assert_eq!(map.instance_ids(), vec![1]);
        assert!(map.labels().iter().all(|&v| v == 1));
    }
}
