//! Binary morphology and hole filling.

use std::collections::VecDeque;

use super::{BinaryMask, Connectivity};

/// Morphological operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Dilate,
    Erode,
}

/// Structuring-element shape. Radius r spans offsets with Chebyshev norm ≤ r
/// (square) or Euclidean norm ≤ r (disk).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuringElement {
    Square,
    Disk,
}

impl StructuringElement {
    /// Offsets of the element centered at the origin, raster order.
    pub fn offsets(self, radius: usize) -> Vec<(i32, i32)> {
        let r = radius as i32;
        let mut out = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                let keep = match self {
                    StructuringElement::Square => true,
                    StructuringElement::Disk => dr * dr + dc * dc <= r * r,
                };
                if keep {
                    out.push((dr, dc));
                }
            }
        }
        out
    }
}

/// Dilation or erosion by the given element.
///
/// Dilation is the union of element translates centered on set pixels,
/// clipped to the image. Erosion keeps a pixel iff every in-image element
/// offset lands on a set pixel; offsets falling outside the image count as
/// set, so erosion is the exact dual of clipped dilation and
/// `erode(dilate(m)) ⊇ m` holds at image borders too.
pub fn morphology(
    mask: &BinaryMask,
    op: MorphOp,
    radius: usize,
    element: StructuringElement,
) -> BinaryMask {
    assert!(radius >= 1, "radius must be >= 1");
    let (h, w) = (mask.height() as i32, mask.width() as i32);
    let offsets = element.offsets(radius);
    BinaryMask::from_fn(mask.height(), mask.width(), |r, c| {
        let (r, c) = (r as i32, c as i32);
        match op {
            MorphOp::Dilate => offsets.iter().any(|&(dr, dc)| {
                let (nr, nc) = (r + dr, c + dc);
                nr >= 0 && nc >= 0 && nr < h && nc < w && mask.get(nr as usize, nc as usize)
            }),
            MorphOp::Erode => offsets.iter().all(|&(dr, dc)| {
                let (nr, nc) = (r + dr, c + dc);
                nr < 0 || nc < 0 || nr >= h || nc >= w || mask.get(nr as usize, nc as usize)
            }),
        }
    })
}

/// Fills background regions (4-connected) that do not touch the image
/// border. Foreground pixels are unchanged.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    if h == 0 || w == 0 {
        return mask.clone();
    }
    // Flood from every border background pixel; unreached background is a hole.
    let mut reached = vec![false; h * w];
    let mut queue = VecDeque::new();
    let seed = |r: usize, c: usize, reached: &mut Vec<bool>, queue: &mut VecDeque<_>| {
        if !mask.get(r, c) && !reached[r * w + c] {
            reached[r * w + c] = true;
            queue.push_back((r, c));
        }
    };
    for c in 0..w {
        seed(0, c, &mut reached, &mut queue);
        seed(h - 1, c, &mut reached, &mut queue);
    }
    for r in 0..h {
        seed(r, 0, &mut reached, &mut queue);
        seed(r, w - 1, &mut reached, &mut queue);
    }
    while let Some((r, c)) = queue.pop_front() {
        for &(dr, dc) in Connectivity::Four.offsets() {
            let (nr, nc) = (r as i64 + dr as i64, c as i64 + dc as i64);
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if !mask.get(nr, nc) && !reached[nr * w + nc] {
                reached[nr * w + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    BinaryMask::from_fn(h, w, |r, c| mask.get(r, c) || !reached[r * w + c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(h, w, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn dilate_single_pixel_square() {
        let mut m = BinaryMask::empty(5, 5);
        m.set(2, 2, true);
        let d = morphology(&m, MorphOp::Dilate, 1, StructuringElement::Square);
        assert_eq!(d.count_ones(), 9);
        for r in 1..=3 {
            for c in 1..=3 {
                assert!(d.get(r, c));
            }
        }
    }

    #[test]
    fn erode_block_to_center() {
        let m = mask_from(&["     ", " ### ", " ### ", " ### ", "     "]);
        let e = morphology(&m, MorphOp::Erode, 1, StructuringElement::Square);
        assert_eq!(e.count_ones(), 1);
        assert!(e.get(2, 2));
    }

    #[test]
    fn disk_radius_one_is_a_plus() {
        let offs = StructuringElement::Disk.offsets(1);
        assert_eq!(offs, vec![(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn erosion_treats_outside_as_set() {
        let m = mask_from(&["## ", "## ", "   "]);
        let e = morphology(&m, MorphOp::Erode, 1, StructuringElement::Square);
        assert!(e.get(0, 0));
        assert!(!e.get(1, 1));
    }

    #[test]
    fn closing_contains_original_at_border() {
        let mut m = BinaryMask::empty(4, 4);
        m.set(0, 0, true);
        let d = morphology(&m, MorphOp::Dilate, 1, StructuringElement::Square);
        let e = morphology(&d, MorphOp::Erode, 1, StructuringElement::Square);
        assert!(e.get(0, 0));
    }

    #[test]
    fn fill_ring() {
        let ring = mask_from(&["#####", "#   #", "# # #", "#   #", "#####"]);
        let filled = fill_holes(&ring);
        assert_eq!(filled.count_ones(), 25);
    }

    #[test]
    fn open_shape_untouched() {
        let c_shape = mask_from(&["###", "#  ", "###"]);
        assert_eq!(fill_holes(&c_shape), c_shape);
    }

    #[test]
    fn solid_square_untouched() {
        let solid = mask_from(&["###", "###", "###"]);
        assert_eq!(fill_holes(&solid), solid);
    }

    #[test]
    fn diagonal_gap_is_a_hole_under_four_connectivity() {
        // Background at (1,1) only touches outside diagonally.
        let m = mask_from(&[" # ", "# #", " # "]);
        let filled = fill_holes(&m);
        assert!(filled.get(1, 1));
        assert!(!filled.get(0, 0));
    }
}
