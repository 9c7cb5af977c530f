//! Training-target channels: whole-image nuclei mask and touching-border
//! mask.
//!
//! The border channel marks pixels covered by two or more instances after
//! each instance is dilated independently, so it traces exactly the seams
//! where nuclei touch or nearly touch. Border pixels are not removed from
//! the nuclei channel; subtraction happens downstream where markers are
//! built.

use crate::mask::{instances_from_label_map, BinaryMask, LabelMap};

/// The two target channels, same dimensions as the source map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnetTargets {
    pub nuclei: BinaryMask,
    pub borders: BinaryMask,
}

/// Builds both channels from a ground-truth label map. Each instance is
/// dilated by a square element of the given radius; a pixel covered by ≥ 2
/// dilated instances is a border pixel.
pub fn make_unet_targets(gt: &LabelMap, radius: usize) -> UnetTargets {
    let (h, w) = (gt.height(), gt.width());
    let mut nuclei = BinaryMask::empty(h, w);
    for (i, &v) in gt.labels().iter().enumerate() {
        if v != 0 {
            nuclei.set(i / w, i % w, true);
        }
    }

    // cover_count[p] = number of distinct instances whose dilation covers p.
    // stamp[p] remembers the last instance counted there, so one instance
    // contributes at most once per pixel.
    let mut cover_count = vec![0u32; h * w];
    let mut stamp = vec![0u32; h * w];
    let r = radius as i64;
    for inst in instances_from_label_map(gt) {
        for (pr, pc) in inst.pixels() {
            let r_lo = (pr as i64 - r).max(0) as usize;
            let r_hi = ((pr as i64 + r) as usize).min(h - 1);
            let c_lo = (pc as i64 - r).max(0) as usize;
            let c_hi = ((pc as i64 + r) as usize).min(w - 1);
            for nr in r_lo..=r_hi {
                for nc in c_lo..=c_hi {
                    let idx = nr * w + nc;
                    if stamp[idx] != inst.id() {
                        stamp[idx] = inst.id();
                        cover_count[idx] += 1;
                    }
                }
            }
        }
    }
    let borders = BinaryMask::from_fn(h, w, |row, col| cover_count[row * w + col] >= 2);
    UnetTargets { nuclei, borders }
}
