//! Randomized properties checked against independent oracles.
//!
//! Every oracle here recomputes a result by a different route than the
//! library (brute-force scans, union-find, dynamic-programming matching,
//! triangle membership) so that a shared bug cannot hide in both sides.

use std::collections::{BTreeMap, BTreeSet};

use maskfuse_core::eval::match_at_threshold;
use maskfuse_core::gbm::{train_gbm, FeatureMatrix, GbmModel, TrainingConfig};
use maskfuse_core::io::{
    decode_rle, encode_rle, read_label_png, read_mask_png, write_label_png, write_mask_png,
};
use maskfuse_core::mask::{
    connected_components, distance_transform, fill_holes, instances_from_label_map,
    intersection_area, iou, morphology, pairwise_iou, BinaryMask, Connectivity, InstanceMask,
    LabelMap, MorphOp, StructuringElement,
};
use maskfuse_core::postprocess::{resolve_overlaps, watershed_split, MarkerlessPolicy,
    WatershedConfig};
use maskfuse_core::region::compute_properties;
use maskfuse_core::KAGGLE_THRESHOLDS;
use proptest::prelude::*;

fn mask_strategy(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side, 0.15f64..0.85).prop_flat_map(|(h, w, density)| {
        proptest::collection::vec(proptest::bool::weighted(density), h * w)
            .prop_map(move |bits| BinaryMask::new(h, w, bits).unwrap())
    })
}

fn components_of(mask: &BinaryMask, conn: Connectivity) -> Vec<InstanceMask> {
    instances_from_label_map(&connected_components(mask, conn))
}

// ---------------------------------------------------------------- distance

fn brute_distance(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = vec![f64::INFINITY; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut best = i64::MAX;
            for br in 0..h {
                for bc in 0..w {
                    if !mask.get(br, bc) {
                        let (dr, dc) = (r as i64 - br as i64, c as i64 - bc as i64);
                        best = best.min(dr * dr + dc * dc);
                    }
                }
            }
            if best != i64::MAX {
                out[r * w + c] = (best as f64).sqrt();
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn edt_matches_brute_force_scan(mask in mask_strategy(20)) {
        let field = distance_transform(&mask);
        let brute = brute_distance(&mask);
        prop_assert_eq!(field.values(), brute.as_slice());
    }
}

// -------------------------------------------------------------- components

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn union_find_partition(mask: &BinaryMask, conn: Connectivity) -> BTreeSet<Vec<(usize, usize)>> {
    let (h, w) = (mask.height(), mask.width());
    let mut dsu = Dsu::new(h * w);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            for &(dr, dc) in conn.offsets() {
                let (nr, nc) = (r as i64 + dr as i64, c as i64 + dc as i64);
                if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                    let (nr, nc) = (nr as usize, nc as usize);
                    if mask.get(nr, nc) {
                        dsu.union(r * w + c, nr * w + nc);
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                groups.entry(dsu.find(r * w + c)).or_default().push((r, c));
            }
        }
    }
    groups.into_values().collect()
}

proptest! {
    #[test]
    fn components_match_union_find(mask in mask_strategy(16)) {
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let map = connected_components(&mask, conn);
            let got: BTreeSet<Vec<(usize, usize)>> = instances_from_label_map(&map)
                .iter()
                .map(|inst| inst.pixels().collect())
                .collect();
            prop_assert_eq!(got, union_find_partition(&mask, conn));

            // Labels count up in raster order of first appearance.
            let mut seen = 0u32;
            for &v in map.labels() {
                if v != 0 && v > seen {
                    prop_assert_eq!(v, seen + 1);
                    seen = v;
                }
            }
        }
    }
}

// -------------------------------------------------------------- morphology

fn subset(inner: &BinaryMask, outer: &BinaryMask) -> bool {
    inner.bits().iter().zip(outer.bits()).all(|(&a, &b)| !a || b)
}

fn intersects(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.bits().iter().zip(b.bits()).any(|(&x, &y)| x && y)
}

proptest! {
    #[test]
    fn morphology_is_ordered_by_operation(
        mask in mask_strategy(14),
        radius in 1usize..=3,
    ) {
        for element in [StructuringElement::Square, StructuringElement::Disk] {
            let dilated = morphology(&mask, MorphOp::Dilate, radius, element);
            let eroded = morphology(&mask, MorphOp::Erode, radius, element);
            prop_assert!(subset(&mask, &dilated));
            prop_assert!(subset(&eroded, &mask));

            let closed = morphology(&dilated, MorphOp::Erode, radius, element);
            let opened = morphology(&eroded, MorphOp::Dilate, radius, element);
            prop_assert!(subset(&mask, &closed));
            prop_assert!(subset(&opened, &mask));
        }
    }

    #[test]
    fn square_dilations_compose_additively(
        mask in mask_strategy(12),
        r1 in 1usize..=2,
        r2 in 1usize..=2,
    ) {
        let two_step = morphology(
            &morphology(&mask, MorphOp::Dilate, r1, StructuringElement::Square),
            MorphOp::Dilate,
            r2,
            StructuringElement::Square,
        );
        let one_step = morphology(&mask, MorphOp::Dilate, r1 + r2, StructuringElement::Square);
        prop_assert_eq!(two_step.bits(), one_step.bits());
    }

    #[test]
    fn dilation_is_self_adjoint(
        a in mask_strategy(10),
        bits in proptest::collection::vec(any::<bool>(), 100),
        radius in 1usize..=3,
    ) {
        // Symmetric elements: dilate(a) meets b exactly when a meets dilate(b).
        let b = BinaryMask::new(
            a.height(),
            a.width(),
            bits[..a.height() * a.width()].to_vec(),
        ).unwrap();
        for element in [StructuringElement::Square, StructuringElement::Disk] {
            let lhs = intersects(&morphology(&a, MorphOp::Dilate, radius, element), &b);
            let rhs = intersects(&a, &morphology(&b, MorphOp::Dilate, radius, element));
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn fill_holes_fills_exactly_the_enclosed_background(mask in mask_strategy(14)) {
        let (h, w) = (mask.height(), mask.width());
        let complement = BinaryMask::from_fn(h, w, |r, c| !mask.get(r, c));
        let mut enclosed = mask.clone();
        for inst in components_of(&complement, Connectivity::Four) {
            let touches_border = inst
                .pixels()
                .any(|(r, c)| r == 0 || c == 0 || r == h - 1 || c == w - 1);
            if !touches_border {
                for (r, c) in inst.pixels() {
                    enclosed.set(r, c, true);
                }
            }
        }
        let filled = fill_holes(&mask);
        prop_assert_eq!(filled.bits(), enclosed.bits());
    }
}

// --------------------------------------------------------------------- iou

proptest! {
    #[test]
    fn iou_is_symmetric_bounded_and_reflexive(
        m1 in mask_strategy(12),
        m2 in mask_strategy(12),
    ) {
        let a = components_of(&m1, Connectivity::Eight);
        let b = components_of(&m2, Connectivity::Eight);
        for x in &a {
            prop_assert_eq!(iou(x, x), 1.0);
            for y in &b {
                let v = iou(x, y);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, iou(y, x));
            }
        }
        let matrix = pairwise_iou(&a, &b);
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                prop_assert_eq!(matrix[i][j], iou(x, y));
            }
        }
    }
}

// --------------------------------------------------------------- watershed

fn region_of(map: &LabelMap, label: u32) -> BinaryMask {
    BinaryMask::from_fn(map.height(), map.width(), |r, c| map.get(r, c) == label)
}

proptest! {
    #[test]
    fn watershed_preserves_foreground_and_marker_identity(
        mask in mask_strategy(14),
        border_bits in proptest::collection::vec(proptest::bool::weighted(0.25), 196),
        conn in prop_oneof![Just(Connectivity::Four), Just(Connectivity::Eight)],
    ) {
        let (h, w) = (mask.height(), mask.width());
        let borders = BinaryMask::new(h, w, border_bits[..h * w].to_vec()).unwrap();
        let cfg = WatershedConfig { flood_connectivity: conn, ..WatershedConfig::default() };
        let out = watershed_split(&mask, &borders, &cfg).unwrap();

        // Same call, same answer.
        let again = watershed_split(&mask, &borders, &cfg).unwrap();
        prop_assert_eq!(out.labels(), again.labels());

        // Foreground is exactly preserved under the fresh-label policy.
        for r in 0..h {
            for c in 0..w {
                prop_assert_eq!(out.get(r, c) != 0, mask.get(r, c));
            }
        }

        // Each marker component keeps one label of its own.
        let marker_mask = BinaryMask::from_fn(h, w, |r, c| mask.get(r, c) && !borders.get(r, c));
        let markers = connected_components(&marker_mask, Connectivity::Eight);
        let mut label_of_marker = BTreeMap::new();
        for inst in instances_from_label_map(&markers) {
            let mut labels: BTreeSet<u32> = inst.pixels().map(|(r, c)| out.get(r, c)).collect();
            prop_assert_eq!(labels.len(), 1);
            let label = labels.pop_first().unwrap();
            prop_assert!(label != 0);
            prop_assert!(label_of_marker.insert(inst.id(), label).is_none());
        }
        let distinct: BTreeSet<u32> = label_of_marker.values().copied().collect();
        prop_assert_eq!(distinct.len(), label_of_marker.len());

        // Markers are 8-connected components, so whatever moves the flood
        // makes, every grown region stays 8-connected.
        for label in out.instance_ids() {
            let region = region_of(&out, label);
            prop_assert_eq!(
                connected_components(&region, Connectivity::Eight).instance_ids().len(),
                1
            );
        }
    }

    #[test]
    fn watershed_drop_keeps_exactly_the_seeded_components(
        mask in mask_strategy(14),
        border_bits in proptest::collection::vec(proptest::bool::weighted(0.3), 196),
        conn in prop_oneof![Just(Connectivity::Four), Just(Connectivity::Eight)],
    ) {
        let (h, w) = (mask.height(), mask.width());
        let borders = BinaryMask::new(h, w, border_bits[..h * w].to_vec()).unwrap();
        let cfg = WatershedConfig {
            flood_connectivity: conn,
            markerless_policy: MarkerlessPolicy::Drop,
            ..WatershedConfig::default()
        };
        let out = watershed_split(&mask, &borders, &cfg).unwrap();

        let marker_mask = BinaryMask::from_fn(h, w, |r, c| mask.get(r, c) && !borders.get(r, c));
        let mut expected = BinaryMask::empty(h, w);
        for inst in components_of(&mask, conn) {
            if inst.pixels().any(|(r, c)| marker_mask.get(r, c)) {
                for (r, c) in inst.pixels() {
                    expected.set(r, c, true);
                }
            }
        }
        for r in 0..h {
            for c in 0..w {
                prop_assert_eq!(out.get(r, c) != 0, expected.get(r, c));
            }
        }
    }

    #[test]
    fn resolved_overlaps_partition_the_union(
        m1 in mask_strategy(12),
        m2 in mask_strategy(12),
    ) {
        let a = components_of(&m1, Connectivity::Eight);
        let b = components_of(&m2, Connectivity::Eight);
        prop_assume!(!a.is_empty() && !b.is_empty());
        let offset = a.len() as u32;
        let mut input = a;
        for inst in &b {
            input.push(inst.with_id(inst.id() + offset).unwrap());
        }
        let output = resolve_overlaps(&input);

        let by_id: BTreeMap<u32, &InstanceMask> =
            input.iter().map(|inst| (inst.id(), inst)).collect();
        let mut claimed: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for inst in &output {
            let owner = by_id[&inst.id()];
            for (r, c) in inst.pixels() {
                prop_assert!(owner.contains(r, c));
                prop_assert!(claimed.insert((r, c), inst.id()).is_none());
            }
        }

        let mut multiplicity: BTreeMap<(usize, usize), Vec<u32>> = BTreeMap::new();
        for inst in &input {
            for p in inst.pixels() {
                multiplicity.entry(p).or_default().push(inst.id());
            }
        }
        let exclusive_count: BTreeMap<u32, usize> = input
            .iter()
            .map(|inst| {
                let n = inst.pixels().filter(|p| multiplicity[p].len() == 1).count();
                (inst.id(), n)
            })
            .collect();
        for (p, owners) in &multiplicity {
            match claimed.get(p) {
                Some(winner) => prop_assert!(owners.contains(winner)),
                // A contested pixel drops only when no claimant has any
                // exclusive pixel to measure distances from.
                None => prop_assert!(owners.iter().all(|id| exclusive_count[id] == 0)),
            }
            // A pixel only one instance wanted stays with that instance.
            if owners.len() == 1 {
                prop_assert_eq!(claimed[p], owners[0]);
            }
        }
    }
}

// --------------------------------------------------------------------- gbm

fn gbm_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (4usize..32, 1usize..4).prop_flat_map(|(n, f)| {
        (
            proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, f), n),
            proptest::collection::vec((0u32..=64).prop_map(|k| k as f64 / 64.0), n),
        )
    })
}

proptest! {
    #[test]
    fn gbm_text_round_trip_is_bitwise(
        (rows, y) in gbm_data(),
        n_trees in 1usize..8,
        max_depth in 1usize..4,
        shrinkage in prop_oneof![Just(0.1), Just(0.5), Just(1.0)],
    ) {
        let x = FeatureMatrix::from_rows(rows[0].len(), &rows).unwrap();
        let cfg = TrainingConfig {
            n_trees,
            max_depth,
            min_samples_leaf: 1,
            shrinkage,
            seed: 0,
        };
        let model = train_gbm(&x, &y, &cfg).unwrap();
        let text = model.to_text();
        let reparsed = GbmModel::from_text(&text).unwrap();
        prop_assert_eq!(&reparsed.to_text(), &text);
        for row in &rows {
            prop_assert_eq!(
                model.predict(row).unwrap().to_bits(),
                reparsed.predict(row).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn gbm_training_sse_never_increases(
        (rows, y) in gbm_data(),
        n_trees in 1usize..10,
    ) {
        let x = FeatureMatrix::from_rows(rows[0].len(), &rows).unwrap();
        let cfg = TrainingConfig {
            n_trees,
            max_depth: 3,
            min_samples_leaf: 1,
            shrinkage: 0.5,
            seed: 0,
        };
        let model = train_gbm(&x, &y, &cfg).unwrap();
        // Replay the boosting updates and watch the raw (unclamped) loss.
        let mut current = vec![model.base_score(); y.len()];
        let sse = |p: &[f64]| -> f64 {
            p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let mut last = sse(&current);
        for tree in model.trees() {
            for (i, row) in rows.iter().enumerate() {
                current[i] += model.shrinkage() * tree.predict(row);
            }
            let now = sse(&current);
            prop_assert!(now <= last + 1e-12, "round raised SSE from {last} to {now}");
            last = now;
        }
    }
}

// -------------------------------------------------------------------- eval

/// Maximum number of threshold-passing pairs over all one-to-one
/// assignments, by dynamic programming over ground-truth subsets.
fn exhaustive_max_matching(ious: &[Vec<f64>], threshold: f64) -> usize {
    let n_g = ious.first().map_or(0, Vec::len);
    let mut dp = vec![0usize; 1 << n_g];
    for row in ious {
        let mut next = dp.clone();
        for mask in 0..1usize << n_g {
            for (g, &v) in row.iter().enumerate() {
                if mask & (1 << g) == 0 && v > threshold {
                    let with = dp[mask] + 1;
                    let slot = &mut next[mask | (1 << g)];
                    *slot = (*slot).max(with);
                }
            }
        }
        dp = next;
    }
    dp.into_iter().max().unwrap_or(0)
}

proptest! {
    #[test]
    fn greedy_matching_attains_the_exhaustive_maximum(
        m1 in mask_strategy(8),
        m2 in mask_strategy(8),
    ) {
        let preds = components_of(&m1, Connectivity::Eight);
        let gts = components_of(&m2, Connectivity::Eight);
        prop_assume!(gts.len() <= 10);
        let ious = pairwise_iou(&preds, &gts);
        for t in KAGGLE_THRESHOLDS {
            let result = match_at_threshold(&preds, &gts, t).unwrap();
            prop_assert_eq!(result.pairs.len(), exhaustive_max_matching(&ious, t));
            prop_assert_eq!(result.fp_count, preds.len() - result.pairs.len());
            prop_assert_eq!(result.fn_count, gts.len() - result.pairs.len());
            for &(pred_id, gt_id, pair_iou) in &result.pairs {
                prop_assert!(pair_iou > t);
                let p = preds.iter().position(|m| m.id() == pred_id).unwrap();
                let g = gts.iter().position(|m| m.id() == gt_id).unwrap();
                prop_assert_eq!(pair_iou, ious[p][g]);
            }
        }
    }
}

// ---------------------------------------------------------------------- io

proptest! {
    #[test]
    fn rle_round_trip_preserves_instances(mask in mask_strategy(14)) {
        let (h, w) = (mask.height(), mask.width());
        for inst in components_of(&mask, Connectivity::Eight) {
            let encoded = encode_rle(&inst, h);

            // Runs are ascending and separated.
            let tokens: Vec<usize> =
                encoded.split_whitespace().map(|t| t.parse().unwrap()).collect();
            let mut prev_end = 0;
            for pair in tokens.chunks(2) {
                prop_assert!(pair[0] > prev_end);
                prop_assert!(pair[1] >= 1);
                prev_end = pair[0] + pair[1] - 1;
            }
            prop_assert!(prev_end <= h * w);

            let decoded = decode_rle(&encoded, inst.id(), h, w).unwrap();
            prop_assert_eq!(&decoded, &inst);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn png_round_trips_are_lossless(mask in mask_strategy(14)) {
        let dir = tempfile::tempdir().unwrap();
        let map = connected_components(&mask, Connectivity::Four);

        let map_path = dir.path().join("map.png");
        write_label_png(&map_path, &map).unwrap();
        let map_back = read_label_png(&map_path).unwrap();
        prop_assert_eq!(map_back.labels(), map.labels());

        let mask_path = dir.path().join("mask.png");
        write_mask_png(&mask_path, &mask).unwrap();
        let mask_back = read_mask_png(&mask_path).unwrap();
        prop_assert_eq!(mask_back.bits(), mask.bits());
    }
}

// ------------------------------------------------------------------ region

proptest! {
    #[test]
    fn region_features_are_translation_invariant(
        mask in mask_strategy(10),
        dr in 0usize..=7,
        dc in 0usize..=7,
    ) {
        for inst in components_of(&mask, Connectivity::Eight) {
            let shifted: Vec<(usize, usize)> =
                inst.pixels().map(|(r, c)| (r + dr, c + dc)).collect();
            let moved = InstanceMask::from_pixels(inst.id(), &shifted).unwrap();
            let p0 = compute_properties(&inst);
            let p1 = compute_properties(&moved);

            prop_assert_eq!(p0.area, p1.area);
            prop_assert_eq!(p0.convex_area, p1.convex_area);
            prop_assert_eq!(p0.perimeter, p1.perimeter);
            prop_assert_eq!(p0.bbox_extent, p1.bbox_extent);
            prop_assert_eq!(p0.solidity, p1.solidity);
            prop_assert_eq!(p0.equivalent_diameter, p1.equivalent_diameter);
            // Square roots amplify rounding near zero eigenvalues, so the
            // tolerances apply to the squared quantities.
            let scale = 1.0 + p0.major_axis_length * p0.major_axis_length;
            prop_assert!((sq(p0.eccentricity) - sq(p1.eccentricity)).abs() < 1e-9);
            prop_assert!(
                (sq(p0.major_axis_length) - sq(p1.major_axis_length)).abs() < 1e-9 * scale
            );
            prop_assert!(
                (sq(p0.minor_axis_length) - sq(p1.minor_axis_length)).abs() < 1e-9 * scale
            );
            prop_assert!((p1.centroid.0 - p0.centroid.0 - dr as f64).abs() < 1e-9);
            prop_assert!((p1.centroid.1 - p0.centroid.1 - dc as f64).abs() < 1e-9);
        }
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn orient(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex-area oracle: a bounding-box pixel center lies in the hull of the
/// pixel centers iff some non-degenerate triangle of pixel centers contains
/// it (Caratheodory, with collinear point sets handled separately).
fn convex_area_by_triangles(inst: &InstanceMask) -> usize {
    let pts: Vec<(i64, i64)> = inst.pixels().map(|(r, c)| (r as i64, c as i64)).collect();
    let collinear =
        pts.len() < 3 || pts.iter().all(|&p| orient(pts[0], pts[1], p) == 0);
    if collinear {
        return inst.area();
    }
    let b = inst.bbox();
    let mut count = 0;
    for r in b.min_row..=b.max_row {
        for c in b.min_col..=b.max_col {
            let p = (r as i64, c as i64);
            let mut inside = false;
            'search: for (i, &a) in pts.iter().enumerate() {
                for (j, &q) in pts.iter().enumerate().skip(i + 1) {
                    for &s in pts.iter().skip(j + 1) {
                        if orient(a, q, s) == 0 {
                            continue;
                        }
                        let (s1, s2, s3) = (orient(a, q, p), orient(q, s, p), orient(s, a, p));
                        if (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0) {
                            inside = true;
                            break 'search;
                        }
                    }
                }
            }
            if inside {
                count += 1;
            }
        }
    }
    count
}

/// Axis oracle: eigenvalues of the f64 covariance matrix accumulated over
/// centered coordinates, solved through the determinant discriminant.
fn axes_by_covariance(inst: &InstanceMask) -> (f64, f64, f64) {
    let n = inst.area() as f64;
    let (mut mr, mut mc) = (0.0, 0.0);
    for (r, c) in inst.pixels() {
        mr += r as f64;
        mc += c as f64;
    }
    mr /= n;
    mc /= n;
    let (mut a, mut bb, mut c2) = (0.0, 0.0, 0.0);
    for (r, c) in inst.pixels() {
        let (dr, dc) = (r as f64 - mr, c as f64 - mc);
        a += dr * dr;
        bb += dr * dc;
        c2 += dc * dc;
    }
    a /= n;
    bb /= n;
    c2 /= n;
    let half_trace = (a + c2) / 2.0;
    let det = a * c2 - bb * bb;
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    let l1 = half_trace + disc;
    let l2 = (half_trace - disc).max(0.0);
    let ecc = if l1 > 0.0 { (1.0 - l2 / l1).max(0.0).sqrt() } else { 0.0 };
    (ecc, 4.0 * l1.sqrt(), 4.0 * l2.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn convex_area_matches_the_triangle_oracle(mask in mask_strategy(9)) {
        for inst in components_of(&mask, Connectivity::Eight) {
            prop_assume!(inst.area() <= 18);
            prop_assert_eq!(compute_properties(&inst).convex_area, convex_area_by_triangles(&inst));
        }
    }

    #[test]
    fn axes_match_a_direct_eigensolver(mask in mask_strategy(12)) {
        for inst in components_of(&mask, Connectivity::Eight) {
            let props = compute_properties(&inst);
            let (ecc, major, minor) = axes_by_covariance(&inst);
            let scale = 1.0 + sq(props.major_axis_length);
            prop_assert!((sq(props.eccentricity) - sq(ecc)).abs() < 1e-9);
            prop_assert!((sq(props.major_axis_length) - sq(major)).abs() < 1e-9 * scale);
            prop_assert!((sq(props.minor_axis_length) - sq(minor)).abs() < 1e-9 * scale);
        }
    }
}

// The matching DP above also certifies intersection_area transitively, but
// pin the scalar down directly as well.
proptest! {
    #[test]
    fn intersection_area_is_a_symmetric_pixel_count(
        m1 in mask_strategy(10),
        m2 in mask_strategy(10),
    ) {
        let a = components_of(&m1, Connectivity::Eight);
        let b = components_of(&m2, Connectivity::Eight);
        for x in &a {
            for y in &b {
                let brute = x
                    .pixels()
                    .filter(|&(r, c)| y.contains(r, c))
                    .count();
                prop_assert_eq!(intersection_area(x, y), brute);
                prop_assert_eq!(intersection_area(y, x), brute);
            }
        }
    }
}
