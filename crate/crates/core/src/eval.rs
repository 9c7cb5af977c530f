//! Instance-segmentation metrics: IoU matching, mAP over an IoU-threshold
//! sweep, symmetric object-level Dice, detection precision/recall with
//! over/under-segmentation counts, nucleus cluster sizes, and binned
//! recall sensitivity reports.
//!
//! Conventions this module commits to (alternatives exist in the wild):
//! an image with no ground truth and no predictions scores 1.0; empty
//! precision/recall denominators score 1.0 (vacuously correct); averages
//! over zero qualifying images score 1.0 for object Dice and 0.0 for mAP
//! over an empty corpus.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::EvalError;
use crate::mask::{
    connected_components, foreground_union, instances_from_label_map, intersection_area,
    morphology, pairwise_iou, Connectivity, InstanceMask, LabelMap, MorphOp, StructuringElement,
};
use crate::region::compute_properties;

/// IoU thresholds for the averaged-precision sweep: 0.50 to 0.95 step 0.05.
pub const KAGGLE_THRESHOLDS: [f64; 10] =
    [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// One evaluation unit: a prediction set against its ground truth.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub preds: Vec<InstanceMask>,
    pub gts: Vec<InstanceMask>,
}

/// Outcome of matching one prediction set to one ground truth set.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub threshold: f64,
    /// (pred_id, gt_id, iou) triples; each id appears at most once.
    pub pairs: Vec<(u32, u32, f64)>,
    pub fp_count: usize,
    pub fn_count: usize,
}

/// Candidate pairs above 0.5 IoU, sorted once so every threshold reuses
/// the same greedy pass. Entries are (iou, pred index, gt index).
fn sorted_candidates(ious: &[Vec<f64>]) -> Vec<(f64, usize, usize)> {
    let mut entries = Vec::new();
    for (p, row) in ious.iter().enumerate() {
        for (g, &v) in row.iter().enumerate() {
            if v > 0.5 {
                entries.push((v, p, g));
            }
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));
    entries
}

/// Greedy descent over the sorted candidates. With disjoint predictions
/// and disjoint ground truths, any threshold above 0.5 admits at most one
/// candidate per mask, so this equals the maximum-cardinality assignment.
/// Ties (possible only with overlapping inputs) break toward the lower
/// pred index, then lower gt index.
fn greedy_pairs(
    entries: &[(f64, usize, usize)],
    n_preds: usize,
    n_gts: usize,
    threshold: f64,
) -> Vec<(usize, usize, f64)> {
    let mut pred_used = vec![false; n_preds];
    let mut gt_used = vec![false; n_gts];
    let mut pairs = Vec::new();
    for &(iou, p, g) in entries {
        if iou > threshold && !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            pairs.push((p, g, iou));
        }
    }
    pairs
}

/// Pairs predictions with ground truths at a strict IoU threshold:
/// (p, g) is a pair iff iou(p, g) > t. TP = pairs, FP = unmatched
/// predictions, FN = unmatched ground truths.
pub fn match_at_threshold(
    preds: &[InstanceMask],
    gts: &[InstanceMask],
    threshold: f64,
) -> Result<MatchResult, EvalError> {
    if threshold < 0.5 {
        return Err(EvalError::ThresholdTooLow(threshold));
    }
    let ious = pairwise_iou(preds, gts);
    let entries = sorted_candidates(&ious);
    let pairs = greedy_pairs(&entries, preds.len(), gts.len(), threshold);
    Ok(MatchResult {
        threshold,
        fp_count: preds.len() - pairs.len(),
        fn_count: gts.len() - pairs.len(),
        pairs: pairs
            .into_iter()
            .map(|(p, g, iou)| (preds[p].id(), gts[g].id(), iou))
            .collect(),
    })
}

/// Per-threshold scores s(t) = TP/(TP+FP+FN) for one image; an image that
/// is empty on both sides scores 1.0 at every threshold.
fn image_threshold_scores(image: &EvalImage) -> [f64; 10] {
    if image.preds.is_empty() && image.gts.is_empty() {
        return [1.0; 10];
    }
    let ious = pairwise_iou(&image.preds, &image.gts);
    let entries = sorted_candidates(&ious);
    let mut scores = [0.0; 10];
    for (k, &t) in KAGGLE_THRESHOLDS.iter().enumerate() {
        let tp = greedy_pairs(&entries, image.preds.len(), image.gts.len(), t).len();
        let fp = image.preds.len() - tp;
        let fn_count = image.gts.len() - tp;
        scores[k] = tp as f64 / (tp + fp + fn_count) as f64;
    }
    scores
}

/// Mean average precision over the ten-threshold IoU sweep.
///
/// Returns (map_score, per-threshold AP). Each image's score is the mean
/// of its ten s(t) values; map_score averages image scores and the curve
/// averages per threshold. An empty corpus scores 0.0 everywhere.
pub fn kaggle_map(images: &[EvalImage]) -> (f64, [f64; 10]) {
    if images.is_empty() {
        return (0.0, [0.0; 10]);
    }
    let per_image: Vec<[f64; 10]> = images.par_iter().map(image_threshold_scores).collect();
    let n = images.len() as f64;
    let mut curve = [0.0; 10];
    let mut map_score = 0.0;
    for scores in &per_image {
        map_score += scores.iter().sum::<f64>() / 10.0;
        for (k, &s) in scores.iter().enumerate() {
            curve[k] += s;
        }
    }
    for v in &mut curve {
        *v /= n;
    }
    (map_score / n, curve)
}

/// How per-image counts combine into dataset precision/recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    /// Dataset-total counts: ΣTP/(ΣTP+ΣFP) and ΣTP/(ΣTP+ΣFN).
    Micro,
    /// Unweighted mean of per-image precision/recall.
    Macro,
}

/// Detection quality at one threshold. `tp`, `fp`, `fn_count`, and the
/// segmentation-error counts are dataset totals regardless of aggregation;
/// only precision/recall depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionStats {
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub oseg_count: usize,
    pub useg_count: usize,
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

struct ImageDetection {
    tp: usize,
    fp: usize,
    fn_count: usize,
    oseg: usize,
    useg: usize,
}

fn image_detection(image: &EvalImage, threshold: f64) -> Result<ImageDetection, EvalError> {
    let m = match_at_threshold(&image.preds, &image.gts, threshold)?;
    let tp = m.pairs.len();

    // Majority-overlap fractions, compared in integers so they are exact:
    // |p∩g|/|p| >= 1/2 iff 2|p∩g| >= |p|.
    let mut oseg = 0;
    for g in &image.gts {
        let claimants = image
            .preds
            .iter()
            .filter(|p| 2 * intersection_area(p, g) >= p.area())
            .count();
        if claimants >= 2 {
            oseg += 1;
        }
    }
    let mut useg = 0;
    for p in &image.preds {
        let covered = image
            .gts
            .iter()
            .filter(|g| 2 * intersection_area(p, g) >= g.area())
            .count();
        if covered >= 2 {
            useg += 1;
        }
    }
    Ok(ImageDetection { tp, fp: m.fp_count, fn_count: m.fn_count, oseg, useg })
}

/// Precision, recall, and over/under-segmentation counts at a threshold.
///
/// A ground truth is over-segmented when at least two predictions each lie
/// majority-inside it (|p∩g|/|p| ≥ 0.5); a prediction under-segments when
/// it majority-covers at least two ground truths (|p∩g|/|g| ≥ 0.5).
pub fn detection_stats(
    images: &[EvalImage],
    threshold: f64,
    aggregate: Aggregate,
) -> Result<DetectionStats, EvalError> {
    let per_image: Vec<ImageDetection> = images
        .par_iter()
        .map(|img| image_detection(img, threshold))
        .collect::<Result<_, _>>()?;

    let tp: usize = per_image.iter().map(|d| d.tp).sum();
    let fp: usize = per_image.iter().map(|d| d.fp).sum();
    let fn_count: usize = per_image.iter().map(|d| d.fn_count).sum();
    let oseg_count: usize = per_image.iter().map(|d| d.oseg).sum();
    let useg_count: usize = per_image.iter().map(|d| d.useg).sum();

    let (precision, recall) = match aggregate {
        Aggregate::Micro => (ratio_or_one(tp, tp + fp), ratio_or_one(tp, tp + fn_count)),
        Aggregate::Macro => {
            if per_image.is_empty() {
                (1.0, 1.0)
            } else {
                let n = per_image.len() as f64;
                let p: f64 =
                    per_image.iter().map(|d| ratio_or_one(d.tp, d.tp + d.fp)).sum::<f64>() / n;
                let r: f64 = per_image
                    .iter()
                    .map(|d| ratio_or_one(d.tp, d.tp + d.fn_count))
                    .sum::<f64>()
                    / n;
                (p, r)
            }
        }
    };
    Ok(DetectionStats { precision, recall, tp, fp, fn_count, oseg_count, useg_count })
}

fn dice(a: &InstanceMask, b: &InstanceMask) -> f64 {
    2.0 * intersection_area(a, b) as f64 / (a.area() + b.area()) as f64
}

/// Area-weighted Dice of each object against its maximum-overlap
/// counterpart; zero when no counterpart exists. Ties break toward the
/// lower slice index (same value either way: tied best overlaps of zero
/// give Dice 0 regardless of the witness).
fn directed_object_dice(objects: &[InstanceMask], counterparts: &[InstanceMask]) -> f64 {
    let total: usize = objects.iter().map(|o| o.area()).sum();
    if total == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for obj in objects {
        if counterparts.is_empty() {
            continue;
        }
        let best = counterparts
            .iter()
            .enumerate()
            .max_by_key(|(i, c)| (intersection_area(obj, c), std::cmp::Reverse(*i)))
            .map(|(_, c)| c)
            .expect("nonempty counterparts");
        acc += (obj.area() as f64 / total as f64) * dice(obj, best);
    }
    acc
}

/// Symmetric object-level Dice:
/// ½[Σᵢ (|Gᵢ|/Σ|G|)·dice(Gᵢ, best pred) + Σⱼ (|Pⱼ|/Σ|P|)·dice(Pⱼ, best gt)],
/// averaged over images where prediction ∪ ground truth is nonempty.
/// A corpus with no such image scores 1.0 (nothing to segment, nothing
/// segmented wrongly).
pub fn object_dice(images: &[EvalImage]) -> f64 {
    let scores: Vec<Option<f64>> = images
        .par_iter()
        .map(|img| {
            if img.preds.is_empty() && img.gts.is_empty() {
                return None;
            }
            let gt_term = directed_object_dice(&img.gts, &img.preds);
            let pred_term = directed_object_dice(&img.preds, &img.gts);
            Some(0.5 * (gt_term + pred_term))
        })
        .collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in scores.into_iter().flatten() {
        sum += s;
        n += 1;
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// Cluster size per instance, aligned with the input slice: dilate the
/// foreground union by a square element, take 8-connected components of
/// the dilated mask, and count how many instances land in each component.
/// An instance is assigned by its raster-first pixel, which also covers
/// instances the dilation could in principle leave spanning components.
fn cluster_sizes_of(
    instances: &[InstanceMask],
    height: usize,
    width: usize,
    dilation_radius: usize,
) -> Result<Vec<usize>, EvalError> {
    let union = foreground_union(instances, height, width)
        .map_err(|e| EvalError::DimensionMismatch(e.to_string()))?;
    let dilated = if dilation_radius == 0 {
        union
    } else {
        morphology(&union, MorphOp::Dilate, dilation_radius, StructuringElement::Square)
    };
    let comps = connected_components(&dilated, Connectivity::Eight);
    let component_of: Vec<u32> = instances
        .iter()
        .map(|inst| {
            let (r, c) = inst.first_pixel();
            comps.get(r, c)
        })
        .collect();
    let mut per_component: BTreeMap<u32, usize> = BTreeMap::new();
    for &comp in &component_of {
        *per_component.entry(comp).or_insert(0) += 1;
    }
    Ok(component_of.iter().map(|comp| per_component[comp]).collect())
}

/// Cluster size of every ground-truth instance in a label map, keyed by
/// instance id. Two nuclei whose square dilations touch (8-connectivity)
/// are in one cluster.
pub fn cluster_sizes(
    gt: &LabelMap,
    dilation_radius: usize,
) -> Result<BTreeMap<u32, usize>, EvalError> {
    let instances = instances_from_label_map(gt);
    let sizes = cluster_sizes_of(&instances, gt.height(), gt.width(), dilation_radius)?;
    Ok(instances.iter().map(|i| i.id()).zip(sizes).collect())
}

/// Ground-truth property a sensitivity report stratifies by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityProperty {
    Area,
    Eccentricity,
    ClusterSize,
}

impl std::fmt::Display for SensitivityProperty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SensitivityProperty::Area => "area",
            SensitivityProperty::Eccentricity => "eccentricity",
            SensitivityProperty::ClusterSize => "cluster_size",
        })
    }
}

impl std::str::FromStr for SensitivityProperty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "area" => Ok(SensitivityProperty::Area),
            "eccentricity" => Ok(SensitivityProperty::Eccentricity),
            "cluster_size" => Ok(SensitivityProperty::ClusterSize),
            other => Err(format!(
                "unknown property {other:?}, expected area, eccentricity, or cluster_size"
            )),
        }
    }
}

/// One stratum of ground-truth instances and its recall.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub gt_count: usize,
    pub matched: usize,
    /// None when the bin holds no instances (fixed cluster-size groups
    /// can be empty; equal-count bins cannot).
    pub recall: Option<f64>,
}

/// Recall broken down by a ground-truth property.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub property: SensitivityProperty,
    pub threshold: f64,
    pub bins: Vec<SensitivityBin>,
}

/// Recall at `threshold` stratified by a per-instance property.
///
/// Continuous properties split the value-sorted population into `bins`
/// equal-count groups (sizes differ by at most one; ties stay in sort
/// order by (value, image_id, gt id)). Cluster size uses the fixed groups
/// 1, 2, 3–5, and ≥6.
pub fn sensitivity_report(
    images: &[EvalImage],
    property: SensitivityProperty,
    bins: usize,
    threshold: f64,
) -> Result<SensitivityReport, EvalError> {
    if bins == 0 {
        return Err(EvalError::InsufficientData("bin count must be positive".into()));
    }

    // (value, image_id, gt_id, matched) for every ground-truth instance.
    let mut rows: Vec<(f64, &str, u32, bool)> = Vec::new();
    for img in images {
        let matched: Vec<u32> = match_at_threshold(&img.preds, &img.gts, threshold)?
            .pairs
            .iter()
            .map(|&(_, g, _)| g)
            .collect();
        let values: Vec<f64> = match property {
            SensitivityProperty::Area => img.gts.iter().map(|g| g.area() as f64).collect(),
            SensitivityProperty::Eccentricity => {
                img.gts.iter().map(|g| compute_properties(g).eccentricity).collect()
            }
            SensitivityProperty::ClusterSize => {
                cluster_sizes_of(&img.gts, img.height, img.width, 1)?
                    .into_iter()
                    .map(|s| s as f64)
                    .collect()
            }
        };
        for (g, v) in img.gts.iter().zip(values) {
            rows.push((v, &img.image_id, g.id(), matched.contains(&g.id())));
        }
    }
    if rows.len() < bins {
        return Err(EvalError::InsufficientData(format!(
            "{} ground-truth instances cannot fill {bins} bins",
            rows.len()
        )));
    }

    let report_bins = match property {
        SensitivityProperty::ClusterSize => {
            let groups: [(&str, f64, f64); 4] = [
                ("1", 1.0, 1.0),
                ("2", 2.0, 2.0),
                ("3-5", 3.0, 5.0),
                (">=6", 6.0, f64::INFINITY),
            ];
            groups
                .iter()
                .map(|&(label, lo, hi)| {
                    let members: Vec<_> =
                        rows.iter().filter(|r| r.0 >= lo && r.0 <= hi).collect();
                    let matched = members.iter().filter(|r| r.3).count();
                    SensitivityBin {
                        label: label.to_string(),
                        lo,
                        hi,
                        gt_count: members.len(),
                        matched,
                        recall: if members.is_empty() {
                            None
                        } else {
                            Some(matched as f64 / members.len() as f64)
                        },
                    }
                })
                .collect()
        }
        _ => {
            rows.sort_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
            });
            let n = rows.len();
            let base = n / bins;
            let extra = n % bins;
            let mut out = Vec::with_capacity(bins);
            let mut at = 0;
            for i in 0..bins {
                let size = base + usize::from(i < extra);
                let chunk = &rows[at..at + size];
                at += size;
                let matched = chunk.iter().filter(|r| r.3).count();
                let (lo, hi) = (chunk[0].0, chunk[chunk.len() - 1].0);
                out.push(SensitivityBin {
                    label: format!("[{lo}, {hi}]"),
                    lo,
                    hi,
                    gt_count: size,
                    matched,
                    recall: Some(matched as f64 / size as f64),
                });
            }
            out
        }
    };
    Ok(SensitivityReport { property, threshold, bins: report_bins })
}

/// Headline metrics for one prediction source.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map_score: f64,
    pub ap_by_threshold: [f64; 10],
    pub object_dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub oseg_count: usize,
    pub useg_count: usize,
    pub image_count: usize,
}

/// Computes the full report: mAP sweep, object Dice, and detection stats
/// at `threshold`.
pub fn evaluate(
    images: &[EvalImage],
    threshold: f64,
    aggregate: Aggregate,
) -> Result<EvalReport, EvalError> {
    let (map_score, ap_by_threshold) = kaggle_map(images);
    let dice = object_dice(images);
    let stats = detection_stats(images, threshold, aggregate)?;
    Ok(EvalReport {
        map_score,
        ap_by_threshold,
        object_dice: dice,
        precision: stats.precision,
        recall: stats.recall,
        oseg_count: stats.oseg_count,
        useg_count: stats.useg_count,
        image_count: images.len(),
    })
}
