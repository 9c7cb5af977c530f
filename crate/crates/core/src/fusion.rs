//! IoU-regression targets, out-of-fold training, and NMS-based fusion of
//! two candidate mask sources.
//!
//! Both sources are featurized identically; no feature marks a mask's
//! origin. One shared model scores every candidate, and greedy NMS over the
//! pooled, score-sorted list decides which masks reach the output.

use crate::error::{MaskError, TrainError};
use crate::gbm::{train_gbm, FeatureMatrix, GbmModel, TrainingConfig};
use crate::mask::{iou, label_map_from_instances, InstanceMask, LabelMap, OverlapPolicy};
use crate::postprocess::resolve_overlaps;
use crate::region::{compute_properties, feature_vector, FEATURE_COUNT};

/// Candidate origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    A,
    B,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::A => "A",
            Source::B => "B",
        })
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Source::A),
            "B" => Ok(Source::B),
            other => Err(format!("unknown source {other:?}, expected A or B")),
        }
    }
}

/// Fusion thresholds. `score_threshold` floors the predicted IoU;
/// `nms_iou_threshold` caps the mask overlap among kept candidates.
#[derive(Debug, Clone)]
pub struct FusionConfig {
    pub score_threshold: f64,
    pub nms_iou_threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { score_threshold: 0.3, nms_iou_threshold: 0.3 }
    }
}

impl FusionConfig {
    fn validate(&self) -> Result<(), MaskError> {
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("nms_iou_threshold", self.nms_iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MaskError::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-prediction regression target: best IoU against any ground-truth
/// instance, 0 when there is none.
pub fn best_iou_targets(preds: &[InstanceMask], gts: &[InstanceMask]) -> Vec<f64> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| iou(p, g)).fold(0.0, f64::max))
        .collect()
}

/// One training image: both candidate sets and the ground truth.
#[derive(Debug, Clone)]
pub struct FusionTrainImage {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub cand_a: Vec<InstanceMask>,
    pub cand_b: Vec<InstanceMask>,
    pub gt: Vec<InstanceMask>,
}

/// Out-of-fold score for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct OofPrediction {
    pub image_id: String,
    pub source: Source,
    pub instance_id: u32,
    pub predicted: f64,
    pub target: f64,
}

fn fnv1a64(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct ImageRows {
    features: Vec<[f64; FEATURE_COUNT]>,
    targets: Vec<f64>,
    meta: Vec<(Source, u32)>,
}

fn featurize(image: &FusionTrainImage) -> ImageRows {
    let mut rows = ImageRows { features: Vec::new(), targets: Vec::new(), meta: Vec::new() };
    for (source, cands) in [(Source::A, &image.cand_a), (Source::B, &image.cand_b)] {
        let targets = best_iou_targets(cands, &image.gt);
        for (inst, target) in cands.iter().zip(targets) {
            let props = compute_properties(inst);
            rows.features.push(feature_vector(&props, image.height, image.width));
            rows.targets.push(target);
            rows.meta.push((source, inst.id()));
        }
    }
    rows
}

/// Trains the IoU regressor with k-fold out-of-fold predictions.
///
/// Images are ordered by (stable hash of image id, image id) and dealt
/// round-robin into k folds, so the partition is reproducible and k = image
/// count degenerates to leave-one-out. Each fold's candidates are scored by
/// a model trained on the other folds; the returned model is trained on all
/// rows.
pub fn oof_train(
    images: &[FusionTrainImage],
    k: usize,
    cfg: &TrainingConfig,
) -> Result<(GbmModel, Vec<OofPrediction>), TrainError> {
    if k < 2 {
        return Err(TrainError::InsufficientData(format!("need k >= 2 folds, got {k}")));
    }
    if images.len() < k {
        return Err(TrainError::InsufficientData(format!(
            "need at least {k} images for {k} folds, got {}",
            images.len()
        )));
    }

    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| {
        (fnv1a64(&images[a].image_id), &images[a].image_id)
            .cmp(&(fnv1a64(&images[b].image_id), &images[b].image_id))
    });
    let mut fold_of = vec![0usize; images.len()];
    for (pos, &img) in order.iter().enumerate() {
        fold_of[img] = pos % k;
    }

    let rows: Vec<ImageRows> = images.iter().map(featurize).collect();
    if rows.iter().all(|r| r.targets.is_empty()) {
        return Err(TrainError::InsufficientData(
            "no candidate instances in any image".into(),
        ));
    }

    let mut oof = Vec::new();
    for fold in 0..k {
        let mut x = FeatureMatrix::new(FEATURE_COUNT);
        let mut y = Vec::new();
        for (img, r) in rows.iter().enumerate() {
            if fold_of[img] == fold {
                continue;
            }
            for (f, &t) in r.features.iter().zip(&r.targets) {
                x.push_row(f).map_err(TrainError::Gbm)?;
                y.push(t);
            }
        }
        let model = train_gbm(&x, &y, cfg)?;
        for (img, r) in rows.iter().enumerate() {
            if fold_of[img] != fold {
                continue;
            }
            for ((f, &t), &(source, instance_id)) in
                r.features.iter().zip(&r.targets).zip(&r.meta)
            {
                oof.push(OofPrediction {
                    image_id: images[img].image_id.clone(),
                    source,
                    instance_id,
                    predicted: model.predict(f).map_err(TrainError::Gbm)?,
                    target: t,
                });
            }
        }
    }

    let mut x = FeatureMatrix::new(FEATURE_COUNT);
    let mut y = Vec::new();
    for r in &rows {
        for (f, &t) in r.features.iter().zip(&r.targets) {
            x.push_row(f).map_err(TrainError::Gbm)?;
            y.push(t);
        }
    }
    let final_model = train_gbm(&x, &y, cfg)?;
    Ok((final_model, oof))
}

/// A candidate with its predicted IoU.
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub source: Source,
    pub source_id: u32,
    pub score: f64,
    pub mask: InstanceMask,
}

/// Provenance of one instance in the fused output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedInstance {
    pub id: u32,
    pub source: Source,
    pub source_id: u32,
    pub score: f64,
}

/// Full fusion result, including the candidates NMS removed; kept around so
/// suppression decisions can be audited.
#[derive(Debug, Clone)]
pub struct FuseOutcome {
    pub label_map: LabelMap,
    pub instances: Vec<FusedInstance>,
    pub kept: Vec<ScoredCandidate>,
    pub suppressed: Vec<ScoredCandidate>,
    pub below_threshold: Vec<ScoredCandidate>,
}

/// Scores, thresholds, NMS-filters, and paints both candidate sets into one
/// label map; see [`fuse_with_trace`] for the retained intermediate sets.
pub fn fuse(
    cand_a: &[InstanceMask],
    cand_b: &[InstanceMask],
    model: &GbmModel,
    cfg: &FusionConfig,
    height: usize,
    width: usize,
) -> Result<(LabelMap, Vec<FusedInstance>), MaskError> {
    let outcome = fuse_with_trace(cand_a, cand_b, model, cfg, height, width)?;
    Ok((outcome.label_map, outcome.instances))
}

/// Fusion pipeline:
/// 1. score every candidate from both sources;
/// 2. drop scores below `score_threshold`;
/// 3. sort by descending score (ties: source A first, then lower id);
/// 4. greedy NMS: keep a candidate iff its IoU with every kept one is
///    ≤ `nms_iou_threshold`;
/// 5. split residual partial overlaps with `resolve_overlaps`;
/// 6. paint fresh ids 1..n in keep order.
pub fn fuse_with_trace(
    cand_a: &[InstanceMask],
    cand_b: &[InstanceMask],
    model: &GbmModel,
    cfg: &FusionConfig,
    height: usize,
    width: usize,
) -> Result<FuseOutcome, MaskError> {
    cfg.validate()?;
    if model.feature_count() != FEATURE_COUNT {
        return Err(MaskError::Config(format!(
            "model expects {} features, masks have {}",
            model.feature_count(),
            FEATURE_COUNT
        )));
    }
    for inst in cand_a.iter().chain(cand_b) {
        let b = inst.bbox();
        if b.max_row >= height || b.max_col >= width {
            return Err(MaskError::OutOfBounds { id: inst.id(), height, width });
        }
    }

    let mut eligible = Vec::new();
    let mut below_threshold = Vec::new();
    for (source, cands) in [(Source::A, cand_a), (Source::B, cand_b)] {
        for inst in cands {
            let features = feature_vector(&compute_properties(inst), height, width);
            let score = model
                .predict(&features)
                .expect("feature vector arity matches the checked model");
            let scored =
                ScoredCandidate { source, source_id: inst.id(), score, mask: inst.clone() };
            if score < cfg.score_threshold {
                below_threshold.push(scored);
            } else {
                eligible.push(scored);
            }
        }
    }
    eligible.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.source_id.cmp(&b.source_id))
    });

    let mut kept: Vec<ScoredCandidate> = Vec::new();
    let mut suppressed = Vec::new();
    for cand in eligible {
        if kept.iter().all(|k| iou(&cand.mask, &k.mask) <= cfg.nms_iou_threshold) {
            kept.push(cand);
        } else {
            suppressed.push(cand);
        }
    }

    // Temporary ids follow keep order, so overlap ties favor the higher
    // score and survivors map back to their candidate.
    let numbered: Vec<InstanceMask> = kept
        .iter()
        .enumerate()
        .map(|(i, c)| c.mask.with_id(i as u32 + 1).expect("positive id"))
        .collect();
    let resolved = resolve_overlaps(&numbered);

    let mut instances = Vec::with_capacity(resolved.len());
    let mut final_masks = Vec::with_capacity(resolved.len());
    for (pos, mask) in resolved.iter().enumerate() {
        let origin = &kept[(mask.id() - 1) as usize];
        let id = pos as u32 + 1;
        instances.push(FusedInstance {
            id,
            source: origin.source,
            source_id: origin.source_id,
            score: origin.score,
        });
        final_masks.push(mask.with_id(id)?);
    }
    let label_map = label_map_from_instances(&final_masks, height, width, OverlapPolicy::Error)?;
    Ok(FuseOutcome { label_map, instances, kept, suppressed, below_threshold })
}
