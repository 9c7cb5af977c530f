//! Instance-mask tooling for nuclei segmentation pipelines.
//!
//! The crate covers everything around the segmentation networks themselves:
//! candidate masks come in as files, cleaned instance sets and evaluation
//! reports come out.
//!
//! * [`mask`] — label maps, per-instance bitmasks, connected components,
//!   binary morphology, exact Euclidean distance transform, IoU.
//! * [`region`] — structural region properties (moments, contour perimeter,
//!   convex area) and the fixed 11-column feature vector.
//! * [`targets`] — nuclei + touching-border training target channels.
//! * [`postprocess`] — small-mask removal, hole filling, marker-controlled
//!   watershed splitting, distance-based overlap resolution.
//! * [`gbm`] — gradient-boosted regression trees predicting per-mask IoU.
//! * [`fusion`] — out-of-fold training harness and NMS-based fusion of two
//!   candidate mask sources.
//! * [`eval`] — mAP over IoU thresholds, object-level Dice, precision/recall,
//!   over/under-segmentation counts, sensitivity analysis.
//! * [`synth`] — deterministic synthetic nuclei scenes and error-profile
//!   degradation for desk-scale corpora.
//! * [`io`] — 16-bit PNG label maps, run-length CSV masks, feature and
//!   report tables.
//!
//! All values are immutable after construction and every operation is a pure
//! function of its inputs, so images can be processed in parallel freely.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod gbm;
pub mod io;
pub mod mask;
pub mod postprocess;
pub mod region;
pub mod synth;
pub mod targets;

pub use error::{EvalError, FileError, GbmError, MaskError, SynthError, TrainError};
pub use eval::{
    Aggregate, DetectionStats, EvalImage, EvalReport, MatchResult, SensitivityBin,
    SensitivityProperty, SensitivityReport, KAGGLE_THRESHOLDS,
};
pub use fusion::{
    FuseOutcome, FusedInstance, FusionConfig, FusionTrainImage, OofPrediction, ScoredCandidate,
    Source,
};
pub use gbm::{FeatureMatrix, GbmModel, RegressionTree, TrainingConfig};
pub use io::{FeatureRow, MaskFormat};
pub use mask::{
    BBox, BinaryMask, Connectivity, DistanceField, InstanceMask, LabelMap, MorphOp, OverlapPolicy,
    StructuringElement,
};
pub use postprocess::{
    CleanConfig, ElevationSource, MarkerlessPolicy, RawPrediction, WatershedConfig,
};
pub use region::{FeatureVector, RegionProperties, FEATURE_COUNT, FEATURE_NAMES};
pub use synth::{ErrorProfile, ManifestRow, SceneConfig};
pub use targets::UnetTargets;
