//! The nine subcommands. Each one reads files, drives the library, writes
//! its artifacts, and finishes with a run manifest beside the outputs.

use std::fs;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;

use maskfuse_core::eval;
use maskfuse_core::eval::EvalReport;
use maskfuse_core::fusion::{best_iou_targets, fuse_with_trace, oof_train};
use maskfuse_core::io::{
    read_mask_png, read_model, write_feature_csv, write_instances, write_label_png,
    write_mask_png, write_model, write_oof_csv,
};
use maskfuse_core::mask::{connected_components, instances_from_label_map, label_map_from_instances};
use maskfuse_core::postprocess::clean_pipeline;
use maskfuse_core::region::{compute_properties, feature_vector};
use maskfuse_core::synth::make_corpus;
use maskfuse_core::targets::make_unet_targets;
use maskfuse_core::{
    Aggregate, CleanConfig, Connectivity, ErrorProfile, FeatureRow, FuseOutcome, FusionConfig,
    FusionTrainImage, InstanceMask, MarkerlessPolicy, MaskFormat, OverlapPolicy, RawPrediction,
    SceneConfig, SensitivityProperty, Source, TrainingConfig, WatershedConfig, KAGGLE_THRESHOLDS,
};

use crate::inputs::{
    corpus_root, eval_images_from_corpus, eval_images_from_dir, file_err, list_by_extension,
    list_channels, list_mask_files, load_corpus, load_gt_dir, read_mask_file, read_pred_for,
    GtImage,
};
use crate::run_manifest::{
    config_json, digest_input, sidecar_path, write_run_manifest, InputDigest,
};
use crate::{CliError, RunContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FormatArg {
    Png16,
    Rle,
}

impl FormatArg {
    fn extension(self) -> &'static str {
        match self {
            FormatArg::Png16 => "png",
            FormatArg::Rle => "csv",
        }
    }
}

impl From<FormatArg> for MaskFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Png16 => MaskFormat::Png16,
            FormatArg::Rle => MaskFormat::Rle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ProfileArg {
    Identity,
    Clumper,
    Splitter,
}

impl ProfileArg {
    /// Profile template; per-image seeds are filled in by corpus generation.
    fn build(self) -> ErrorProfile {
        match self {
            ProfileArg::Identity => ErrorProfile::identity(0),
            ProfileArg::Clumper => ErrorProfile::clumper(0),
            ProfileArg::Splitter => ErrorProfile::splitter(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MarkerlessArg {
    Keep,
    Drop,
}

impl From<MarkerlessArg> for MarkerlessPolicy {
    fn from(m: MarkerlessArg) -> Self {
        match m {
            MarkerlessArg::Keep => MarkerlessPolicy::NewLabel,
            MarkerlessArg::Drop => MarkerlessPolicy::Drop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum AggregateArg {
    Micro,
    Macro,
}

impl From<AggregateArg> for Aggregate {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Micro => Aggregate::Micro,
            AggregateArg::Macro => Aggregate::Macro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "verbatim")]
pub enum SourceArg {
    A,
    B,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::A => Source::A,
            SourceArg::B => Source::B,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
pub enum PropertyArg {
    Area,
    Eccentricity,
    ClusterSize,
}

impl From<PropertyArg> for SensitivityProperty {
    fn from(p: PropertyArg) -> Self {
        match p {
            PropertyArg::Area => SensitivityProperty::Area,
            PropertyArg::Eccentricity => SensitivityProperty::Eccentricity,
            PropertyArg::ClusterSize => SensitivityProperty::ClusterSize,
        }
    }
}

#[derive(Debug, clap::Args, Serialize)]
pub struct SynthArgs {
    /// Corpus output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Number of scenes to generate.
    #[arg(long, value_name = "N")]
    pub images: usize,

    /// Scene height in pixels.
    #[arg(long, default_value_t = 256)]
    pub height: usize,

    /// Scene width in pixels.
    #[arg(long, default_value_t = 256)]
    pub width: usize,

    /// Fewest nuclei per scene.
    #[arg(long, default_value_t = 8)]
    pub count_min: usize,

    /// Most nuclei per scene.
    #[arg(long, default_value_t = 20)]
    pub count_max: usize,

    /// Smallest ellipse semi-axis in pixels.
    #[arg(long, default_value_t = 4.0)]
    pub axis_min: f64,

    /// Largest ellipse semi-axis in pixels.
    #[arg(long, default_value_t = 14.0)]
    pub axis_max: f64,

    /// Probability a nucleus is planted beside an existing one.
    #[arg(long, default_value_t = 0.4)]
    pub cluster_prob: f64,

    /// Degradation profile for source A.
    #[arg(long, value_enum, default_value = "clumper")]
    pub profile_a: ProfileArg,

    /// Degradation profile for source B.
    #[arg(long, value_enum, default_value = "splitter")]
    pub profile_b: ProfileArg,

    /// Source mask format; ground truth is always 16-bit PNG.
    #[arg(long, value_enum, default_value = "png16")]
    pub format: FormatArg,
}

pub fn synth(args: &SynthArgs, ctx: &RunContext) -> Result<(), CliError> {
    let scene = SceneConfig {
        height: args.height,
        width: args.width,
        nucleus_count_range: (args.count_min, args.count_max),
        semi_axis_range: (args.axis_min, args.axis_max),
        cluster_probability: args.cluster_prob,
        seed: ctx.seed,
    };
    fs::create_dir_all(&args.out).map_err(|e| file_err(&args.out, e))?;
    make_corpus(
        args.images,
        &scene,
        &args.profile_a.build(),
        &args.profile_b.build(),
        &args.out,
        args.format.into(),
    )?;
    write_run_manifest(&args.out.join("run_manifest.json"), "synth", config_json(args), &[], ctx)
}

#[derive(Debug, clap::Args, Serialize)]
pub struct MakeTargetsArgs {
    /// Ground-truth label-map directory.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,

    /// Output directory for `<id>_nuclei.png` and `<id>_borders.png`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Dilation radius that defines border pixels.
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
}

pub fn make_targets(args: &MakeTargetsArgs, ctx: &RunContext) -> Result<(), CliError> {
    let images = list_by_extension(&args.gt, "png")?;
    fs::create_dir_all(&args.out).map_err(|e| file_err(&args.out, e))?;
    images.par_iter().try_for_each(|(id, path)| {
        let gt = maskfuse_core::io::read_label_png(path)?;
        let targets = make_unet_targets(&gt, args.radius);
        write_mask_png(&args.out.join(format!("{id}_nuclei.png")), &targets.nuclei)?;
        write_mask_png(&args.out.join(format!("{id}_borders.png")), &targets.borders)?;
        Ok::<(), CliError>(())
    })?;
    let inputs = [digest_input(&args.gt)?];
    write_run_manifest(
        &args.out.join("run_manifest.json"),
        "make-targets",
        config_json(args),
        &inputs,
        ctx,
    )
}

#[derive(Debug, clap::Args, Serialize)]
pub struct PostprocessArgs {
    /// Raw predictions: label maps (`<id>.png` / `<id>.csv`) or channel
    /// files (`<id>_nuclei.png`).
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,

    /// Output directory for cleaned masks.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Directory with `<id>_borders.png` channels; defaults to --pred.
    #[arg(long, value_name = "DIR")]
    pub borders_dir: Option<PathBuf>,

    /// Split touching blobs with marker-controlled watershed.
    #[arg(long)]
    pub watershed: bool,

    /// Fate of foreground the border channel walls off from every marker.
    #[arg(long, value_enum, default_value = "keep")]
    pub markerless: MarkerlessArg,

    /// Drop cleaned instances with fewer pixels than this.
    #[arg(long, default_value_t = 10)]
    pub min_area: usize,

    /// Output mask format.
    #[arg(long, value_enum, default_value = "png16")]
    pub format: FormatArg,

    /// Image height for RLE inputs; PNG inputs carry their own.
    #[arg(long)]
    pub height: Option<usize>,

    /// Image width for RLE inputs.
    #[arg(long)]
    pub width: Option<usize>,
}

pub fn postprocess(args: &PostprocessArgs, ctx: &RunContext) -> Result<(), CliError> {
    let cfg = CleanConfig {
        min_area: args.min_area,
        watershed: WatershedConfig {
            markerless_policy: args.markerless.into(),
            ..WatershedConfig::default()
        },
    };
    let channels = list_channels(&args.pred)?;
    if channels.is_empty() {
        if args.watershed {
            return Err(CliError::Invalid(format!(
                "--watershed needs channel inputs, but {} has no *_nuclei.png files",
                args.pred.display()
            )));
        }
        if args.borders_dir.is_some() {
            return Err(CliError::Invalid(format!(
                "--borders-dir only applies to channel inputs, and {} has no *_nuclei.png files",
                args.pred.display()
            )));
        }
    }

    let cleaned: Vec<(String, Vec<InstanceMask>, usize, usize)> = if channels.is_empty() {
        let maps = list_mask_files(&args.pred)?;
        maps.par_iter()
            .map(|(id, path)| {
                let (insts, h, w) = read_mask_file(path, args.height, args.width)?;
                // Raw RLE predictions may overlap; flatten them the same way
                // the 16-bit PNG writer would.
                let map = label_map_from_instances(&insts, h, w, OverlapPolicy::LowestIdWins)
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                let out = clean_pipeline(&RawPrediction::Map(map), &cfg)?;
                Ok((id.clone(), out, h, w))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        let borders_dir = args.borders_dir.as_deref().unwrap_or(&args.pred);
        channels
            .par_iter()
            .map(|(id, nuclei_path)| {
                let mask = read_mask_png(nuclei_path)?;
                let (h, w) = (mask.height(), mask.width());
                let raw = if args.watershed {
                    let borders_path = borders_dir.join(format!("{id}_borders.png"));
                    let borders = read_mask_png(&borders_path)?;
                    RawPrediction::Channels { mask, borders }
                } else {
                    RawPrediction::Map(connected_components(&mask, Connectivity::Eight))
                };
                let out = clean_pipeline(&raw, &cfg)
                    .map_err(|e| CliError::Invalid(format!("{id}: {e}")))?;
                Ok((id.clone(), out, h, w))
            })
            .collect::<Result<_, CliError>>()?
    };

    fs::create_dir_all(&args.out).map_err(|e| file_err(&args.out, e))?;
    let ext = args.format.extension();
    for (id, insts, h, w) in &cleaned {
        let renumbered = renumber(insts)?;
        let path = args.out.join(format!("{id}.{ext}"));
        write_instances(&path, id, &renumbered, *h, *w, args.format.into())?;
    }

    let mut inputs = vec![digest_input(&args.pred)?];
    if let Some(b) = &args.borders_dir {
        inputs.push(digest_input(b)?);
    }
    write_run_manifest(
        &args.out.join("run_manifest.json"),
        "postprocess",
        config_json(args),
        &inputs,
        ctx,
    )
}

/// Fresh ids 1..n in pipeline order, so output labels are always canonical.
fn renumber(insts: &[InstanceMask]) -> Result<Vec<InstanceMask>, CliError> {
    insts
        .iter()
        .enumerate()
        .map(|(i, inst)| Ok(inst.with_id(i as u32 + 1)?))
        .collect()
}

#[derive(Debug, clap::Args, Serialize)]
pub struct FeaturesArgs {
    /// Prediction directory (`<id>.png` or `<id>.csv`).
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,

    /// Output feature CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Ground-truth directory; adds best-match IoU targets.
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,

    /// Value for the Source column.
    #[arg(long, default_value = "A")]
    pub source: String,

    /// Image height for RLE predictions without --gt.
    #[arg(long)]
    pub height: Option<usize>,

    /// Image width for RLE predictions without --gt.
    #[arg(long)]
    pub width: Option<usize>,
}

pub fn features(args: &FeaturesArgs, ctx: &RunContext) -> Result<(), CliError> {
    let per_image: Vec<Vec<FeatureRow>> = match &args.gt {
        Some(gt_dir) => {
            let gts = load_gt_dir(gt_dir)?;
            gts.par_iter()
                .map(|g| {
                    let (h, w) = (g.map.height(), g.map.width());
                    let preds = read_pred_for(&args.pred, &g.image_id, h, w)?;
                    let gt_insts = instances_from_label_map(&g.map);
                    let targets = best_iou_targets(&preds, &gt_insts);
                    Ok(feature_rows(&g.image_id, &preds, &args.source, h, w, Some(&targets)))
                })
                .collect::<Result<_, CliError>>()?
        }
        None => {
            let files = list_mask_files(&args.pred)?;
            files
                .par_iter()
                .map(|(id, path)| {
                    let (insts, h, w) = read_mask_file(path, args.height, args.width)?;
                    Ok(feature_rows(id, &insts, &args.source, h, w, None))
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    let rows: Vec<FeatureRow> = per_image.into_iter().flatten().collect();
    write_feature_csv(&args.out, &rows)?;

    let mut inputs = vec![digest_input(&args.pred)?];
    if let Some(g) = &args.gt {
        inputs.push(digest_input(g)?);
    }
    write_run_manifest(&sidecar_path(&args.out), "features", config_json(args), &inputs, ctx)
}

fn feature_rows(
    image_id: &str,
    insts: &[InstanceMask],
    source: &str,
    height: usize,
    width: usize,
    targets: Option<&[f64]>,
) -> Vec<FeatureRow> {
    insts
        .iter()
        .enumerate()
        .map(|(i, inst)| FeatureRow {
            image_id: image_id.to_string(),
            instance_id: inst.id(),
            source: source.to_string(),
            features: feature_vector(&compute_properties(inst), height, width),
            target_iou: targets.map(|t| t[i]),
        })
        .collect()
}

#[derive(Debug, clap::Args, Serialize)]
pub struct TrainFuserArgs {
    /// Corpus manifest CSV.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    /// Output model file.
    #[arg(long, value_name = "FILE")]
    pub model_out: PathBuf,

    /// Output out-of-fold prediction CSV.
    #[arg(long, value_name = "FILE")]
    pub oof_out: PathBuf,

    /// Cross-validation folds.
    #[arg(long, default_value_t = 4)]
    pub folds: usize,

    /// Boosting rounds.
    #[arg(long, default_value_t = 200)]
    pub trees: usize,

    /// Maximum tree depth.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,

    /// Minimum rows per leaf.
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,

    /// Learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub shrinkage: f64,
}

pub fn train_fuser(args: &TrainFuserArgs, ctx: &RunContext) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let images: Vec<FusionTrainImage> = corpus
        .into_iter()
        .map(|c| FusionTrainImage {
            image_id: c.image_id,
            height: c.gt.height(),
            width: c.gt.width(),
            gt: instances_from_label_map(&c.gt),
            cand_a: c.cand_a,
            cand_b: c.cand_b,
        })
        .collect();
    let cfg = TrainingConfig {
        n_trees: args.trees,
        max_depth: args.depth,
        min_samples_leaf: args.min_leaf,
        shrinkage: args.shrinkage,
        seed: ctx.seed,
    };
    let (model, oof) = oof_train(&images, args.folds, &cfg)?;
    write_model(&args.model_out, &model)?;
    write_oof_csv(&args.oof_out, &oof)?;

    let inputs = [digest_input(&corpus_root(&args.corpus))?];
    write_run_manifest(
        &sidecar_path(&args.model_out),
        "train-fuser",
        config_json(args),
        &inputs,
        ctx,
    )
}

#[derive(Debug, clap::Args, Serialize)]
pub struct FuseArgs {
    /// Corpus manifest CSV naming both candidate sets.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    /// Trained fuser model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,

    /// Output directory for fused masks and provenance.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Discard candidates scoring below this.
    #[arg(long, default_value_t = 0.3)]
    pub score_threshold: f64,

    /// Suppress a candidate overlapping a kept one above this IoU.
    #[arg(long, default_value_t = 0.3)]
    pub nms_threshold: f64,

    /// Output mask format.
    #[arg(long, value_enum, default_value = "png16")]
    pub format: FormatArg,
}

pub fn fuse(args: &FuseArgs, ctx: &RunContext) -> Result<(), CliError> {
    let model = read_model(&args.model)?;
    let corpus = load_corpus(&args.corpus)?;
    let cfg = FusionConfig {
        score_threshold: args.score_threshold,
        nms_iou_threshold: args.nms_threshold,
    };
    let outcomes: Vec<(String, FuseOutcome)> = corpus
        .par_iter()
        .map(|c| {
            let outcome = fuse_with_trace(
                &c.cand_a,
                &c.cand_b,
                &model,
                &cfg,
                c.gt.height(),
                c.gt.width(),
            )
            .map_err(|e| CliError::Invalid(format!("{}: {e}", c.image_id)))?;
            Ok((c.image_id.clone(), outcome))
        })
        .collect::<Result<_, CliError>>()?;

    fs::create_dir_all(&args.out).map_err(|e| file_err(&args.out, e))?;
    for (id, outcome) in &outcomes {
        let map = &outcome.label_map;
        match args.format {
            FormatArg::Png16 => write_label_png(&args.out.join(format!("{id}.png")), map)?,
            FormatArg::Rle => write_instances(
                &args.out.join(format!("{id}.csv")),
                id,
                &instances_from_label_map(map),
                map.height(),
                map.width(),
                MaskFormat::Rle,
            )?,
        }
    }
    write_provenance(&args.out.join("provenance.csv"), &outcomes)?;

    let inputs = [digest_input(&corpus_root(&args.corpus))?, digest_input(&args.model)?];
    write_run_manifest(&args.out.join("run_manifest.json"), "fuse", config_json(args), &inputs, ctx)
}

/// Which source each fused instance came from, with its regression score.
fn write_provenance(path: &Path, outcomes: &[(String, FuseOutcome)]) -> Result<(), CliError> {
    let mut w = csv_out(path)?;
    w.write_record(["ImageId", "InstanceId", "Source", "SourceInstanceId", "Score"])
        .map_err(|e| file_err(path, e))?;
    for (image_id, outcome) in outcomes {
        for inst in &outcome.instances {
            w.write_record([
                image_id.as_str(),
                &inst.id.to_string(),
                &inst.source.to_string(),
                &inst.source_id.to_string(),
                &inst.score.to_string(),
            ])
            .map_err(|e| file_err(path, e))?;
        }
    }
    w.flush().map_err(|e| file_err(path, e))
}

#[derive(Debug, clap::Args, Serialize)]
pub struct EvaluateArgs {
    /// Output directory for report.csv and ap_curve.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Corpus manifest; adds report rows for sources A and B.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,

    /// Ground-truth directory (when not using --corpus).
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,

    /// Prediction set as DIR or NAME=DIR; repeatable.
    #[arg(long = "pred", value_name = "[NAME=]DIR")]
    pub preds: Vec<String>,

    /// IoU threshold for the precision/recall columns.
    #[arg(long, default_value_t = 0.7)]
    pub threshold: f64,

    /// Precision/recall aggregation across images.
    #[arg(long, value_enum, default_value = "micro")]
    pub aggregate: AggregateArg,
}

pub fn evaluate(args: &EvaluateArgs, ctx: &RunContext) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let (gts, corpus) = match (&args.corpus, &args.gt) {
        (Some(_), Some(_)) => {
            return Err(CliError::Invalid("--corpus and --gt are mutually exclusive".into()))
        }
        (None, None) => {
            return Err(CliError::Invalid("one of --corpus or --gt is required".into()))
        }
        (Some(manifest), None) => {
            let corpus = load_corpus(manifest)?;
            inputs.push(digest_input(&corpus_root(manifest))?);
            let gts: Vec<GtImage> = corpus
                .iter()
                .map(|c| GtImage { image_id: c.image_id.clone(), map: c.gt.clone() })
                .collect();
            (gts, Some(corpus))
        }
        (None, Some(dir)) => {
            inputs.push(digest_input(dir)?);
            (load_gt_dir(dir)?, None)
        }
    };
    if corpus.is_none() && args.preds.is_empty() {
        return Err(CliError::Invalid("--gt mode needs at least one --pred".into()));
    }

    let mut models: Vec<(String, Vec<eval::EvalImage>)> = Vec::new();
    if let Some(c) = &corpus {
        models.push(("A".into(), eval_images_from_corpus(c, Source::A)));
        models.push(("B".into(), eval_images_from_corpus(c, Source::B)));
    }
    for spec in &args.preds {
        let (name, dir) = parse_pred_spec(spec)?;
        if models.iter().any(|(n, _)| *n == name) {
            return Err(CliError::Invalid(format!("duplicate model name {name:?}")));
        }
        inputs.push(digest_input(&dir)?);
        models.push((name, eval_images_from_dir(&gts, &dir)?));
    }

    let aggregate: Aggregate = args.aggregate.into();
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for (name, images) in &models {
        let report = eval::evaluate(images, args.threshold, aggregate)?;
        reports.push((name.clone(), report));
    }

    fs::create_dir_all(&args.out).map_err(|e| file_err(&args.out, e))?;
    write_report_csv(&args.out.join("report.csv"), &reports)?;
    write_ap_curve_csv(&args.out.join("ap_curve.csv"), &reports)?;
    write_run_manifest(
        &args.out.join("run_manifest.json"),
        "evaluate",
        config_json(args),
        &inputs,
        ctx,
    )
}

/// `NAME=DIR`, or a bare DIR whose last path component becomes the name.
fn parse_pred_spec(spec: &str) -> Result<(String, PathBuf), CliError> {
    if let Some((name, dir)) = spec.split_once('=') {
        if name.is_empty() || dir.is_empty() {
            return Err(CliError::Invalid(format!(
                "--pred {spec:?}: expected NAME=DIR with both parts non-empty"
            )));
        }
        return Ok((name.to_string(), PathBuf::from(dir)));
    }
    let dir = PathBuf::from(spec);
    let name = dir.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
        CliError::Invalid(format!("--pred {spec:?}: cannot derive a model name; use NAME=DIR"))
    })?;
    Ok((name.to_string(), dir))
}

fn write_report_csv(path: &Path, reports: &[(String, EvalReport)]) -> Result<(), CliError> {
    let mut w = csv_out(path)?;
    w.write_record(["Model", "mAP", "Dice", "Precision", "Recall", "oseg", "useg"])
        .map_err(|e| file_err(path, e))?;
    for (name, r) in reports {
        w.write_record([
            name.as_str(),
            &r.map_score.to_string(),
            &r.object_dice.to_string(),
            &r.precision.to_string(),
            &r.recall.to_string(),
            &r.oseg_count.to_string(),
            &r.useg_count.to_string(),
        ])
        .map_err(|e| file_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

fn write_ap_curve_csv(path: &Path, reports: &[(String, EvalReport)]) -> Result<(), CliError> {
    let mut w = csv_out(path)?;
    w.write_record(["Model", "Threshold", "AP"]).map_err(|e| file_err(path, e))?;
    for (name, r) in reports {
        for (t, ap) in KAGGLE_THRESHOLDS.iter().zip(r.ap_by_threshold) {
            w.write_record([name.as_str(), &t.to_string(), &ap.to_string()])
                .map_err(|e| file_err(path, e))?;
        }
    }
    w.flush().map_err(|e| file_err(path, e))
}

#[derive(Debug, clap::Args, Serialize)]
pub struct AnalyzeArgs {
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Corpus manifest (use with --source).
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,

    /// Which corpus source to analyze.
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,

    /// Ground-truth directory (use with --pred).
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,

    /// Prediction directory.
    #[arg(long, value_name = "DIR")]
    pub pred: Option<PathBuf>,

    /// Ground-truth property to stratify recall by.
    #[arg(long, value_enum)]
    pub property: PropertyArg,

    /// Equal-count bins for continuous properties.
    #[arg(long, default_value_t = 4)]
    pub bins: usize,

    /// IoU match threshold.
    #[arg(long, default_value_t = 0.7)]
    pub threshold: f64,
}

pub fn analyze(args: &AnalyzeArgs, ctx: &RunContext) -> Result<(), CliError> {
    let (images, inputs) =
        single_model_images(&args.corpus, &args.source, &args.gt, &args.pred)?;
    let report = eval::sensitivity_report(&images, args.property.into(), args.bins, args.threshold)?;

    let mut w = csv_out(&args.out)?;
    w.write_record(["Property", "Bin", "Lo", "Hi", "GtCount", "Matched", "Recall"])
        .map_err(|e| file_err(&args.out, e))?;
    for bin in &report.bins {
        w.write_record([
            &report.property.to_string(),
            bin.label.as_str(),
            &bin.lo.to_string(),
            &bin.hi.to_string(),
            &bin.gt_count.to_string(),
            &bin.matched.to_string(),
            &bin.recall.map(|r| r.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| file_err(&args.out, e))?;
    }
    w.flush().map_err(|e| file_err(&args.out, e))?;

    write_run_manifest(&sidecar_path(&args.out), "analyze", config_json(args), &inputs, ctx)
}

#[derive(Debug, clap::Args, Serialize)]
pub struct ApCurveArgs {
    /// Output CSV with one row per IoU threshold.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Corpus manifest (use with --source).
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,

    /// Which corpus source to score.
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,

    /// Ground-truth directory (use with --pred).
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,

    /// Prediction directory.
    #[arg(long, value_name = "DIR")]
    pub pred: Option<PathBuf>,
}

pub fn ap_curve(args: &ApCurveArgs, ctx: &RunContext) -> Result<(), CliError> {
    let (images, inputs) =
        single_model_images(&args.corpus, &args.source, &args.gt, &args.pred)?;
    let (_, curve) = eval::kaggle_map(&images);

    let mut w = csv_out(&args.out)?;
    w.write_record(["Threshold", "AP"]).map_err(|e| file_err(&args.out, e))?;
    for (t, ap) in KAGGLE_THRESHOLDS.iter().zip(curve) {
        w.write_record([&t.to_string(), &ap.to_string()]).map_err(|e| file_err(&args.out, e))?;
    }
    w.flush().map_err(|e| file_err(&args.out, e))?;

    write_run_manifest(&sidecar_path(&args.out), "ap-curve", config_json(args), &inputs, ctx)
}

/// Evaluation images for exactly one prediction set: either a corpus source
/// or a ground-truth directory paired with a prediction directory.
fn single_model_images(
    corpus: &Option<PathBuf>,
    source: &Option<SourceArg>,
    gt: &Option<PathBuf>,
    pred: &Option<PathBuf>,
) -> Result<(Vec<eval::EvalImage>, Vec<InputDigest>), CliError> {
    match (corpus, source, gt, pred) {
        (Some(manifest), Some(s), None, None) => {
            let c = load_corpus(manifest)?;
            let inputs = vec![digest_input(&corpus_root(manifest))?];
            Ok((eval_images_from_corpus(&c, (*s).into()), inputs))
        }
        (None, None, Some(gt_dir), Some(pred_dir)) => {
            let gts = load_gt_dir(gt_dir)?;
            let inputs = vec![digest_input(gt_dir)?, digest_input(pred_dir)?];
            Ok((eval_images_from_dir(&gts, pred_dir)?, inputs))
        }
        _ => Err(CliError::Invalid(
            "pass either --corpus with --source, or --gt with --pred".into(),
        )),
    }
}

fn csv_out(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| file_err(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}
