//! Input discovery and loading shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use maskfuse_core::eval::EvalImage;
use maskfuse_core::io::{read_instances, read_label_png, read_manifest_csv};
use maskfuse_core::mask::instances_from_label_map;
use maskfuse_core::{InstanceMask, LabelMap, MaskFormat, Source};

use crate::CliError;

pub fn file_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::File(format!("{}: {e}", path.display()))
}

/// Sorted `(image id, path)` pairs for every `*.<ext>` file directly in
/// `dir`. An empty result is a validation error: every consumer needs at
/// least one image.
pub fn list_by_extension(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| file_err(dir, e))? {
        let path = entry.map_err(|e| file_err(dir, e))?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        out.push((stem_of(&path)?, path));
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Invalid(format!("{}: no .{ext} files", dir.display())));
    }
    Ok(out)
}

/// Sorted `(image id, path)` pairs for every mask file (`*.png` or `*.csv`)
/// directly in `dir`, skipping the table sidecars this tool writes itself.
pub fn list_mask_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| file_err(dir, e))? {
        let path = entry.map_err(|e| file_err(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if !path.is_file() || !matches!(ext, Some("png") | Some("csv")) {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if matches!(name, "provenance.csv" | "manifest.csv" | "report.csv" | "ap_curve.csv") {
            continue;
        }
        let id = stem_of(&path)?;
        if out.iter().any(|(other, _)| *other == id) {
            return Err(CliError::Invalid(format!(
                "{}: image {id} appears with more than one extension",
                dir.display()
            )));
        }
        out.push((id, path));
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Invalid(format!("{}: no mask files (.png or .csv)", dir.display())));
    }
    Ok(out)
}

/// Sorted `(image id, nuclei path)` pairs for every `<id>_nuclei.png` in
/// `dir`. Empty means the directory holds no channel files.
pub fn list_channels(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| file_err(dir, e))? {
        let path = entry.map_err(|e| file_err(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(id) = name.strip_suffix("_nuclei.png") {
            out.push((id.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

fn stem_of(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| {
            CliError::Invalid(format!("{}: file name is not valid UTF-8", path.display()))
        })
}

/// Mask format implied by a file extension.
pub fn mask_format_of(path: &Path) -> Result<MaskFormat, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => Ok(MaskFormat::Png16),
        Some("csv") => Ok(MaskFormat::Rle),
        _ => Err(CliError::Invalid(format!(
            "{}: cannot infer mask format from the extension; expected .png or .csv",
            path.display()
        ))),
    }
}

/// Directory the manifest's relative paths resolve against.
pub fn corpus_root(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// One corpus image: ground truth plus both candidate sets.
pub struct CorpusImage {
    pub image_id: String,
    pub gt: LabelMap,
    pub cand_a: Vec<InstanceMask>,
    pub cand_b: Vec<InstanceMask>,
}

/// Loads every image a corpus manifest names, in manifest order.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<CorpusImage>, CliError> {
    let rows = read_manifest_csv(manifest_path)?;
    let root = corpus_root(manifest_path);
    rows.par_iter()
        .map(|row| {
            let gt = read_label_png(&root.join(&row.gt_path))?;
            let (h, w) = (gt.height(), gt.width());
            let path_a = root.join(&row.path_a);
            let path_b = root.join(&row.path_b);
            let cand_a = read_instances(&path_a, h, w, mask_format_of(&path_a)?)?;
            let cand_b = read_instances(&path_b, h, w, mask_format_of(&path_b)?)?;
            Ok(CorpusImage { image_id: row.image_id.clone(), gt, cand_a, cand_b })
        })
        .collect()
}

/// One ground-truth label map with its id.
pub struct GtImage {
    pub image_id: String,
    pub map: LabelMap,
}

pub fn load_gt_dir(dir: &Path) -> Result<Vec<GtImage>, CliError> {
    list_by_extension(dir, "png")?
        .par_iter()
        .map(|(id, path)| Ok(GtImage { image_id: id.clone(), map: read_label_png(path)? }))
        .collect()
}

/// Reads the prediction for `id` from a directory holding `<id>.png` or
/// `<id>.csv` files. A ground-truth image without a prediction file is a
/// validation error: silent gaps would inflate scores.
pub fn read_pred_for(
    dir: &Path,
    id: &str,
    height: usize,
    width: usize,
) -> Result<Vec<InstanceMask>, CliError> {
    let png = dir.join(format!("{id}.png"));
    if png.is_file() {
        return Ok(read_instances(&png, height, width, MaskFormat::Png16)?);
    }
    let rle = dir.join(format!("{id}.csv"));
    if rle.is_file() {
        return Ok(read_instances(&rle, height, width, MaskFormat::Rle)?);
    }
    Err(CliError::Invalid(format!(
        "{}: no prediction ({id}.png or {id}.csv) for image {id}",
        dir.display()
    )))
}

/// Instance set plus dimensions from one mask file; RLE files carry no
/// dimensions, so those come from the flags.
pub fn read_mask_file(
    path: &Path,
    height: Option<usize>,
    width: Option<usize>,
) -> Result<(Vec<InstanceMask>, usize, usize), CliError> {
    match mask_format_of(path)? {
        MaskFormat::Png16 => {
            let map = read_label_png(path)?;
            let (h, w) = (map.height(), map.width());
            Ok((instances_from_label_map(&map), h, w))
        }
        MaskFormat::Rle => {
            let (Some(h), Some(w)) = (height, width) else {
                return Err(CliError::Invalid(format!(
                    "{}: RLE input needs --height and --width",
                    path.display()
                )));
            };
            Ok((read_instances(path, h, w, MaskFormat::Rle)?, h, w))
        }
    }
}

/// Evaluation inputs pairing each ground-truth image with the predictions
/// read from `pred_dir`.
pub fn eval_images_from_dir(
    gts: &[GtImage],
    pred_dir: &Path,
) -> Result<Vec<EvalImage>, CliError> {
    gts.par_iter()
        .map(|g| {
            let (h, w) = (g.map.height(), g.map.width());
            Ok(EvalImage {
                image_id: g.image_id.clone(),
                height: h,
                width: w,
                preds: read_pred_for(pred_dir, &g.image_id, h, w)?,
                gts: instances_from_label_map(&g.map),
            })
        })
        .collect()
}

/// Evaluation inputs for one of the corpus' built-in candidate sets.
pub fn eval_images_from_corpus(corpus: &[CorpusImage], source: Source) -> Vec<EvalImage> {
    corpus
        .iter()
        .map(|c| EvalImage {
            image_id: c.image_id.clone(),
            height: c.gt.height(),
            width: c.gt.width(),
            preds: match source {
                Source::A => c.cand_a.clone(),
                Source::B => c.cand_b.clone(),
            },
            gts: instances_from_label_map(&c.gt),
        })
        .collect()
}
