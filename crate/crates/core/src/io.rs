//! On-disk interchange: 16-bit label-map PNGs, binary mask PNGs,
//! run-length-encoded instance CSVs, and the pipeline's tables (corpus
//! manifest, feature rows, out-of-fold predictions, model text).
//!
//! Floats are written with Rust's shortest-round-trip formatting, so
//! write → read reproduces every value bit for bit and identical data
//! always produces identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::DynamicImage;

use crate::error::FileError;
use crate::fusion::OofPrediction;
use crate::gbm::GbmModel;
use crate::mask::{
    instances_from_label_map, label_map_from_instances, BinaryMask, InstanceMask, LabelMap,
    OverlapPolicy,
};
use crate::region::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::synth::ManifestRow;

/// Instance-set file format.
///
/// `Png16` stores a label map; overlapping instances are flattened with
/// the lowest id winning contested pixels. `Rle` stores one run-length
/// row per instance and preserves overlaps exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFormat {
    Png16,
    Rle,
}

impl std::fmt::Display for MaskFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskFormat::Png16 => "png16",
            MaskFormat::Rle => "rle",
        })
    }
}

impl std::str::FromStr for MaskFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "png16" => Ok(MaskFormat::Png16),
            "rle" => Ok(MaskFormat::Rle),
            other => Err(format!("unknown mask format {other:?}, expected png16 or rle")),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> FileError {
    FileError::io(path.display().to_string(), e)
}

fn fmt_err(path: &Path, reason: impl Into<String>) -> FileError {
    FileError::format(path.display().to_string(), reason)
}

fn image_err(path: &Path, e: image::ImageError) -> FileError {
    match e {
        image::ImageError::IoError(io) => io_err(path, io),
        other => fmt_err(path, other.to_string()),
    }
}

/// Writes a label map as 16-bit grayscale PNG. Labels above 65535 do not
/// fit the format and are an error.
pub fn write_label_png(path: &Path, map: &LabelMap) -> Result<(), FileError> {
    let mut pixels = Vec::with_capacity(map.labels().len());
    for &v in map.labels() {
        if v > u16::MAX as u32 {
            return Err(fmt_err(path, format!("label {v} exceeds the 16-bit PNG limit")));
        }
        pixels.push(v as u16);
    }
    let buf =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            map.width() as u32,
            map.height() as u32,
            pixels,
        )
        .expect("pixel count matches dimensions");
    DynamicImage::ImageLuma16(buf).save(path).map_err(|e| image_err(path, e))
}

/// Reads a label map from an 8- or 16-bit grayscale PNG.
pub fn read_label_png(path: &Path) -> Result<LabelMap, FileError> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (labels, w, h) = match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            (buf.into_raw().into_iter().map(u32::from).collect::<Vec<u32>>(), w, h)
        }
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            (buf.into_raw().into_iter().map(u32::from).collect::<Vec<u32>>(), w, h)
        }
        other => {
            return Err(fmt_err(
                path,
                format!("expected grayscale label PNG, got {:?} pixels", other.color()),
            ))
        }
    };
    LabelMap::new(h, w, labels).map_err(|e| fmt_err(path, e.to_string()))
}

/// Writes a binary mask as an 8-bit grayscale PNG (0 or 255).
pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), FileError> {
    let pixels: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        pixels,
    )
    .expect("pixel count matches dimensions");
    DynamicImage::ImageLuma8(buf).save(path).map_err(|e| image_err(path, e))
}

/// Reads a binary mask from a grayscale PNG; any nonzero pixel is set.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask, FileError> {
    let map = read_label_png(path)?;
    Ok(map.foreground())
}

/// Run-length encodes an instance: space-separated `start length` pairs,
/// pixels numbered 1-based in column-major order (top-to-bottom, then
/// left-to-right), runs ascending and non-overlapping.
pub fn encode_rle(inst: &InstanceMask, height: usize) -> String {
    let mut indices: Vec<usize> = inst.pixels().map(|(r, c)| c * height + r + 1).collect();
    indices.sort_unstable();
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < indices.len() {
        let start = indices[i];
        let mut len = 1;
        while i + len < indices.len() && indices[i + len] == start + len {
            len += 1;
        }
        parts.push(format!("{start} {len}"));
        i += len;
    }
    parts.join(" ")
}

/// Decodes one run-length row back into an instance; the error string
/// describes the malformation.
pub fn decode_rle(
    encoded: &str,
    id: u32,
    height: usize,
    width: usize,
) -> Result<InstanceMask, String> {
    let tokens: Vec<&str> = encoded.split_whitespace().collect();
    if tokens.is_empty() {
        return Err("empty run list".into());
    }
    if tokens.len() % 2 != 0 {
        return Err(format!("odd token count {}", tokens.len()));
    }
    let mut pixels = Vec::new();
    let mut prev_end = 0usize;
    for pair in tokens.chunks(2) {
        let start: usize =
            pair[0].parse().map_err(|_| format!("bad run start {:?}", pair[0]))?;
        let len: usize =
            pair[1].parse().map_err(|_| format!("bad run length {:?}", pair[1]))?;
        if len == 0 {
            return Err(format!("zero-length run at {start}"));
        }
        if start <= prev_end {
            return Err(format!("run starting at {start} overlaps or is out of order"));
        }
        let end = start
            .checked_add(len - 1)
            .ok_or_else(|| format!("run {start} {len} overflows"))?;
        if start < 1 || end > height * width {
            return Err(format!("run {start} {len} outside 1..={}", height * width));
        }
        for idx in start..=end {
            let z = idx - 1;
            pixels.push((z % height, z / height));
        }
        prev_end = end;
    }
    InstanceMask::from_pixels(id, &pixels).map_err(|e| e.to_string())
}

/// Writes instances as an RLE CSV (`ImageId,EncodedPixels`, one row per
/// instance in slice order).
pub fn write_rle_csv(
    path: &Path,
    image_id: &str,
    instances: &[InstanceMask],
    height: usize,
) -> Result<(), FileError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["ImageId", "EncodedPixels"]).map_err(|e| fmt_err(path, e.to_string()))?;
    for inst in instances {
        w.write_record([image_id, &encode_rle(inst, height)])
            .map_err(|e| fmt_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads an RLE CSV; row k becomes instance id k+1, so files written from
/// canonically numbered instances round-trip exactly.
pub fn read_rle_csv(
    path: &Path,
    height: usize,
    width: usize,
) -> Result<Vec<InstanceMask>, FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let headers = r.headers().map_err(|e| fmt_err(path, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["ImageId", "EncodedPixels"] {
        return Err(fmt_err(path, format!("unexpected RLE header {headers:?}")));
    }
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| fmt_err(path, e.to_string()))?;
        let encoded = record
            .get(1)
            .ok_or_else(|| fmt_err(path, format!("row {} missing EncodedPixels", i + 1)))?;
        let inst = decode_rle(encoded, i as u32 + 1, height, width)
            .map_err(|reason| fmt_err(path, format!("row {}: {reason}", i + 1)))?;
        out.push(inst);
    }
    Ok(out)
}

/// Writes an instance set in the chosen format. PNG flattens overlaps
/// (lowest id wins a contested pixel); RLE preserves them.
pub fn write_instances(
    path: &Path,
    image_id: &str,
    instances: &[InstanceMask],
    height: usize,
    width: usize,
    format: MaskFormat,
) -> Result<(), FileError> {
    match format {
        MaskFormat::Png16 => {
            let map =
                label_map_from_instances(instances, height, width, OverlapPolicy::LowestIdWins)
                    .map_err(|e| fmt_err(path, e.to_string()))?;
            write_label_png(path, &map)
        }
        MaskFormat::Rle => write_rle_csv(path, image_id, instances, height),
    }
}

/// Reads an instance set written by [`write_instances`]. The expected
/// dimensions come from the caller (for example the ground-truth image)
/// and are checked against PNG contents.
pub fn read_instances(
    path: &Path,
    height: usize,
    width: usize,
    format: MaskFormat,
) -> Result<Vec<InstanceMask>, FileError> {
    match format {
        MaskFormat::Png16 => {
            let map = read_label_png(path)?;
            if map.height() != height || map.width() != width {
                return Err(fmt_err(
                    path,
                    format!(
                        "label map is {}x{}, expected {height}x{width}",
                        map.height(),
                        map.width()
                    ),
                ));
            }
            Ok(instances_from_label_map(&map))
        }
        MaskFormat::Rle => read_rle_csv(path, height, width),
    }
}

const MANIFEST_HEADER: [&str; 7] =
    ["ImageId", "GtPath", "PathA", "PathB", "SeedScene", "SeedA", "SeedB"];

/// Writes a corpus manifest CSV.
pub fn write_manifest_csv(path: &Path, rows: &[ManifestRow]) -> Result<(), FileError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(MANIFEST_HEADER).map_err(|e| fmt_err(path, e.to_string()))?;
    for row in rows {
        w.write_record([
            row.image_id.as_str(),
            row.gt_path.as_str(),
            row.path_a.as_str(),
            row.path_b.as_str(),
            &row.seed_scene.to_string(),
            &row.seed_a.to_string(),
            &row.seed_b.to_string(),
        ])
        .map_err(|e| fmt_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a corpus manifest CSV.
pub fn read_manifest_csv(path: &Path) -> Result<Vec<ManifestRow>, FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let headers = r.headers().map_err(|e| fmt_err(path, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(fmt_err(path, format!("unexpected manifest header {headers:?}")));
    }
    let parse_u64 = |s: &str, line: usize| -> Result<u64, FileError> {
        s.parse().map_err(|_| fmt_err(path, format!("row {line}: bad seed {s:?}")))
    };
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| fmt_err(path, e.to_string()))?;
        if record.len() != MANIFEST_HEADER.len() {
            return Err(fmt_err(path, format!("row {}: expected 7 fields", i + 1)));
        }
        rows.push(ManifestRow {
            image_id: record[0].to_string(),
            gt_path: record[1].to_string(),
            path_a: record[2].to_string(),
            path_b: record[3].to_string(),
            seed_scene: parse_u64(&record[4], i + 1)?,
            seed_a: parse_u64(&record[5], i + 1)?,
            seed_b: parse_u64(&record[6], i + 1)?,
        });
    }
    Ok(rows)
}

/// One featurized instance, as exchanged through feature CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub instance_id: u32,
    /// Candidate source name, for example "A" or "B".
    pub source: String,
    pub features: FeatureVector,
    /// Present when ground truth was available at featurization time.
    pub target_iou: Option<f64>,
}

fn feature_header(with_target: bool) -> Vec<&'static str> {
    let mut h = vec!["ImageId", "InstanceId", "Source"];
    h.extend(FEATURE_NAMES);
    if with_target {
        h.push("TargetIoU");
    }
    h
}

/// Writes feature rows. The `TargetIoU` column appears iff every row has
/// a target; a mix of with- and without-target rows is an error.
pub fn write_feature_csv(path: &Path, rows: &[FeatureRow]) -> Result<(), FileError> {
    let with_target = rows.iter().any(|r| r.target_iou.is_some());
    if with_target && rows.iter().any(|r| r.target_iou.is_none()) {
        return Err(fmt_err(path, "some rows have TargetIoU and some do not"));
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(feature_header(with_target)).map_err(|e| fmt_err(path, e.to_string()))?;
    for row in rows {
        let mut record: Vec<String> = vec![
            row.image_id.clone(),
            row.instance_id.to_string(),
            row.source.clone(),
        ];
        record.extend(row.features.iter().map(|v| v.to_string()));
        if let Some(t) = row.target_iou {
            record.push(t.to_string());
        }
        w.write_record(&record).map_err(|e| fmt_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads feature rows; target presence is inferred from the header.
pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>, FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| fmt_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let with_target = if headers == feature_header(true) {
        true
    } else if headers == feature_header(false) {
        false
    } else {
        return Err(fmt_err(path, format!("unexpected feature header {headers:?}")));
    };
    let parse_f64 = |s: &str, line: usize, col: &str| -> Result<f64, FileError> {
        s.parse()
            .map_err(|_| fmt_err(path, format!("row {line}: bad {col} value {s:?}")))
    };
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| fmt_err(path, e.to_string()))?;
        let line = i + 1;
        if record.len() != 3 + FEATURE_COUNT + usize::from(with_target) {
            return Err(fmt_err(path, format!("row {line}: wrong field count")));
        }
        let mut features = [0.0; FEATURE_COUNT];
        for (k, slot) in features.iter_mut().enumerate() {
            *slot = parse_f64(&record[3 + k], line, FEATURE_NAMES[k])?;
        }
        rows.push(FeatureRow {
            image_id: record[0].to_string(),
            instance_id: record[1]
                .parse()
                .map_err(|_| fmt_err(path, format!("row {line}: bad InstanceId")))?,
            source: record[2].to_string(),
            features,
            target_iou: if with_target {
                Some(parse_f64(&record[3 + FEATURE_COUNT], line, "TargetIoU")?)
            } else {
                None
            },
        });
    }
    Ok(rows)
}

const OOF_HEADER: [&str; 5] = ["ImageId", "Source", "InstanceId", "PredictedIoU", "TargetIoU"];

/// Writes the out-of-fold prediction table.
pub fn write_oof_csv(path: &Path, rows: &[OofPrediction]) -> Result<(), FileError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(OOF_HEADER).map_err(|e| fmt_err(path, e.to_string()))?;
    for row in rows {
        w.write_record([
            row.image_id.as_str(),
            &row.source.to_string(),
            &row.instance_id.to_string(),
            &row.predicted.to_string(),
            &row.target.to_string(),
        ])
        .map_err(|e| fmt_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes a model in its line-oriented text form.
pub fn write_model(path: &Path, model: &GbmModel) -> Result<(), FileError> {
    std::fs::write(path, model.to_text()).map_err(|e| io_err(path, e))
}

/// Reads a model written by [`write_model`].
pub fn read_model(path: &Path) -> Result<GbmModel, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    GbmModel::from_text(&text).map_err(|e| fmt_err(path, e.to_string()))
}
