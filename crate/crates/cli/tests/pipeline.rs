//! End-to-end checks of the command-line surface: artifacts, exit codes,
//! determinism, and cross-command file interchange.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maskfuse_core::io::{read_label_png, read_mask_png, write_label_png};
use maskfuse_core::LabelMap;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maskfuse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary launches")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(args: &[&str]) -> i32 {
    run(args).status.code().expect("terminated by exit, not signal")
}

/// Relative path -> bytes for every file under `root`, run manifests
/// excluded: they carry wall-clock time and are exempt from determinism.
fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    collect(root, root, &mut out);
    out
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).expect("readable directory") {
        let path = entry.expect("directory entry").path();
        let name = path.file_name().expect("named entry").to_string_lossy().into_owned();
        if path.is_dir() {
            collect(root, &path, out);
        } else if name != "run_manifest.json" && !name.ends_with(".run.json") {
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().into_owned();
            out.insert(rel, fs::read(&path).expect("readable file"));
        }
    }
}

/// All rows of a CSV file, header included.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .expect("readable csv");
    reader
        .records()
        .map(|r| r.expect("parsable row").iter().map(str::to_string).collect())
        .collect()
}

fn make_corpus_dir(dir: &Path, images: usize, seed: u64, format: &str) -> String {
    let corpus = dir.join("corpus");
    run_ok(&[
        "synth",
        "--out",
        corpus.to_str().unwrap(),
        "--images",
        &images.to_string(),
        "--seed",
        &seed.to_string(),
        "--format",
        format,
    ]);
    corpus.join("manifest.csv").to_str().unwrap().to_string()
}

#[test]
fn synth_reruns_bit_identically() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&["synth", "--out", out.to_str().unwrap(), "--images", "5", "--seed", "42"]);
    }
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
}

#[test]
fn self_evaluation_is_perfect() {
    let dir = TempDir::new().unwrap();
    make_corpus_dir(dir.path(), 6, 42, "png16");
    let gt = dir.path().join("corpus/gt");
    let out = dir.path().join("eval");
    run_ok(&[
        "evaluate",
        "--gt",
        gt.to_str().unwrap(),
        "--pred",
        gt.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = csv_rows(&out.join("report.csv"));
    assert_eq!(rows[0], ["Model", "mAP", "Dice", "Precision", "Recall", "oseg", "useg"]);
    assert_eq!(rows[1], ["gt", "1", "1", "1", "1", "0", "0"]);
}

#[test]
fn exit_codes_distinguish_validation_from_io() {
    let dir = TempDir::new().unwrap();
    let tmp = dir.path().to_str().unwrap();
    let missing = dir.path().join("missing");

    assert_eq!(exit_code(&["synth", "--no-such-flag"]), 1);
    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["--version"]), 0);

    // Validation errors: inconsistent flags or out-of-range parameters.
    assert_eq!(exit_code(&["evaluate", "--out", tmp]), 1);
    let manifest = make_corpus_dir(dir.path(), 4, 42, "png16");
    let gt = dir.path().join("corpus/gt");
    assert_eq!(
        exit_code(&["evaluate", "--corpus", &manifest, "--gt", gt.to_str().unwrap(), "--out", tmp]),
        1
    );
    assert_eq!(
        exit_code(&["evaluate", "--corpus", &manifest, "--threshold", "0.3", "--out", tmp]),
        1
    );
    assert_eq!(
        exit_code(&[
            "postprocess",
            "--pred",
            dir.path().join("corpus/source_a").to_str().unwrap(),
            "--watershed",
            "--out",
            tmp,
        ]),
        1
    );

    // I/O errors: paths that do not exist or files that do not parse.
    assert_eq!(
        exit_code(&[
            "evaluate",
            "--gt",
            missing.to_str().unwrap(),
            "--pred",
            gt.to_str().unwrap(),
            "--out",
            tmp,
        ]),
        2
    );
    let garbled = dir.path().join("garbled");
    fs::create_dir(&garbled).unwrap();
    fs::write(garbled.join("scene_00000.png"), b"not a png").unwrap();
    assert_eq!(
        exit_code(&[
            "evaluate",
            "--gt",
            garbled.to_str().unwrap(),
            "--pred",
            garbled.to_str().unwrap(),
            "--out",
            tmp,
        ]),
        2
    );
}

#[test]
fn full_pipeline_artifacts_and_report_rows() {
    let dir = TempDir::new().unwrap();
    let manifest = make_corpus_dir(dir.path(), 8, 42, "png16");
    let gt = dir.path().join("corpus/gt");
    let targets = dir.path().join("targets");
    let clean = dir.path().join("clean");
    let clean2 = dir.path().join("clean2");
    let model = dir.path().join("model.txt");
    let oof = dir.path().join("oof.csv");
    let fused = dir.path().join("fused");
    let eval = dir.path().join("eval");

    run_ok(&["make-targets", "--gt", gt.to_str().unwrap(), "--out", targets.to_str().unwrap()]);
    for out in [&clean, &clean2] {
        run_ok(&[
            "postprocess",
            "--pred",
            targets.to_str().unwrap(),
            "--watershed",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    // Identical inputs and flags give byte-identical outputs.
    assert_eq!(tree_bytes(&clean), tree_bytes(&clean2));

    run_ok(&[
        "train-fuser",
        "--corpus",
        &manifest,
        "--model-out",
        model.to_str().unwrap(),
        "--oof-out",
        oof.to_str().unwrap(),
        "--trees",
        "60",
    ]);
    run_ok(&[
        "fuse",
        "--corpus",
        &manifest,
        "--model",
        model.to_str().unwrap(),
        "--out",
        fused.to_str().unwrap(),
    ]);
    run_ok(&[
        "evaluate",
        "--corpus",
        &manifest,
        "--pred",
        &format!("Ensemble={}", fused.to_str().unwrap()),
        "--out",
        eval.to_str().unwrap(),
    ]);

    // Fused output: one label map per scene plus provenance.
    for i in 0..8 {
        assert!(fused.join(format!("scene_{i:05}.png")).is_file());
    }
    let prov = csv_rows(&fused.join("provenance.csv"));
    assert_eq!(prov[0], ["ImageId", "InstanceId", "Source", "SourceInstanceId", "Score"]);
    assert!(prov.len() > 1);

    // Report rows come out as A, B, then the named extra set.
    let report = csv_rows(&eval.join("report.csv"));
    let names: Vec<&str> = report[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["A", "B", "Ensemble"]);
    let curve = csv_rows(&eval.join("ap_curve.csv"));
    assert_eq!(curve.len(), 1 + 3 * 10);
    assert_eq!(curve[0], ["Model", "Threshold", "AP"]);

    // Every command leaves a parsable provenance record beside its outputs.
    for manifest_path in [
        dir.path().join("corpus/run_manifest.json"),
        targets.join("run_manifest.json"),
        clean.join("run_manifest.json"),
        dir.path().join("model.run.json"),
        fused.join("run_manifest.json"),
        eval.join("run_manifest.json"),
    ] {
        let text = fs::read_to_string(&manifest_path)
            .unwrap_or_else(|e| panic!("{}: {e}", manifest_path.display()));
        let json: serde_json::Value = serde_json::from_str(&text).expect("valid json");
        for key in ["command", "argv", "tool_version", "seed", "threads", "config", "inputs", "wall_time_ms"]
        {
            assert!(json.get(key).is_some(), "{key} missing in {}", manifest_path.display());
        }
    }
}

#[test]
fn oof_scores_correlate_with_targets() {
    let dir = TempDir::new().unwrap();
    let manifest = make_corpus_dir(dir.path(), 24, 42, "png16");
    let model = dir.path().join("model.txt");
    let oof = dir.path().join("oof.csv");
    run_ok(&[
        "train-fuser",
        "--corpus",
        &manifest,
        "--model-out",
        model.to_str().unwrap(),
        "--oof-out",
        oof.to_str().unwrap(),
    ]);
    let rows = csv_rows(&oof);
    assert_eq!(rows[0], ["ImageId", "Source", "InstanceId", "PredictedIoU", "TargetIoU"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for row in &rows[1..] {
        xs.push(row[3].parse::<f64>().unwrap());
        ys.push(row[4].parse::<f64>().unwrap());
    }
    let r = pearson(&xs, &ys);
    assert!(r > 0.5, "out-of-fold correlation too weak: {r}");
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

#[test]
fn rle_format_flows_through() {
    let dir = TempDir::new().unwrap();
    let manifest = make_corpus_dir(dir.path(), 8, 42, "rle");
    assert!(dir.path().join("corpus/source_a/scene_00000.csv").is_file());
    let model = dir.path().join("model.txt");
    let oof = dir.path().join("oof.csv");
    let fused = dir.path().join("fused");
    let eval = dir.path().join("eval");
    run_ok(&[
        "train-fuser",
        "--corpus",
        &manifest,
        "--model-out",
        model.to_str().unwrap(),
        "--oof-out",
        oof.to_str().unwrap(),
        "--trees",
        "60",
    ]);
    run_ok(&[
        "fuse",
        "--corpus",
        &manifest,
        "--model",
        model.to_str().unwrap(),
        "--out",
        fused.to_str().unwrap(),
        "--format",
        "rle",
    ]);
    assert!(fused.join("scene_00000.csv").is_file());
    run_ok(&[
        "evaluate",
        "--corpus",
        &manifest,
        "--pred",
        &format!("Ensemble={}", fused.to_str().unwrap()),
        "--out",
        eval.to_str().unwrap(),
    ]);
    let report = csv_rows(&eval.join("report.csv"));
    assert_eq!(report.len(), 4);
}

#[test]
fn target_channels_match_ground_truth_foreground() {
    let dir = TempDir::new().unwrap();
    make_corpus_dir(dir.path(), 4, 42, "png16");
    let gt = dir.path().join("corpus/gt");
    let targets = dir.path().join("targets");
    run_ok(&["make-targets", "--gt", gt.to_str().unwrap(), "--out", targets.to_str().unwrap()]);
    for i in 0..4 {
        let gt_map = read_label_png(&gt.join(format!("scene_{i:05}.png"))).unwrap();
        let nuclei = read_mask_png(&targets.join(format!("scene_{i:05}_nuclei.png"))).unwrap();
        assert_eq!(gt_map.foreground().bits(), nuclei.bits());
        // Border pixels only appear where nuclei nearly touch; they must
        // stay inside the image and be present as a file either way.
        assert!(targets.join(format!("scene_{i:05}_borders.png")).is_file());
    }
}

#[test]
fn threads_env_fallback_and_validation() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("corpus");
    let status = bin()
        .env("MASKFUSE_THREADS", "2")
        .args(["synth", "--out", out.to_str().unwrap(), "--images", "2"])
        .status()
        .unwrap();
    assert!(status.success());

    for bad in ["abc", "0"] {
        let status = bin()
            .env("MASKFUSE_THREADS", bad)
            .args(["synth", "--out", out.to_str().unwrap(), "--images", "2"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(1), "MASKFUSE_THREADS={bad}");
    }
}

#[test]
fn analyze_bins_cover_all_ground_truth() {
    let dir = TempDir::new().unwrap();
    let manifest = make_corpus_dir(dir.path(), 8, 42, "png16");
    let sens = dir.path().join("sens.csv");
    run_ok(&[
        "analyze",
        "--corpus",
        &manifest,
        "--source",
        "A",
        "--property",
        "area",
        "--bins",
        "3",
        "--out",
        sens.to_str().unwrap(),
    ]);
    let rows = csv_rows(&sens);
    assert_eq!(rows[0], ["Property", "Bin", "Lo", "Hi", "GtCount", "Matched", "Recall"]);
    assert_eq!(rows.len(), 4);
    let binned: usize = rows[1..].iter().map(|r| r[4].parse::<usize>().unwrap()).sum();

    let mut total = 0;
    for i in 0..8 {
        let gt = read_label_png(&dir.path().join(format!("corpus/gt/scene_{i:05}.png"))).unwrap();
        total += gt.instance_ids().len();
    }
    assert_eq!(binned, total);
    assert!(rows[1..].iter().all(|r| r[0] == "area"));

    // The directory-based form scores a prediction dir against a gt dir.
    let curve = dir.path().join("curve.csv");
    run_ok(&[
        "ap-curve",
        "--gt",
        dir.path().join("corpus/gt").to_str().unwrap(),
        "--pred",
        dir.path().join("corpus/gt").to_str().unwrap(),
        "--out",
        curve.to_str().unwrap(),
    ]);
    let rows = csv_rows(&curve);
    assert_eq!(rows.len(), 11);
    assert!(rows[1..].iter().all(|r| r[1] == "1"));
}

#[test]
fn postprocess_drops_instances_below_min_area() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("pred");
    fs::create_dir(&pred).unwrap();
    // 8x8 map: instance 1 is a 2x2 speck, instance 2 a 4x5 block.
    let mut labels = vec![0u32; 64];
    for r in 0..2 {
        for c in 0..2 {
            labels[r * 8 + c] = 1;
        }
    }
    for r in 4..8 {
        for c in 3..8 {
            labels[r * 8 + c] = 2;
        }
    }
    let map = LabelMap::new(8, 8, labels).unwrap();
    write_label_png(&pred.join("img.png"), &map).unwrap();

    let out = dir.path().join("clean");
    run_ok(&[
        "postprocess",
        "--pred",
        pred.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--min-area",
        "10",
    ]);
    let cleaned = read_label_png(&out.join("img.png")).unwrap();
    assert_eq!(cleaned.instance_ids(), vec![1]);
    let survivors = cleaned.labels().iter().filter(|&&v| v != 0).count();
    assert_eq!(survivors, 20);
}
