//! Provenance record written beside every command's outputs: what ran, with
//! which configuration, over which inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, RunContext};

/// SHA-256 of one input path, as recorded in the run manifest.
#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: &'a [String],
    tool_version: &'a str,
    seed: u64,
    threads: usize,
    config: serde_json::Value,
    inputs: &'a [InputDigest],
    wall_time_ms: u128,
}

/// Writes `path` as pretty JSON. Every field except `wall_time_ms` is a pure
/// function of the invocation and its inputs.
pub fn write_run_manifest(
    path: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[InputDigest],
    ctx: &RunContext,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command,
        argv: &ctx.argv,
        tool_version: concat!("maskfuse ", env!("CARGO_PKG_VERSION")),
        seed: ctx.seed,
        threads: rayon::current_num_threads(),
        config,
        inputs,
        wall_time_ms: ctx.started.elapsed().as_millis(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Invalid(format!("run manifest serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::File(format!("{}: {e}", path.display())))
}

/// Manifest location for commands whose output is a single file:
/// `model.txt` gets `model.run.json` beside it.
pub fn sidecar_path(out_file: &Path) -> PathBuf {
    out_file.with_extension("run.json")
}

/// Serialized argument struct, echoed into the manifest's `config` field.
pub fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("argument structs serialize to JSON")
}

/// Digest of one input: file contents, or for a directory the hash of its
/// sorted (relative path, content hash) pairs. Run manifests from earlier
/// commands are skipped so identical pipeline reruns see identical inputs.
pub fn digest_input(path: &Path) -> Result<InputDigest, CliError> {
    let meta = fs::metadata(path).map_err(|e| CliError::File(format!("{}: {e}", path.display())))?;
    let sha256 = if meta.is_dir() { digest_dir(path)? } else { digest_file(path)? };
    Ok(InputDigest { path: path.display().to_string(), sha256 })
}

fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::File(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn digest_dir(root: &Path) -> Result<String, CliError> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in &files {
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update(digest_file(&root.join(rel))?.as_bytes());
        hasher.update([0u8]);
    }
    Ok(hex(&hasher.finalize()))
}

fn is_run_manifest(name: &str) -> bool {
    name == "run_manifest.json" || name.ends_with(".run.json")
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::File(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::File(format!("{}: {e}", dir.display())))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if !is_run_manifest(&entry.file_name().to_string_lossy()) {
            let rel = path
                .strip_prefix(root)
                .expect("walked paths live under the walk root")
                .to_string_lossy()
                .into_owned();
            out.push(rel);
        }
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
    }
    s
}
