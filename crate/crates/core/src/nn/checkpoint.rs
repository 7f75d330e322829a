//! Checkpoint serialization: `<name>.manifest` (JSON: meta + tensor table)
//! plus `<name>.weights` (little-endian f32 blob in manifest order).

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::Matrix;

pub const CKPT_FORMAT: &str = "vipelab-ckpt-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    dtype: String,
    meta: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

pub fn manifest_path(base: &Path) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn weights_path(base: &Path) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(".weights");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Saves tensors as f32 little-endian in the given order, with a JSON
/// manifest describing names, shapes, and the caller's meta document.
pub fn save_checkpoint(
    base: &Path,
    meta: &impl Serialize,
    tensors: &[(String, &Matrix)],
) -> Result<(), CheckpointError> {
    let manifest = ManifestFile {
        format: CKPT_FORMAT.to_string(),
        dtype: "f32le".to_string(),
        meta: serde_json::to_value(meta)
            .map_err(|e| CheckpointError::Corrupt(format!("meta: {e}")))?,
        tensors: tensors
            .iter()
            .map(|(name, m)| TensorMeta {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let mpath = manifest_path(base);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;

    let mut blob: Vec<u8> = Vec::new();
    for (_, m) in tensors {
        for &v in m.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let wpath = weights_path(base);
    fs::write(&wpath, blob).map_err(io_err(&wpath))
}

/// Loads a checkpoint; the blob length must match the manifest exactly.
pub fn load_checkpoint(
    base: &Path,
) -> Result<(serde_json::Value, Vec<(String, Matrix)>), CheckpointError> {
    let mpath = manifest_path(base);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| CheckpointError::Corrupt(format!("manifest: {e}")))?;
    if manifest.format != CKPT_FORMAT {
        return Err(CheckpointError::Corrupt(format!(
            "unsupported format {:?}",
            manifest.format
        )));
    }
    if manifest.dtype != "f32le" {
        return Err(CheckpointError::Corrupt(format!(
            "unsupported dtype {:?}",
            manifest.dtype
        )));
    }
    let wpath = weights_path(base);
    let blob = fs::read(&wpath).map_err(io_err(&wpath))?;
    let expected: usize = manifest
        .tensors
        .iter()
        .map(|t| t.rows * t.cols * 4)
        .sum();
    if blob.len() != expected {
        return Err(CheckpointError::Corrupt(format!(
            "weights blob is {} bytes, manifest expects {expected}",
            blob.len()
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    let mut off = 0usize;
    for tm in &manifest.tensors {
        let n = tm.rows * tm.cols;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let b = &blob[off + 4 * i..off + 4 * i + 4];
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            if !v.is_finite() {
                return Err(CheckpointError::Corrupt(format!(
                    "non-finite value in tensor {}",
                    tm.name
                )));
            }
            data.push(v);
        }
        off += 4 * n;
        let m = Matrix::from_vec(tm.rows, tm.cols, data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor {}: {e}", tm.name)))?;
        tensors.push((tm.name.clone(), m));
    }
    Ok((manifest.meta, tensors))
}

/// Deserializes the manifest's meta document into a typed value.
pub fn meta_as<T: DeserializeOwned>(meta: &serde_json::Value) -> Result<T, CheckpointError> {
    serde_json::from_value(meta.clone())
        .map_err(|e| CheckpointError::Corrupt(format!("meta: {e}")))
}

/// Hex SHA-256 over names and full-precision tensor bytes; detects any
/// parameter change.
pub fn tensors_checksum(tensors: &[(String, &Matrix)]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for (name, m) in tensors {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        for &v in m.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("model");
        let a = Matrix::from_vec(2, 3, vec![0.1, -0.25, 1e-7, 3.5, -2.0, 0.0]).unwrap();
        let b = Matrix::from_vec(1, 2, vec![42.0, -0.125]).unwrap();
        save_checkpoint(
            &base,
            &serde_json::json!({"kind": "test"}),
            &[("a".into(), &a), ("b".into(), &b)],
        )
        .unwrap();
        let (meta, tensors) = load_checkpoint(&base).unwrap();
        assert_eq!(meta["kind"], "test");
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "a");
        for (x, y) in tensors[0].1.data().iter().zip(a.data()) {
            assert!((x - y).abs() <= y.abs() * 1e-6 + 1e-12);
        }
        // exactly representable values survive bit-exact
        assert_eq!(tensors[1].1.data(), b.data());
    }

    #[test]
    fn truncated_blob_is_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("model");
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        save_checkpoint(&base, &serde_json::json!({}), &[("a".into(), &a)]).unwrap();
        let wpath = weights_path(&base);
        let blob = fs::read(&wpath).unwrap();
        fs::write(&wpath, &blob[..blob.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint(&base),
            Err(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn empty_checkpoint_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("empty");
        save_checkpoint(&base, &serde_json::json!({"kind": "none"}), &[]).unwrap();
        let (_, tensors) = load_checkpoint(&base).unwrap();
        assert!(tensors.is_empty());
    }
}
