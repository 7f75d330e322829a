//! Dataset file format: a manifest plus line-delimited pose records.
//!
//! Records are JSON lines with floats written at 17 significant digits so
//! 64-bit values survive a write/read round trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraSpec;
use crate::pose::{Pose2D, Pose3D, SkeletonFile};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: &str = "vipelab-dataset-v1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One observation: a pose id, its split, one camera, the 3D joints, and the
/// 2D projection seen by that camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub split: Split,
    pub camera_id: u32,
    pub joints3d: Vec<[f64; 3]>,
    pub joints2d: Vec<[f64; 2]>,
}

impl DatasetRecord {
    pub fn pose3d(&self) -> Pose3D {
        Pose3D::new(self.joints3d.clone()).expect("records hold finite joints")
    }

    pub fn pose2d(&self) -> Pose2D {
        Pose2D::new(self.joints2d.clone()).expect("records hold finite joints")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Dataset manifest: counts, provenance, and everything needed to interpret
/// the records (skeleton and camera rig).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub seed: u64,
    pub n_poses: usize,
    pub n_cameras: usize,
    pub n_records: usize,
    pub pose_splits: SplitCounts,
    pub skeleton: SkeletonFile,
    pub rig: Vec<CameraSpec>,
}

/// Formats one float with 17 significant digits (lossless for f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_joints<const D: usize>(out: &mut String, joints: &[[f64; D]]) {
    out.push('[');
    for (i, j) in joints.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (k, v) in j.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(*v));
        }
        out.push(']');
    }
    out.push(']');
}

/// Serializes one record as a JSON line (deterministic byte output).
pub fn record_to_line(r: &DatasetRecord) -> String {
    let mut s = String::with_capacity(64 + 24 * (r.joints3d.len() * 3 + r.joints2d.len() * 2));
    let _ = write!(
        s,
        "{{\"id\":{},\"split\":\"{}\",\"camera_id\":{},\"joints3d\":",
        r.id,
        r.split.as_str(),
        r.camera_id
    );
    push_joints(&mut s, &r.joints3d);
    s.push_str(",\"joints2d\":");
    push_joints(&mut s, &r.joints2d);
    s.push('}');
    s
}

pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", record_to_line(r)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| DataError::Schema(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    if manifest.format != FORMAT_VERSION {
        return Err(DataError::Schema(format!(
            "unsupported dataset format {:?}",
            manifest.format
        )));
    }
    Ok(manifest)
}

/// A dataset directory: manifest + records.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        let records = read_records(&dir.join(RECORDS_FILE))?;
        Ok(Dataset { manifest, records })
    }

    /// Records of one split.
    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Unique pose ids of one split, with their 3D joints (from the first
    /// camera record encountered; all cameras share the 3D pose).
    pub fn poses_of_split(&self, split: Split) -> Vec<(u64, Pose3D)> {
        let mut out: Vec<(u64, Pose3D)> = Vec::new();
        let mut last: Option<u64> = None;
        for r in self.split(split) {
            if last != Some(r.id) {
                out.push((r.id, r.pose3d()));
                last = Some(r.id);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_f64_round_trips_bit_exactly() {
        let vals = [
            0.0,
            -0.0,
            1.0,
            0.3,
            -1.234567890123456e-7,
            std::f64::consts::PI,
            1.7976931348623157e308,
            5e-324,
        ];
        for v in vals {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn record_line_round_trips() {
        let rec = DatasetRecord {
            id: 7,
            split: Split::Val,
            camera_id: 3,
            joints3d: vec![[0.1, -0.2, 0.3], [1.0 / 3.0, 2.0f64.sqrt(), -5e-12]],
            joints2d: vec![[0.25, -0.75], [std::f64::consts::E, 0.0]],
        };
        let line = record_to_line(&rec);
        let back: DatasetRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}
