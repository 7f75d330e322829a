//! Embedding index, exact k-NN, cross-view Hit@k, the flattened-2D baseline,
//! and MPJPE evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{normalize_2d, CameraError};
use crate::pose::{
    mpjpe, procrustes_align, procrustes_mpjpe, root_center, Pose2D, Pose3D, PoseError,
    ProcrustesOptions, Skeleton,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty embedding index")]
    EmptyIndex,
    #[error("entry ({pose_id}, {camera_id}) already present")]
    DuplicateEntry { pose_id: u64, camera_id: u32 },
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("pose count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// One stored embedding with its pose identity and the canonical 3D pose the
/// hit rule compares against.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub pose_id: u64,
    pub camera_id: u32,
    pub embedding: Vec<f64>,
    pub pose: Pose3D,
}

/// Immutable store of embeddings for retrieval; unique on (pose_id, camera_id).
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
}

impl EmbeddingIndex {
    pub fn new(dim: usize) -> Self {
        EmbeddingIndex {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, entry: IndexEntry) -> Result<(), EvalError> {
        if entry.embedding.len() != self.dim {
            return Err(EvalError::DimensionMismatch {
                got: entry.embedding.len(),
                expected: self.dim,
            });
        }
        if self
            .entries
            .iter()
            .any(|e| e.pose_id == entry.pose_id && e.camera_id == entry.camera_id)
        {
            return Err(EvalError::DuplicateEntry {
                pose_id: entry.pose_id,
                camera_id: entry.camera_id,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Result of a k-NN query: entry indices with distances, non-decreasing.
/// `truncated` flags queries that asked for more neighbors than stored.
#[derive(Debug, Clone)]
pub struct KnnResult {
    pub neighbors: Vec<(usize, f64)>,
    pub truncated: bool,
}

/// Exact k nearest entries by Euclidean embedding distance; ties broken by
/// lower pose id (then camera id).
pub fn knn_query(index: &EmbeddingIndex, query: &[f64], k: usize) -> Result<KnnResult, EvalError> {
    if index.is_empty() {
        return Err(EvalError::EmptyIndex);
    }
    if query.len() != index.dim() {
        return Err(EvalError::DimensionMismatch {
            got: query.len(),
            expected: index.dim(),
        });
    }
    let mut scored: Vec<(usize, f64)> = index
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (i, euclidean(query, &e.embedding)))
        .collect();
    scored.sort_by(|&(i, di), &(j, dj)| {
        di.partial_cmp(&dj)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let (a, b) = (&index.entries()[i], &index.entries()[j]);
                a.pose_id
                    .cmp(&b.pose_id)
                    .then(a.camera_id.cmp(&b.camera_id))
            })
    });
    let truncated = k > scored.len();
    scored.truncate(k);
    Ok(KnnResult {
        neighbors: scored,
        truncated,
    })
}

/// Hit@k evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitConfig {
    pub ks: Vec<usize>,
    /// Normalized MPJPE threshold after Procrustes alignment.
    pub threshold: f64,
    /// Exclude the gallery entry with the query's exact (pose_id, camera_id).
    pub exclude_self: bool,
}

impl Default for HitConfig {
    fn default() -> Self {
        HitConfig {
            ks: vec![1, 10, 20],
            threshold: 0.1,
            exclude_self: false,
        }
    }
}

/// Hit rates per k for one camera pair (or an average over pairs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitReport {
    pub ks: Vec<usize>,
    pub rates: Vec<f64>,
    pub n_queries: usize,
}

impl HitReport {
    pub fn rate_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&kk| kk == k).map(|i| self.rates[i])
    }
}

/// Queries every entry of `queries` against `gallery`; a query scores a hit
/// at k if any of its top-k neighbors lies within the Procrustes-aligned
/// MPJPE threshold of the query's 3D pose.
pub fn hit_at_k(
    queries: &EmbeddingIndex,
    gallery: &EmbeddingIndex,
    cfg: &HitConfig,
) -> Result<HitReport, EvalError> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(EvalError::EmptyIndex);
    }
    let k_max = cfg.ks.iter().copied().max().unwrap_or(1);
    let hits: Vec<Vec<bool>> = queries
        .entries()
        .par_iter()
        .map(|q| {
            let knn = knn_query(gallery, &q.embedding, k_max + 1)
                .expect("gallery checked non-empty");
            let mut per_k = vec![false; cfg.ks.len()];
            let mut rank = 0usize;
            for &(gi, _) in &knn.neighbors {
                let g = &gallery.entries()[gi];
                if cfg.exclude_self && g.pose_id == q.pose_id && g.camera_id == q.camera_id {
                    continue;
                }
                if rank >= k_max {
                    break;
                }
                let close = procrustes_mpjpe(&q.pose, &g.pose)
                    .map(|d| d < cfg.threshold)
                    .unwrap_or(false);
                if close {
                    for (slot, &k) in per_k.iter_mut().zip(&cfg.ks) {
                        if rank < k {
                            *slot = true;
                        }
                    }
                    break;
                }
                rank += 1;
            }
            per_k
        })
        .collect();
    let n = hits.len();
    let rates = (0..cfg.ks.len())
        .map(|ki| hits.iter().filter(|h| h[ki]).count() as f64 / n as f64)
        .collect();
    Ok(HitReport {
        ks: cfg.ks.clone(),
        rates,
        n_queries: n,
    })
}

/// Averages Hit@k over all ordered pairs of distinct cameras.
pub fn hit_at_k_rig(
    per_camera: &[EmbeddingIndex],
    cfg: &HitConfig,
) -> Result<HitReport, EvalError> {
    if per_camera.len() < 2 {
        return Err(EvalError::EmptyIndex);
    }
    let mut sums = vec![0.0; cfg.ks.len()];
    let mut n_queries = 0usize;
    let mut pairs = 0usize;
    for (i, qs) in per_camera.iter().enumerate() {
        for (j, gal) in per_camera.iter().enumerate() {
            if i == j {
                continue;
            }
            let report = hit_at_k(qs, gal, cfg)?;
            for (s, r) in sums.iter_mut().zip(&report.rates) {
                *s += r;
            }
            n_queries += report.n_queries;
            pairs += 1;
        }
    }
    Ok(HitReport {
        ks: cfg.ks.clone(),
        rates: sums.iter().map(|s| s / pairs as f64).collect(),
        n_queries,
    })
}

/// Builds the 2D-keypoint baseline index: the "embedding" is the flattened
/// normalized 2D pose; the hit rule still compares canonical 3D poses.
pub fn baseline_2d_index(
    items: &[(u64, u32, Pose2D, Pose3D)],
    skel: &Skeleton,
) -> Result<EmbeddingIndex, EvalError> {
    let dim = items
        .first()
        .map(|(_, _, p, _)| p.n_joints() * 2)
        .unwrap_or(0);
    let mut index = EmbeddingIndex::new(dim);
    for (pose_id, camera_id, p2d, canonical3d) in items {
        let normalized = normalize_2d(p2d, skel.root_idx)?;
        index.insert(IndexEntry {
            pose_id: *pose_id,
            camera_id: *camera_id,
            embedding: normalized.flat(),
            pose: canonical3d.clone(),
        })?;
    }
    Ok(index)
}

/// Mean MPJPE over paired sets, optionally Procrustes-aligning each pair.
pub fn mpjpe_eval(pred: &[Pose3D], gt: &[Pose3D], aligned: bool) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::CountMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let d = if aligned {
            let opts = ProcrustesOptions::default();
            let aligned_p = procrustes_align(g, p, opts)?;
            let centered_g = {
                let r = g.joints()[opts.root_idx];
                g.translated([-r[0], -r[1], -r[2]])
            };
            mpjpe(&centered_g, &aligned_p)?
        } else {
            mpjpe(p, g)?
        };
        total += d;
    }
    Ok(total / pred.len() as f64)
}

/// Convenience: raw (unaligned) mean MPJPE of root-centered pose pairs,
/// the "chance level" of a dataset when applied to random pairs.
pub fn mean_random_pair_mpjpe(
    poses: &[Pose3D],
    skel: &Skeleton,
    n_pairs: usize,
    rng: &mut impl rand::Rng,
) -> Result<f64, EvalError> {
    if poses.len() < 2 || n_pairs == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let i = rng.random_range(0..poses.len());
        let mut j = rng.random_range(0..poses.len());
        while j == i {
            j = rng.random_range(0..poses.len());
        }
        total += mpjpe(
            &root_center(&poses[i], skel),
            &root_center(&poses[j], skel),
        )?;
    }
    Ok(total / n_pairs as f64)
}
