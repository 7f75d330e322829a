//! Embedding-space generation utilities: noise perturbation along a fixed
//! direction, waypoint interpolation between two embeddings, and a 2-D PCA
//! export for external plotting.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::fmt_f64;
use crate::pose::CanonicalPose3D;
use crate::vae::{PoseDecoder, TrainError};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("embedding dimension {got} does not match decoder ({expected})")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("interpolation needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("need at least 2 embeddings, got {0}")]
    TooFewEmbeddings(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Default noise magnitudes for [`perturb`].
pub const DEFAULT_ALPHAS: [f64; 4] = [0.2, 0.3, 0.4, 0.5];

/// Decodes `e + alpha * z_hat` for each alpha, where `z_hat` is `z`
/// normalized to unit length (so alpha is the exact step size). A zero `z`
/// leaves the embedding untouched for every alpha.
pub fn perturb(
    decoder: &PoseDecoder,
    e: &[f64],
    z: &[f64],
    alphas: &[f64],
) -> Result<Vec<CanonicalPose3D>, GenError> {
    if e.len() != decoder.latent_dim {
        return Err(GenError::DimensionMismatch {
            got: e.len(),
            expected: decoder.latent_dim,
        });
    }
    if z.len() != e.len() {
        return Err(GenError::DimensionMismatch {
            got: z.len(),
            expected: e.len(),
        });
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z_hat: Vec<f64> = if norm < 1e-12 {
        vec![0.0; z.len()]
    } else {
        z.iter().map(|v| v / norm).collect()
    };
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let point: Vec<f64> = e
            .iter()
            .zip(&z_hat)
            .map(|(ev, zv)| ev + alpha * zv)
            .collect();
        out.push(decoder.decode_one(&point)?);
    }
    Ok(out)
}

/// Decodes `steps` evenly spaced points from `e_a` to `e_b` inclusive.
pub fn interpolate(
    decoder: &PoseDecoder,
    e_a: &[f64],
    e_b: &[f64],
    steps: usize,
) -> Result<Vec<CanonicalPose3D>, GenError> {
    if steps < 2 {
        return Err(GenError::TooFewSteps(steps));
    }
    if e_a.len() != decoder.latent_dim || e_b.len() != decoder.latent_dim {
        return Err(GenError::DimensionMismatch {
            got: e_a.len().max(e_b.len()),
            expected: decoder.latent_dim,
        });
    }
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let w = t as f64 / (steps - 1) as f64;
        let point: Vec<f64> = e_a
            .iter()
            .zip(e_b)
            .map(|(a, b)| a + w * (b - a))
            .collect();
        out.push(decoder.decode_one(&point)?);
    }
    Ok(out)
}

/// Embedding coordinates along the interpolation path (without decoding);
/// useful for asserting the path's geometry.
pub fn interpolation_points(e_a: &[f64], e_b: &[f64], steps: usize) -> Vec<Vec<f64>> {
    (0..steps)
        .map(|t| {
            let w = t as f64 / (steps.max(2) - 1) as f64;
            e_a.iter().zip(e_b).map(|(a, b)| a + w * (b - a)).collect()
        })
        .collect()
}

/// Outcome of a PCA export.
#[derive(Debug, Clone)]
pub struct VizSummary {
    /// Covariance was (numerically) zero; all projections were written as zeros.
    pub degenerate: bool,
    /// Variance captured by the two components.
    pub explained: [f64; 2],
    pub n_points: usize,
}

/// Projects embeddings onto their top two principal components and writes
/// `x,y,label` CSV records for external plotting.
pub fn embedding_viz_export(
    embeddings: &[Vec<f64>],
    labels: &[String],
    path: &Path,
) -> Result<VizSummary, GenError> {
    if embeddings.len() < 2 {
        return Err(GenError::TooFewEmbeddings(embeddings.len()));
    }
    if labels.len() != embeddings.len() {
        return Err(GenError::DimensionMismatch {
            got: labels.len(),
            expected: embeddings.len(),
        });
    }
    let (proj, summary) = pca_2d(embeddings);
    let io_err = |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "x,y,label").map_err(io_err)?;
    for (p, label) in proj.iter().zip(labels) {
        writeln!(w, "{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), label).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(summary)
}

/// Centers the embeddings and projects onto the top two eigenvectors of the
/// covariance matrix. Components carry a deterministic sign (largest-magnitude
/// coordinate positive) and are ordered by explained variance.
pub fn pca_2d(embeddings: &[Vec<f64>]) -> (Vec<[f64; 2]>, VizSummary) {
    let n = embeddings.len();
    let d = embeddings[0].len();
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for e in embeddings {
        for i in 0..d {
            let di = e[i] - mean[i];
            for j in i..d {
                let dj = e[j] - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    let denom = (n - 1).max(1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let max_cov = cov.abs().max();
    if max_cov < 1e-15 {
        return (
            vec![[0.0, 0.0]; n],
            VizSummary {
                degenerate: true,
                explained: [0.0, 0.0],
                n_points: n,
            },
        );
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut comps = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    for c in 0..2.min(d) {
        let col = eig.eigenvectors.column(order[c]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        // deterministic sign
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        comps[c] = v;
        explained[c] = eig.eigenvalues[order[c]].max(0.0);
    }
    let proj = embeddings
        .iter()
        .map(|e| {
            let mut p = [0.0; 2];
            for (c, comp) in comps.iter().enumerate() {
                p[c] = e
                    .iter()
                    .zip(&mean)
                    .zip(comp)
                    .map(|((v, m), w)| (v - m) * w)
                    .sum();
            }
            p
        })
        .collect();
    (
        proj,
        VizSummary {
            degenerate: false,
            explained,
            n_points: n,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::vae::{VaeModel, VaeSpec};
    use rand::Rng;

    fn tiny_decoder(seed: u64) -> PoseDecoder {
        VaeModel::new(
            VaeSpec {
                n_joints: 17,
                latent_dim: 6,
                hidden_dim: 12,
                n_blocks: 1,
                dropout_p: 0.0,
                use_batchnorm: true,
            },
            seed,
        )
        .unwrap()
        .decoder
    }

    #[test]
    fn alpha_zero_is_plain_decode() {
        let dec = tiny_decoder(1);
        let e = vec![0.3, -0.2, 0.5, 0.0, 0.1, -0.4];
        let z = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let out = perturb(&dec, &e, &z, &[0.0, 0.3]).unwrap();
        let base = dec.decode_one(&e).unwrap();
        assert_eq!(out[0].pose(), base.pose());
        assert_ne!(out[1].pose(), base.pose());
    }

    #[test]
    fn zero_direction_returns_identical_decodes() {
        let dec = tiny_decoder(2);
        let e = vec![0.1; 6];
        let z = vec![0.0; 6];
        let out = perturb(&dec, &e, &z, &DEFAULT_ALPHAS).unwrap();
        for p in &out[1..] {
            assert_eq!(p.pose(), out[0].pose());
        }
    }

    #[test]
    fn perturb_dimension_error() {
        let dec = tiny_decoder(3);
        assert!(matches!(
            perturb(&dec, &[0.0; 4], &[0.0; 4], &[0.2]),
            Err(GenError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn interpolation_endpoints_exact_and_affine() {
        let dec = tiny_decoder(4);
        let mut r = rng::seeded(5);
        let a: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();

        let two = interpolate(&dec, &a, &b, 2).unwrap();
        assert_eq!(two[0].pose(), dec.decode_one(&a).unwrap().pose());
        assert_eq!(two[1].pose(), dec.decode_one(&b).unwrap().pose());

        // distance to b decreases linearly along the path
        let steps = 7;
        let pts = interpolation_points(&a, &b, steps);
        let dist_ab: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        for (t, p) in pts.iter().enumerate() {
            let dist: f64 = p
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let expect = (1.0 - t as f64 / (steps - 1) as f64) * dist_ab;
            assert!((dist - expect).abs() < 1e-12);
        }

        // 5-step path decodes to well-formed poses
        let five = interpolate(&dec, &a, &b, 5).unwrap();
        assert_eq!(five.len(), 5);
        for p in &five {
            assert_eq!(p.pose().n_joints(), 17);
        }

        assert!(matches!(
            interpolate(&dec, &a, &b, 1),
            Err(GenError::TooFewSteps(1))
        ));
    }

    #[test]
    fn pca_recovers_centered_2d_embeddings() {
        // already 2-D and centered: projection is the same point set up to
        // rotation/sign, so pairwise distances survive
        let mut r = rng::seeded(6);
        let mut pts: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-0.5..0.5)])
            .collect();
        let mean: Vec<f64> = (0..2)
            .map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64)
            .collect();
        for p in &mut pts {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
        let (proj, summary) = pca_2d(&pts);
        assert!(!summary.degenerate);
        assert!(summary.explained[0] >= summary.explained[1]);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let orig = ((pts[i][0] - pts[j][0]).powi(2)
                    + (pts[i][1] - pts[j][1]).powi(2))
                .sqrt();
                let got = ((proj[i][0] - proj[j][0]).powi(2)
                    + (proj[i][1] - proj[j][1]).powi(2))
                .sqrt();
                assert!((orig - got).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_matches_power_iteration_oracle() {
        // independent power-iteration estimate of the top eigenvector
        let mut r = rng::seeded(7);
        let d = 5usize;
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let t: f64 = r.random_range(-1.0..1.0);
                (0..d)
                    .map(|k| t * (k as f64 + 1.0) + r.random_range(-0.01..0.01))
                    .collect()
            })
            .collect();
        let (proj, summary) = pca_2d(&pts);
        assert!(!summary.degenerate);

        // oracle: power iteration on the covariance assembled independently
        let n = pts.len();
        let mean: Vec<f64> = (0..d)
            .map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let mut cov = vec![vec![0.0; d]; d];
        for p in &pts {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (n - 1) as f64;
                }
            }
        }
        let mut v = vec![1.0; d];
        for _ in 0..500 {
            let mut nv = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    nv[i] += cov[i][j] * v[j];
                }
            }
            let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut nv {
                *x /= norm;
            }
            v = nv;
        }
        let lambda: f64 = {
            let mut av = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    av[i] += cov[i][j] * v[j];
                }
            }
            av.iter().zip(&v).map(|(a, b)| a * b).sum()
        };
        assert!((summary.explained[0] - lambda).abs() < 1e-9 * lambda.max(1.0));

        // reconstruction error along PC1 matches the oracle projection
        for (p, pr) in pts.iter().zip(&proj) {
            let oracle_coord: f64 = p
                .iter()
                .zip(&mean)
                .zip(&v)
                .map(|((x, m), w)| (x - m) * w)
                .sum();
            assert!((pr[0].abs() - oracle_coord.abs()).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_covariance_flags_and_zeros() {
        let pts = vec![vec![1.0, 2.0, 3.0]; 10];
        let (proj, summary) = pca_2d(&pts);
        assert!(summary.degenerate);
        assert!(proj.iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
    }

    #[test]
    fn viz_export_writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("viz.csv");
        let mut r = rng::seeded(8);
        let pts: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
        let summary = embedding_viz_export(&pts, &labels, &path).unwrap();
        assert_eq!(summary.n_points, 5);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,y,label\n"));
        assert_eq!(text.lines().count(), 6);

        assert!(matches!(
            embedding_viz_export(&pts[..1], &labels[..1], &path),
            Err(GenError::TooFewEmbeddings(1))
        ));
    }
}
