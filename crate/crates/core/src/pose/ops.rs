//! Pose normalization, rigid alignment, and distance operations.

use nalgebra::{Matrix3, Vector3};

use super::types::{CanonicalPose3D, Pose3D, Rotation};
use super::{PoseError, Skeleton};

/// Alignment targets for (left hip, right hip, spine): hips on the y axis,
/// spine on the z axis.
const TRIAD_TARGETS: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Mean per-joint position error: mean Euclidean distance over corresponding joints.
pub fn mpjpe(a: &Pose3D, b: &Pose3D) -> Result<f64, PoseError> {
    if a.n_joints() != b.n_joints() {
        return Err(PoseError::DimensionMismatch {
            left: a.n_joints(),
            right: b.n_joints(),
        });
    }
    if a.n_joints() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .joints()
        .iter()
        .zip(b.joints())
        .map(|(p, q)| {
            let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    Ok(sum / a.n_joints() as f64)
}

/// Translates the pose so the root joint sits at the origin.
pub fn root_center(p: &Pose3D, skel: &Skeleton) -> Pose3D {
    let r = p.joints()[skel.root_idx];
    p.translated([-r[0], -r[1], -r[2]])
}

/// Divides all joints by the RMS joint radius so the result has RMS radius 1.
/// Expects a root-centered pose.
pub fn normalize_scale(p: &Pose3D) -> Result<Pose3D, PoseError> {
    let rms = p.rms_radius();
    if rms < 1e-12 {
        return Err(PoseError::DegeneratePose);
    }
    Ok(p.scaled(1.0 / rms))
}

/// Proper rotation minimizing sum of squared distances `||R a_i - b_i||^2`
/// over the given pairs, with the Kabsch sign correction. `min_rank` is the
/// required rank of the cross-covariance (2 for triad alignment, 1 for
/// whole-pose Procrustes).
fn kabsch(pairs: &[([f64; 3], [f64; 3])], min_rank: usize) -> Result<Rotation, PoseError> {
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in pairs {
        let av = Vector3::new(a[0], a[1], a[2]);
        let bv = Vector3::new(b[0], b[1], b[2]);
        h += av * bv.transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let scale = sv[0].max(1e-300);
    let rank = (0..3).filter(|&i| sv[i] > scale * 1e-9 && sv[i] > 1e-12).count();
    if rank < min_rank {
        return Err(PoseError::AlignmentDegenerate);
    }
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    // R = V diag(1, 1, det(V U^T)) U^T maximizes tr(R H) over proper rotations.
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(Rotation::from_matrix_unchecked(r))
}

/// Rotates a root-centered, scale-normalized pose so its left hip, right hip,
/// and spine best align to the fixed axis targets. Returns the aligned pose
/// and the rotation that was applied.
pub fn align_rotation(
    p: &Pose3D,
    skel: &Skeleton,
) -> Result<(CanonicalPose3D, Rotation), PoseError> {
    let joints = p.joints();
    if joints.len() != skel.n_joints() {
        return Err(PoseError::DimensionMismatch {
            left: joints.len(),
            right: skel.n_joints(),
        });
    }
    let triad = [
        joints[skel.left_hip_idx],
        joints[skel.right_hip_idx],
        joints[skel.spine_idx],
    ];
    let pairs: Vec<([f64; 3], [f64; 3])> = triad
        .iter()
        .zip(TRIAD_TARGETS.iter())
        .map(|(&a, &b)| (a, b))
        .collect();
    let rot = kabsch(&pairs, 2)?;
    let aligned = rot.apply_pose(p);
    Ok((CanonicalPose3D::checked(aligned, skel)?, rot))
}

/// Full canonicalization: root-center, scale-normalize, rotation-align.
pub fn canonicalize(p: &Pose3D, skel: &Skeleton) -> Result<CanonicalPose3D, PoseError> {
    let centered = root_center(p, skel);
    let scaled = normalize_scale(&centered)?;
    let (canonical, _) = align_rotation(&scaled, skel)?;
    Ok(canonical)
}

/// Rescales each bone, walking the tree from the root outward, so bone
/// lengths match the skeleton while directions are preserved.
pub fn enforce_bone_lengths(p: &Pose3D, skel: &Skeleton) -> Result<Pose3D, PoseError> {
    if p.n_joints() != skel.n_joints() {
        return Err(PoseError::DimensionMismatch {
            left: p.n_joints(),
            right: skel.n_joints(),
        });
    }
    let src = p.joints();
    let mut out = vec![[0.0f64; 3]; src.len()];
    for j in skel.topo_order() {
        match skel.parents[j] {
            None => out[j] = src[j],
            Some(parent) => {
                let d = [
                    src[j][0] - src[parent][0],
                    src[j][1] - src[parent][1],
                    src[j][2] - src[parent][2],
                ];
                let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if norm < 1e-12 {
                    return Err(PoseError::DegenerateBone { joint: j });
                }
                let s = skel.bone_lengths[j] / norm;
                out[j] = [
                    out[parent][0] + d[0] * s,
                    out[parent][1] + d[1] * s,
                    out[parent][2] + d[2] * s,
                ];
            }
        }
    }
    Pose3D::new(out)
}

#[derive(Debug, Clone, Copy)]
pub struct ProcrustesOptions {
    /// Also solve for a uniform scale factor. Off by default: inputs are
    /// expected to be pre-normalized.
    pub with_scale: bool,
    /// Joint treated as the root for centering.
    pub root_idx: usize,
}

impl Default for ProcrustesOptions {
    fn default() -> Self {
        ProcrustesOptions {
            with_scale: false,
            root_idx: 0,
        }
    }
}

/// Root-centers both poses and rotates `b` (over all joints) to best fit `a`.
/// Returns the transformed `b`. Compare against `a` centered the same way.
pub fn procrustes_align(
    a: &Pose3D,
    b: &Pose3D,
    opts: ProcrustesOptions,
) -> Result<Pose3D, PoseError> {
    if a.n_joints() != b.n_joints() {
        return Err(PoseError::DimensionMismatch {
            left: a.n_joints(),
            right: b.n_joints(),
        });
    }
    let ac = center_on(a, opts.root_idx);
    let bc = center_on(b, opts.root_idx);
    let pairs: Vec<([f64; 3], [f64; 3])> = bc
        .joints()
        .iter()
        .zip(ac.joints())
        .map(|(&src, &dst)| (src, dst))
        .collect();
    let rot = kabsch(&pairs, 1)?;
    let mut aligned = rot.apply_pose(&bc);
    if opts.with_scale {
        let num: f64 = aligned
            .joints()
            .iter()
            .zip(ac.joints())
            .map(|(p, q)| p[0] * q[0] + p[1] * q[1] + p[2] * q[2])
            .sum();
        let den: f64 = aligned
            .joints()
            .iter()
            .map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            .sum();
        if den > 1e-24 {
            aligned = aligned.scaled(num / den);
        }
    }
    Ok(aligned)
}

fn center_on(p: &Pose3D, root_idx: usize) -> Pose3D {
    let r = p.joints()[root_idx];
    p.translated([-r[0], -r[1], -r[2]])
}

/// MPJPE after Procrustes alignment (rotation + translation, no scale).
pub fn procrustes_mpjpe(a: &Pose3D, b: &Pose3D) -> Result<f64, PoseError> {
    let opts = ProcrustesOptions::default();
    let aligned = procrustes_align(a, b, opts)?;
    mpjpe(&center_on(a, opts.root_idx), &aligned)
}

/// Pose preprocessing pipeline. Rotation alignment can be switched off so
/// its contribution to view invariance is measurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocessor {
    pub align_rotation: bool,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            align_rotation: true,
        }
    }
}

impl Preprocessor {
    pub fn apply(&self, p: &Pose3D, skel: &Skeleton) -> Result<Pose3D, PoseError> {
        let centered = root_center(p, skel);
        let scaled = normalize_scale(&centered)?;
        if self.align_rotation {
            let (canonical, _) = align_rotation(&scaled, skel)?;
            Ok(canonical.into_pose())
        } else {
            Ok(scaled)
        }
    }
}

/// Greedy sequential near-duplicate filter: keeps a pose iff its
/// Procrustes-aligned MPJPE to every kept pose is at least `min_dist`.
/// Returns the kept indices in input order.
pub fn dedup_poses(poses: &[Pose3D], min_dist: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, p) in poses.iter().enumerate() {
        if min_dist <= 0.0 {
            kept.push(i);
            continue;
        }
        let mut ok = true;
        for &j in &kept {
            // Degenerate poses fall back to the unaligned distance so the
            // filter itself never fails.
            let d = procrustes_mpjpe(&poses[j], p)
                .or_else(|_| mpjpe(&poses[j], p))
                .unwrap_or(f64::INFINITY);
            if d < min_dist {
                ok = false;
                break;
            }
        }
        if ok {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_pose(rng: &mut impl Rng, n: usize) -> Pose3D {
        Pose3D::new(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    fn random_rotation(rng: &mut impl Rng) -> Rotation {
        loop {
            let axis = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            if let Ok(r) = Rotation::from_axis_angle(axis, angle) {
                return r;
            }
        }
    }

    #[test]
    fn mpjpe_identity_and_closed_form() {
        let skel = Skeleton::default17();
        let mut r = rng::seeded(1);
        let a = random_pose(&mut r, skel.n_joints());
        assert_eq!(mpjpe(&a, &a).unwrap(), 0.0);

        let mut joints = a.joints().to_vec();
        joints[5][0] += 0.3;
        let b = Pose3D::new(joints).unwrap();
        let expect = 0.3 / 17.0;
        assert!((mpjpe(&a, &b).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn mpjpe_matches_brute_force_loop() {
        let mut r = rng::seeded(2);
        for _ in 0..20 {
            let a = random_pose(&mut r, 17);
            let b = random_pose(&mut r, 17);
            let mut total = 0.0;
            for i in 0..17 {
                let pa = a.joints()[i];
                let pb = b.joints()[i];
                let mut sq = 0.0;
                for k in 0..3 {
                    sq += (pa[k] - pb[k]) * (pa[k] - pb[k]);
                }
                total += sq.sqrt();
            }
            assert!((mpjpe(&a, &b).unwrap() - total / 17.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mpjpe_dimension_error() {
        let a = random_pose(&mut rng::seeded(3), 17);
        let b = random_pose(&mut rng::seeded(4), 16);
        assert!(matches!(
            mpjpe(&a, &b),
            Err(PoseError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn root_center_shifts_and_is_idempotent() {
        let skel = Skeleton::default17();
        let mut r = rng::seeded(5);
        let p = random_pose(&mut r, 17).translated([1.0, 2.0, 3.0]);
        let c = root_center(&p, &skel);
        let root = c.joints()[skel.root_idx];
        assert!(root.iter().all(|v| v.abs() < 1e-12));
        // every joint shifted identically
        for (orig, cent) in p.joints().iter().zip(c.joints()) {
            let shift = [orig[0] - cent[0], orig[1] - cent[1], orig[2] - cent[2]];
            for (s, e) in shift.iter().zip(p.joints()[skel.root_idx].iter()) {
                assert!((s - e).abs() < 1e-12);
            }
        }
        assert_eq!(root_center(&c, &skel), c);
    }

    #[test]
    fn normalize_scale_unit_rms_and_scale_invariance() {
        let skel = Skeleton::default17();
        let mut r = rng::seeded(6);
        for _ in 0..10 {
            let p = root_center(&random_pose(&mut r, 17), &skel);
            let n1 = normalize_scale(&p).unwrap();
            assert!((n1.rms_radius() - 1.0).abs() < 1e-9);
            let n2 = normalize_scale(&p.scaled(2.0)).unwrap();
            let d = mpjpe(&n1, &n2).unwrap();
            assert!(d < 1e-12);
        }
        // already unit RMS: unchanged
        let p = root_center(&random_pose(&mut r, 17), &skel);
        let n = normalize_scale(&p).unwrap();
        let again = normalize_scale(&n).unwrap();
        assert!(mpjpe(&n, &again).unwrap() < 1e-12);
    }

    #[test]
    fn normalize_scale_degenerate() {
        let p = Pose3D::new(vec![[0.0; 3]; 17]).unwrap();
        assert!(matches!(
            normalize_scale(&p),
            Err(PoseError::DegeneratePose)
        ));
    }

    #[test]
    fn align_rotation_identity_when_on_targets() {
        let skel = Skeleton::default17();
        // Build a pose whose triad already sits on the targets, then
        // normalize scale (which preserves directions).
        let mut joints = vec![[0.0f64; 3]; 17];
        joints[skel.left_hip_idx] = [0.0, -0.13, 0.0];
        joints[skel.right_hip_idx] = [0.0, 0.13, 0.0];
        joints[skel.spine_idx] = [0.0, 0.0, 0.24];
        for (j, slot) in joints.iter_mut().enumerate() {
            if slot == &[0.0; 3] && j != skel.root_idx {
                slot[0] = 0.01 * (j as f64 + 1.0);
                slot[2] = -0.02 * (j as f64);
            }
        }
        let pose = normalize_scale(&Pose3D::new(joints).unwrap()).unwrap();
        let (aligned, rot) = align_rotation(&pose, &skel).unwrap();
        let eye = rot.matrix() - nalgebra::Matrix3::identity();
        assert!(eye.abs().max() < 1e-9);
        assert!(mpjpe(aligned.pose(), &pose).unwrap() < 1e-9);
    }

    #[test]
    fn align_rotation_recovers_known_rotation() {
        let skel = Skeleton::default17();
        let mut r = rng::seeded(7);
        for _ in 0..20 {
            let base = normalize_scale(&root_center(&random_pose(&mut r, 17), &skel)).unwrap();
            let (canon, _) = align_rotation(&base, &skel).unwrap();
            let rot = random_rotation(&mut r);
            let moved = rot.apply_pose(canon.pose());
            let (recovered, _) = align_rotation(&moved, &skel).unwrap();
            assert!(mpjpe(recovered.pose(), canon.pose()).unwrap() < 1e-6);
        }
    }

    #[test]
    fn align_rotation_proper_even_for_mirror_optimum() {
        let skel = Skeleton::default17();
        // Mirror a generic pose through the x=0 plane: the unconstrained
        // optimum for the triad may be a reflection; the result must still be
        // a proper rotation.
        let mut r = rng::seeded(8);
        for _ in 0..10 {
            let base = normalize_scale(&root_center(&random_pose(&mut r, 17), &skel)).unwrap();
            let mirrored = Pose3D::new(
                base.joints()
                    .iter()
                    .map(|j| [-j[0], j[1], j[2]])
                    .collect(),
            )
            .unwrap();
            let (_, rot) = align_rotation(&mirrored, &skel).unwrap();
            assert!((rot.matrix().determinant() - 1.0).abs() < 1e-9);
            let gram = rot.matrix().transpose() * rot.matrix();
            assert!((gram - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn align_rotation_degenerate_triad_errors() {
        let skel = Skeleton::default17();
        // All triad joints on one line through the origin: rank 1.
        let mut joints = vec![[0.1, 0.2, 0.3]; 17];
        joints[skel.root_idx] = [0.0; 3];
        joints[skel.left_hip_idx] = [0.0, -0.5, 0.0];
        joints[skel.right_hip_idx] = [0.0, 0.5, 0.0];
        joints[skel.spine_idx] = [0.0, 0.25, 0.0];
        let p = normalize_scale(&Pose3D::new(joints).unwrap()).unwrap();
        assert!(matches!(
            align_rotation(&p, &skel),
            Err(PoseError::AlignmentDegenerate)
        ));
    }

    #[test]
    fn canonicalize_idempotent_and_rigid_invariant() {
        let skel = Skeleton::default17();
        let mut r = rng::seeded(9);
        for _ in 0..20 {
            let p = random_pose(&mut r, 17);
            let c1 = canonicalize(&p, &skel).unwrap();
            let c2 = canonicalize(c1.pose(), &skel).unwrap();
            assert!(mpjpe(c1.pose(), c2.pose()).unwrap() < 1e-9);

            let rot = random_rotation(&mut r);
            let t = [
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
            ];
            let moved = rot.apply_pose(&p).translated(t);
            let c3 = canonicalize(&moved, &skel).unwrap();
            assert!(mpjpe(c1.pose(), c3.pose()).unwrap() < 1e-6);

            let c4 = canonicalize(&p.scaled(3.0), &skel).unwrap();
            assert!(mpjpe(c1.pose(), c4.pose()).unwrap() < 1e-9);
        }
    }

    #[test]
    fn enforce_bone_lengths_restores_lengths() {
        let skel = Skeleton::default17();
        let mut r = rng::seeded(10);
        for _ in 0..10 {
            let p = random_pose(&mut r, 17);
            let fixed = enforce_bone_lengths(&p, &skel).unwrap();
            for j in 0..17 {
                if let Some(parent) = skel.parents[j] {
                    let a = fixed.joints()[j];
                    let b = fixed.joints()[parent];
                    let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
                        + (a[2] - b[2]).powi(2))
                    .sqrt();
                    assert!((len - skel.bone_lengths[j]).abs() < 1e-9);
                }
            }
            // directions preserved
            for j in 0..17 {
                if let Some(parent) = skel.parents[j] {
                    let da = [
                        p.joints()[j][0] - p.joints()[parent][0],
                        p.joints()[j][1] - p.joints()[parent][1],
                        p.joints()[j][2] - p.joints()[parent][2],
                    ];
                    let db = [
                        fixed.joints()[j][0] - fixed.joints()[parent][0],
                        fixed.joints()[j][1] - fixed.joints()[parent][1],
                        fixed.joints()[j][2] - fixed.joints()[parent][2],
                    ];
                    let na = (da[0] * da[0] + da[1] * da[1] + da[2] * da[2]).sqrt();
                    let nb = (db[0] * db[0] + db[1] * db[1] + db[2] * db[2]).sqrt();
                    let dot = (da[0] * db[0] + da[1] * db[1] + da[2] * db[2]) / (na * nb);
                    assert!(dot > 1.0 - 1e-9);
                }
            }
        }
        // uniformly scaled pose restores to canonical lengths, and a pose
        // already at canonical lengths is unchanged
        let p = random_pose(&mut r, 17);
        let fixed = enforce_bone_lengths(&p, &skel).unwrap();
        let fixed2 = enforce_bone_lengths(&fixed.scaled(2.5), &skel).unwrap();
        let fixed2 = fixed2.translated({
            let a = fixed.joints()[0];
            let b = fixed2.joints()[0];
            [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
        });
        assert!(mpjpe(&fixed, &fixed2).unwrap() < 1e-9);
        let again = enforce_bone_lengths(&fixed, &skel).unwrap();
        assert!(mpjpe(&fixed, &again).unwrap() < 1e-9);
    }

    #[test]
    fn enforce_bone_lengths_zero_bone_errors() {
        let skel = Skeleton::default17();
        let mut joints = random_pose(&mut rng::seeded(11), 17).joints().to_vec();
        joints[2] = joints[1]; // knee coincides with hip
        let p = Pose3D::new(joints).unwrap();
        assert!(matches!(
            enforce_bone_lengths(&p, &skel),
            Err(PoseError::DegenerateBone { joint: 2 })
        ));
    }

    #[test]
    fn procrustes_exact_recovery_and_identity() {
        let mut r = rng::seeded(12);
        let a = random_pose(&mut r, 17);
        let rot = random_rotation(&mut r);
        let b = rot.apply_pose(&a).translated([0.4, -0.2, 1.0]);
        let aligned = procrustes_align(&a, &b, ProcrustesOptions::default()).unwrap();
        let ac = center_on(&a, 0);
        assert!(mpjpe(&ac, &aligned).unwrap() < 1e-9);

        let same = procrustes_align(&a, &a, ProcrustesOptions::default()).unwrap();
        assert!(mpjpe(&ac, &same).unwrap() < 1e-12);
    }

    #[test]
    fn procrustes_beats_random_rotations() {
        let mut r = rng::seeded(13);
        let a = random_pose(&mut r, 17);
        let b = random_pose(&mut r, 17);
        let ac = center_on(&a, 0);
        let bc = center_on(&b, 0);
        let aligned = procrustes_align(&a, &b, ProcrustesOptions::default()).unwrap();
        let best: f64 = aligned
            .joints()
            .iter()
            .zip(ac.joints())
            .map(|(p, q)| {
                (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
            })
            .sum();
        for _ in 0..1000 {
            let rot = random_rotation(&mut r);
            let cand = rot.apply_pose(&bc);
            let res: f64 = cand
                .joints()
                .iter()
                .zip(ac.joints())
                .map(|(p, q)| {
                    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
                })
                .sum();
            assert!(best <= res + 1e-9);
        }
    }

    #[test]
    fn procrustes_never_increases_mpjpe_vs_centered_baseline() {
        let mut r = rng::seeded(16);
        for _ in 0..50 {
            let a = random_pose(&mut r, 17);
            let b = random_pose(&mut r, 17);
            let ac = center_on(&a, 0);
            let bc = center_on(&b, 0);
            let baseline = mpjpe(&ac, &bc).unwrap();
            let aligned = procrustes_mpjpe(&a, &b).unwrap();
            assert!(aligned <= baseline + 1e-12);
        }
    }

    #[test]
    fn procrustes_degenerate_errors() {
        let a = Pose3D::new(vec![[1.0, 1.0, 1.0]; 17]).unwrap();
        let b = Pose3D::new(vec![[2.0, 0.0, 0.0]; 17]).unwrap();
        assert!(procrustes_align(&a, &b, ProcrustesOptions::default()).is_err());
    }

    #[test]
    fn dedup_keeps_all_at_zero_and_one_of_duplicates() {
        let mut r = rng::seeded(14);
        let poses: Vec<Pose3D> = (0..8).map(|_| random_pose(&mut r, 17)).collect();
        assert_eq!(dedup_poses(&poses, 0.0), (0..8).collect::<Vec<_>>());

        let dup = vec![poses[0].clone(); 5];
        assert_eq!(dedup_poses(&dup, 0.05), vec![0]);
    }

    #[test]
    fn dedup_matches_brute_force_greedy() {
        let mut r = rng::seeded(15);
        for _ in 0..10 {
            let mut poses: Vec<Pose3D> = (0..12).map(|_| random_pose(&mut r, 17)).collect();
            // inject near-duplicates
            let extra = poses[3].translated([0.001, 0.0, 0.0]);
            poses.push(extra);
            let min_dist = 0.4;
            let got = dedup_poses(&poses, min_dist);

            // independent O(n^2) restatement of the greedy rule
            let mut kept: Vec<usize> = Vec::new();
            for i in 0..poses.len() {
                let ok = kept.iter().all(|&j| {
                    procrustes_mpjpe(&poses[j], &poses[i]).unwrap() >= min_dist
                });
                if ok {
                    kept.push(i);
                }
            }
            assert_eq!(got, kept);
        }
    }
}
