//! Pose and rotation types.

use std::ops::Deref;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{PoseError, Skeleton};

const ORTHO_TOL: f64 = 1e-9;

/// A 3D pose: one row of xyz coordinates per joint, in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose3D {
    joints: Vec<[f64; 3]>,
}

impl Pose3D {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self, PoseError> {
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        Ok(Pose3D { joints })
    }

    pub fn joints(&self) -> &[[f64; 3]] {
        &self.joints
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    /// Flattened `[x0, y0, z0, x1, ...]` view for the network stack.
    pub fn flat(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, PoseError> {
        if flat.len() % 3 != 0 {
            return Err(PoseError::DimensionMismatch {
                left: flat.len(),
                right: flat.len() / 3 * 3,
            });
        }
        Pose3D::new(flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn translated(&self, t: [f64; 3]) -> Pose3D {
        Pose3D {
            joints: self
                .joints
                .iter()
                .map(|j| [j[0] + t[0], j[1] + t[1], j[2] + t[2]])
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Pose3D {
        Pose3D {
            joints: self
                .joints
                .iter()
                .map(|j| [j[0] * s, j[1] * s, j[2] * s])
                .collect(),
        }
    }

    /// Root-mean-square joint distance from the origin.
    pub fn rms_radius(&self) -> f64 {
        let n = self.joints.len().max(1) as f64;
        let sum: f64 = self
            .joints
            .iter()
            .map(|j| j[0] * j[0] + j[1] * j[1] + j[2] * j[2])
            .sum();
        (sum / n).sqrt()
    }

}

/// A 2D pose in normalized image units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose2D {
    joints: Vec<[f64; 2]>,
}

impl Pose2D {
    pub fn new(joints: Vec<[f64; 2]>) -> Result<Self, PoseError> {
        if joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        Ok(Pose2D { joints })
    }

    pub fn joints(&self) -> &[[f64; 2]] {
        &self.joints
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, PoseError> {
        if flat.len() % 2 != 0 {
            return Err(PoseError::DimensionMismatch {
                left: flat.len(),
                right: flat.len() / 2 * 2,
            });
        }
        Pose2D::new(flat.chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn rms_radius(&self) -> f64 {
        let n = self.joints.len().max(1) as f64;
        let sum: f64 = self.joints.iter().map(|j| j[0] * j[0] + j[1] * j[1]).sum();
        (sum / n).sqrt()
    }
}

/// A proper rotation (orthonormal, det = +1).
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, PoseError> {
        let gram = m.transpose() * m;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ORTHO_TOL {
            return Err(PoseError::InvalidRotation(format!(
                "not orthonormal (|m^T m - I| = {ortho_err:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(PoseError::InvalidRotation(format!(
                "determinant {det:.12} != +1"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self, PoseError> {
        let v = Vector3::new(axis[0], axis[1], axis[2]);
        let norm = v.norm();
        if norm < 1e-12 || !norm.is_finite() {
            return Err(PoseError::InvalidRotation("zero axis".into()));
        }
        Ok(Rotation(Matrix3::from(nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(v),
            angle,
        ))))
    }

    pub fn about_z(angle: f64) -> Self {
        Rotation(Matrix3::from(nalgebra::Rotation3::from_axis_angle(
            &Vector3::z_axis(),
            angle,
        )))
    }

    pub fn about_x(angle: f64) -> Self {
        Rotation(Matrix3::from(nalgebra::Rotation3::from_axis_angle(
            &Vector3::x_axis(),
            angle,
        )))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.0 * Vector3::new(p[0], p[1], p[2]);
        [v.x, v.y, v.z]
    }

    pub fn apply_pose(&self, pose: &Pose3D) -> Pose3D {
        Pose3D {
            joints: pose.joints().iter().map(|&j| self.apply(j)).collect(),
        }
    }

    /// Rotates `pose` about `center` rather than the origin.
    pub fn apply_about(&self, pose: &Pose3D, center: [f64; 3]) -> Pose3D {
        let centered = pose.translated([-center[0], -center[1], -center[2]]);
        self.apply_pose(&centered).translated(center)
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }
}

/// A pose in the canonical frame: root at the origin, RMS radius 1,
/// hips/spine rotation-aligned to the fixed targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPose3D {
    pose: Pose3D,
}

impl CanonicalPose3D {
    /// Wraps a pose after verifying the canonical-frame invariants.
    pub fn checked(pose: Pose3D, skel: &Skeleton) -> Result<Self, PoseError> {
        let tol = 1e-9;
        let root = pose.joints()[skel.root_idx];
        let root_norm = (root[0] * root[0] + root[1] * root[1] + root[2] * root[2]).sqrt();
        if root_norm > tol {
            return Err(PoseError::NotCanonical(format!(
                "root offset {root_norm:.3e} exceeds {tol:.0e}"
            )));
        }
        let rms = pose.rms_radius();
        if (rms - 1.0).abs() > tol {
            return Err(PoseError::NotCanonical(format!(
                "RMS radius {rms} != 1"
            )));
        }
        // Rotation alignment puts the hip difference vector and the spine in
        // the y-z plane (x components vanish at the optimum).
        let lh = pose.joints()[skel.left_hip_idx];
        let rh = pose.joints()[skel.right_hip_idx];
        let sp = pose.joints()[skel.spine_idx];
        let hip_dx = rh[0] - lh[0];
        if hip_dx.abs() > 1e-6 || sp[0].abs() > 1e-6 {
            return Err(PoseError::NotCanonical(format!(
                "hips/spine not aligned (hip dx {hip_dx:.3e}, spine x {:.3e})",
                sp[0]
            )));
        }
        Ok(CanonicalPose3D { pose })
    }

    /// Wraps a model estimate that lives in the canonical frame by
    /// construction but only satisfies the invariants approximately.
    pub fn estimated(pose: Pose3D) -> Self {
        CanonicalPose3D { pose }
    }

    pub fn pose(&self) -> &Pose3D {
        &self.pose
    }

    pub fn into_pose(self) -> Pose3D {
        self.pose
    }
}

impl Deref for CanonicalPose3D {
    type Target = Pose3D;

    fn deref(&self) -> &Pose3D {
        &self.pose
    }
}
