//! Pinhole cameras, 3D-to-2D projection, 2D normalization, and rotation
//! augmentation.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{PoseError, Pose2D, Pose3D, Rotation, Skeleton};

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("joint {joint} at or behind the camera plane (z = {z:.3e})")]
    BehindCamera { joint: usize, z: f64 },
    #[error("degenerate 2D pose: zero spatial extent")]
    Degenerate2d,
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("rig config {path}: {msg}")]
    RigConfig { path: String, msg: String },
}

/// Pinhole camera orbiting a look-at point.
///
/// Position is `look_at + radius * (cos el cos az, cos el sin az, sin el)`
/// with z up; the optical axis points at `look_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    pub focal: f64,
    #[serde(default)]
    pub look_at: [f64; 3],
}

impl Camera {
    pub fn new(azimuth: f64, elevation: f64, radius: f64, focal: f64) -> Result<Self, CameraError> {
        let cam = Camera {
            azimuth,
            elevation,
            radius,
            focal,
            look_at: [0.0; 3],
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_look_at(mut self, look_at: [f64; 3]) -> Self {
        self.look_at = look_at;
        self
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.radius > 0.0) {
            return Err(CameraError::InvalidCamera("radius must be positive".into()));
        }
        if !(self.focal > 0.0) {
            return Err(CameraError::InvalidCamera("focal must be positive".into()));
        }
        if self.elevation.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(CameraError::InvalidCamera(
                "elevation must lie strictly between -pi/2 and pi/2".into(),
            ));
        }
        Ok(())
    }

    pub fn position(&self) -> [f64; 3] {
        let (saz, caz) = self.azimuth.sin_cos();
        let (sel, cel) = self.elevation.sin_cos();
        [
            self.look_at[0] + self.radius * cel * caz,
            self.look_at[1] + self.radius * cel * saz,
            self.look_at[2] + self.radius * sel,
        ]
    }

    /// Orthonormal camera basis (right, up, forward) in world coordinates.
    fn basis(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let pos = self.position();
        let f = normalize([
            self.look_at[0] - pos[0],
            self.look_at[1] - pos[1],
            self.look_at[2] - pos[2],
        ]);
        // elevation < pi/2 keeps the forward axis off the world up vector
        let r = normalize(cross(f, [0.0, 0.0, 1.0]));
        let u = cross(r, f);
        (r, u, f)
    }

    /// Rigid transform of a pose into this camera's frame (x right, y up,
    /// z along the optical axis).
    pub fn world_to_camera(&self, p: &Pose3D) -> Pose3D {
        let pos = self.position();
        let (r, u, f) = self.basis();
        let joints = p
            .joints()
            .iter()
            .map(|j| {
                let d = [j[0] - pos[0], j[1] - pos[1], j[2] - pos[2]];
                [dot(r, d), dot(u, d), dot(f, d)]
            })
            .collect();
        Pose3D::new(joints).expect("rigid transform preserves finiteness")
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

const MIN_DEPTH: f64 = 1e-9;

/// Perspective projection of every joint: `(focal*x/z, focal*y/z)` in the
/// camera frame. Errors if any joint is at or behind the camera plane.
pub fn project(p: &Pose3D, cam: &Camera) -> Result<Pose2D, CameraError> {
    cam.validate()?;
    let cam_pose = cam.world_to_camera(p);
    let mut joints = Vec::with_capacity(p.n_joints());
    for (i, j) in cam_pose.joints().iter().enumerate() {
        if j[2] <= MIN_DEPTH {
            return Err(CameraError::BehindCamera { joint: i, z: j[2] });
        }
        joints.push([cam.focal * j[0] / j[2], cam.focal * j[1] / j[2]]);
    }
    Ok(Pose2D::new(joints)?)
}

/// Root-centers a 2D pose and divides by its RMS radius.
pub fn normalize_2d(p: &Pose2D, root_idx: usize) -> Result<Pose2D, CameraError> {
    let root = p.joints()[root_idx];
    let centered: Vec<[f64; 2]> = p
        .joints()
        .iter()
        .map(|j| [j[0] - root[0], j[1] - root[1]])
        .collect();
    let n = centered.len().max(1) as f64;
    let rms = (centered
        .iter()
        .map(|j| j[0] * j[0] + j[1] * j[1])
        .sum::<f64>()
        / n)
        .sqrt();
    if rms < 1e-12 {
        return Err(CameraError::Degenerate2d);
    }
    Ok(Pose2D::new(
        centered.iter().map(|j| [j[0] / rms, j[1] / rms]).collect(),
    )?)
}

/// Sampling ranges for the rotation augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationConfig {
    /// Azimuth range in radians, sampled uniformly.
    pub azimuth: (f64, f64),
    /// Elevation range in radians, sampled uniformly.
    pub elevation: (f64, f64),
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig {
            azimuth: (0.0, std::f64::consts::TAU),
            elevation: (
                -std::f64::consts::FRAC_PI_6,
                std::f64::consts::FRAC_PI_6,
            ),
        }
    }
}

fn sample_range(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Random rotation: azimuth about z composed with elevation about x.
pub fn random_rotation(rng: &mut impl Rng, config: &RotationConfig) -> Rotation {
    let az = sample_range(rng, config.azimuth);
    let el = sample_range(rng, config.elevation);
    Rotation::about_z(az).compose(&Rotation::about_x(el))
}

/// Augmentation settings: rotation ranges plus the camera used to re-project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub rotation: RotationConfig,
    pub camera: Camera,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation: RotationConfig::default(),
            camera: Camera::new(0.0, 0.0, 5.0, 1.0).expect("default camera"),
        }
    }
}

/// Randomly rotates the pose about its root and projects it through the
/// config camera (looking at the root). Returns the rotated 3D pose and its
/// 2D projection.
pub fn augment_pair(
    p: &Pose3D,
    skel: &Skeleton,
    rng: &mut impl Rng,
    config: &AugmentConfig,
) -> Result<(Pose3D, Pose2D), CameraError> {
    let root = p.joints()[skel.root_idx];
    let rot = random_rotation(rng, &config.rotation);
    let rotated = rot.apply_about(p, root);
    let cam = config.camera.clone().with_look_at(root);
    let projected = project(&rotated, &cam)?;
    Ok((rotated, projected))
}

/// One camera entry in a rig configuration file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    pub focal: f64,
    #[serde(default)]
    pub look_at: [f64; 3],
}

impl CameraSpec {
    pub fn to_camera(&self) -> Result<Camera, CameraError> {
        let cam = Camera {
            azimuth: self.azimuth,
            elevation: self.elevation,
            radius: self.radius,
            focal: self.focal,
            look_at: self.look_at,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn from_camera(cam: &Camera, name: Option<String>) -> Self {
        CameraSpec {
            name,
            azimuth: cam.azimuth,
            elevation: cam.elevation,
            radius: cam.radius,
            focal: cam.focal,
            look_at: cam.look_at,
        }
    }
}

/// Camera rig configuration file: a list of cameras.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RigConfig {
    pub cameras: Vec<CameraSpec>,
}

impl RigConfig {
    pub fn load(path: &Path) -> Result<Self, CameraError> {
        let text = fs::read_to_string(path).map_err(|e| CameraError::RigConfig {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CameraError::RigConfig {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CameraError> {
        let text = toml::to_string_pretty(self).map_err(|e| CameraError::RigConfig {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        fs::write(path, text).map_err(|e| CameraError::RigConfig {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn to_cameras(&self) -> Result<Vec<Camera>, CameraError> {
        self.cameras.iter().map(CameraSpec::to_camera).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::canonicalize;
    use crate::rng;

    fn test_pose(rng: &mut impl Rng) -> Pose3D {
        Pose3D::new(
            (0..17)
                .map(|_| {
                    [
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.8..0.8),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn look_at_point_projects_to_origin() {
        let cam = Camera::new(0.7, 0.2, 5.0, 1.3)
            .unwrap()
            .with_look_at([0.3, -0.2, 0.5]);
        let p = Pose3D::new(vec![[0.3, -0.2, 0.5]]).unwrap();
        let q = project(&p, &cam).unwrap().joints()[0];
        assert!(q[0].abs() < 1e-12 && q[1].abs() < 1e-12);
    }

    #[test]
    fn projection_linear_in_focal() {
        let mut r = rng::seeded(21);
        let p = test_pose(&mut r);
        let cam1 = Camera::new(0.4, 0.1, 5.0, 1.0).unwrap();
        let cam2 = Camera::new(0.4, 0.1, 5.0, 2.0).unwrap();
        let a = project(&p, &cam1).unwrap();
        let b = project(&p, &cam2).unwrap();
        for (ja, jb) in a.joints().iter().zip(b.joints()) {
            assert!((jb[0] - 2.0 * ja[0]).abs() < 1e-12);
            assert!((jb[1] - 2.0 * ja[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_matches_homogeneous_matrix_reference() {
        // Independent reference: build the 3x4 extrinsic matrix explicitly
        // and push homogeneous coordinates through it.
        let mut r = rng::seeded(22);
        for _ in 0..20 {
            let cam = Camera::new(
                r.random_range(0.0..std::f64::consts::TAU),
                r.random_range(-1.2..1.2),
                r.random_range(3.0..8.0),
                r.random_range(0.5..3.0),
            )
            .unwrap()
            .with_look_at([
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            ]);
            let p = test_pose(&mut r);

            let pos = cam.position();
            let fwd = normalize([
                cam.look_at[0] - pos[0],
                cam.look_at[1] - pos[1],
                cam.look_at[2] - pos[2],
            ]);
            let right = normalize(cross(fwd, [0.0, 0.0, 1.0]));
            let up = cross(right, fwd);
            // rows of [R | -R t]
            let rows = [right, up, fwd];
            let proj = project(&p, &cam).unwrap();
            for (j, expect) in p.joints().iter().zip(proj.joints()) {
                let hom = [j[0], j[1], j[2], 1.0];
                let mut camc = [0.0f64; 3];
                for (k, row) in rows.iter().enumerate() {
                    let t = -dot(*row, pos);
                    camc[k] = row[0] * hom[0] + row[1] * hom[1] + row[2] * hom[2] + t * hom[3];
                }
                let u = cam.focal * camc[0] / camc[2];
                let v = cam.focal * camc[1] / camc[2];
                assert!((u - expect[0]).abs() < 1e-9);
                assert!((v - expect[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn behind_camera_errors() {
        let cam = Camera::new(0.0, 0.0, 1.0, 1.0).unwrap();
        // camera sits at (1, 0, 0) looking at origin; x = 2 is behind it
        let p = Pose3D::new(vec![[2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            project(&p, &cam),
            Err(CameraError::BehindCamera { joint: 0, .. })
        ));
    }

    #[test]
    fn azimuth_equivariance() {
        // rotating the pose about the look-at vertical axis and advancing the
        // camera azimuth by the same angle gives the identical image
        let mut r = rng::seeded(23);
        for _ in 0..10 {
            let p = test_pose(&mut r);
            let theta = r.random_range(0.0..std::f64::consts::TAU);
            let cam = Camera::new(0.9, 0.3, 6.0, 1.0).unwrap();
            let rot = Rotation::about_z(theta);
            let p_rot = rot.apply_pose(&p);
            let mut cam_rot = cam.clone();
            cam_rot.azimuth += theta;
            let a = project(&p_rot, &cam_rot).unwrap();
            let b = project(&p, &cam).unwrap();
            for (ja, jb) in a.joints().iter().zip(b.joints()) {
                assert!((ja[0] - jb[0]).abs() < 1e-9);
                assert!((ja[1] - jb[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_2d_contract() {
        let mut r = rng::seeded(24);
        let p = Pose2D::new(
            (0..17)
                .map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)])
                .collect(),
        )
        .unwrap();
        let n1 = normalize_2d(&p, 0).unwrap();
        assert!((n1.rms_radius() - 1.0).abs() < 1e-9);
        let root = n1.joints()[0];
        assert!(root[0].abs() < 1e-12 && root[1].abs() < 1e-12);

        // idempotent and scale invariant
        let n2 = normalize_2d(&n1, 0).unwrap();
        for (a, b) in n1.joints().iter().zip(n2.joints()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        let scaled = Pose2D::new(p.joints().iter().map(|j| [3.0 * j[0], 3.0 * j[1]]).collect())
            .unwrap();
        let n3 = normalize_2d(&scaled, 0).unwrap();
        for (a, b) in n1.joints().iter().zip(n3.joints()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }

        let flat = Pose2D::new(vec![[1.0, 1.0]; 4]).unwrap();
        assert!(matches!(
            normalize_2d(&flat, 0),
            Err(CameraError::Degenerate2d)
        ));
    }

    #[test]
    fn zero_range_rotation_is_identity() {
        let cfg = RotationConfig {
            azimuth: (0.0, 0.0),
            elevation: (0.0, 0.0),
        };
        let mut r = rng::seeded(25);
        let rot = random_rotation(&mut r, &cfg);
        let eye = rot.matrix() - nalgebra::Matrix3::identity();
        assert!(eye.abs().max() < 1e-15);
    }

    #[test]
    fn random_rotation_is_valid_rotation() {
        let mut r = rng::seeded(26);
        let cfg = RotationConfig::default();
        for _ in 0..100 {
            let rot = random_rotation(&mut r, &cfg);
            let gram = rot.matrix().transpose() * rot.matrix();
            assert!((gram - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
            assert!((rot.matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn azimuth_histogram_is_uniform() {
        // chi-squared test over 32 bins at p > 0.01 (df = 31, critical 52.19)
        let mut r = rng::seeded(27);
        let cfg = RotationConfig::default();
        let n = 100_000;
        let bins = 32usize;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let rot = random_rotation(&mut r, &cfg);
            let ex = rot.apply([1.0, 0.0, 0.0]);
            let mut az = ex[1].atan2(ex[0]);
            if az < 0.0 {
                az += std::f64::consts::TAU;
            }
            let b = ((az / std::f64::consts::TAU * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 52.19, "chi2 = {chi2}");
    }

    #[test]
    fn augment_identity_matches_plain_projection() {
        let mut r = rng::seeded(28);
        let skel = Skeleton::default17();
        let p = test_pose(&mut r);
        let cfg = AugmentConfig {
            rotation: RotationConfig {
                azimuth: (0.0, 0.0),
                elevation: (0.0, 0.0),
            },
            camera: Camera::new(0.3, 0.1, 5.0, 1.0).unwrap(),
        };
        let (rotated, projected) = augment_pair(&p, &skel, &mut r, &cfg).unwrap();
        assert!(crate::pose::mpjpe(&rotated, &p).unwrap() < 1e-12);
        let root = p.joints()[skel.root_idx];
        let cam = cfg.camera.clone().with_look_at(root);
        let direct = project(&p, &cam).unwrap();
        for (a, b) in projected.joints().iter().zip(direct.joints()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn augment_rotation_is_rigid_for_canonicalization() {
        let mut r = rng::seeded(29);
        let skel = Skeleton::default17();
        for _ in 0..10 {
            let p = test_pose(&mut r);
            let cfg = AugmentConfig::default();
            let (rotated, _) = augment_pair(&p, &skel, &mut r, &cfg).unwrap();
            let ca = canonicalize(&p, &skel).unwrap();
            let cb = canonicalize(&rotated, &skel).unwrap();
            assert!(crate::pose::mpjpe(ca.pose(), cb.pose()).unwrap() < 1e-6);
        }
    }

    #[test]
    fn rig_config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.toml");
        let rig = RigConfig {
            cameras: vec![
                CameraSpec {
                    name: Some("front".into()),
                    azimuth: 0.0,
                    elevation: 0.0,
                    radius: 5.0,
                    focal: 1.0,
                    look_at: [0.0; 3],
                },
                CameraSpec {
                    name: None,
                    azimuth: 1.0,
                    elevation: 0.4,
                    radius: 6.0,
                    focal: 1.2,
                    look_at: [0.0; 3],
                },
            ],
        };
        rig.save(&path).unwrap();
        let back = RigConfig::load(&path).unwrap();
        assert_eq!(back, rig);
    }
}
