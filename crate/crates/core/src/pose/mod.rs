//! Pose data types, normalization, rigid alignment, and MPJPE.

mod ops;
mod skeleton;
mod types;

pub use ops::{
    align_rotation, canonicalize, dedup_poses, enforce_bone_lengths, mpjpe, normalize_scale,
    procrustes_align, procrustes_mpjpe, root_center, Preprocessor, ProcrustesOptions,
};
pub use skeleton::{Skeleton, SkeletonFile};
pub use types::{CanonicalPose3D, Pose2D, Pose3D, Rotation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("joint count mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite joint coordinate")]
    NonFinite,
    #[error("degenerate pose: zero spatial extent")]
    DegeneratePose,
    #[error("degenerate bone at joint {joint}: zero length in input")]
    DegenerateBone { joint: usize },
    #[error("alignment triad is degenerate (cross-covariance rank < 2)")]
    AlignmentDegenerate,
    #[error("pose is not canonical: {0}")]
    NotCanonical(String),
    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
}
