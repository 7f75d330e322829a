//! Skeleton topology and the skeleton definition file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PoseError;

/// Joint topology with canonical bone lengths and the indices of the joints
/// the canonicalization pipeline cares about.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    /// Parent of each joint; `None` only for the root.
    pub parents: Vec<Option<usize>>,
    /// Length of the bone from `parents[j]` to `j`. The root entry is unused.
    pub bone_lengths: Vec<f64>,
    pub root_idx: usize,
    pub left_hip_idx: usize,
    pub right_hip_idx: usize,
    pub spine_idx: usize,
}

impl Skeleton {
    pub fn new(
        joint_names: Vec<String>,
        parents: Vec<Option<usize>>,
        bone_lengths: Vec<f64>,
        root_idx: usize,
        left_hip_idx: usize,
        right_hip_idx: usize,
        spine_idx: usize,
    ) -> Result<Self, PoseError> {
        let skel = Skeleton {
            joint_names,
            parents,
            bone_lengths,
            root_idx,
            left_hip_idx,
            right_hip_idx,
            spine_idx,
        };
        skel.validate()?;
        Ok(skel)
    }

    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    fn validate(&self) -> Result<(), PoseError> {
        let n = self.n_joints();
        let err = |msg: String| Err(PoseError::InvalidSkeleton(msg));
        if n == 0 {
            return err("no joints".into());
        }
        if self.parents.len() != n || self.bone_lengths.len() != n {
            return err(format!(
                "field lengths disagree: {} names, {} parents, {} bone lengths",
                n,
                self.parents.len(),
                self.bone_lengths.len()
            ));
        }
        for &idx in &[
            self.root_idx,
            self.left_hip_idx,
            self.right_hip_idx,
            self.spine_idx,
        ] {
            if idx >= n {
                return err(format!("special index {idx} out of range"));
            }
        }
        let special = [self.left_hip_idx, self.right_hip_idx, self.spine_idx];
        for (i, a) in special.iter().enumerate() {
            if *a == self.root_idx {
                return err("hip/spine indices must differ from the root".into());
            }
            for b in &special[i + 1..] {
                if a == b {
                    return err("hip/spine indices must be distinct".into());
                }
            }
        }
        if self.parents[self.root_idx].is_some() {
            return err("root joint must have no parent".into());
        }
        // Every joint must reach the root without cycles.
        for j in 0..n {
            let mut cur = j;
            let mut steps = 0;
            while let Some(p) = self.parents[cur] {
                if p >= n {
                    return err(format!("parent index {p} out of range"));
                }
                cur = p;
                steps += 1;
                if steps > n {
                    return err(format!("cycle in parent chain at joint {j}"));
                }
            }
            if cur != self.root_idx {
                return err(format!("joint {j} does not descend from the root"));
            }
        }
        for (j, &len) in self.bone_lengths.iter().enumerate() {
            if !(len > 0.0) || !len.is_finite() {
                return err(format!("bone length at joint {j} must be positive"));
            }
        }
        Ok(())
    }

    /// Joint indices in parent-before-child order, starting at the root.
    pub fn topo_order(&self) -> Vec<usize> {
        let n = self.n_joints();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        order.push(self.root_idx);
        placed[self.root_idx] = true;
        while order.len() < n {
            for j in 0..n {
                if !placed[j] && self.parents[j].map(|p| placed[p]).unwrap_or(false) {
                    placed[j] = true;
                    order.push(j);
                }
            }
        }
        order
    }

    pub fn load(path: &Path) -> Result<Self, PoseError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PoseError::InvalidSkeleton(format!("{}: {e}", path.display())))?;
        let file: SkeletonFile = toml::from_str(&text)
            .map_err(|e| PoseError::InvalidSkeleton(format!("{}: {e}", path.display())))?;
        file.into_skeleton()
    }

    pub fn save(&self, path: &Path) -> Result<(), PoseError> {
        let file = SkeletonFile::from_skeleton(self);
        let text = toml::to_string_pretty(&file)
            .map_err(|e| PoseError::InvalidSkeleton(e.to_string()))?;
        fs::write(path, text)
            .map_err(|e| PoseError::InvalidSkeleton(format!("{}: {e}", path.display())))
    }

    /// Built-in 17-joint skeleton with fixed synthetic proportions.
    pub fn default17() -> Self {
        let names = [
            "hip",
            "right_hip",
            "right_knee",
            "right_ankle",
            "left_hip",
            "left_knee",
            "left_ankle",
            "spine",
            "thorax",
            "neck",
            "head",
            "left_shoulder",
            "left_elbow",
            "left_wrist",
            "right_shoulder",
            "right_elbow",
            "right_wrist",
        ];
        let parents: Vec<Option<usize>> = vec![
            None,
            Some(0),
            Some(1),
            Some(2),
            Some(0),
            Some(4),
            Some(5),
            Some(0),
            Some(7),
            Some(8),
            Some(9),
            Some(8),
            Some(11),
            Some(12),
            Some(8),
            Some(14),
            Some(15),
        ];
        let bone_lengths = vec![
            1.0, // root, unused
            0.13, 0.44, 0.45, // right leg
            0.13, 0.44, 0.45, // left leg
            0.24, 0.25, 0.12, 0.12, // spine chain
            0.19, 0.28, 0.25, // left arm
            0.19, 0.28, 0.25, // right arm
        ];
        Skeleton::new(
            names.iter().map(|s| s.to_string()).collect(),
            parents,
            bone_lengths,
            0,
            4,
            1,
            7,
        )
        .expect("built-in skeleton is valid")
    }
}

/// Serialized form of [`Skeleton`]; parents use -1 as the root sentinel.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SkeletonFile {
    pub joint_names: Vec<String>,
    pub parents: Vec<i64>,
    pub bone_lengths: Vec<f64>,
    pub root: usize,
    pub left_hip: usize,
    pub right_hip: usize,
    pub spine: usize,
}

impl SkeletonFile {
    pub fn from_skeleton(s: &Skeleton) -> Self {
        SkeletonFile {
            joint_names: s.joint_names.clone(),
            parents: s
                .parents
                .iter()
                .map(|p| p.map(|v| v as i64).unwrap_or(-1))
                .collect(),
            bone_lengths: s.bone_lengths.clone(),
            root: s.root_idx,
            left_hip: s.left_hip_idx,
            right_hip: s.right_hip_idx,
            spine: s.spine_idx,
        }
    }

    pub fn into_skeleton(self) -> Result<Skeleton, PoseError> {
        let parents = self
            .parents
            .iter()
            .map(|&p| if p < 0 { None } else { Some(p as usize) })
            .collect();
        Skeleton::new(
            self.joint_names,
            parents,
            self.bone_lengths,
            self.root,
            self.left_hip,
            self.right_hip,
            self.spine,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_skeleton_is_valid_tree() {
        let s = Skeleton::default17();
        assert_eq!(s.n_joints(), 17);
        let order = s.topo_order();
        assert_eq!(order.len(), 17);
        assert_eq!(order[0], s.root_idx);
    }

    #[test]
    fn rejects_cycles_and_bad_indices() {
        let mut s = Skeleton::default17();
        s.parents[1] = Some(2); // 1 -> 2 -> 1 cycle
        assert!(s.validate().is_err());

        let mut s = Skeleton::default17();
        s.bone_lengths[3] = 0.0;
        assert!(s.validate().is_err());

        let mut s = Skeleton::default17();
        s.left_hip_idx = s.right_hip_idx;
        assert!(s.validate().is_err());
    }

    #[test]
    fn file_round_trip() {
        let s = Skeleton::default17();
        let f = SkeletonFile::from_skeleton(&s);
        let text = toml::to_string_pretty(&f).unwrap();
        let back: SkeletonFile = toml::from_str(&text).unwrap();
        assert_eq!(back.into_skeleton().unwrap(), s);
    }
}
