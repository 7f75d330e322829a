//! Experiment configuration file: one TOML document with a section per
//! subsystem. Unset keys fall back to the documented defaults, so an empty
//! document is a valid config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraSpec, RotationConfig};
use crate::data::DataError;
use crate::mapper2d::{MapperAugment, MapperLossWeights, MapperSpec, MapperTrainConfig};
use crate::nn::AdamConfig;
use crate::pose::{Preprocessor, Skeleton};
use crate::retrieval::HitConfig;
use crate::synth::{
    default_angle_ranges, default_rest_directions, default_rig, GeneratorConfig, SplitFractions,
};
use crate::vae::{LossWeights, TripletConfig, VaeSpec, VaeTrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads for parallel sections; 0 = logical cores.
    pub workers: usize,
    pub skeleton: SkeletonSection,
    pub generator: GeneratorSection,
    /// Camera rig; empty = built-in six-camera rig.
    pub rig: Vec<CameraSpec>,
    pub cameras: CameraRoles,
    pub preprocess: PreprocessSection,
    pub vae: VaeSection,
    pub mapper: MapperSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SkeletonSection {
    /// Path to a skeleton definition file; unset = built-in 17-joint skeleton.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSection {
    pub n_poses: usize,
    pub splits: SplitFractions,
    pub joint_angle_ranges: Option<Vec<f64>>,
    pub rest_directions: Option<Vec<[f64; 3]>>,
    pub anatomical_limit: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection {
            n_poses: 1000,
            splits: SplitFractions::default(),
            joint_angle_ranges: None,
            rest_directions: None,
            anatomical_limit: std::f64::consts::PI,
        }
    }
}

/// Which rig cameras feed mapper training and which are held out for eval.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRoles {
    pub train: Vec<u32>,
    pub eval: Vec<u32>,
}

impl Default for CameraRoles {
    fn default() -> Self {
        CameraRoles {
            train: vec![0, 1, 2, 3],
            eval: vec![4, 5],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSection {
    pub align_rotation: bool,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            align_rotation: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout: f64,
    pub batchnorm: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub w_mse: f64,
    pub w_kl: f64,
    pub w_triplet: f64,
    pub margin: f64,
    pub min_separation: f64,
    pub augment: bool,
    pub eval_every: usize,
    pub early_stop_mpjpe: Option<f64>,
    pub lr_schedule: Vec<(usize, f64)>,
    pub adam_restart_every: usize,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            latent_dim: 32,
            hidden_dim: 1024,
            n_blocks: 2,
            dropout: 0.1,
            batchnorm: true,
            epochs: 200,
            batch_size: 128,
            lr: 1e-3,
            w_mse: 1.0,
            w_kl: 1.0,
            w_triplet: 1.0,
            margin: 1.0,
            min_separation: 0.1,
            augment: false,
            eval_every: 10,
            early_stop_mpjpe: None,
            lr_schedule: Vec::new(),
            adam_restart_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperSection {
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout: f64,
    pub batchnorm: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub w_mse: f64,
    pub w_triplet: f64,
    pub margin: f64,
    pub min_separation: f64,
    pub augment: bool,
    pub eval_every: usize,
    pub rotation: RotationConfig,
}

impl Default for MapperSection {
    fn default() -> Self {
        MapperSection {
            hidden_dim: 1024,
            n_blocks: 2,
            dropout: 0.1,
            batchnorm: true,
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
            w_mse: 1.0,
            w_triplet: 1.0,
            margin: 1.0,
            min_separation: 0.1,
            augment: true,
            eval_every: 5,
            rotation: RotationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub threshold: f64,
    pub exclude_self: bool,
    /// Greedy near-duplicate filter distance applied to eval poses (0 = off).
    pub dedup_min_dist: f64,
    pub split: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: vec![1, 10, 20],
            threshold: 0.1,
            exclude_self: false,
            dedup_min_dist: 0.0,
            split: "test".to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn skeleton(&self) -> Result<Skeleton, DataError> {
        match &self.skeleton.path {
            Some(path) => Skeleton::load(path).map_err(|e| DataError::Schema(e.to_string())),
            None => Ok(Skeleton::default17()),
        }
    }

    pub fn generator_config(&self, skel: &Skeleton) -> GeneratorConfig {
        GeneratorConfig {
            n_poses: self.generator.n_poses,
            seed: self.seed,
            joint_angle_ranges: self
                .generator
                .joint_angle_ranges
                .clone()
                .unwrap_or_else(|| default_angle_ranges(skel)),
            anatomical_limit: self.generator.anatomical_limit,
            rest_directions: self
                .generator
                .rest_directions
                .clone()
                .unwrap_or_else(|| default_rest_directions(skel)),
            rig: if self.rig.is_empty() {
                default_rig()
            } else {
                self.rig.clone()
            },
            splits: self.generator.splits,
        }
    }

    pub fn preprocessor(&self) -> Preprocessor {
        Preprocessor {
            align_rotation: self.preprocess.align_rotation,
        }
    }

    pub fn vae_spec(&self, skel: &Skeleton) -> VaeSpec {
        VaeSpec {
            n_joints: skel.n_joints(),
            latent_dim: self.vae.latent_dim,
            hidden_dim: self.vae.hidden_dim,
            n_blocks: self.vae.n_blocks,
            dropout_p: self.vae.dropout,
            use_batchnorm: self.vae.batchnorm,
        }
    }

    pub fn vae_train_config(&self) -> VaeTrainConfig {
        VaeTrainConfig {
            epochs: self.vae.epochs,
            batch_size: self.vae.batch_size,
            adam: AdamConfig {
                lr: self.vae.lr,
                ..Default::default()
            },
            weights: LossWeights {
                w_mse: self.vae.w_mse,
                w_kl: self.vae.w_kl,
                w_triplet: self.vae.w_triplet,
            },
            triplet: TripletConfig {
                margin: self.vae.margin,
                min_separation: self.vae.min_separation,
            },
            augment: self.vae.augment,
            rotation: RotationConfig::default(),
            seed: self.seed,
            eval_every: self.vae.eval_every,
            eval_limit: 1024,
            early_stop_mpjpe: self.vae.early_stop_mpjpe,
            lr_schedule: self.vae.lr_schedule.clone(),
            adam_restart_every: self.vae.adam_restart_every,
        }
    }

    pub fn mapper_spec(&self, skel: &Skeleton) -> MapperSpec {
        MapperSpec {
            n_joints: skel.n_joints(),
            latent_dim: self.vae.latent_dim,
            hidden_dim: self.mapper.hidden_dim,
            n_blocks: self.mapper.n_blocks,
            dropout_p: self.mapper.dropout,
            use_batchnorm: self.mapper.batchnorm,
        }
    }

    pub fn mapper_train_config(
        &self,
        train_cameras: &[crate::camera::Camera],
    ) -> MapperTrainConfig {
        MapperTrainConfig {
            epochs: self.mapper.epochs,
            batch_size: self.mapper.batch_size,
            adam: AdamConfig {
                lr: self.mapper.lr,
                ..Default::default()
            },
            weights: MapperLossWeights {
                w_mse: self.mapper.w_mse,
                w_triplet: self.mapper.w_triplet,
            },
            triplet: TripletConfig {
                margin: self.mapper.margin,
                min_separation: self.mapper.min_separation,
            },
            augment: if self.mapper.augment && !train_cameras.is_empty() {
                Some(MapperAugment {
                    rotation: self.mapper.rotation.clone(),
                    cameras: train_cameras.to_vec(),
                })
            } else {
                None
            },
            seed: self.seed,
            eval_every: self.mapper.eval_every,
            eval_limit: 1024,
        }
    }

    pub fn hit_config(&self) -> HitConfig {
        HitConfig {
            ks: self.eval.ks.clone(),
            threshold: self.eval.threshold,
            exclude_self: self.eval.exclude_self,
        }
    }
}
