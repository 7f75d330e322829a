//! End-to-end experiment pipeline: generate data, train the VAE, train the
//! 2D mapper against the frozen decoder, and evaluate cross-view retrieval on
//! held-out cameras. Used by the `ablate` command and the acceptance harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{normalize_2d, Camera, CameraError};
use crate::config::ExperimentConfig;
use crate::data::{DataError, Dataset, Split};
use crate::mapper2d::{train_mapper, Mapper2D, MapperSample};
use crate::nn::Mode;
use crate::pose::{canonicalize, dedup_poses, Pose3D, PoseError, Preprocessor, Skeleton};
use crate::retrieval::{
    baseline_2d_index, hit_at_k_rig, EmbeddingIndex, EvalError, HitReport, IndexEntry,
};
use crate::rng;
use crate::synth::generate_dataset;
use crate::vae::{train_vae, EpochLog, TrainError, VaeModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("config error: {0}")]
    Config(String),
}

/// Retrieval scores for every embedding route on the same camera set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub mapper_hit: HitReport,
    pub baseline_hit: HitReport,
    pub gt3d_hit: HitReport,
    pub vae_log: Vec<EpochLog>,
    pub mapper_log: Vec<EpochLog>,
    pub n_eval_poses: usize,
}

/// Loads the train-split 3D poses (one per pose id).
pub fn train_poses(dataset: &Dataset) -> Vec<Pose3D> {
    dataset
        .poses_of_split(Split::Train)
        .into_iter()
        .map(|(_, p)| p)
        .collect()
}

/// Builds mapper training samples: every train-split record whose camera is
/// in the training role.
pub fn mapper_samples(dataset: &Dataset, train_cameras: &[u32]) -> Vec<MapperSample> {
    dataset
        .split(Split::Train)
        .filter(|r| train_cameras.contains(&r.camera_id))
        .map(|r| MapperSample {
            pose2d: r.pose2d(),
            pose3d: r.pose3d(),
        })
        .collect()
}

fn split_from_str(s: &str) -> Result<Split, PipelineError> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(PipelineError::Config(format!("unknown split {other:?}"))),
    }
}

/// One evaluation item: a pose as seen by one camera.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub pose_id: u64,
    pub camera_id: u32,
    pub pose2d: crate::pose::Pose2D,
    /// Canonicalized 3D pose used by the hit rule.
    pub canonical3d: Pose3D,
    /// Raw 3D pose in world coordinates.
    pub raw3d: Pose3D,
}

/// Collects eval-split items for one camera, optionally deduplicating poses
/// with the greedy Procrustes-MPJPE filter.
pub fn eval_items(
    dataset: &Dataset,
    skel: &Skeleton,
    split: Split,
    camera_id: u32,
    dedup_min_dist: f64,
) -> Result<Vec<EvalItem>, PipelineError> {
    let mut items: Vec<EvalItem> = Vec::new();
    for r in dataset.split(split) {
        if r.camera_id != camera_id {
            continue;
        }
        let raw3d = r.pose3d();
        let canonical3d = canonicalize(&raw3d, skel)?.into_pose();
        items.push(EvalItem {
            pose_id: r.id,
            camera_id: r.camera_id,
            pose2d: r.pose2d(),
            canonical3d,
            raw3d,
        });
    }
    if dedup_min_dist > 0.0 {
        let poses: Vec<Pose3D> = items.iter().map(|it| it.canonical3d.clone()).collect();
        let kept = dedup_poses(&poses, dedup_min_dist);
        items = kept.into_iter().map(|i| items[i].clone()).collect();
    }
    Ok(items)
}

/// Embedding index for one camera via the trained 2D mapper.
pub fn mapper_index(
    mapper: &Mapper2D,
    items: &[EvalItem],
    skel: &Skeleton,
) -> Result<EmbeddingIndex, PipelineError> {
    let mut index = EmbeddingIndex::new(mapper.spec.latent_dim);
    for it in items {
        let normalized = normalize_2d(&it.pose2d, skel.root_idx)?;
        let e = mapper.encode2d(&[&normalized])?;
        index.insert(IndexEntry {
            pose_id: it.pose_id,
            camera_id: it.camera_id,
            embedding: e.row(0).to_vec(),
            pose: it.canonical3d.clone(),
        })?;
    }
    Ok(index)
}

/// Embedding index for one camera via the 3D pathway: the pose as observed in
/// the camera frame, preprocessed, then encoded with the VAE (eval mode).
pub fn gt3d_index(
    vae: &VaeModel,
    items: &[EvalItem],
    camera: &Camera,
    skel: &Skeleton,
    prep: &Preprocessor,
) -> Result<EmbeddingIndex, PipelineError> {
    let mut index = EmbeddingIndex::new(vae.spec.latent_dim);
    let mut unused = rng::stream(0, 0);
    for it in items {
        let observed = camera.world_to_camera(&it.raw3d);
        let processed = prep.apply(&observed, skel)?;
        let enc = vae.encode_poses(&[&processed], Mode::Eval, &mut unused)?;
        index.insert(IndexEntry {
            pose_id: it.pose_id,
            camera_id: it.camera_id,
            embedding: enc.e.row(0).to_vec(),
            pose: it.canonical3d.clone(),
        })?;
    }
    Ok(index)
}

/// Runs the full pipeline in a fresh directory: generate, train, evaluate.
/// `w_triplet_override`/`align_rotation_override` implement the ablation
/// toggles without touching the base config file.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    out_dir: &std::path::Path,
) -> Result<PipelineOutcome, PipelineError> {
    let skel = cfg.skeleton()?;
    let gen_cfg = cfg.generator_config(&skel);
    let prep = cfg.preprocessor();

    generate_dataset(&gen_cfg, &skel, out_dir)?;
    let dataset = Dataset::load(out_dir)?;

    // VAE on train-split 3D poses
    let mut vae = VaeModel::new(cfg.vae_spec(&skel), cfg.seed)?;
    let poses = train_poses(&dataset);
    let vae_log = train_vae(&mut vae, &poses, &skel, &prep, &cfg.vae_train_config())?;

    // mapper against the frozen decoder
    let cameras: Vec<Camera> = gen_cfg
        .cameras()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let train_cams: Vec<Camera> = cfg
        .cameras
        .train
        .iter()
        .filter_map(|&i| cameras.get(i as usize).cloned())
        .collect();
    let samples = mapper_samples(&dataset, &cfg.cameras.train);
    let mut mapper = Mapper2D::new(cfg.mapper_spec(&skel), cfg.seed)?;
    let mapper_log = train_mapper(
        &mut mapper,
        &vae.decoder,
        &samples,
        &skel,
        &prep,
        &cfg.mapper_train_config(&train_cams),
    )?;

    // held-out camera evaluation
    let split = split_from_str(&cfg.eval.split)?;
    let hit_cfg = cfg.hit_config();
    let mut mapper_indexes = Vec::new();
    let mut baseline_indexes = Vec::new();
    let mut gt3d_indexes = Vec::new();
    let mut n_eval_poses = 0;
    for &cam_id in &cfg.cameras.eval {
        let items = eval_items(&dataset, &skel, split, cam_id, cfg.eval.dedup_min_dist)?;
        n_eval_poses += items.len();
        let cam = cameras
            .get(cam_id as usize)
            .ok_or_else(|| PipelineError::Config(format!("camera {cam_id} not in rig")))?;
        let baseline_items: Vec<(u64, u32, crate::pose::Pose2D, Pose3D)> = items
            .iter()
            .map(|it| {
                (
                    it.pose_id,
                    it.camera_id,
                    it.pose2d.clone(),
                    it.canonical3d.clone(),
                )
            })
            .collect();
        mapper_indexes.push(mapper_index(&mapper, &items, &skel)?);
        baseline_indexes.push(baseline_2d_index(&baseline_items, &skel)?);
        gt3d_indexes.push(gt3d_index(&vae, &items, cam, &skel, &prep)?);
    }
    let mapper_hit = hit_at_k_rig(&mapper_indexes, &hit_cfg)?;
    let baseline_hit = hit_at_k_rig(&baseline_indexes, &hit_cfg)?;
    let gt3d_hit = hit_at_k_rig(&gt3d_indexes, &hit_cfg)?;

    Ok(PipelineOutcome {
        mapper_hit,
        baseline_hit,
        gt3d_hit,
        vae_log,
        mapper_log,
        n_eval_poses,
    })
}
