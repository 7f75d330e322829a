//! The 2D mapping network: a fresh encoder from normalized 2D keypoints into
//! the embedding space, trained through the frozen VAE decoder.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{augment_pair, normalize_2d, AugmentConfig, Camera, RotationConfig};
use crate::nn::checkpoint::CheckpointError;
use crate::nn::{
    adam_step, load_checkpoint, meta_as, save_checkpoint, AdamConfig, AdamState, Matrix, Mlp,
    MlpSpec, Mode,
};
use crate::pose::{mpjpe, CanonicalPose3D, Pose2D, Pose3D, Preprocessor, Skeleton};
use crate::rng;
use crate::vae::{
    mine_triplets, pairwise_mpjpe, EpochLog, PoseDecoder, TrainError, TripletConfig,
};

const STREAM_SHUFFLE: u64 = 11;
const STREAM_DROPOUT: u64 = 12;
const STREAM_AUGMENT: u64 = 13;
const STREAM_INIT: u64 = 14;

/// Architecture of the 2D encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperSpec {
    pub n_joints: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout_p: f64,
    pub use_batchnorm: bool,
}

impl Default for MapperSpec {
    fn default() -> Self {
        MapperSpec {
            n_joints: 17,
            latent_dim: 32,
            hidden_dim: 1024,
            n_blocks: 2,
            dropout_p: 0.1,
            use_batchnorm: true,
        }
    }
}

impl MapperSpec {
    pub fn encoder_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: 2 * self.n_joints,
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            dropout_p: self.dropout_p,
            output_dim: self.latent_dim,
            use_batchnorm: self.use_batchnorm,
        }
    }
}

/// 2D-to-embedding encoder. Deterministic: no sampling head.
#[derive(Debug, Clone)]
pub struct Mapper2D {
    pub spec: MapperSpec,
    pub encoder: Mlp,
    /// Checksum of the frozen decoder this mapper was trained against.
    pub decoder_checksum: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MapperMeta {
    kind: String,
    spec: MapperSpec,
    decoder_checksum: Option<String>,
}

impl Mapper2D {
    pub fn new(spec: MapperSpec, seed: u64) -> Result<Self, TrainError> {
        let mut init_rng = rng::stream(seed, STREAM_INIT);
        let encoder = Mlp::new(spec.encoder_spec(), &mut init_rng)?;
        Ok(Mapper2D {
            spec,
            encoder,
            decoder_checksum: None,
        })
    }

    fn poses_to_matrix(&self, poses: &[&Pose2D]) -> Result<Matrix, TrainError> {
        let n = self.spec.n_joints;
        let mut data = Vec::with_capacity(poses.len() * 2 * n);
        for p in poses {
            if p.n_joints() != n {
                return Err(TrainError::Dimension(format!(
                    "2D pose has {} joints, mapper expects {n}",
                    p.n_joints()
                )));
            }
            data.extend(p.flat());
        }
        Ok(Matrix::from_vec(poses.len(), 2 * n, data)?)
    }

    /// Embeds a batch of (already normalized) 2D poses; one row per pose.
    pub fn encode2d(&self, poses: &[&Pose2D]) -> Result<Matrix, TrainError> {
        let x = self.poses_to_matrix(poses)?;
        Ok(self.encoder.infer(&x)?)
    }

    pub fn save(&self, base: &Path) -> Result<(), TrainError> {
        let meta = MapperMeta {
            kind: "mapper2d".to_string(),
            spec: self.spec.clone(),
            decoder_checksum: self.decoder_checksum.clone(),
        };
        Ok(save_checkpoint(
            base,
            &meta,
            &self.encoder.named_tensors("encoder2d"),
        )?)
    }

    pub fn load(base: &Path) -> Result<Self, TrainError> {
        let (meta, tensors) = load_checkpoint(base)?;
        let meta: MapperMeta = meta_as(&meta)?;
        if meta.kind != "mapper2d" {
            return Err(TrainError::Checkpoint(CheckpointError::Corrupt(format!(
                "expected a mapper2d checkpoint, found kind {:?}",
                meta.kind
            ))));
        }
        let mut mapper = Mapper2D::new(meta.spec, 0)?;
        let map: std::collections::HashMap<String, Matrix> = tensors.into_iter().collect();
        mapper.encoder.load_tensors("encoder2d", &map)?;
        mapper.decoder_checksum = meta.decoder_checksum;
        Ok(mapper)
    }
}

/// One training pair: a 2D view of a pose and the raw 3D joints.
#[derive(Debug, Clone)]
pub struct MapperSample {
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
}

/// Loss weights for the mapper (reconstruction through the frozen decoder
/// plus the triplet term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperLossWeights {
    pub w_mse: f64,
    pub w_triplet: f64,
}

impl Default for MapperLossWeights {
    fn default() -> Self {
        MapperLossWeights {
            w_mse: 1.0,
            w_triplet: 1.0,
        }
    }
}

/// Augmentation for mapper training: rotate the ground-truth 3D pose, then
/// project it through one of the given cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperAugment {
    pub rotation: RotationConfig,
    pub cameras: Vec<Camera>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapperTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: MapperLossWeights,
    pub triplet: TripletConfig,
    pub augment: Option<MapperAugment>,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_limit: usize,
}

impl Default for MapperTrainConfig {
    fn default() -> Self {
        MapperTrainConfig {
            epochs: 30,
            batch_size: 128,
            adam: AdamConfig::default(),
            weights: MapperLossWeights::default(),
            triplet: TripletConfig::default(),
            augment: None,
            seed: 0,
            eval_every: 5,
            eval_limit: 1024,
        }
    }
}

/// Mapper loss with optional encoder gradients: reconstruction MSE through
/// the frozen decoder plus a triplet loss whose mining uses ground-truth 3D
/// distances and whose distances use the 2D-encoder embeddings. Gradients
/// propagate through the decoder but are discarded for its parameters.
pub fn mapper_loss_and_grads(
    mapper: &mut Mapper2D,
    decoder: &PoseDecoder,
    x2d: &Matrix,
    target3d: &Matrix,
    mining_d: &Matrix,
    weights: &MapperLossWeights,
    triplet_cfg: &TripletConfig,
    compute_grads: bool,
) -> Result<(f64, f64, f64, Option<Vec<Matrix>>), TrainError> {
    let mut dropout_rng = rng::stream(0, STREAM_DROPOUT);
    mapper_step_inner(
        mapper,
        decoder,
        x2d,
        target3d,
        mining_d,
        weights,
        triplet_cfg,
        &mut dropout_rng,
        compute_grads,
    )
}

#[allow(clippy::too_many_arguments)]
fn mapper_step_inner(
    mapper: &mut Mapper2D,
    decoder: &PoseDecoder,
    x2d: &Matrix,
    target3d: &Matrix,
    mining_d: &Matrix,
    weights: &MapperLossWeights,
    triplet_cfg: &TripletConfig,
    dropout_rng: &mut impl Rng,
    compute_grads: bool,
) -> Result<(f64, f64, f64, Option<Vec<Matrix>>), TrainError> {
    let (e, enc_tape) = mapper.encoder.forward(x2d, Mode::Train, dropout_rng)?;
    // frozen decoder: eval-mode normalization, no state updates
    let (s_hat, dec_tape) = decoder.mlp.forward_frozen(&e)?;

    let k = (s_hat.rows() * s_hat.cols()).max(1) as f64;
    let mut l_mse = 0.0;
    for (a, b) in s_hat.data().iter().zip(target3d.data()) {
        let d = a - b;
        l_mse += d * d;
    }
    l_mse /= k;

    let triplets = mine_triplets(mining_d, triplet_cfg.min_separation)?;
    let (l_triplet, ge_tri) = crate::vae::loss_triplet_with_grad(&e, &triplets, triplet_cfg);
    let total = weights.w_mse * l_mse + weights.w_triplet * l_triplet;
    if !total.is_finite() {
        return Err(TrainError::NanLoss { epoch: 0, batch: 0 });
    }
    if !compute_grads {
        return Ok((l_mse, l_triplet, total, None));
    }

    let g_shat = s_hat.zip_map(target3d, |a, b| 2.0 * (a - b) / k * weights.w_mse);
    // decoder parameter gradients exist but are never applied
    let (_discarded, g_e_dec) = decoder.mlp.backward(&dec_tape, &g_shat)?;
    let g_e = g_e_dec.add(&ge_tri.scale(weights.w_triplet));
    let (enc_grads, _) = mapper.encoder.backward(&enc_tape, &g_e)?;
    Ok((l_mse, l_triplet, total, Some(enc_grads)))
}

/// Trains the 2D encoder against a frozen decoder. The decoder's parameters
/// are checksummed before and after; any change is a hard failure.
pub fn train_mapper(
    mapper: &mut Mapper2D,
    decoder: &PoseDecoder,
    samples: &[MapperSample],
    skel: &Skeleton,
    prep: &Preprocessor,
    cfg: &MapperTrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    let checksum_before = decoder.checksum();

    // Normalize 2D inputs and preprocess 3D targets once.
    let norm2d: Vec<Pose2D> = samples
        .iter()
        .map(|s| normalize_2d(&s.pose2d, skel.root_idx))
        .collect::<Result<_, _>>()?;
    let targets: Vec<Pose3D> = samples
        .iter()
        .map(|s| prep.apply(&s.pose3d, skel))
        .collect::<Result<_, _>>()?;

    let mut adam = AdamState::new_for(&mapper.encoder.trainable());
    let mut shuffle_rng = rng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = rng::stream(cfg.seed, STREAM_DROPOUT);
    let mut augment_rng = rng::stream(cfg.seed, STREAM_AUGMENT);

    let n = samples.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for i in (1..indices.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            indices.swap(i, j);
        }
        let mut sum_mse = 0.0;
        let mut sum_tri = 0.0;
        let mut sum_total = 0.0;
        let mut batches = 0usize;
        for (batch_no, chunk) in indices.chunks(cfg.batch_size.max(1)).enumerate() {
            if chunk.len() < 3 {
                continue;
            }
            let mut batch2d: Vec<Pose2D> = chunk.iter().map(|&i| norm2d[i].clone()).collect();
            let mut batch3d: Vec<Pose3D> = chunk.iter().map(|&i| targets[i].clone()).collect();
            if let Some(aug) = &cfg.augment {
                for &i in chunk {
                    let cam_idx = augment_rng.random_range(0..aug.cameras.len());
                    let aug_cfg = AugmentConfig {
                        rotation: aug.rotation.clone(),
                        camera: aug.cameras[cam_idx].clone(),
                    };
                    let (rot3d, proj2d) =
                        augment_pair(&samples[i].pose3d, skel, &mut augment_rng, &aug_cfg)?;
                    batch2d.push(normalize_2d(&proj2d, skel.root_idx)?);
                    batch3d.push(prep.apply(&rot3d, skel)?);
                }
            }
            let x2d = {
                let refs: Vec<&Pose2D> = batch2d.iter().collect();
                mapper.poses_to_matrix(&refs)?
            };
            let target = {
                let mut data = Vec::with_capacity(batch3d.len() * 3 * mapper.spec.n_joints);
                for p in &batch3d {
                    data.extend(p.flat());
                }
                Matrix::from_vec(batch3d.len(), 3 * mapper.spec.n_joints, data)?
            };
            let refs3d: Vec<&Pose3D> = batch3d.iter().collect();
            let mining_d = pairwise_mpjpe(&refs3d)?;
            let step = mapper_step_inner(
                mapper,
                decoder,
                &x2d,
                &target,
                &mining_d,
                &cfg.weights,
                &cfg.triplet,
                &mut dropout_rng,
                true,
            );
            let (l_mse, l_tri, total, grads) = match step {
                Err(TrainError::NanLoss { .. }) => {
                    return Err(TrainError::NanLoss {
                        epoch,
                        batch: batch_no,
                    })
                }
                other => other?,
            };
            adam_step(
                &mut adam,
                mapper.encoder.trainable_mut(),
                &grads.expect("gradients requested"),
                &cfg.adam,
            )?;
            sum_mse += l_mse;
            sum_tri += l_tri;
            sum_total += total;
            batches += 1;
        }
        let denom = batches.max(1) as f64;
        let mut log = EpochLog {
            epoch,
            l_mse: sum_mse / denom,
            l_kl: 0.0,
            l_triplet: sum_tri / denom,
            total: sum_total / denom,
            recon_mpjpe: None,
        };
        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            log.recon_mpjpe = Some(lift_mpjpe(
                mapper,
                decoder,
                &norm2d,
                &targets,
                cfg.eval_limit,
            )?);
        }
        logs.push(log);
    }

    if decoder.checksum() != checksum_before {
        return Err(TrainError::FrozenDecoderViolation);
    }
    mapper.decoder_checksum = Some(checksum_before);
    Ok(logs)
}

/// Mean MPJPE of lifted poses against (preprocessed) targets.
pub fn lift_mpjpe(
    mapper: &Mapper2D,
    decoder: &PoseDecoder,
    norm2d: &[Pose2D],
    targets: &[Pose3D],
    limit: usize,
) -> Result<f64, TrainError> {
    let n = norm2d
        .len()
        .min(targets.len())
        .min(if limit == 0 { usize::MAX } else { limit });
    if n == 0 {
        return Ok(0.0);
    }
    let refs: Vec<&Pose2D> = norm2d[..n].iter().collect();
    let e = mapper.encode2d(&refs)?;
    let decoded = decoder.decode(&e)?;
    let mut total = 0.0;
    for (est, gt) in decoded.iter().zip(targets) {
        total += mpjpe(est.pose(), gt)?;
    }
    Ok(total / n as f64)
}

/// Lifts one raw 2D pose to a canonical-frame 3D estimate:
/// `decode(encode2d(normalize_2d(p)))`.
pub fn lift(
    mapper: &Mapper2D,
    decoder: &PoseDecoder,
    p: &Pose2D,
    root_idx: usize,
) -> Result<CanonicalPose3D, TrainError> {
    let normalized = normalize_2d(p, root_idx)?;
    let e = mapper.encode2d(&[&normalized])?;
    decoder.decode_one(e.row(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::project;
    use crate::synth::{sample_pose, GeneratorConfig};
    use crate::vae::{VaeModel, VaeSpec};

    fn tiny_mapper(seed: u64) -> Mapper2D {
        Mapper2D::new(
            MapperSpec {
                n_joints: 17,
                latent_dim: 8,
                hidden_dim: 16,
                n_blocks: 1,
                dropout_p: 0.0,
                use_batchnorm: true,
            },
            seed,
        )
        .unwrap()
    }

    fn tiny_decoder(seed: u64) -> PoseDecoder {
        VaeModel::new(
            VaeSpec {
                n_joints: 17,
                latent_dim: 8,
                hidden_dim: 16,
                n_blocks: 1,
                dropout_p: 0.0,
                use_batchnorm: true,
            },
            seed,
        )
        .unwrap()
        .decoder
    }

    fn samples(n: usize, seed: u64) -> Vec<MapperSample> {
        let skel = Skeleton::default17();
        let gen = GeneratorConfig::default_for(&skel);
        let cam = Camera::new(0.3, 0.0, 5.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let mut r = rng::stream(seed, i as u64);
                let pose3d = sample_pose(&mut r, &skel, &gen);
                let pose2d = project(&pose3d, &cam).unwrap();
                MapperSample { pose2d, pose3d }
            })
            .collect()
    }

    #[test]
    fn zero_weight_encoder_gives_zero_embeddings() {
        let mut mapper = tiny_mapper(1);
        for t in mapper.encoder.trainable_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let p = Pose2D::new(vec![[0.1, -0.2]; 17]).unwrap();
        let e = mapper.encode2d(&[&p]).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode2d_is_deterministic_and_32_dim_by_default() {
        let mapper = Mapper2D::new(MapperSpec::default(), 2).unwrap();
        assert_eq!(mapper.spec.latent_dim, 32);
        let small = tiny_mapper(2);
        let p = Pose2D::new(vec![[0.3, 0.7]; 17]).unwrap();
        let a = small.encode2d(&[&p]).unwrap();
        let b = small.encode2d(&[&p]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_keeps_decoder_frozen() {
        let skel = Skeleton::default17();
        let mut mapper = tiny_mapper(3);
        let decoder = tiny_decoder(4);
        let before = decoder.checksum();
        let data = samples(16, 5);
        let cfg = MapperTrainConfig {
            epochs: 2,
            batch_size: 8,
            eval_every: 0,
            ..Default::default()
        };
        train_mapper(
            &mut mapper,
            &decoder,
            &data,
            &skel,
            &Preprocessor::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(decoder.checksum(), before);
        assert_eq!(mapper.decoder_checksum.as_deref(), Some(before.as_str()));
    }

    #[test]
    fn untrained_lift_produces_well_formed_pose() {
        let mapper = tiny_mapper(6);
        let decoder = tiny_decoder(7);
        let p = Pose2D::new(
            (0..17)
                .map(|i| [0.01 * i as f64, -0.02 * i as f64 + 0.1])
                .collect(),
        )
        .unwrap();
        let lifted = lift(&mapper, &decoder, &p, 0).unwrap();
        assert_eq!(lifted.pose().n_joints(), 17);
        let again = lift(&mapper, &decoder, &p, 0).unwrap();
        assert_eq!(lifted.pose(), again.pose());
    }

    #[test]
    fn training_is_deterministic() {
        let skel = Skeleton::default17();
        let data = samples(12, 8);
        let decoder = tiny_decoder(9);
        let cfg = MapperTrainConfig {
            epochs: 2,
            batch_size: 6,
            eval_every: 0,
            ..Default::default()
        };
        let mut m1 = tiny_mapper(10);
        let l1 = train_mapper(&mut m1, &decoder, &data, &skel, &Preprocessor::default(), &cfg)
            .unwrap();
        let mut m2 = tiny_mapper(10);
        let l2 = train_mapper(&mut m2, &decoder, &data, &skel, &Preprocessor::default(), &cfg)
            .unwrap();
        for (a, b) in l1.iter().zip(&l2) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
        }
    }
}
