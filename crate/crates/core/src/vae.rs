//! The 3D pose VAE: encoder to (mu, log sigma^2), reparameterized sampling,
//! decoder back to joints, and the three-term training loss (reconstruction,
//! KL, in-batch mined triplet).

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{random_rotation, CameraError, RotationConfig};
use crate::nn::checkpoint::CheckpointError;
use crate::nn::{
    adam_step, load_checkpoint, meta_as, save_checkpoint, AdamConfig, AdamState, Matrix, Mlp,
    MlpSpec, Mode, NnError,
};
use crate::pose::{
    mpjpe, CanonicalPose3D, Pose3D, PoseError, Preprocessor, Skeleton,
};
use crate::rng;

const LOGVAR_CLAMP: f64 = 10.0;
/// RNG stream ids under the training seed.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_AUGMENT: u64 = 4;
const STREAM_INIT: u64 = 5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("batch of {got} is too small for triplet mining (need at least 3)")]
    BatchTooSmall { got: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("frozen decoder parameters changed during mapper training")]
    FrozenDecoderViolation,
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Architecture settings for the pose VAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSpec {
    pub n_joints: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout_p: f64,
    pub use_batchnorm: bool,
}

impl Default for VaeSpec {
    fn default() -> Self {
        VaeSpec {
            n_joints: 17,
            latent_dim: 32,
            hidden_dim: 1024,
            n_blocks: 2,
            dropout_p: 0.1,
            use_batchnorm: true,
        }
    }
}

impl VaeSpec {
    pub fn encoder_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: 3 * self.n_joints,
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            dropout_p: self.dropout_p,
            output_dim: 2 * self.latent_dim,
            use_batchnorm: self.use_batchnorm,
        }
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            dropout_p: self.dropout_p,
            output_dim: 3 * self.n_joints,
            use_batchnorm: self.use_batchnorm,
        }
    }
}

/// Decoder half of a trained VAE; also used frozen by the 2D mapper.
#[derive(Debug, Clone)]
pub struct PoseDecoder {
    pub mlp: Mlp,
    pub n_joints: usize,
    pub latent_dim: usize,
}

impl PoseDecoder {
    /// Eval-mode decode of a batch of embeddings (rows) into pose estimates.
    pub fn decode(&self, e: &Matrix) -> Result<Vec<CanonicalPose3D>, TrainError> {
        if e.cols() != self.latent_dim {
            return Err(TrainError::Dimension(format!(
                "embedding dim {} != {}",
                e.cols(),
                self.latent_dim
            )));
        }
        let out = self.mlp.infer(e)?;
        let mut poses = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            poses.push(CanonicalPose3D::estimated(Pose3D::from_flat(out.row(r))?));
        }
        Ok(poses)
    }

    pub fn decode_one(&self, e: &[f64]) -> Result<CanonicalPose3D, TrainError> {
        let m = Matrix::from_vec(1, e.len(), e.to_vec())?;
        Ok(self.decode(&m)?.remove(0))
    }

    /// Hex checksum over the decoder's serialized parameters (including
    /// batchnorm running statistics).
    pub fn checksum(&self) -> String {
        crate::nn::checkpoint::tensors_checksum(&self.mlp.named_tensors("decoder"))
    }
}

/// Encoder + decoder pair.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub spec: VaeSpec,
    pub encoder: Mlp,
    pub decoder: PoseDecoder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VaeMeta {
    kind: String,
    spec: VaeSpec,
}

impl VaeModel {
    pub fn new(spec: VaeSpec, seed: u64) -> Result<Self, TrainError> {
        let mut init_rng = rng::stream(seed, STREAM_INIT);
        let encoder = Mlp::new(spec.encoder_spec(), &mut init_rng)?;
        let mlp = Mlp::new(spec.decoder_spec(), &mut init_rng)?;
        Ok(VaeModel {
            decoder: PoseDecoder {
                mlp,
                n_joints: spec.n_joints,
                latent_dim: spec.latent_dim,
            },
            encoder,
            spec,
        })
    }

    fn poses_to_matrix(&self, poses: &[&Pose3D]) -> Result<Matrix, TrainError> {
        let n = self.spec.n_joints;
        let mut data = Vec::with_capacity(poses.len() * 3 * n);
        for p in poses {
            if p.n_joints() != n {
                return Err(TrainError::Dimension(format!(
                    "pose has {} joints, model expects {n}",
                    p.n_joints()
                )));
            }
            data.extend(p.flat());
        }
        Ok(Matrix::from_vec(poses.len(), 3 * n, data)?)
    }

    /// Encodes canonical poses. Train mode samples `e = mu + sigma * eps`;
    /// eval mode returns `e = mu`. Normalization always uses the frozen
    /// (running) statistics; batch statistics are a training-step concern.
    pub fn encode(
        &self,
        poses: &[CanonicalPose3D],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Encoding, TrainError> {
        let refs: Vec<&Pose3D> = poses.iter().map(|c| c.pose()).collect();
        self.encode_poses(&refs, mode, rng)
    }

    /// Same as [`VaeModel::encode`] for poses that went through a
    /// non-canonical preprocessing variant.
    pub fn encode_poses(
        &self,
        poses: &[&Pose3D],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Encoding, TrainError> {
        let x = self.poses_to_matrix(poses)?;
        let out = self.encoder.infer(&x)?;
        let (mu, logvar_raw) = out.split_cols(self.spec.latent_dim);
        let logvar = logvar_raw.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        let e = match mode {
            Mode::Eval => mu.clone(),
            Mode::Train => {
                let eps = sample_standard_normal(mu.rows(), mu.cols(), rng);
                reparameterize(&mu, &logvar, &eps)
            }
        };
        Ok(Encoding { mu, logvar, e })
    }

    pub fn save(&self, base: &Path) -> Result<(), TrainError> {
        let meta = VaeMeta {
            kind: "vae".to_string(),
            spec: self.spec.clone(),
        };
        let mut tensors = self.encoder.named_tensors("encoder");
        tensors.extend(self.decoder.mlp.named_tensors("decoder"));
        Ok(save_checkpoint(base, &meta, &tensors)?)
    }

    pub fn load(base: &Path) -> Result<Self, TrainError> {
        let (meta, tensors) = load_checkpoint(base)?;
        let meta: VaeMeta = meta_as(&meta)?;
        if meta.kind != "vae" {
            return Err(TrainError::Checkpoint(CheckpointError::Corrupt(format!(
                "expected a vae checkpoint, found kind {:?}",
                meta.kind
            ))));
        }
        let mut model = VaeModel::new(meta.spec, 0)?;
        let map: std::collections::HashMap<String, Matrix> = tensors.into_iter().collect();
        model.encoder.load_tensors("encoder", &map)?;
        model.decoder.mlp.load_tensors("decoder", &map)?;
        Ok(model)
    }

    /// Loads only the decoder half of a VAE checkpoint.
    pub fn load_decoder(base: &Path) -> Result<PoseDecoder, TrainError> {
        let model = VaeModel::load(base)?;
        Ok(model.decoder)
    }
}

/// Encoder output: posterior parameters and the embedding actually used.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub mu: Matrix,
    pub logvar: Matrix,
    pub e: Matrix,
}

pub fn sample_standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("normal samples are finite")
}

fn reparameterize(mu: &Matrix, logvar: &Matrix, eps: &Matrix) -> Matrix {
    let sigma = logvar.map(|v| (0.5 * v).exp());
    mu.add(&sigma.zip_map(eps, |s, n| s * n))
}

/// Mean over all coordinates of the squared reconstruction error.
pub fn loss_mse(s: &Matrix, s_hat: &Matrix) -> Result<f64, TrainError> {
    Ok(loss_mse_with_grad(s, s_hat)?.0)
}

fn loss_mse_with_grad(s: &Matrix, s_hat: &Matrix) -> Result<(f64, Matrix), TrainError> {
    if !s.same_shape(s_hat) {
        return Err(TrainError::Dimension(format!(
            "mse shapes {}x{} vs {}x{}",
            s.rows(),
            s.cols(),
            s_hat.rows(),
            s_hat.cols()
        )));
    }
    let k = (s.rows() * s.cols()).max(1) as f64;
    let mut total = 0.0;
    for (a, b) in s_hat.data().iter().zip(s.data()) {
        let d = a - b;
        total += d * d;
    }
    let grad = s_hat.zip_map(s, |a, b| 2.0 * (a - b) / k);
    Ok((total / k, grad))
}

/// KL divergence of the diagonal Gaussian posterior from the unit Gaussian
/// prior, averaged over the batch: `mean_b 1/2 sum_d (mu^2 + sigma^2 - 1 - log sigma^2)`.
pub fn loss_kl(mu: &Matrix, logvar: &Matrix) -> f64 {
    loss_kl_with_grads(mu, logvar).0
}

fn loss_kl_with_grads(mu: &Matrix, logvar: &Matrix) -> (f64, Matrix, Matrix) {
    assert!(mu.same_shape(logvar), "kl shape mismatch");
    let b = mu.rows().max(1) as f64;
    let mut total = 0.0;
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        total += 0.5 * (m * m + lv.exp() - 1.0 - lv);
    }
    let gmu = mu.map(|m| m / b);
    let glv = logvar.map(|lv| 0.5 * (lv.exp() - 1.0) / b);
    (total / b, gmu, glv)
}

/// Anchor/positive/negative index triple inside one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Mining and loss constants for the triplet term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub margin: f64,
    pub min_separation: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: 1.0,
            min_separation: 0.1,
        }
    }
}

/// Pairwise MPJPE matrix over a batch of poses.
pub fn pairwise_mpjpe(poses: &[&Pose3D]) -> Result<Matrix, TrainError> {
    let b = poses.len();
    let mut d = Matrix::zeros(b, b);
    for i in 0..b {
        for j in (i + 1)..b {
            let v = mpjpe(poses[i], poses[j])?;
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    Ok(d)
}

/// In-batch mining over a precomputed 3D distance matrix. For each anchor the
/// closest pose is the positive; the negative is the next-closest at least
/// `min_separation` farther than the positive, advancing in sorted order.
/// Anchors with no valid negative are skipped.
pub fn mine_triplets(d: &Matrix, min_separation: f64) -> Result<Vec<Triplet>, TrainError> {
    let b = d.rows();
    if d.cols() != b {
        return Err(TrainError::Dimension(format!(
            "distance matrix must be square, got {}x{}",
            b,
            d.cols()
        )));
    }
    if b < 3 {
        return Err(TrainError::BatchTooSmall { got: b });
    }
    let mut out = Vec::with_capacity(b);
    let mut order: Vec<usize> = Vec::with_capacity(b - 1);
    for i in 0..b {
        order.clear();
        order.extend((0..b).filter(|&j| j != i));
        order.sort_by(|&a, &c| {
            d.get(i, a)
                .partial_cmp(&d.get(i, c))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&c))
        });
        let positive = order[0];
        let d_pos = d.get(i, positive);
        if let Some(&negative) = order[1..]
            .iter()
            .find(|&&k| d.get(i, k) - d_pos >= min_separation)
        {
            out.push(Triplet {
                anchor: i,
                positive,
                negative,
            });
        }
    }
    Ok(out)
}

/// Mean hinge loss over triplets with embedding-space L2 distances:
/// `max(0, ||e_a - e_p|| - ||e_a - e_n|| + margin)`. Zero without triplets.
pub fn loss_triplet(e: &Matrix, triplets: &[Triplet], cfg: &TripletConfig) -> f64 {
    loss_triplet_with_grad(e, triplets, cfg).0
}

pub(crate) fn loss_triplet_with_grad(
    e: &Matrix,
    triplets: &[Triplet],
    cfg: &TripletConfig,
) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(e.rows(), e.cols());
    if triplets.is_empty() {
        return (0.0, grad);
    }
    let dim = e.cols();
    let scale = 1.0 / triplets.len() as f64;
    let mut total = 0.0;
    for t in triplets {
        let ea = e.row(t.anchor);
        let ep = e.row(t.positive);
        let en = e.row(t.negative);
        let mut d_pos2 = 0.0;
        let mut d_neg2 = 0.0;
        for k in 0..dim {
            d_pos2 += (ea[k] - ep[k]) * (ea[k] - ep[k]);
            d_neg2 += (ea[k] - en[k]) * (ea[k] - en[k]);
        }
        let d_pos = d_pos2.sqrt();
        let d_neg = d_neg2.sqrt();
        let l = d_pos - d_neg + cfg.margin;
        if l > 0.0 {
            total += l;
            // subgradient 0 at coincident points
            if d_pos > 1e-12 {
                for k in 0..dim {
                    let g = scale * (ea[k] - ep[k]) / d_pos;
                    grad.data_mut()[t.anchor * dim + k] += g;
                    grad.data_mut()[t.positive * dim + k] -= g;
                }
            }
            if d_neg > 1e-12 {
                for k in 0..dim {
                    let g = scale * (ea[k] - en[k]) / d_neg;
                    grad.data_mut()[t.anchor * dim + k] -= g;
                    grad.data_mut()[t.negative * dim + k] += g;
                }
            }
        }
    }
    (total * scale, grad)
}

/// Relative weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_mse: f64,
    pub w_kl: f64,
    pub w_triplet: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_mse: 1.0,
            w_kl: 1.0,
            w_triplet: 1.0,
        }
    }
}

/// Loss components of one step (unweighted values, weighted total).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub l_mse: f64,
    pub l_kl: f64,
    pub l_triplet: f64,
    pub total: f64,
}

/// One VAE forward pass with losses and, optionally, gradients for encoder
/// and decoder parameters. Deterministic given `eps` when the spec disables
/// dropout, so finite differences can probe the same function the analytic
/// gradients describe.
pub fn vae_loss_and_grads(
    model: &mut VaeModel,
    x: &Matrix,
    mining_d: &Matrix,
    eps: &Matrix,
    weights: &LossWeights,
    triplet_cfg: &TripletConfig,
    compute_grads: bool,
) -> Result<(LossParts, Option<(Vec<Matrix>, Vec<Matrix>)>), TrainError> {
    let mut dropout_rng = rng::stream(0, STREAM_DROPOUT);
    vae_step_inner(
        model,
        x,
        mining_d,
        eps,
        weights,
        triplet_cfg,
        &mut dropout_rng,
        compute_grads,
    )
}

#[allow(clippy::too_many_arguments)]
fn vae_step_inner(
    model: &mut VaeModel,
    x: &Matrix,
    mining_d: &Matrix,
    eps: &Matrix,
    weights: &LossWeights,
    triplet_cfg: &TripletConfig,
    dropout_rng: &mut impl Rng,
    compute_grads: bool,
) -> Result<(LossParts, Option<(Vec<Matrix>, Vec<Matrix>)>), TrainError> {
    let latent = model.spec.latent_dim;
    let (enc_out, enc_tape) = model.encoder.forward(x, Mode::Train, dropout_rng)?;
    let (mu, logvar_raw) = enc_out.split_cols(latent);
    let clamp_mask = logvar_raw.map(|v| if v.abs() <= LOGVAR_CLAMP { 1.0 } else { 0.0 });
    let logvar = logvar_raw.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
    let e = reparameterize(&mu, &logvar, eps);

    let (s_hat, dec_tape) = model.decoder.mlp.forward(&e, Mode::Train, dropout_rng)?;

    let (l_mse, g_shat) = loss_mse_with_grad(x, &s_hat)?;
    let (l_kl, gmu_kl, glv_kl) = loss_kl_with_grads(&mu, &logvar);
    let triplets = mine_triplets(mining_d, triplet_cfg.min_separation)?;
    let (l_triplet, ge_tri) = loss_triplet_with_grad(&e, &triplets, triplet_cfg);
    let total = weights.w_mse * l_mse + weights.w_kl * l_kl + weights.w_triplet * l_triplet;
    let parts = LossParts {
        l_mse,
        l_kl,
        l_triplet,
        total,
    };
    if !total.is_finite() {
        return Err(TrainError::NanLoss { epoch: 0, batch: 0 });
    }
    if !compute_grads {
        return Ok((parts, None));
    }

    let (dec_grads, g_e_dec) = model
        .decoder
        .mlp
        .backward(&dec_tape, &g_shat.scale(weights.w_mse))?;
    let g_e = g_e_dec.add(&ge_tri.scale(weights.w_triplet));
    // e = mu + exp(logvar/2) * eps
    let sigma = logvar.map(|v| (0.5 * v).exp());
    let g_mu = g_e.add(&gmu_kl.scale(weights.w_kl));
    let g_lv = g_e
        .zip_map(&sigma, |g, s| g * s * 0.5)
        .zip_map(eps, |g, n| g * n)
        .add(&glv_kl.scale(weights.w_kl))
        .zip_map(&clamp_mask, |g, m| g * m);
    let g_enc_out = Matrix::hcat(&g_mu, &g_lv);
    let (enc_grads, _) = model.encoder.backward(&enc_tape, &g_enc_out)?;
    Ok((parts, Some((enc_grads, dec_grads))))
}

/// Training settings for the pose VAE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub triplet: TripletConfig,
    /// Append a randomly rotated (re-preprocessed) copy of every batch pose,
    /// so half of each effective batch is augmented.
    pub augment: bool,
    pub rotation: RotationConfig,
    pub seed: u64,
    /// Evaluate eval-mode reconstruction MPJPE every this many epochs (0 = never).
    pub eval_every: usize,
    /// Cap on how many poses the reconstruction evaluation uses.
    pub eval_limit: usize,
    /// Stop once eval reconstruction MPJPE drops below this value.
    pub early_stop_mpjpe: Option<f64>,
    /// Piecewise-constant learning-rate schedule: (first_epoch, lr) entries in
    /// ascending epoch order. Empty = constant `adam.lr`.
    pub lr_schedule: Vec<(usize, f64)>,
    /// Warm-restart the optimizer moments every this many epochs (0 = never).
    /// Paired with a decaying schedule this escapes gradient-noise plateaus
    /// on small datasets.
    pub adam_restart_every: usize,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            epochs: 200,
            batch_size: 128,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            triplet: TripletConfig::default(),
            augment: false,
            rotation: RotationConfig::default(),
            seed: 0,
            eval_every: 10,
            eval_limit: 1024,
            early_stop_mpjpe: None,
            lr_schedule: Vec::new(),
            adam_restart_every: 0,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_mse: f64,
    pub l_kl: f64,
    pub l_triplet: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recon_mpjpe: Option<f64>,
}

/// Eval-mode reconstruction MPJPE of the model over (preprocessed) poses.
pub fn reconstruction_mpjpe(
    model: &VaeModel,
    poses: &[Pose3D],
    limit: usize,
) -> Result<f64, TrainError> {
    let n = poses.len().min(if limit == 0 { usize::MAX } else { limit });
    if n == 0 {
        return Ok(0.0);
    }
    let refs: Vec<&Pose3D> = poses[..n].iter().collect();
    let mut unused = rng::stream(0, 0);
    let enc = model.encode_poses(&refs, Mode::Eval, &mut unused)?;
    let decoded = model.decoder.decode(&enc.e)?;
    let mut total = 0.0;
    for (est, gt) in decoded.iter().zip(&refs) {
        total += mpjpe(est.pose(), gt)?;
    }
    Ok(total / n as f64)
}

/// Trains the VAE on raw dataset poses, preprocessing through `prep`.
/// Deterministic given the config seed. Returns the per-epoch log.
pub fn train_vae(
    model: &mut VaeModel,
    raw_poses: &[Pose3D],
    skel: &Skeleton,
    prep: &Preprocessor,
    cfg: &VaeTrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    let processed: Vec<Pose3D> = raw_poses
        .iter()
        .map(|p| prep.apply(p, skel))
        .collect::<Result<_, _>>()?;
    let latent = model.spec.latent_dim;

    let enc_params = model.encoder.trainable();
    let mut dec_params = model.decoder.mlp.trainable();
    let mut all_params: Vec<&Matrix> = enc_params;
    all_params.append(&mut dec_params);
    let mut adam = AdamState::new_for(&all_params);
    drop(all_params);

    let mut shuffle_rng = rng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut noise_rng = rng::stream(cfg.seed, STREAM_NOISE);
    let mut dropout_rng = rng::stream(cfg.seed, STREAM_DROPOUT);
    let mut augment_rng = rng::stream(cfg.seed, STREAM_AUGMENT);

    let n = processed.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut adam_cfg = cfg.adam;
        for &(from, lr) in &cfg.lr_schedule {
            if epoch >= from {
                adam_cfg.lr = lr;
            }
        }
        if cfg.adam_restart_every > 0 && epoch > 0 && epoch % cfg.adam_restart_every == 0 {
            let enc_params = model.encoder.trainable();
            let mut dec_params = model.decoder.mlp.trainable();
            let mut all_params: Vec<&Matrix> = enc_params;
            all_params.append(&mut dec_params);
            adam = AdamState::new_for(&all_params);
        }
        shuffle(&mut indices, &mut shuffle_rng);
        let mut sums = LossParts::default();
        let mut batches = 0usize;
        for (batch_no, chunk) in indices.chunks(cfg.batch_size.max(1)).enumerate() {
            if chunk.len() < 3 {
                continue;
            }
            let mut batch: Vec<Pose3D> =
                chunk.iter().map(|&i| processed[i].clone()).collect();
            if cfg.augment {
                for &i in chunk {
                    let rot = random_rotation(&mut augment_rng, &cfg.rotation);
                    let root = raw_poses[i].joints()[skel.root_idx];
                    let rotated = rot.apply_about(&raw_poses[i], root);
                    batch.push(prep.apply(&rotated, skel)?);
                }
            }
            let refs: Vec<&Pose3D> = batch.iter().collect();
            let x = {
                let mut data = Vec::with_capacity(refs.len() * 3 * model.spec.n_joints);
                for p in &refs {
                    data.extend(p.flat());
                }
                Matrix::from_vec(refs.len(), 3 * model.spec.n_joints, data)?
            };
            let mining_d = pairwise_mpjpe(&refs)?;
            let eps = sample_standard_normal(refs.len(), latent, &mut noise_rng);
            let step = vae_train_step(
                model,
                &x,
                &mining_d,
                &eps,
                &cfg.weights,
                &cfg.triplet,
                adam_cfg,
                &mut adam,
                &mut dropout_rng,
            );
            let parts = match step {
                Err(TrainError::NanLoss { .. }) => {
                    return Err(TrainError::NanLoss {
                        epoch,
                        batch: batch_no,
                    })
                }
                other => other?,
            };
            sums.l_mse += parts.l_mse;
            sums.l_kl += parts.l_kl;
            sums.l_triplet += parts.l_triplet;
            sums.total += parts.total;
            batches += 1;
        }
        let denom = batches.max(1) as f64;
        let mut log = EpochLog {
            epoch,
            l_mse: sums.l_mse / denom,
            l_kl: sums.l_kl / denom,
            l_triplet: sums.l_triplet / denom,
            total: sums.total / denom,
            recon_mpjpe: None,
        };
        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            log.recon_mpjpe = Some(reconstruction_mpjpe(model, &processed, cfg.eval_limit)?);
        }
        logs.push(log);
        if let (Some(stop), Some(recon)) = (cfg.early_stop_mpjpe, log.recon_mpjpe) {
            if recon < stop {
                break;
            }
        }
    }
    Ok(logs)
}

/// One optimization step with dropout active.
#[allow(clippy::too_many_arguments)]
fn vae_train_step(
    model: &mut VaeModel,
    x: &Matrix,
    mining_d: &Matrix,
    eps: &Matrix,
    weights: &LossWeights,
    triplet_cfg: &TripletConfig,
    adam_cfg: AdamConfig,
    adam: &mut AdamState,
    dropout_rng: &mut impl Rng,
) -> Result<LossParts, TrainError> {
    let (parts, grads) = vae_step_inner(
        model,
        x,
        mining_d,
        eps,
        weights,
        triplet_cfg,
        dropout_rng,
        true,
    )?;
    let (enc_grads, dec_grads) = grads.expect("gradients requested");
    let mut grads = enc_grads;
    grads.extend(dec_grads);
    let mut params = model.encoder.trainable_mut();
    params.extend(model.decoder.mlp.trainable_mut());
    adam_step(adam, params, &grads, &adam_cfg)?;
    Ok(parts)
}

fn shuffle(indices: &mut [usize], rng: &mut impl Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}
