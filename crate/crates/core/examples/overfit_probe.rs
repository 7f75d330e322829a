use std::time::Instant;
use vipelab_core::pose::{Preprocessor, Skeleton};
use vipelab_core::rng;
use vipelab_core::synth::{sample_pose, GeneratorConfig};
use vipelab_core::vae::{train_vae, LossWeights, VaeModel, VaeSpec, VaeTrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(280);

    let skel = Skeleton::default17();
    let gen = GeneratorConfig::default_for(&skel);
    let poses: Vec<_> = (0..256)
        .map(|i| sample_pose(&mut rng::stream(42, i), &skel, &gen))
        .collect();

    let mut model = VaeModel::new(VaeSpec::default(), 7).unwrap();
    // lr decays 0.7x every 24 epochs with Adam warm restarts
    let lr0 = 2e-3;
    let lr_schedule: Vec<(usize, f64)> = (0..14)
        .map(|k| (24 * k, lr0 * 0.7f64.powi(k as i32)))
        .collect();
    let cfg = VaeTrainConfig {
        epochs,
        batch_size: 32,
        adam: vipelab_core::nn::AdamConfig { lr: lr0, ..Default::default() },
        weights: LossWeights { w_mse: 1.0, w_kl: 1e-6, w_triplet: 0.01 },
        eval_every: 8,
        early_stop_mpjpe: Some(0.048),
        seed: 1,
        lr_schedule,
        adam_restart_every: 24,
        ..Default::default()
    };
    let t = Instant::now();
    let logs = train_vae(&mut model, &poses, &skel, &Preprocessor::default(), &cfg).unwrap();
    for log in &logs {
        if let Some(recon) = log.recon_mpjpe {
            println!("ep {:>4}  mse {:.5}  tri {:.3}  recon {:.4}", log.epoch, log.l_mse, log.l_triplet, recon);
        }
    }
    println!(
        "total {} epochs, {:.0}s, final recon {:?}",
        logs.len(),
        t.elapsed().as_secs_f64(),
        logs.last().unwrap().recon_mpjpe
    );
}
