//! `vipelab`: dataset generation, VAE and mapper training, retrieval
//! evaluation, lifting, and embedding-space generation from one binary.
//!
//! All subcommands are deterministic given `--seed`; runtime errors exit 1
//! with a machine-readable JSON record on stderr, usage errors exit 2.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "vipelab", version, about = "View-invariant pose embedding lab")]
struct Cli {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed overriding the config seed.
    #[arg(long, global = true, env = "VIPELAB_SEED")]
    seed: Option<u64>,

    /// Worker threads for parallel sections (0 = logical cores).
    #[arg(long, global = true, env = "VIPELAB_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-camera pose dataset.
    GenData(GenDataArgs),
    /// Train the 3D pose VAE on a dataset's train split.
    TrainVae(TrainVaeArgs),
    /// Train the 2D mapping network against a frozen decoder.
    TrainMapper(TrainMapperArgs),
    /// Cross-view Hit@k retrieval evaluation.
    EvalHit(EvalHitArgs),
    /// Mean (optionally Procrustes-aligned) MPJPE of lifted poses.
    EvalMpjpe(EvalMpjpeArgs),
    /// Lift one 2D pose file to a canonical 3D estimate.
    Lift(LiftArgs),
    /// Query one pose against another camera's gallery.
    Retrieve(RetrieveArgs),
    /// Decode an embedding under increasing noise magnitudes.
    Generate(GenerateArgs),
    /// Decode evenly spaced embeddings between two poses.
    Interpolate(InterpolateArgs),
    /// Export a 2-D PCA projection of embeddings for plotting.
    ExportViz(ExportVizArgs),
    /// Run the full pipeline with ablation toggles and report Hit@k.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the config pose count.
    #[arg(long)]
    n_poses: Option<usize>,
}

#[derive(Args)]
struct TrainVaeArgs {
    /// Dataset directory (from gen-data).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint base path (writes <out>.manifest and <out>.weights).
    #[arg(long)]
    out: PathBuf,
    /// Training log path (JSON lines); default <out>.log.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Override config epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainMapperArgs {
    #[arg(long)]
    data: PathBuf,
    /// VAE checkpoint whose decoder is frozen.
    #[arg(long)]
    decoder: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalHitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Mapper checkpoint (route = mapper).
    #[arg(long)]
    mapper: Option<PathBuf>,
    /// VAE checkpoint (decoder for route = mapper, encoder for route = gt3d).
    #[arg(long)]
    decoder: Option<PathBuf>,
    /// Embedding route: mapper, gt3d, or baseline2d.
    #[arg(long, default_value = "mapper")]
    route: String,
    /// Comma-separated k values.
    #[arg(long, default_value = "1,10,20")]
    ks: String,
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Dataset split to evaluate.
    #[arg(long, default_value = "test")]
    split: String,
    /// Comma-separated camera ids; default = config eval cameras.
    #[arg(long)]
    cameras: Option<String>,
    /// Greedy near-duplicate filter distance (0 = off).
    #[arg(long, default_value_t = 0.0)]
    dedup: f64,
    /// Write the report as JSON lines here as well as printing the table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalMpjpeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    mapper: PathBuf,
    #[arg(long)]
    decoder: PathBuf,
    /// Procrustes-align each pair before measuring.
    #[arg(long)]
    aligned: bool,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    cameras: Option<String>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    mapper: PathBuf,
    #[arg(long)]
    decoder: PathBuf,
    /// Input 2D pose: JSON array of [x, y] joints.
    #[arg(long,., value_name = "FILE")]
    input: PathBuf,
    /// Output 3D pose file (JSON array of [x, y, z]).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    mapper: PathBuf,
    /// Pose id of the query record.
    #[arg(long)]
    query_id: u64,
    /// Camera the query is observed from.
    #[arg(long)]
    query_camera: u32,
    /// Camera whose records form the gallery.
    #[arg(long)]
    gallery_camera: u32,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct GenerateArgs {
    /// VAE checkpoint providing the decoder.
    #[arg(long)]
    decoder: PathBuf,
    /// Embedding file: JSON array of latent_dim reals.
    #[arg(long)]
    embed: PathBuf,
    /// Comma-separated noise magnitudes.
    #[arg(long, default_value = "0.2,0.3,0.4,0.5")]
    alphas: String,
    /// Output pose records (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InterpolateArgs {
    /// VAE checkpoint (encoder embeds the endpoints, decoder renders).
    #[arg(long)]
    decoder: PathBuf,
    /// First pose file: JSON array of [x, y, z] joints.
    #[arg(long)]
    a: PathBuf,
    /// Second pose file.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportVizArgs {
    #[arg(long)]
    data: PathBuf,
    /// VAE checkpoint for the 3D encoder.
    #[arg(long)]
    vae: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Cap on exported points.
    #[arg(long, default_value_t = 2000)]
    max_points: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Working directory for the generated dataset and results.
    #[arg(long)]
    out: PathBuf,
    /// Drop the triplet term from the VAE loss.
    #[arg(long)]
    no_triplet: bool,
    /// Skip rotation alignment in preprocessing.
    #[arg(long)]
    no_canonical_rotation: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            let record = serde_json::json!({
                "error": err.to_string(),
                "chain": chain,
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => vipelab_core::config::ExperimentConfig::load(path)?,
        None => vipelab_core::config::ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .ok();
    }

    match cli.command {
        Command::GenData(args) => commands::gen_data(&cfg, args.out, args.n_poses),
        Command::TrainVae(args) => {
            commands::train_vae(&cfg, args.data, args.out, args.log, args.epochs)
        }
        Command::TrainMapper(args) => {
            commands::train_mapper(&cfg, args.data, args.decoder, args.out, args.log, args.epochs)
        }
        Command::EvalHit(args) => commands::eval_hit(
            &cfg,
            commands::EvalHitParams {
                data: args.data,
                mapper: args.mapper,
                decoder: args.decoder,
                route: args.route,
                ks: args.ks,
                threshold: args.threshold,
                split: args.split,
                cameras: args.cameras,
                dedup: args.dedup,
                out: args.out,
            },
        ),
        Command::EvalMpjpe(args) => commands::eval_mpjpe(
            &cfg,
            args.data,
            args.mapper,
            args.decoder,
            args.aligned,
            args.split,
            args.cameras,
        ),
        Command::Lift(args) => commands::lift(&cfg, args.mapper, args.decoder, args.input, args.out),
        Command::Retrieve(args) => commands::retrieve(
            &cfg,
            args.data,
            args.mapper,
            args.query_id,
            args.query_camera,
            args.gallery_camera,
            args.k,
            args.split,
        ),
        Command::Generate(args) => {
            commands::generate(&cfg, args.decoder, args.embed, args.alphas, args.out)
        }
        Command::Interpolate(args) => {
            commands::interpolate(&cfg, args.decoder, args.a, args.b, args.steps, args.out)
        }
        Command::ExportViz(args) => commands::export_viz(
            &cfg,
            args.data,
            args.vae,
            args.split,
            args.max_points,
            args.out,
        ),
        Command::Ablate(args) => {
            commands::ablate(&cfg, args.out, args.no_triplet, args.no_canonical_rotation)
        }
    }
}
