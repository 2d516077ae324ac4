//! Command-line surface for the pipeline: every stage from phantom
//! synthesis through the full experiment grid, each deterministic given
//! its flags.

use augseg::augment::{augment_dataset, AugmentConfig};
use augseg::error::{Error, Result};
use augseg::experiment::{run_grid, write_outputs, ExperimentConfig};
use augseg::metrics::dice_score;
use augseg::model::network::{load_checkpoint, save_checkpoint, Network, NetworkConfig};
use augseg::model::train::{predict_volume, train, TrainConfig};
use augseg::model::adam::AdamConfig;
use augseg::nifti::{read_nifti, read_nifti_mask, write_nifti, write_nifti_mask};
use augseg::patch::{extract_patches, PatchPair, TilingConfig};
use augseg::patchio::{read_pairs, write_pairs};
use augseg::phantom::{generate_phantom, PhantomConfig};
use augseg::preprocess::{intensity_match, resample_axial};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "augseg", version, about = "Patch-based segmentation with extreme augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic phantom volume/mask NIfTI pairs.
    Synth {
        /// Phantom config JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
    },
    /// Resample in-plane and intensity-match a volume.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target in-plane size (square).
        #[arg(long, default_value_t = 256)]
        target: usize,
    },
    /// Tile a volume/mask pair into serialized patch pairs.
    Patchify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 128)]
        patch: usize,
        #[arg(long, default_value_t = 64)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expand a patch file with random-affine copies.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        level: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a patch file and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Network config JSON; defaults are used when omitted.
        #[arg(long)]
        net_config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training Dice CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Segment a volume with a trained checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Tiling stride; defaults to half the model's patch size.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
    },
    /// Print the Dice score of a predicted mask against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run the augmentation-level x training-size grid and emit CSVs.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn tile_pairs(
    vol: &augseg::volume::Volume3D,
    mask: &augseg::volume::MaskVolume,
    tiling: &TilingConfig,
) -> Result<Vec<PatchPair>> {
    if vol.dims != mask.dims {
        return Err(Error::DimensionMismatch);
    }
    let (nx, ny, nz) = vol.dims;
    let mut pairs = Vec::new();
    for z in 0..nz {
        let imgs = extract_patches(vol.axial_slice(z), (nx, ny), tiling, 0, z)?;
        let msks = extract_patches(mask.axial_slice(z), (nx, ny), tiling, 0, z)?;
        pairs.extend(imgs.into_iter().zip(msks).map(|(image, mask)| PatchPair { image, mask }));
    }
    Ok(pairs)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, count } => {
            let cfg: PhantomConfig = match config {
                Some(p) => load_json(&p)?,
                None => PhantomConfig::default(),
            };
            std::fs::create_dir_all(&out)?;
            for i in 0..count {
                let (vol, mask) = generate_phantom(&cfg, i)?;
                std::fs::write(out.join(format!("vol_{i:03}.nii")), write_nifti(&vol))?;
                std::fs::write(out.join(format!("mask_{i:03}.nii")), write_nifti_mask(&mask))?;
            }
        }
        Command::Preprocess { input, out, target } => {
            let vol = read_nifti(&std::fs::read(&input)?)?;
            let resampled = resample_axial(&vol, (target, target))?;
            std::fs::write(&out, write_nifti(&intensity_match(&resampled)?))?;
        }
        Command::Patchify { image, mask, patch, stride, out } => {
            let vol = read_nifti(&std::fs::read(&image)?)?;
            let msk = read_nifti_mask(&std::fs::read(&mask)?)?;
            let tiling = TilingConfig { patch_size: patch, stride };
            let pairs = tile_pairs(&vol, &msk, &tiling)?;
            std::fs::write(&out, write_pairs(&pairs)?)?;
        }
        Command::Augment { input, level, seed, out } => {
            let pairs = read_pairs(&std::fs::read(&input)?)?;
            let cfg = AugmentConfig { level, seed, ..Default::default() };
            std::fs::write(&out, write_pairs(&augment_dataset(&pairs, &cfg)?)?)?;
        }
        Command::Train { data, net_config, epochs, batch_size, lr, seed, out, history } => {
            let dataset = read_pairs(&std::fs::read(&data)?)?;
            let net_cfg: NetworkConfig = match net_config {
                Some(p) => load_json(&p)?,
                None => NetworkConfig::default(),
            };
            let mut net = Network::new(net_cfg)?;
            let train_cfg = TrainConfig {
                epochs,
                batch_size,
                adam: AdamConfig { learning_rate: lr, ..Default::default() },
                seed,
                ..Default::default()
            };
            let curve = train(&mut net, &dataset, &train_cfg)?;
            std::fs::write(&out, save_checkpoint(&net))?;
            if let Some(path) = history {
                let mut csv = String::from("epoch,train_dice\n");
                for (e, d) in curve.iter().enumerate() {
                    csv.push_str(&format!("{},{:.6}\n", e + 1, d));
                }
                std::fs::write(&path, csv)?;
            }
        }
        Command::Predict { model, image, out, stride, threshold } => {
            let net = load_checkpoint(&std::fs::read(&model)?)?;
            let vol = read_nifti(&std::fs::read(&image)?)?;
            let patch_size = net.config.patch_size;
            let tiling = TilingConfig {
                patch_size,
                stride: stride.unwrap_or_else(|| (patch_size / 2).max(1)),
            };
            let pred = predict_volume(&net, &vol, &tiling, threshold)?;
            std::fs::write(&out, write_nifti_mask(&pred))?;
        }
        Command::Evaluate { pred, truth } => {
            let p = read_nifti_mask(&std::fs::read(&pred)?)?;
            let t = read_nifti_mask(&std::fs::read(&truth)?)?;
            println!("{:.3}", dice_score(&p, &t)?);
        }
        Command::Experiment { config, out, jobs } => {
            let cfg: ExperimentConfig = load_json(&config)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            let records = run_grid(&cfg, jobs)?;
            write_outputs(&records, &cfg, &dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap handles usage errors itself with exit code 2
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
