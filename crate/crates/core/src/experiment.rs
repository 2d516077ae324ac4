//! The augmentation-level x training-set-size grid: train one model per
//! cell on phantom data, score it on a held-out cohort, and emit the
//! training/validation tables and per-epoch curves as CSV.

use crate::augment::{augment_dataset, AugmentConfig};
use crate::error::{Error, Result};
use crate::metrics::{dice_score, mean_dice_per_slice};
use crate::model::adam::AdamConfig;
use crate::model::network::{save_checkpoint, Network, NetworkConfig};
use crate::model::train::{predict_volume, train, TrainConfig};
use crate::patch::{extract_patches, PatchPair, TilingConfig};
use crate::phantom::{generate_phantom, PhantomConfig};
use crate::rng::stream;
use crate::volume::{MaskVolume, Volume3D};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of training volumes per column; nested, so size 3 reuses the
    /// volumes of size 1 plus two more.
    pub training_sizes: Vec<usize>,
    /// Augmentation levels per row; 0 means originals only.
    pub aug_levels: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_size: usize,
    pub phantom: PhantomConfig,
    pub tiling: TilingConfig,
    pub network: NetworkConfig,
    pub optimizer: AdamConfig,
    pub augment: AugmentConfig,
    pub dice_epsilon: f64,
    /// Score validation per volume (the default) or per axial slice.
    pub per_slice_validation: bool,
    pub master_seed: u64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            training_sizes: vec![1, 3],
            aug_levels: vec![0, 5, 50],
            epochs: 100,
            batch_size: 8,
            validation_size: 10,
            phantom: PhantomConfig::default(),
            tiling: TilingConfig { patch_size: 32, stride: 16 },
            network: NetworkConfig { depth: 3, base_filters: 4, patch_size: 32, seed: 0 },
            optimizer: AdamConfig::default(),
            augment: AugmentConfig::default(),
            dice_epsilon: 1.0,
            per_slice_validation: false,
            master_seed: 0,
            output_dir: "out".to_string(),
        }
    }
}

/// The full study grid: {1,3,5,7,9} x {5x..50x}.
impl ExperimentConfig {
    pub fn full_grid(mut self) -> Self {
        self.training_sizes = vec![1, 3, 5, 7, 9];
        self.aug_levels = vec![5, 10, 20, 30, 40, 50];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_sizes.is_empty() || self.aug_levels.is_empty() {
            return Err(Error::Config("empty grid axis".into()));
        }
        if self.validation_size == 0 {
            return Err(Error::Config("validation_size must be >= 1".into()));
        }
        if self.network.patch_size != self.tiling.patch_size {
            return Err(Error::Config(format!(
                "network patch_size {} != tiling patch_size {}",
                self.network.patch_size, self.tiling.patch_size
            )));
        }
        self.augment.validate()?;
        self.network.validate()?;
        Ok(())
    }

    /// First validation volume index: the slot right after the training
    /// pool, keeping the two cohorts disjoint by construction.
    pub fn validation_offset(&self) -> usize {
        *self.training_sizes.iter().max().unwrap_or(&0)
    }
}

/// One grid cell's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub training_size: usize,
    pub aug_level: usize,
    pub epoch_train_dice: Vec<f64>,
    pub final_train_dice: f64,
    pub mean_val_dice: f64,
    pub wall_time_secs: f64,
    pub seed: u64,
    /// Set when the cell failed; the metric fields are then meaningless.
    pub error: Option<String>,
    #[serde(skip)]
    pub checkpoint: Option<Vec<u8>>,
}

fn training_pairs(
    cfg: &ExperimentConfig,
    volumes: &[(Volume3D, MaskVolume)],
) -> Result<Vec<PatchPair>> {
    let mut pairs = Vec::new();
    for (vid, (vol, mask)) in volumes.iter().enumerate() {
        let (nx, ny, nz) = vol.dims;
        for z in 0..nz {
            let imgs = extract_patches(vol.axial_slice(z), (nx, ny), &cfg.tiling, vid as u32, z)?;
            let msks = extract_patches(mask.axial_slice(z), (nx, ny), &cfg.tiling, vid as u32, z)?;
            pairs.extend(
                imgs.into_iter()
                    .zip(msks)
                    .map(|(image, mask)| PatchPair { image, mask }),
            );
        }
    }
    Ok(pairs)
}

fn run_cell(cfg: &ExperimentConfig, size: usize, level: usize) -> Result<RunRecord> {
    let started = Instant::now();
    // every per-cell random stream is keyed by (master_seed, size, level)
    let mut keys = stream(cfg.master_seed, size as u64, level as u64);
    let net_seed = keys.next_u64();
    let aug_seed = keys.next_u64();
    let shuffle_seed = keys.next_u64();

    let training: Vec<(Volume3D, MaskVolume)> = (0..size)
        .map(|v| generate_phantom(&cfg.phantom, v))
        .collect::<Result<_>>()?;
    let base_pairs = training_pairs(cfg, &training)?;
    let dataset = if level == 0 {
        base_pairs
    } else {
        let aug_cfg = AugmentConfig { level, seed: aug_seed, ..cfg.augment.clone() };
        augment_dataset(&base_pairs, &aug_cfg)?
    };

    let mut net = Network::new(NetworkConfig { seed: net_seed, ..cfg.network })?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.optimizer,
        epsilon: cfg.dice_epsilon,
        seed: shuffle_seed,
    };
    let epoch_train_dice = train(&mut net, &dataset, &train_cfg)?;
    let final_train_dice = epoch_train_dice.last().copied().unwrap_or(f64::NAN);

    let offset = cfg.validation_offset();
    let mut val_sum = 0.0;
    for v in 0..cfg.validation_size {
        let (vol, truth) = generate_phantom(&cfg.phantom, offset + v)?;
        let pred = predict_volume(&net, &vol, &cfg.tiling, 0.5)?;
        val_sum += if cfg.per_slice_validation {
            mean_dice_per_slice(&pred, &truth)?
        } else {
            dice_score(&pred, &truth)?
        };
    }
    let mean_val_dice = val_sum / cfg.validation_size as f64;

    Ok(RunRecord {
        training_size: size,
        aug_level: level,
        epoch_train_dice,
        final_train_dice,
        mean_val_dice,
        wall_time_secs: started.elapsed().as_secs_f64(),
        seed: net_seed,
        error: None,
        checkpoint: Some(save_checkpoint(&net)),
    })
}

/// Train every grid cell. Cells are independent; `jobs` worker threads
/// pull cells from a shared queue, and records land in grid order, so the
/// result does not depend on scheduling. A failed cell is recorded with
/// its error instead of aborting the grid.
pub fn run_grid(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = cfg
        .training_sizes
        .iter()
        .flat_map(|&s| cfg.aug_levels.iter().map(move |&l| (s, l)))
        .collect();
    let jobs = jobs.max(1).min(cells.len());
    let slots: Vec<Mutex<Option<RunRecord>>> = (0..cells.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let (size, level) = cells[i];
                let record = run_cell(cfg, size, level).unwrap_or_else(|e| RunRecord {
                    training_size: size,
                    aug_level: level,
                    epoch_train_dice: Vec::new(),
                    final_train_dice: f64::NAN,
                    mean_val_dice: f64::NAN,
                    wall_time_secs: 0.0,
                    seed: 0,
                    error: Some(e.to_string()),
                    checkpoint: None,
                });
                *slots[i].lock().unwrap() = Some(record);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("cell completed"))
        .collect())
}

fn cell_value(
    records: &[RunRecord],
    size: usize,
    level: usize,
    pick: impl Fn(&RunRecord) -> f64,
) -> Result<String> {
    let rec = records
        .iter()
        .find(|r| r.training_size == size && r.aug_level == level)
        .ok_or(Error::IncompleteGrid)?;
    Ok(if rec.error.is_some() {
        "failed".to_string()
    } else {
        format!("{:.3}", pick(rec))
    })
}

fn table_csv(
    records: &[RunRecord],
    sizes: &[usize],
    levels: &[usize],
    pick: impl Fn(&RunRecord) -> f64,
) -> Result<String> {
    if records.is_empty() {
        return Err(Error::IncompleteGrid);
    }
    let mut out = String::from("augmentation_level");
    for s in sizes {
        out.push_str(&format!(",{s}"));
    }
    out.push('\n');
    for &l in levels {
        out.push_str(&format!("{l}x"));
        for &s in sizes {
            out.push(',');
            out.push_str(&cell_value(records, s, l, &pick)?);
        }
        out.push('\n');
    }
    Ok(out)
}

/// The two tables: rows are augmentation levels,
/// columns training sizes, values to three decimals.
pub fn emit_tables(
    records: &[RunRecord],
    sizes: &[usize],
    levels: &[usize],
) -> Result<(String, String)> {
    let training = table_csv(records, sizes, levels, |r| r.final_train_dice)?;
    let validation = table_csv(records, sizes, levels, |r| r.mean_val_dice)?;
    Ok((training, validation))
}

/// Long-format curve data: one training row per epoch per cell plus one
/// validation row per cell; enough to regenerate every figure grouping.
pub fn emit_curves(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::IncompleteGrid);
    }
    let mut out = String::from("training_size,aug_level,epoch,split,dice\n");
    for r in records {
        if r.error.is_some() {
            continue;
        }
        for (e, d) in r.epoch_train_dice.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},train,{:.6}\n",
                r.training_size,
                r.aug_level,
                e + 1,
                d
            ));
        }
        out.push_str(&format!(
            "{},{},{},validation,{:.6}\n",
            r.training_size,
            r.aug_level,
            r.epoch_train_dice.len(),
            r.mean_val_dice
        ));
    }
    Ok(out)
}

/// Write tables, curves and per-cell checkpoints under `dir`. Files are
/// written to a temp name then renamed.
pub fn write_outputs(records: &[RunRecord], cfg: &ExperimentConfig, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let atomic_write = |name: &str, bytes: &[u8]| -> Result<()> {
        let tmp = dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, dir.join(name))?;
        Ok(())
    };
    let (t1, t2) = emit_tables(records, &cfg.training_sizes, &cfg.aug_levels)?;
    atomic_write("table1_training.csv", t1.as_bytes())?;
    atomic_write("table2_validation.csv", t2.as_bytes())?;
    atomic_write("curves.csv", emit_curves(records)?.as_bytes())?;
    for r in records {
        if let Some(ckpt) = &r.checkpoint {
            atomic_write(&format!("model_s{}_l{}.ckpt", r.training_size, r.aug_level), ckpt)?;
        }
    }
    Ok(())
}
