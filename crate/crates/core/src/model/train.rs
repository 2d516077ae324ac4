//! Training loop and whole-volume inference.

use crate::augment::copy_rng;
use crate::error::{Error, Result};
use crate::model::adam::{adam_step, AdamConfig, AdamState};
use crate::model::loss::soft_dice_loss;
use crate::model::network::Network;
use crate::model::tensor::Tensor4;
use crate::patch::{extract_patches, stitch, PatchPair, TilingConfig};
use crate::volume::{MaskVolume, Volume3D};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Soft-Dice smoothing constant.
    pub epsilon: f64,
    /// Shuffle seed; epoch e shuffles with a stream derived from (seed, e).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            adam: AdamConfig::default(),
            epsilon: 1.0,
            seed: 0,
        }
    }
}

fn batch_tensors(pairs: &[PatchPair], indices: &[usize], p: usize) -> (Tensor4, Tensor4) {
    let b = indices.len();
    let mut images = Tensor4::zeros([b, 1, p, p]);
    let mut masks = Tensor4::zeros([b, 1, p, p]);
    for (k, &i) in indices.iter().enumerate() {
        for (dst, &src) in images.plane_mut(k, 0).iter_mut().zip(&pairs[i].image.pixels) {
            *dst = src as f64;
        }
        for (dst, &src) in masks.plane_mut(k, 0).iter_mut().zip(&pairs[i].mask.pixels) {
            *dst = src as f64;
        }
    }
    (images, masks)
}

/// Minimize soft-Dice loss over the dataset; returns the per-epoch mean of
/// the differentiable Dice over training batches.
pub fn train(net: &mut Network, dataset: &[PatchPair], cfg: &TrainConfig) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let p = dataset[0].image.size();
    for pair in dataset {
        if pair.image.size() != p || pair.mask.size() != p {
            return Err(Error::DimensionMismatch);
        }
    }
    let mut state = AdamState::new(&net.param_sizes());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = copy_rng(cfg.seed, epoch, 0);
        order.shuffle(&mut rng);
        let mut dice_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (images, masks) = batch_tensors(dataset, chunk, p);
            let (probs, cache) = net.forward(&images)?;
            let (loss, grad) = soft_dice_loss(&probs, &masks, cfg.epsilon)?;
            dice_sum += 1.0 - loss;
            batches += 1;
            let grads = net.backward(&cache, &grad)?;
            let flat = grads.flat();
            let mut params = net.param_vecs_mut();
            adam_step(&mut params, &flat, &mut state, &cfg.adam);
        }
        history.push(dice_sum / batches as f64);
    }
    Ok(history)
}

/// Segment a preprocessed volume: tile each axial slice, run the network,
/// stitch the probability maps, threshold at `threshold`.
pub fn predict_volume(
    net: &Network,
    vol: &Volume3D,
    tiling: &TilingConfig,
    threshold: f32,
) -> Result<MaskVolume> {
    let (nx, ny, nz) = vol.dims;
    let p = tiling.patch_size;
    let mut out = Vec::with_capacity(vol.data.len());
    for z in 0..nz {
        let mut patches = extract_patches(vol.axial_slice(z), (nx, ny), tiling, 0, z)?;
        let b = patches.len();
        let mut images = Tensor4::zeros([b, 1, p, p]);
        for (k, patch) in patches.iter().enumerate() {
            for (dst, &src) in images.plane_mut(k, 0).iter_mut().zip(&patch.pixels) {
                *dst = src as f64;
            }
        }
        let probs = net.predict(&images)?;
        for (k, patch) in patches.iter_mut().enumerate() {
            patch.pixels = probs.plane(k, 0).iter().map(|&v| v as f32).collect();
        }
        let stitched = stitch(&patches, (nx, ny))?;
        out.extend(stitched.iter().map(|&v| if v > threshold { 1.0 } else { 0.0 }));
    }
    MaskVolume::new(vol.dims, vol.spacing, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::NetworkConfig;
    use crate::patch::Patch;

    fn desk_net(seed: u64) -> Network {
        Network::new(NetworkConfig { depth: 2, base_filters: 4, patch_size: 16, seed }).unwrap()
    }

    fn blob_pair(p: usize) -> PatchPair {
        let mut image = vec![0.1f32; p * p];
        let mut mask = vec![0.0f32; p * p];
        for y in p / 4..3 * p / 4 {
            for x in p / 4..3 * p / 4 {
                image[x + p * y] = 0.9;
                mask[x + p * y] = 1.0;
            }
        }
        PatchPair {
            image: Patch { pixels: image, origin: (0, 0), slice_index: 0, volume_id: 0 },
            mask: Patch { pixels: mask, origin: (0, 0), slice_index: 0, volume_id: 0 },
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut net = desk_net(0);
        assert!(matches!(
            train(&mut net, &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn zero_epochs_touches_nothing() {
        let mut net = desk_net(1);
        let before = net.clone();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let history = train(&mut net, &[blob_pair(16)], &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn epoch_dice_stays_in_unit_interval() {
        let mut net = desk_net(2);
        let cfg = TrainConfig { epochs: 5, batch_size: 1, ..Default::default() };
        let history = train(&mut net, &[blob_pair(16)], &cfg).unwrap();
        assert_eq!(history.len(), 5);
        assert!(history.iter().all(|&d| (0.0..=1.0).contains(&d)));
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut net = desk_net(3);
            let cfg = TrainConfig { epochs: 3, batch_size: 2, seed: 9, ..Default::default() };
            let pairs = vec![blob_pair(16), blob_pair(16), blob_pair(16)];
            let history = train(&mut net, &pairs, &cfg).unwrap();
            (history, net)
        };
        let (h1, n1) = run();
        let (h2, n2) = run();
        assert_eq!(h1, h2);
        assert_eq!(n1, n2);
    }

    #[test]
    fn prediction_shape_and_determinism() {
        let net = desk_net(4);
        let vol = Volume3D::new(
            (32, 32, 2),
            (1.0, 1.0, 1.0),
            (0..2048).map(|i| (i % 10) as f32 / 10.0).collect(),
        )
        .unwrap();
        let tiling = TilingConfig { patch_size: 16, stride: 8 };
        let a = predict_volume(&net, &vol, &tiling, 0.5).unwrap();
        assert_eq!(a.dims, vol.dims);
        let b = predict_volume(&net, &vol, &tiling, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weight_net_predicts_uniform_background() {
        let mut net = desk_net(5);
        for p in net.param_vecs_mut() {
            p.fill(0.0);
        }
        let vol = Volume3D::new((16, 16, 1), (1.0, 1.0, 1.0), vec![0.5; 256]).unwrap();
        let tiling = TilingConfig { patch_size: 16, stride: 16 };
        // probability is exactly 0.5 everywhere; the > 0.5 rule sends the
        // whole field to background
        let m = predict_volume(&net, &vol, &tiling, 0.5).unwrap();
        assert!(m.data.iter().all(|&v| v == 0.0));
    }
}
