//! Seeded random-affine augmentation of (image, mask) patch pairs.
//!
//! Each copy is produced by one sampled rotation/scale/translation about
//! the patch center. There is no flip in the transform vocabulary, so the
//! linear part always has determinant scale^2 > 0. Copy (i, j) draws its
//! parameters from a stream derived purely from (seed, i, j), so output is
//! independent of scheduling.

use crate::error::{Error, Result};
use crate::patch::{Patch, PatchPair};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Reference patch size the translation range is quoted against.
const TRANSLATION_FRAME: f64 = 128.0;

/// One sampled transform: rotate by `angle_deg` and scale by `scale`
/// about the patch center, then translate by (tx, ty) pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub angle_deg: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams { angle_deg: 0.0, scale: 1.0, tx: 0.0, ty: 0.0 };

    /// Determinant of the 2x2 linear part.
    pub fn linear_det(&self) -> f64 {
        self.scale * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Transformed copies per source pair (the "Nx" level).
    pub level: usize,
    pub angle_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Pixels, quoted for a 128 px patch; scaled proportionally for
    /// other patch sizes.
    pub translation_range: (f64, f64),
    pub seed: u64,
    pub include_original: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            level: 5,
            angle_range: (-20.0, 20.0),
            scale_range: (0.8, 1.2),
            translation_range: (-50.0, 50.0),
            seed: 0,
            include_original: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: (f64, f64)| r.0 <= r.1;
        if !ordered(self.angle_range) || !ordered(self.scale_range) || !ordered(self.translation_range) {
            return Err(Error::Config("augment range bounds out of order".into()));
        }
        if self.scale_range.0 <= 0.0 {
            return Err(Error::Config("scale range must be positive".into()));
        }
        Ok(())
    }

    /// Translation bounds for a given patch size, proportional to the
    /// 128 px reference frame and rounded to whole pixels.
    pub fn translation_bounds(&self, patch_size: usize) -> (f64, f64) {
        let f = patch_size as f64 / TRANSLATION_FRAME;
        (
            (self.translation_range.0 * f).round(),
            (self.translation_range.1 * f).round(),
        )
    }
}

/// Deterministic per-copy stream: a pure function of (seed, pair, copy).
pub fn copy_rng(seed: u64, pair_index: usize, copy_index: usize) -> ChaCha8Rng {
    crate::rng::stream(seed, pair_index as u64, copy_index as u64)
}

fn uniform_closed<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

/// Draw one transform, each field independent and uniform over its
/// closed range.
pub fn sample_params<R: Rng>(rng: &mut R, cfg: &AugmentConfig, patch_size: usize) -> AffineParams {
    let t = cfg.translation_bounds(patch_size);
    AffineParams {
        angle_deg: uniform_closed(rng, cfg.angle_range),
        scale: uniform_closed(rng, cfg.scale_range),
        tx: uniform_closed(rng, t),
        ty: uniform_closed(rng, t),
    }
}

#[inline]
fn bilinear_or_zero(pixels: &[f32], p: usize, x: f64, y: f64) -> f32 {
    if x < -1.0 || y < -1.0 || x > p as f64 || y > p as f64 {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let sample = |ix: i64, iy: i64| -> f64 {
        if ix < 0 || iy < 0 || ix >= p as i64 || iy >= p as i64 {
            0.0
        } else {
            pixels[ix as usize + p * iy as usize] as f64
        }
    };
    let (ix, iy) = (x0 as i64, y0 as i64);
    let top = sample(ix, iy) * (1.0 - fx) + sample(ix + 1, iy) * fx;
    let bot = sample(ix, iy + 1) * (1.0 - fx) + sample(ix + 1, iy + 1) * fx;
    (top * (1.0 - fy) + bot * fy) as f32
}

#[inline]
fn nearest_or_zero(pixels: &[f32], p: usize, x: f64, y: f64) -> f32 {
    let ix = x.round();
    let iy = y.round();
    if ix < 0.0 || iy < 0.0 || ix >= p as f64 || iy >= p as f64 {
        0.0
    } else {
        pixels[ix as usize + p * iy as usize]
    }
}

/// Warp an image and its mask by the same transform. The image samples
/// bilinearly, the mask nearest-neighbor so it stays binary; source
/// coordinates outside the patch read as 0.
pub fn apply_affine(
    image: &[f32],
    mask: &[f32],
    patch_size: usize,
    params: &AffineParams,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let p = patch_size;
    if image.len() != p * p || mask.len() != p * p {
        return Err(Error::DimensionMismatch);
    }
    let c = (p as f64 - 1.0) / 2.0;
    let theta = params.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_s = 1.0 / params.scale;

    let mut out_img = vec![0.0f32; p * p];
    let mut out_mask = vec![0.0f32; p * p];
    for qy in 0..p {
        for qx in 0..p {
            // invert T = Translate(t) . Translate(c) . Rot . Scale . Translate(-c)
            let dx = qx as f64 - params.tx - c;
            let dy = qy as f64 - params.ty - c;
            let rx = cos * dx + sin * dy;
            let ry = -sin * dx + cos * dy;
            let sx = rx * inv_s + c;
            let sy = ry * inv_s + c;
            let idx = qx + p * qy;
            out_img[idx] = bilinear_or_zero(image, p, sx, sy);
            out_mask[idx] = nearest_or_zero(mask, p, sx, sy);
        }
    }
    Ok((out_img, out_mask))
}

/// Build the Nx-augmented dataset: the originals (when configured),
/// followed by `level` transformed copies of each pair. Copy (i, j) is a
/// pure function of (cfg.seed, i, j).
pub fn augment_dataset(pairs: &[PatchPair], cfg: &AugmentConfig) -> Result<Vec<PatchPair>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(pairs.len() * (cfg.level + usize::from(cfg.include_original)));
    if cfg.include_original {
        out.extend(pairs.iter().cloned());
    }
    for (i, pair) in pairs.iter().enumerate() {
        let p = pair.image.size();
        if pair.mask.size() != p {
            return Err(Error::DimensionMismatch);
        }
        for j in 0..cfg.level {
            let mut rng = copy_rng(cfg.seed, i, j);
            let params = sample_params(&mut rng, cfg, p);
            let (img, msk) = apply_affine(&pair.image.pixels, &pair.mask.pixels, p, &params)?;
            out.push(PatchPair {
                image: Patch { pixels: img, ..pair.image.clone() },
                mask: Patch { pixels: msk, ..pair.mask.clone() },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_from(image: Vec<f32>, mask: Vec<f32>, p: usize) -> PatchPair {
        assert_eq!(image.len(), p * p);
        PatchPair {
            image: Patch { pixels: image, origin: (0, 0), slice_index: 0, volume_id: 0 },
            mask: Patch { pixels: mask, origin: (0, 0), slice_index: 0, volume_id: 0 },
        }
    }

    #[test]
    fn zero_width_ranges_give_identity_params() {
        let cfg = AugmentConfig {
            angle_range: (0.0, 0.0),
            scale_range: (1.0, 1.0),
            translation_range: (0.0, 0.0),
            ..Default::default()
        };
        let mut rng = copy_rng(1, 0, 0);
        let params = sample_params(&mut rng, &cfg, 128);
        assert_eq!(params, AffineParams::IDENTITY);
    }

    #[test]
    fn equal_seeds_give_equal_params() {
        let cfg = AugmentConfig::default();
        let a = sample_params(&mut copy_rng(42, 3, 1), &cfg, 128);
        let b = sample_params(&mut copy_rng(42, 3, 1), &cfg, 128);
        assert_eq!(a, b);
        let c = sample_params(&mut copy_rng(42, 3, 2), &cfg, 128);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_extremes_approach_range_edges() {
        // order-statistics sanity: over 1e5 draws the empirical min/max of
        // the angle land within 1 degree of each edge
        let cfg = AugmentConfig::default();
        let mut rng = copy_rng(7, 0, 0);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..100_000 {
            let p = sample_params(&mut rng, &cfg, 128);
            lo = lo.min(p.angle_deg);
            hi = hi.max(p.angle_deg);
        }
        assert!((-20.0..=-19.0).contains(&lo), "min angle {lo}");
        assert!((19.0..=20.0).contains(&hi), "max angle {hi}");
    }

    #[test]
    fn translation_bounds_scale_with_patch_size() {
        let cfg = AugmentConfig::default();
        assert_eq!(cfg.translation_bounds(128), (-50.0, 50.0));
        assert_eq!(cfg.translation_bounds(32), (-13.0, 13.0));
        assert_eq!(cfg.translation_bounds(16), (-6.0, 6.0));
    }

    #[test]
    fn identity_params_reproduce_inputs_exactly() {
        let p = 8;
        let image: Vec<f32> = (0..64).map(|i| i as f32 / 64.0).collect();
        let mask: Vec<f32> = (0..64).map(|i| ((i / 3) % 2) as f32).collect();
        let (img, msk) = apply_affine(&image, &mask, p, &AffineParams::IDENTITY).unwrap();
        assert_eq!(img, image);
        assert_eq!(msk, mask);
    }

    #[test]
    fn rotation_fixes_the_center_pixel() {
        let p = 9;
        let mut image = vec![0.0f32; 81];
        image[4 + 9 * 4] = 1.0;
        let mask = vec![0.0f32; 81];
        let params = AffineParams { angle_deg: 17.0, scale: 1.0, tx: 0.0, ty: 0.0 };
        let (img, _) = apply_affine(&image, &mask, p, &params).unwrap();
        assert!((img[4 + 9 * 4] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn integer_translation_shifts_columns() {
        let p = 16;
        let mut image = vec![0.0f32; 256];
        for y in 0..p {
            image[3 + p * y] = 1.0; // bright column at x=3
        }
        let mask = image.clone();
        let params = AffineParams { angle_deg: 0.0, scale: 1.0, tx: 10.0, ty: 0.0 };
        let (img, msk) = apply_affine(&image, &mask, p, &params).unwrap();
        // direct pixel-shift oracle
        for y in 0..p {
            for x in 0..p {
                let want = if x == 13 { 1.0 } else { 0.0 };
                assert_eq!(img[x + p * y], want, "image ({x},{y})");
                assert_eq!(msk[x + p * y], want, "mask ({x},{y})");
            }
        }
    }

    #[test]
    fn translation_moves_mask_centroid() {
        let p = 32;
        let mut mask = vec![0.0f32; p * p];
        for y in 12..20 {
            for x in 12..20 {
                mask[x + p * y] = 1.0;
            }
        }
        let image = mask.clone();
        let params = AffineParams { angle_deg: 0.0, scale: 1.0, tx: 5.0, ty: -3.0 };
        let (_, out) = apply_affine(&image, &mask, p, &params).unwrap();
        let centroid = |m: &[f32]| {
            let (mut cx, mut cy, mut n) = (0.0f64, 0.0f64, 0.0f64);
            for y in 0..p {
                for x in 0..p {
                    if m[x + p * y] == 1.0 {
                        cx += x as f64;
                        cy += y as f64;
                        n += 1.0;
                    }
                }
            }
            (cx / n, cy / n)
        };
        let (ax, ay) = centroid(&mask);
        let (bx, by) = centroid(&out);
        assert!((bx - ax - 5.0).abs() < 0.5, "dx = {}", bx - ax);
        assert!((by - ay + 3.0).abs() < 0.5, "dy = {}", by - ay);
    }

    #[test]
    fn dataset_counts_follow_level() {
        let p = 4;
        let pairs: Vec<PatchPair> = (0..9)
            .map(|i| pair_from(vec![i as f32; 16], vec![0.0; 16], p))
            .collect();
        let cfg = AugmentConfig { level: 5, ..Default::default() };
        assert_eq!(augment_dataset(&pairs, &cfg).unwrap().len(), 54);

        let one = vec![pair_from(vec![0.5; 16], vec![1.0; 16], p)];
        let cfg = AugmentConfig { level: 50, ..Default::default() };
        assert_eq!(augment_dataset(&one, &cfg).unwrap().len(), 51);

        let cfg = AugmentConfig { level: 5, include_original: false, ..Default::default() };
        assert_eq!(augment_dataset(&pairs, &cfg).unwrap().len(), 45);
    }

    #[test]
    fn dataset_is_deterministic() {
        let p = 8;
        let pairs: Vec<PatchPair> = (0..4)
            .map(|i| {
                pair_from(
                    (0..64).map(|k| ((k * (i + 3)) % 11) as f32 / 11.0).collect(),
                    (0..64).map(|k| ((k + i) % 2) as f32).collect(),
                    p,
                )
            })
            .collect();
        let cfg = AugmentConfig { level: 3, seed: 99, ..Default::default() };
        let a = augment_dataset(&pairs, &cfg).unwrap();
        let b = augment_dataset(&pairs, &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn masks_stay_binary_and_images_stay_bounded(
            seed in 0u64..500,
            angle in -20f64..20.0,
            scale in 0.8f64..1.2,
            tx in -6f64..6.0,
            ty in -6f64..6.0,
        ) {
            let p = 16;
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 40) as f32 / (1u64 << 24) as f32
            };
            let image: Vec<f32> = (0..p * p).map(|_| next()).collect();
            let mask: Vec<f32> = (0..p * p).map(|_| if next() > 0.5 { 1.0 } else { 0.0 }).collect();
            let hi = image.iter().cloned().fold(0.0f32, f32::max);
            let params = AffineParams { angle_deg: angle, scale, tx, ty };
            prop_assert!(params.linear_det() > 0.0);
            let (img, msk) = apply_affine(&image, &mask, p, &params).unwrap();
            for &v in &msk {
                prop_assert!(v == 0.0 || v == 1.0);
            }
            for &v in &img {
                prop_assert!(v >= 0.0 && v <= hi + 1e-6);
            }
        }
    }
}
