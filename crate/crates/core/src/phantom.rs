//! Synthetic spine-like phantoms: disc-shaped ellipsoids stacked along
//! the y axis over a noisy background, with exact ground-truth masks.

use crate::error::{Error, Result};
use crate::preprocess::intensity_match;
use crate::rng::{gauss, stream};
use crate::volume::{MaskVolume, Volume3D};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub dims: (usize, usize, usize),
    pub n_discs: usize,
    /// Semi-axis ranges per axis, voxels. y is the stacking axis, so its
    /// semi-axis doubles as half the disc thickness.
    pub semi_axis_x: (f64, f64),
    pub semi_axis_y: (f64, f64),
    pub semi_axis_z: (f64, f64),
    /// Gap between consecutive discs along y, voxels.
    pub gap_range: (f64, f64),
    pub background_mean: f64,
    pub foreground_mean: f64,
    pub noise_sigma: f64,
    /// Multiplicative per-volume intensity jitter, sampled once per volume.
    pub intensity_jitter: (f64, f64),
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: (64, 64, 12),
            n_discs: 5,
            semi_axis_x: (8.0, 14.0),
            semi_axis_y: (2.0, 3.5),
            semi_axis_z: (2.5, 4.5),
            gap_range: (2.0, 4.0),
            background_mean: 0.2,
            foreground_mean: 0.8,
            noise_sigma: 0.05,
            intensity_jitter: (0.9, 1.1),
            seed: 0,
        }
    }
}

/// Desk-scale variant matched to 16 px patches.
impl PhantomConfig {
    pub fn desk(seed: u64) -> Self {
        PhantomConfig {
            dims: (32, 32, 8),
            n_discs: 3,
            semi_axis_x: (5.0, 8.0),
            semi_axis_y: (1.5, 2.5),
            semi_axis_z: (1.5, 3.0),
            gap_range: (1.5, 3.0),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = self.dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::ConfigInfeasible("zero-sized dims".into()));
        }
        if 2.0 * self.semi_axis_x.1 >= nx as f64
            || 2.0 * self.semi_axis_y.1 >= ny as f64
            || 2.0 * self.semi_axis_z.1 >= nz as f64
        {
            return Err(Error::ConfigInfeasible("disc semi-axes exceed dims".into()));
        }
        Ok(())
    }
}

struct Disc {
    center: (f64, f64, f64),
    semi: (f64, f64, f64),
}

impl Disc {
    #[inline]
    fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let dx = (x - self.center.0) / self.semi.0;
        let dy = (y - self.center.1) / self.semi.1;
        let dz = (z - self.center.2) / self.semi.2;
        dx * dx + dy * dy + dz * dz <= 1.0
    }
}

fn sample_range<R: Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.gen_range(r.0..=r.1)
    }
}

/// Generate the phantom for one cohort index; pure in (cfg, volume_index).
pub fn generate_phantom(cfg: &PhantomConfig, volume_index: usize) -> Result<(Volume3D, MaskVolume)> {
    cfg.validate()?;
    let (nx, ny, nz) = cfg.dims;
    let mut rng = stream(cfg.seed, volume_index as u64, 0x9a);

    let mut discs = Vec::with_capacity(cfg.n_discs);
    let mut cursor = sample_range(&mut rng, cfg.gap_range);
    for _ in 0..cfg.n_discs {
        let sx = sample_range(&mut rng, cfg.semi_axis_x);
        let sy = sample_range(&mut rng, cfg.semi_axis_y);
        let sz = sample_range(&mut rng, cfg.semi_axis_z);
        let cy = cursor + sy;
        if cy + sy > (ny - 1) as f64 {
            return Err(Error::ConfigInfeasible(format!(
                "disc stack exceeds y extent {ny}"
            )));
        }
        let cx = sample_range(&mut rng, (sx, (nx - 1) as f64 - sx));
        let cz = sample_range(&mut rng, (sz, (nz - 1) as f64 - sz));
        discs.push(Disc { center: (cx, cy, cz), semi: (sx, sy, sz) });
        cursor = cy + sy + sample_range(&mut rng, cfg.gap_range);
    }

    let mut mask = vec![0.0f32; nx * ny * nz];
    for disc in &discs {
        // bounding box keeps the membership test cheap
        let (cx, cy, cz) = disc.center;
        let (sx, sy, sz) = disc.semi;
        let clamp = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi - 1);
        for z in clamp(cz - sz, nz)..=clamp(cz + sz, nz) {
            for y in clamp(cy - sy, ny)..=clamp(cy + sy, ny) {
                for x in clamp(cx - sx, nx)..=clamp(cx + sx, nx) {
                    if disc.contains(x as f64, y as f64, z as f64) {
                        mask[x + nx * (y + ny * z)] = 1.0;
                    }
                }
            }
        }
    }

    let jitter = sample_range(&mut rng, cfg.intensity_jitter);
    let mut image = Vec::with_capacity(nx * ny * nz);
    for &m in &mask {
        let mean = if m == 1.0 { cfg.foreground_mean } else { cfg.background_mean };
        image.push((jitter * (mean + cfg.noise_sigma * gauss(&mut rng))) as f32);
    }
    let raw = Volume3D::new((nx, ny, nz), (1.0, 1.0, 1.0), image)?;
    let vol = intensity_match(&raw)?;
    let mask = MaskVolume::new((nx, ny, nz), (1.0, 1.0, 1.0), mask)?;
    Ok((vol, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discs_give_empty_mask() {
        let cfg = PhantomConfig { n_discs: 0, ..PhantomConfig::desk(1) };
        let (vol, mask) = generate_phantom(&cfg, 0).unwrap();
        assert_eq!(mask.foreground_count(), 0);
        assert!(vol.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn mask_matches_ellipsoid_oracle() {
        // zero-width ranges pin the geometry exactly: cy = gap + sy = 5,
        // and sx = (nx-1)/2, sz = (nz-1)/2 force cx = 6, cz = 2
        let cfg = PhantomConfig {
            dims: (13, 24, 5),
            n_discs: 1,
            semi_axis_x: (6.0, 6.0),
            semi_axis_y: (2.0, 2.0),
            semi_axis_z: (2.0, 2.0),
            gap_range: (3.0, 3.0),
            ..Default::default()
        };
        let (_, mask) = generate_phantom(&cfg, 0).unwrap();
        let disc = Disc { center: (6.0, 5.0, 2.0), semi: (6.0, 2.0, 2.0) };
        let (nx, ny, nz) = cfg.dims;
        let mut fg = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let want = disc.contains(x as f64, y as f64, z as f64);
                    let got = mask.data[x + nx * (y + ny * z)] == 1.0;
                    assert_eq!(got, want, "voxel ({x},{y},{z})");
                    fg += got as usize;
                }
            }
        }
        assert!(fg > 0);
    }

    #[test]
    fn generation_is_deterministic_and_index_sensitive() {
        let cfg = PhantomConfig::desk(7);
        let (v1, m1) = generate_phantom(&cfg, 3).unwrap();
        let (v2, m2) = generate_phantom(&cfg, 3).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(m1, m2);
        let (v3, _) = generate_phantom(&cfg, 4).unwrap();
        assert_ne!(v1.data, v3.data);
    }

    #[test]
    fn default_config_sanity_band() {
        for idx in 0..5 {
            let (vol, mask) = generate_phantom(&PhantomConfig::default(), idx).unwrap();
            let frac = mask.foreground_count() as f64 / mask.data.len() as f64;
            assert!(frac > 0.0 && frac < 0.5, "foreground fraction {frac}");
            assert!(vol.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn infeasible_config_rejected() {
        let cfg = PhantomConfig {
            dims: (16, 16, 4),
            semi_axis_x: (20.0, 20.0),
            ..Default::default()
        };
        assert!(matches!(
            generate_phantom(&cfg, 0),
            Err(Error::ConfigInfeasible(_))
        ));
    }
}
