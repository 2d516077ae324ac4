//! Sliding-window patch extraction and overlap-averaged stitching.

use crate::error::{Error, Result};

/// A square tile cut from an axial slice, with enough provenance to put
/// its prediction back where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// P*P pixels, row-major (index = x + P*y).
    pub pixels: Vec<f32>,
    pub origin: (usize, usize),
    pub slice_index: usize,
    pub volume_id: u32,
}

impl Patch {
    pub fn size(&self) -> usize {
        (self.pixels.len() as f64).sqrt() as usize
    }
}

/// An image patch and its mask patch, cut at the same location.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub image: Patch,
    pub mask: Patch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TilingConfig {
    pub patch_size: usize,
    pub stride: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig { patch_size: 128, stride: 64 }
    }
}

impl TilingConfig {
    pub fn validate(&self, dims: (usize, usize)) -> Result<()> {
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(Error::Config(format!(
                "stride {} must be in 1..=patch_size {}",
                self.stride, self.patch_size
            )));
        }
        if self.patch_size > dims.0 || self.patch_size > dims.1 {
            return Err(Error::PatchLargerThanSlice);
        }
        Ok(())
    }
}

/// Origins {0, S, 2S, ...}; when (dim - P) is not a stride multiple, one
/// final origin at dim - P keeps the far edge covered.
pub fn axis_origins(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut origins: Vec<usize> = (0..=(dim - patch)).step_by(stride).collect();
    if *origins.last().unwrap() != dim - patch {
        origins.push(dim - patch);
    }
    origins
}

/// Tile one slice into patches, row-major over (y origin, x origin).
/// Each patch copies its pixels out of the slice.
pub fn extract_patches(
    slice: &[f32],
    dims: (usize, usize),
    cfg: &TilingConfig,
    volume_id: u32,
    slice_index: usize,
) -> Result<Vec<Patch>> {
    cfg.validate(dims)?;
    let (nx, ny) = dims;
    debug_assert_eq!(slice.len(), nx * ny);
    let p = cfg.patch_size;
    let xs = axis_origins(nx, p, cfg.stride);
    let ys = axis_origins(ny, p, cfg.stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y0 in &ys {
        for &x0 in &xs {
            let mut pixels = Vec::with_capacity(p * p);
            for row in 0..p {
                let start = x0 + nx * (y0 + row);
                pixels.extend_from_slice(&slice[start..start + p]);
            }
            out.push(Patch { pixels, origin: (x0, y0), slice_index, volume_id });
        }
    }
    Ok(out)
}

/// Reassemble per-patch values into a slice; overlapping pixels take the
/// arithmetic mean of every covering patch (sum then divide, accumulation
/// order fixed by patch order).
pub fn stitch(patches: &[Patch], dims: (usize, usize)) -> Result<Vec<f32>> {
    let (nx, ny) = dims;
    let mut sum = vec![0.0f64; nx * ny];
    let mut count = vec![0u32; nx * ny];
    for patch in patches {
        let p = patch.size();
        let (x0, y0) = patch.origin;
        if x0 + p > nx || y0 + p > ny {
            return Err(Error::PatchOutOfBounds);
        }
        for row in 0..p {
            let base = x0 + nx * (y0 + row);
            for col in 0..p {
                sum[base + col] += patch.pixels[col + p * row] as f64;
                count[base + col] += 1;
            }
        }
    }
    for (i, &c) in count.iter().enumerate() {
        if c == 0 {
            return Err(Error::UncoveredPixel { x: i % nx, y: i / nx });
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (s / c as f64) as f32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(p: usize, s: usize) -> TilingConfig {
        TilingConfig { patch_size: p, stride: s }
    }

    #[test]
    fn default_tiling_gives_nine_patches() {
        let slice = vec![0.0f32; 256 * 256];
        let ps = extract_patches(&slice, (256, 256), &cfg(128, 64), 0, 0).unwrap();
        assert_eq!(ps.len(), 9);
        assert_eq!(axis_origins(256, 128, 64), vec![0, 64, 128]);
    }

    #[test]
    fn full_slice_patch_is_single() {
        let slice: Vec<f32> = (0..16).map(|i| i as f32).collect();
        let ps = extract_patches(&slice, (4, 4), &cfg(4, 2), 7, 3).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].origin, (0, 0));
        assert_eq!(ps[0].pixels, slice);
        assert_eq!(ps[0].volume_id, 7);
        assert_eq!(ps[0].slice_index, 3);
    }

    #[test]
    fn non_aligned_dims_clamp_final_origin() {
        assert_eq!(axis_origins(200, 128, 64), vec![0, 64, 72]);
        let slice = vec![0.0f32; 200 * 200];
        let ps = extract_patches(&slice, (200, 200), &cfg(128, 64), 0, 0).unwrap();
        assert_eq!(ps.len(), 9);
    }

    #[test]
    fn oversize_patch_rejected() {
        let slice = vec![0.0f32; 16];
        assert!(matches!(
            extract_patches(&slice, (4, 4), &cfg(8, 4), 0, 0),
            Err(Error::PatchLargerThanSlice)
        ));
    }

    #[test]
    fn row_major_patch_ordering() {
        let slice = vec![0.0f32; 6 * 6];
        let ps = extract_patches(&slice, (6, 6), &cfg(4, 2), 0, 0).unwrap();
        let origins: Vec<_> = ps.iter().map(|p| p.origin).collect();
        assert_eq!(origins, vec![(0, 0), (2, 0), (0, 2), (2, 2)]);
    }

    #[test]
    fn stitch_two_full_overlaps_averages() {
        let a = Patch { pixels: vec![0.0; 4], origin: (0, 0), slice_index: 0, volume_id: 0 };
        let b = Patch { pixels: vec![1.0; 4], origin: (0, 0), slice_index: 0, volume_id: 0 };
        let out = stitch(&[a, b], (2, 2)).unwrap();
        assert_eq!(out, vec![0.5; 4]);
    }

    #[test]
    fn stitch_detects_holes() {
        let a = Patch { pixels: vec![1.0; 4], origin: (0, 0), slice_index: 0, volume_id: 0 };
        assert!(matches!(
            stitch(&[a], (4, 4)),
            Err(Error::UncoveredPixel { .. })
        ));
    }

    #[test]
    fn stitch_rejects_out_of_bounds() {
        let a = Patch { pixels: vec![1.0; 4], origin: (3, 3), slice_index: 0, volume_id: 0 };
        assert!(matches!(stitch(&[a], (4, 4)), Err(Error::PatchOutOfBounds)));
    }

    proptest! {
        #[test]
        fn extract_then_stitch_is_identity(
            nx in 4usize..20,
            ny in 4usize..20,
            p in 2usize..5,
            s in 1usize..4,
            seed in 0u64..1000,
        ) {
            prop_assume!(s <= p && p <= nx.min(ny));
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let slice: Vec<f32> = (0..nx * ny).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 40) as f32 / (1u64 << 24) as f32
            }).collect();
            let c = cfg(p, s);
            let patches = extract_patches(&slice, (nx, ny), &c, 0, 0).unwrap();
            // coverage + patch count formula
            let per_axis = |dim: usize| axis_origins(dim, p, s).len();
            prop_assert_eq!(patches.len(), per_axis(nx) * per_axis(ny));
            let out = stitch(&patches, (nx, ny)).unwrap();
            for (a, b) in out.iter().zip(&slice) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
