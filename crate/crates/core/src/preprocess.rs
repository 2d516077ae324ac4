//! In-plane resampling and linear intensity matching to a [0,1] range.

use crate::error::{Error, Result};
use crate::volume::Volume3D;

/// Resample every axial slice to `target` via bilinear interpolation.
///
/// Coordinates are normalized corner-to-corner, so a same-size target is
/// the identity. Voxel spacing rescales by nx/tx and ny/ty; nz is untouched.
pub fn resample_axial(vol: &Volume3D, target: (usize, usize)) -> Result<Volume3D> {
    let (nx, ny, nz) = vol.dims;
    let (tx, ty) = target;
    if nx < 2 || ny < 2 {
        return Err(Error::DegenerateVolume);
    }
    if tx < 2 || ty < 2 {
        return Err(Error::Config(format!("resample target {tx}x{ty} below 2x2")));
    }

    let x_step = (nx - 1) as f64 / (tx - 1) as f64;
    let y_step = (ny - 1) as f64 / (ty - 1) as f64;
    let mut data = Vec::with_capacity(tx * ty * nz);
    for z in 0..nz {
        let slice = vol.axial_slice(z);
        for j in 0..ty {
            let sy = j as f64 * y_step;
            let y0 = (sy.floor() as usize).min(ny - 2);
            let fy = sy - y0 as f64;
            for i in 0..tx {
                let sx = i as f64 * x_step;
                let x0 = (sx.floor() as usize).min(nx - 2);
                let fx = sx - x0 as f64;
                let v00 = slice[x0 + nx * y0] as f64;
                let v10 = slice[x0 + 1 + nx * y0] as f64;
                let v01 = slice[x0 + nx * (y0 + 1)] as f64;
                let v11 = slice[x0 + 1 + nx * (y0 + 1)] as f64;
                let top = v00 + fx * (v10 - v00);
                let bot = v01 + fx * (v11 - v01);
                data.push((top + fy * (bot - top)) as f32);
            }
        }
    }
    let spacing = (
        vol.spacing.0 * nx as f32 / tx as f32,
        vol.spacing.1 * ny as f32 / ty as f32,
        vol.spacing.2,
    );
    Volume3D::new((tx, ty, nz), spacing, data)
}

/// Affinely map the volume's intensity range onto [0,1].
pub fn intensity_match(vol: &Volume3D) -> Result<Volume3D> {
    rescale(vol, None)
}

/// Variant that clips the source range at the given percentiles (e.g.
/// 0.5/99.5) before mapping, then clamps into [0,1].
pub fn intensity_match_clipped(vol: &Volume3D, lo_pct: f64, hi_pct: f64) -> Result<Volume3D> {
    rescale(vol, Some((lo_pct, hi_pct)))
}

fn rescale(vol: &Volume3D, clip: Option<(f64, f64)>) -> Result<Volume3D> {
    let (lo, hi) = match clip {
        None => {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for &v in &vol.data {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        }
        Some((lo_pct, hi_pct)) => {
            let mut sorted = vol.data.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (percentile(&sorted, lo_pct), percentile(&sorted, hi_pct))
        }
    };
    if hi <= lo {
        return Err(Error::DegenerateIntensityRange);
    }
    let range = (hi - lo) as f64;
    let data = vol
        .data
        .iter()
        .map(|&v| (((v - lo) as f64 / range).clamp(0.0, 1.0)) as f32)
        .collect();
    Volume3D::new(vol.dims, vol.spacing, data)
}

fn percentile(sorted: &[f32], pct: f64) -> f32 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    (sorted[lo] as f64 + frac * (sorted[hi] as f64 - sorted[lo] as f64)) as f32
}
