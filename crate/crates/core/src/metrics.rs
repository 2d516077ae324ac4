//! Hard Dice overlap between binary segmentations.

use crate::error::{Error, Result};
use crate::volume::MaskVolume;

/// 2|A∩B| / (|A| + |B|). Two empty masks score 1.0; empty against
/// non-empty scores 0.0.
pub fn dice_score(a: &MaskVolume, b: &MaskVolume) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch);
    }
    let mut inter = 0u64;
    let mut size_a = 0u64;
    let mut size_b = 0u64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        size_a += (x == 1.0) as u64;
        size_b += (y == 1.0) as u64;
        inter += (x == 1.0 && y == 1.0) as u64;
    }
    if size_a + size_b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (size_a + size_b) as f64)
}

/// Arithmetic mean of per-volume Dice over paired cohorts.
pub fn mean_dice(pred: &[MaskVolume], truth: &[MaskVolume]) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::EmptyCohort);
    }
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch);
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        sum += dice_score(p, t)?;
    }
    Ok(sum / pred.len() as f64)
}

/// Per-slice variant: Dice per axial slice, averaged over slices.
pub fn mean_dice_per_slice(pred: &MaskVolume, truth: &MaskVolume) -> Result<f64> {
    if pred.dims != truth.dims {
        return Err(Error::DimensionMismatch);
    }
    let nz = pred.dims.2;
    let mut sum = 0.0;
    for z in 0..nz {
        let (pa, ta) = (pred.axial_slice(z), truth.axial_slice(z));
        let inter = pa.iter().zip(ta).filter(|(&a, &b)| a == 1.0 && b == 1.0).count();
        let total = pa.iter().filter(|&&v| v == 1.0).count() + ta.iter().filter(|&&v| v == 1.0).count();
        sum += if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 };
    }
    Ok(sum / nz as f64)
}
