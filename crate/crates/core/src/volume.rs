//! 3D scalar volumes and binary mask volumes.
//!
//! Voxel data is stored x-fastest: index = x + nx*(y + ny*z).

use crate::error::{Error, Result};

/// A 3D scalar field with voxel spacing, the unit for scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub dims: (usize, usize, usize),
    /// Voxel spacing in mm, one per axis.
    pub spacing: (f32, f32, f32),
    pub data: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: (usize, usize, usize), spacing: (f32, f32, f32), data: Vec<f32>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidHeader("zero-sized dimension".into()));
        }
        if data.len() != nx * ny * nz {
            return Err(Error::DimensionMismatch);
        }
        Ok(Volume3D { dims, spacing, data })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        let (nx, ny, _) = self.dims;
        self.data[x + nx * (y + ny * z)]
    }

    /// Borrow one axial slice (fixed z) as a contiguous row-major image.
    pub fn axial_slice(&self, z: usize) -> &[f32] {
        let (nx, ny, _) = self.dims;
        let len = nx * ny;
        &self.data[z * len..(z + 1) * len]
    }
}

/// A binary segmentation sharing geometry with its paired `Volume3D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub dims: (usize, usize, usize),
    pub spacing: (f32, f32, f32),
    /// Values are exactly 0.0 or 1.0.
    pub data: Vec<f32>,
}

impl MaskVolume {
    pub fn new(dims: (usize, usize, usize), spacing: (f32, f32, f32), data: Vec<f32>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if data.len() != nx * ny * nz {
            return Err(Error::DimensionMismatch);
        }
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config("mask values must be 0 or 1".into()));
        }
        Ok(MaskVolume { dims, spacing, data })
    }

    /// Binarize an arbitrary volume at the given threshold (values > t become 1).
    pub fn from_volume(vol: &Volume3D, threshold: f32) -> Self {
        MaskVolume {
            dims: vol.dims,
            spacing: vol.spacing,
            data: vol.data.iter().map(|&v| if v > threshold { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.clone(),
        }
    }

    pub fn axial_slice(&self, z: usize) -> &[f32] {
        let (nx, ny, _) = self.dims;
        let len = nx * ny;
        &self.data[z * len..(z + 1) * len]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }
}
