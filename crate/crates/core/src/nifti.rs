//! Minimal single-file NIfTI-1 reader/writer.
//!
//! Supports the uncompressed ".nii" layout only: a 348-byte header, 4 pad
//! bytes, and raw voxel data at `vox_offset`. Datatypes are limited to
//! uint8 (2), int16 (4) and float32 (16). Both endiannesses parse; output
//! is always little-endian float32 (uint8 for binary masks).
//!
//! Orientation fields (qform/sform) are read past and written as zeros;
//! the pipeline addresses axial slices by index.

use crate::error::{Error, Result};
use crate::volume::{MaskVolume, Volume3D};

pub const HEADER_SIZE: usize = 348;
pub const DATA_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

/// The header fields this subset cares about.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
}

fn bitpix_for(datatype: i16) -> Option<i16> {
    match datatype {
        DT_UINT8 => Some(8),
        DT_INT16 => Some(16),
        DT_FLOAT32 => Some(32),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct Field<'a> {
    buf: &'a [u8],
    endian: Endian,
}

impl<'a> Field<'a> {
    fn i16_at(&self, off: usize) -> i16 {
        let b: [u8; 2] = self.buf[off..off + 2].try_into().unwrap();
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }
    fn f32_at(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.buf[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

impl NiftiHeader {
    /// Parse and validate the 348-byte header, detecting endianness from
    /// whether `sizeof_hdr` reads 348 natively or byte-swapped.
    pub fn parse(bytes: &[u8]) -> Result<(NiftiHeader, bool)> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::TruncatedData {
                expected: HEADER_SIZE,
                actual: bytes.len(),
            });
        }
        let le_probe = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let endian = if le_probe == 348 {
            Endian::Little
        } else if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 {
            Endian::Big
        } else {
            return Err(Error::InvalidHeader(format!(
                "sizeof_hdr is {le_probe}, expected 348 in either byte order"
            )));
        };
        let f = Field { buf: bytes, endian };

        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[344..348]);
        if &magic != MAGIC {
            return Err(Error::BadMagic);
        }

        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = f.i16_at(40 + 2 * i);
        }
        if !(1..=7).contains(&dim[0]) {
            return Err(Error::InvalidHeader(format!("dim[0] = {}", dim[0])));
        }
        for (i, &d) in dim.iter().enumerate().take(dim[0] as usize + 1).skip(1) {
            if d < 1 {
                return Err(Error::InvalidHeader(format!("dim[{i}] = {d}")));
            }
        }
        // Trailing dims beyond rank 3 must be trivial for a pure volume.
        for (i, &d) in dim.iter().enumerate().take(dim[0] as usize + 1).skip(4) {
            if d != 1 {
                return Err(Error::InvalidHeader(format!("dim[{i}] = {d}, only 3D supported")));
            }
        }

        let datatype = f.i16_at(70);
        let bitpix = f.i16_at(72);
        let expected_bitpix =
            bitpix_for(datatype).ok_or(Error::UnsupportedDatatype(datatype))?;
        if bitpix != expected_bitpix {
            return Err(Error::InvalidHeader(format!(
                "bitpix {bitpix} inconsistent with datatype {datatype}"
            )));
        }

        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = f.f32_at(76 + 4 * i);
        }

        let vox_offset = f.f32_at(108);
        if vox_offset < DATA_OFFSET as f32 {
            return Err(Error::InvalidHeader(format!(
                "vox_offset {vox_offset} < {DATA_OFFSET}"
            )));
        }

        let hdr = NiftiHeader {
            sizeof_hdr: 348,
            dim,
            datatype,
            bitpix,
            pixdim,
            vox_offset,
            scl_slope: f.f32_at(112),
            scl_inter: f.f32_at(116),
            magic,
        };
        Ok((hdr, endian == Endian::Little))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let nx = self.dim[1] as usize;
        let ny = if self.dim[0] >= 2 { self.dim[2] as usize } else { 1 };
        let nz = if self.dim[0] >= 3 { self.dim[3] as usize } else { 1 };
        (nx, ny, nz)
    }

    /// Serialize as a little-endian 348-byte header.
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        let mut out = [0u8; HEADER_SIZE];
        out[0..4].copy_from_slice(&348i32.to_le_bytes());
        for (i, &d) in self.dim.iter().enumerate() {
            out[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        out[70..72].copy_from_slice(&self.datatype.to_le_bytes());
        out[72..74].copy_from_slice(&self.bitpix.to_le_bytes());
        for (i, &p) in self.pixdim.iter().enumerate() {
            out[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
        }
        out[108..112].copy_from_slice(&self.vox_offset.to_le_bytes());
        out[112..116].copy_from_slice(&self.scl_slope.to_le_bytes());
        out[116..120].copy_from_slice(&self.scl_inter.to_le_bytes());
        out[344..348].copy_from_slice(&self.magic[..]);
        out
    }
}

fn decode_samples(hdr: &NiftiHeader, bytes: &[u8], little: bool) -> Result<Vec<f32>> {
    let (nx, ny, nz) = hdr.dims();
    let n = nx * ny * nz;
    let bytes_per = (hdr.bitpix / 8) as usize;
    let offset = hdr.vox_offset as usize;
    let expected = offset + n * bytes_per;
    if bytes.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            actual: bytes.len(),
        });
    }
    let raw = &bytes[offset..expected];
    let slope = hdr.scl_slope;
    let inter = hdr.scl_inter;
    let scale = |v: f32| if slope != 0.0 { v * slope + inter } else { v };
    let data = match hdr.datatype {
        DT_UINT8 => raw.iter().map(|&b| scale(b as f32)).collect(),
        DT_INT16 => raw
            .chunks_exact(2)
            .map(|c| {
                let b: [u8; 2] = c.try_into().unwrap();
                let v = if little {
                    i16::from_le_bytes(b)
                } else {
                    i16::from_be_bytes(b)
                };
                scale(v as f32)
            })
            .collect(),
        DT_FLOAT32 => raw
            .chunks_exact(4)
            .map(|c| {
                let b: [u8; 4] = c.try_into().unwrap();
                let v = if little {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                scale(v)
            })
            .collect(),
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    Ok(data)
}

/// Parse a single-file NIfTI-1 byte stream into a volume.
pub fn read_nifti(bytes: &[u8]) -> Result<Volume3D> {
    let (hdr, little) = NiftiHeader::parse(bytes)?;
    let data = decode_samples(&hdr, bytes, little)?;
    let (nx, ny, nz) = hdr.dims();
    Volume3D::new((nx, ny, nz), (hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]), data)
}

/// Read a file as a binary mask, binarizing at 0.5.
pub fn read_nifti_mask(bytes: &[u8]) -> Result<MaskVolume> {
    let vol = read_nifti(bytes)?;
    Ok(MaskVolume::from_volume(&vol, 0.5))
}

fn header_for(dims: (usize, usize, usize), spacing: (f32, f32, f32), datatype: i16) -> NiftiHeader {
    let mut dim = [1i16; 8];
    dim[0] = 3;
    dim[1] = dims.0 as i16;
    dim[2] = dims.1 as i16;
    dim[3] = dims.2 as i16;
    let mut pixdim = [0f32; 8];
    pixdim[1] = spacing.0;
    pixdim[2] = spacing.1;
    pixdim[3] = spacing.2;
    NiftiHeader {
        sizeof_hdr: 348,
        dim,
        datatype,
        bitpix: bitpix_for(datatype).unwrap(),
        pixdim,
        vox_offset: DATA_OFFSET as f32,
        scl_slope: 0.0,
        scl_inter: 0.0,
        magic: *MAGIC,
    }
}

/// Emit a little-endian float32 single-file NIfTI-1 stream.
pub fn write_nifti(vol: &Volume3D) -> Vec<u8> {
    let hdr = header_for(vol.dims, vol.spacing, DT_FLOAT32);
    let mut out = Vec::with_capacity(DATA_OFFSET + vol.data.len() * 4);
    out.extend_from_slice(&hdr.to_bytes());
    out.extend_from_slice(&[0u8; 4]); // extension pad
    for &v in &vol.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Emit a mask as uint8 (all values are {0,1} by construction).
pub fn write_nifti_mask(mask: &MaskVolume) -> Vec<u8> {
    let hdr = header_for(mask.dims, mask.spacing, DT_UINT8);
    let mut out = Vec::with_capacity(DATA_OFFSET + mask.data.len());
    out.extend_from_slice(&hdr.to_bytes());
    out.extend_from_slice(&[0u8; 4]);
    out.extend(mask.data.iter().map(|&v| v as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_volume() -> Volume3D {
        Volume3D::new(
            (2, 2, 1),
            (1.0, 1.5, 2.0),
            vec![0.25, -1.0, 3.5, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_float32() {
        let v = sample_volume();
        let bytes = write_nifti(&v);
        assert_eq!(bytes.len(), DATA_OFFSET + 16);
        let back = read_nifti(&bytes).unwrap();
        assert_eq!(back, v);
        // byte payload is exact
        assert_eq!(&bytes[DATA_OFFSET..DATA_OFFSET + 4], &0.25f32.to_le_bytes());
    }

    #[test]
    fn single_voxel_layout() {
        let v = Volume3D::new((1, 1, 1), (1.0, 1.0, 1.0), vec![0.5]).unwrap();
        let bytes = write_nifti(&v);
        assert_eq!(bytes.len(), 356);
        assert_eq!(&bytes[352..356], &0.5f32.to_le_bytes());
    }

    #[test]
    fn slope_intercept_applied() {
        // 2x2x1 int16, raw {0,1,2,3}, slope 2, inter 1 -> {1,3,5,7}
        let mut hdr = header_for((2, 2, 1), (1.0, 1.0, 1.0), DT_INT16);
        hdr.scl_slope = 2.0;
        hdr.scl_inter = 1.0;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&hdr.to_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        for raw in 0i16..4 {
            bytes.extend_from_slice(&raw.to_le_bytes());
        }
        let v = read_nifti(&bytes).unwrap();
        assert_eq!(v.data, vec![1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn zero_slope_means_raw() {
        let v = sample_volume();
        let bytes = write_nifti(&v);
        let (hdr, _) = NiftiHeader::parse(&bytes).unwrap();
        assert_eq!(hdr.scl_slope, 0.0);
        assert_eq!(read_nifti(&bytes).unwrap().data, v.data);
    }

    /// Byte-swap a little-endian stream into its big-endian twin.
    pub(crate) fn byte_swap_stream(bytes: &[u8]) -> Vec<u8> {
        let mut out = bytes.to_vec();
        let swap4 = |out: &mut [u8], off: usize| out[off..off + 4].reverse();
        let swap2 = |out: &mut [u8], off: usize| out[off..off + 2].reverse();
        swap4(&mut out, 0);
        for i in 0..8 {
            swap2(&mut out, 40 + 2 * i);
        }
        swap2(&mut out, 70);
        swap2(&mut out, 72);
        for i in 0..8 {
            swap4(&mut out, 76 + 4 * i);
        }
        swap4(&mut out, 108);
        swap4(&mut out, 112);
        swap4(&mut out, 116);
        // float32 payload
        let mut off = DATA_OFFSET;
        while off + 4 <= out.len() {
            swap4(&mut out, off);
            off += 4;
        }
        out
    }

    #[test]
    fn big_endian_parses_to_same_volume() {
        let v = sample_volume();
        let le = write_nifti(&v);
        let be = byte_swap_stream(&le);
        assert_ne!(le, be);
        assert_eq!(read_nifti(&be).unwrap(), v);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = write_nifti(&sample_volume());
        bytes[344] = b'x';
        assert!(matches!(read_nifti(&bytes), Err(Error::BadMagic)));
    }

    #[test]
    fn unsupported_datatype_rejected() {
        let mut bytes = write_nifti(&sample_volume());
        bytes[70..72].copy_from_slice(&8i16.to_le_bytes()); // int32
        assert!(matches!(
            read_nifti(&bytes),
            Err(Error::UnsupportedDatatype(8))
        ));
    }

    #[test]
    fn truncated_data_rejected() {
        let bytes = write_nifti(&sample_volume());
        let cut = &bytes[..bytes.len() - 1];
        assert!(matches!(read_nifti(cut), Err(Error::TruncatedData { .. })));
    }

    #[test]
    fn bad_sizeof_hdr_rejected() {
        let mut bytes = write_nifti(&sample_volume());
        bytes[0..4].copy_from_slice(&349i32.to_le_bytes());
        assert!(matches!(read_nifti(&bytes), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn inconsistent_bitpix_rejected() {
        let mut bytes = write_nifti(&sample_volume());
        bytes[72..74].copy_from_slice(&16i16.to_le_bytes());
        assert!(matches!(read_nifti(&bytes), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn low_vox_offset_rejected() {
        let mut bytes = write_nifti(&sample_volume());
        bytes[108..112].copy_from_slice(&348f32.to_le_bytes());
        assert!(matches!(read_nifti(&bytes), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn mask_round_trip_is_exact() {
        let m = MaskVolume::new((2, 2, 2), (1.0, 1.0, 1.0), vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let bytes = write_nifti_mask(&m);
        let (hdr, _) = NiftiHeader::parse(&bytes).unwrap();
        assert_eq!(hdr.datatype, DT_UINT8);
        let back = read_nifti_mask(&bytes).unwrap();
        assert_eq!(back.data, m.data);
    }
}
