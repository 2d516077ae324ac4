//! Flat binary container for (image, mask) patch pairs.
//!
//! Layout, little-endian throughout:
//!   magic  b"AUGPATCH"   8 bytes
//!   version u32          currently 1
//!   patch_size u32       P
//!   count u32            number of pairs
//!   then per pair:
//!     volume_id u32, slice_index u32, origin_x u32, origin_y u32,
//!     image  P*P f32,
//!     mask   P*P u8 (values 0/1)

use crate::error::{Error, Result};
use crate::patch::{Patch, PatchPair};

const MAGIC: &[u8; 8] = b"AUGPATCH";
const VERSION: u32 = 1;

pub fn write_pairs(pairs: &[PatchPair]) -> Result<Vec<u8>> {
    let p = match pairs.first() {
        Some(pair) => pair.image.size(),
        None => 0,
    };
    for pair in pairs {
        if pair.image.size() != p || pair.mask.size() != p {
            return Err(Error::DimensionMismatch);
        }
    }
    let mut out = Vec::with_capacity(20 + pairs.len() * (16 + p * p * 5));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p as u32).to_le_bytes());
    out.extend_from_slice(&(pairs.len() as u32).to_le_bytes());
    for pair in pairs {
        out.extend_from_slice(&pair.image.volume_id.to_le_bytes());
        out.extend_from_slice(&(pair.image.slice_index as u32).to_le_bytes());
        out.extend_from_slice(&(pair.image.origin.0 as u32).to_le_bytes());
        out.extend_from_slice(&(pair.image.origin.1 as u32).to_le_bytes());
        for &v in &pair.image.pixels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(pair.mask.pixels.iter().map(|&v| v as u8));
    }
    Ok(out)
}

pub fn read_pairs(bytes: &[u8]) -> Result<Vec<PatchPair>> {
    if bytes.len() < 20 {
        return Err(Error::BadContainer("shorter than header".into()));
    }
    if &bytes[0..8] != MAGIC {
        return Err(Error::BadContainer("bad magic".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::BadContainer(format!("unknown version {version}")));
    }
    let p = u32_at(12) as usize;
    let count = u32_at(16) as usize;
    let pair_bytes = 16 + p * p * 4 + p * p;
    let expected = 20 + count * pair_bytes;
    if bytes.len() != expected {
        return Err(Error::BadContainer(format!(
            "expected {expected} bytes for {count} pairs, got {}",
            bytes.len()
        )));
    }
    let mut pairs = Vec::with_capacity(count);
    let mut off = 20;
    for _ in 0..count {
        let volume_id = u32_at(off);
        let slice_index = u32_at(off + 4) as usize;
        let origin = (u32_at(off + 8) as usize, u32_at(off + 12) as usize);
        off += 16;
        let mut image = Vec::with_capacity(p * p);
        for _ in 0..p * p {
            image.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
            off += 4;
        }
        let mut mask = Vec::with_capacity(p * p);
        for _ in 0..p * p {
            let b = bytes[off];
            if b > 1 {
                return Err(Error::BadContainer(format!("mask byte {b} not 0/1")));
            }
            mask.push(b as f32);
            off += 1;
        }
        pairs.push(PatchPair {
            image: Patch { pixels: image, origin, slice_index, volume_id },
            mask: Patch { pixels: mask, origin, slice_index, volume_id },
        });
    }
    Ok(pairs)
}
