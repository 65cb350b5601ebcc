//! Sparse latent file.
//!
//! Layout (little-endian): `b"SLAT"`, version `u8`, `N: u16`, `C: u16`,
//! `L: u32`, then `L` position triples of `u16`, then `L × C` `f32` values.

use super::{Result, SparseLatent, VoxelError};

pub const MAGIC: &[u8; 4] = b"SLAT";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 2 + 2 + 4;

pub fn encode(z: &SparseLatent) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + z.len() * 6 + z.features().len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&z.resolution().to_le_bytes());
    out.extend_from_slice(&z.channels().to_le_bytes());
    out.extend_from_slice(&(z.len() as u32).to_le_bytes());
    for p in z.positions() {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in z.features() {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SparseLatent> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(VoxelError::Format("missing SLAT header".into()));
    }
    if bytes[4] != VERSION {
        return Err(VoxelError::Format(format!("unsupported SLAT version {}", bytes[4])));
    }
    let n = u16::from_le_bytes([bytes[5], bytes[6]]);
    let c = u16::from_le_bytes([bytes[7], bytes[8]]);
    let l = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected = l
        .checked_mul(6 + 4 * c as usize)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| VoxelError::Format("voxel count overflows".into()))?;
    if bytes.len() != expected {
        return Err(VoxelError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut o = HEADER_LEN;
    let mut positions = Vec::with_capacity(l);
    for _ in 0..l {
        let mut p = [0u16; 3];
        for v in &mut p {
            *v = u16::from_le_bytes([bytes[o], bytes[o + 1]]);
            o += 2;
        }
        positions.push(p);
    }
    let features = bytes[o..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    SparseLatent::new(n, c, positions, features)
}
