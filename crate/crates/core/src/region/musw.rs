//! Sparse skinning-weight file.
//!
//! Layout (little-endian): `b"MUSW"`, version `u8`, `Q: u32`, `J: u32`,
//! `count: u32`, then `count` triplets `(vertex: u32, joint: u32, weight: f32)`
//! strictly sorted by `(vertex, joint)`. Zero weights are not stored.

use super::{RegionError, SkinningMatrix};

pub const MAGIC: &[u8; 4] = b"MUSW";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 * 3;
const TRIPLET_LEN: usize = 12;

pub fn encode(w: &SkinningMatrix) -> Vec<u8> {
    let entries: Vec<(u32, u32, f32)> = (0..w.vertex_count())
        .flat_map(|i| {
            w.row(i).iter().enumerate().filter_map(move |(j, &x)| {
                let x = x as f32;
                (x != 0.0).then_some((i as u32, j as u32, x))
            })
        })
        .collect();
    let mut out = Vec::with_capacity(HEADER_LEN + entries.len() * TRIPLET_LEN);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(w.vertex_count() as u32).to_le_bytes());
    out.extend_from_slice(&(w.joint_count() as u32).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (v, j, x) in entries {
        out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(&j.to_le_bytes());
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SkinningMatrix, RegionError> {
    let bad = |m: &str| RegionError::Format(m.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing MUSW header"));
    }
    if bytes[4] != VERSION {
        return Err(RegionError::Format(format!("unsupported MUSW version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (q, j, count) = (u32_at(5) as usize, u32_at(9) as usize, u32_at(13) as usize);
    let expected = count
        .checked_mul(TRIPLET_LEN)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("entry count overflows"))?;
    if bytes.len() != expected {
        return Err(RegionError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut dense = vec![0.0f64; q.checked_mul(j).ok_or_else(|| bad("matrix too large"))?];
    let mut last: Option<(usize, usize)> = None;
    for k in 0..count {
        let o = HEADER_LEN + k * TRIPLET_LEN;
        let (v, jt) = (u32_at(o) as usize, u32_at(o + 4) as usize);
        let x = f32::from_le_bytes(bytes[o + 8..o + 12].try_into().unwrap());
        if v >= q || jt >= j {
            return Err(RegionError::Format(format!("triplet {k} out of range")));
        }
        if last.is_some_and(|l| l >= (v, jt)) {
            return Err(RegionError::Format(format!("triplet {k} not strictly sorted")));
        }
        last = Some((v, jt));
        dense[v * j + jt] = x as f64;
    }
    SkinningMatrix::from_dense(q, j, dense, None)
}
