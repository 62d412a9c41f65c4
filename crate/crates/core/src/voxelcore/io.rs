//! EXNV v1 volume files.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `EXNV`                            |
//! | 4      | 1    | version, `1`                            |
//! | 5      | 1    | dtype: `1` = f32 intensity, `2` = u8 label |
//! | 6      | 2    | reserved, zero                          |
//! | 8      | 12   | dims, 3 × u32 (z, y, x)                 |
//! | 20     | 24   | spacing in mm, 3 × f64                  |
//! | 44     | 24   | origin in mm, 3 × f64                   |
//! | 68     | ...  | voxels, z outermost, x innermost        |

use std::fs;
use std::path::Path;

use super::volume::{Geometry, Volume, VoxelData};
use super::VolumeError;

pub const MAGIC: &[u8; 4] = b"EXNV";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const DTYPE_U8: u8 = 2;
pub const HEADER_LEN: usize = 68;

pub fn encode_volume(vol: &Volume) -> Vec<u8> {
    let g = vol.geometry();
    let (dtype, elem) = match vol.data() {
        VoxelData::Intensity(_) => (DTYPE_F32, 4),
        VoxelData::Label(_) => (DTYPE_U8, 1),
    };
    let mut buf = Vec::with_capacity(HEADER_LEN + g.len() * elem);
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(dtype);
    buf.extend_from_slice(&[0, 0]);
    for d in g.dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in g.spacing {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for o in g.origin {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    match vol.data() {
        VoxelData::Intensity(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        VoxelData::Label(v) => buf.extend_from_slice(v),
    }
    buf
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume, VolumeError> {
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::MalformedHeader(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(VolumeError::MalformedHeader("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(VolumeError::MalformedHeader(format!("unsupported version {}", bytes[4])));
    }
    let dtype = bytes[5];
    let elem = match dtype {
        DTYPE_F32 => 4,
        DTYPE_U8 => 1,
        other => return Err(VolumeError::UnknownDtype(other)),
    };
    if bytes[6..8] != [0, 0] {
        return Err(VolumeError::MalformedHeader("reserved bytes not zero".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dims = [u32_at(8), u32_at(12), u32_at(16)];
    let spacing = [f64_at(20), f64_at(28), f64_at(36)];
    let origin = [f64_at(44), f64_at(52), f64_at(60)];
    let geometry = Geometry::new(dims, spacing, origin)
        .map_err(|e| VolumeError::MalformedHeader(e.to_string()))?;

    let payload = &bytes[HEADER_LEN..];
    let expected = geometry
        .dims
        .iter()
        .try_fold(elem, |acc: usize, &d| acc.checked_mul(d))
        .ok_or_else(|| VolumeError::MalformedHeader("dims overflow".into()))?;
    if payload.len() != expected {
        return Err(VolumeError::TruncatedPayload { expected, actual: payload.len() });
    }
    let data = match dtype {
        DTYPE_F32 => VoxelData::Intensity(
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
        ),
        _ => VoxelData::Label(payload.to_vec()),
    };
    Volume::new(geometry, data)
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    fs::write(path, encode_volume(vol))?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    decode_volume(&fs::read(path)?)
}
