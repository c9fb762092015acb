//! TSDF volume files.
//!
//! Working format (`.tsdf`, used to chain `fuse` into `extract`): magic
//! `TSDV`, dims as three u32 LE, voxel_size/truncation/origin as f64 LE,
//! then the tsdf and weight arrays as f32 LE, x-fastest.
//!
//! Debug dump: one ASCII header line `nx ny nz voxel_size ox oy oz` followed
//! by the raw little-endian f32 tsdf array, x-fastest.

use std::io::Write;
use std::path::Path;

use mvrecon_core::{Real, TsdfVolumeF64};
use nalgebra::Vector3;

use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"TSDV";

pub fn write_volume(path: &Path, volume: &TsdfVolumeF64) -> CliResult<()> {
    let io_err = |e: std::io::Error| CliError::input_at(path, e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    for d in volume.dims() {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&volume.voxel_size().to_le_bytes()).map_err(io_err)?;
    w.write_all(&volume.truncation().to_le_bytes()).map_err(io_err)?;
    let origin = volume.origin();
    for c in [origin.x, origin.y, origin.z] {
        w.write_all(&c.to_le_bytes()).map_err(io_err)?;
    }
    for &v in volume.tsdf_values() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
    }
    for &v in volume.weights() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_volume(path: &Path) -> CliResult<TsdfVolumeF64> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input_at(path, e))?;
    let bad = |msg: &str| CliError::input_at(path, msg.to_string());
    if bytes.len() < 4 + 12 + 5 * 8 || &bytes[0..4] != MAGIC {
        return Err(bad("missing TSDV header"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let dims = [u32_at(4) as usize, u32_at(8) as usize, u32_at(12) as usize];
    let voxel_size = f64_at(16);
    let truncation = f64_at(24);
    let origin = Vector3::new(f64_at(32), f64_at(40), f64_at(48));
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| bad("dims overflow"))?;
    let expected = 56 + count * 8;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {} bytes for {:?}, got {}",
            expected,
            dims,
            bytes.len()
        )));
    }
    let f32_slice = |start: usize| -> Vec<f64> {
        bytes[start..start + count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    let tsdf = f32_slice(56);
    let weight = f32_slice(56 + count * 4);

    let mut volume = TsdfVolumeF64::new(origin, voxel_size, dims, truncation)
        .map_err(|e| CliError::input_at(path, e))?;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let idx = (z * dims[1] + y) * dims[0] + x;
                volume.set_voxel(x, y, z, tsdf[idx], weight[idx]);
            }
        }
    }
    Ok(volume)
}

/// Spec'd debug dump: text header then raw f32 tsdf values.
pub fn write_volume_dump(path: &Path, volume: &TsdfVolumeF64) -> CliResult<()> {
    let io_err = |e: std::io::Error| CliError::input_at(path, e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    let [nx, ny, nz] = volume.dims();
    let origin = volume.origin();
    let header = format!(
        "{} {} {} {} {} {} {}\n",
        nx,
        ny,
        nz,
        volume.voxel_size(),
        origin.x,
        origin.y,
        origin.z
    );
    w.write_all(header.as_bytes()).map_err(io_err)?;
    for &v in volume.tsdf_values() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
