//! Depth map files. Two formats, chosen by extension:
//!
//! - `.raw`: 16-byte header (`DPTH`, width u32 LE, height u32 LE, 4 reserved
//!   zero bytes) followed by row-major little-endian f32 meters.
//! - `.png`: 16-bit grayscale millimeters, value 0 = invalid (ScanNet/TUM
//!   convention).

use std::path::Path;

use image::{ImageBuffer, Luma};
use mvrecon_core::DepthMapF64;

use crate::error::{CliError, CliResult};

const RAW_MAGIC: &[u8; 4] = b"DPTH";
const RAW_HEADER_LEN: usize = 16;

pub fn write_depth(path: &Path, depth: &DepthMapF64) -> CliResult<()> {
    match extension(path)? {
        Format::Raw => write_raw(path, depth),
        Format::Png => write_png(path, depth),
    }
}

pub fn read_depth(path: &Path) -> CliResult<DepthMapF64> {
    match extension(path)? {
        Format::Raw => read_raw(path),
        Format::Png => read_png(path),
    }
}

enum Format {
    Raw,
    Png,
}

fn extension(path: &Path) -> CliResult<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") => Ok(Format::Raw),
        Some("png") => Ok(Format::Png),
        other => Err(CliError::input_at(
            path,
            format!("unsupported depth extension {other:?} (expected .raw or .png)"),
        )),
    }
}

fn write_raw(path: &Path, depth: &DepthMapF64) -> CliResult<()> {
    let mut bytes = Vec::with_capacity(RAW_HEADER_LEN + depth.values().len() * 4);
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&depth.width().to_le_bytes());
    bytes.extend_from_slice(&depth.height().to_le_bytes());
    bytes.extend_from_slice(&[0u8; 4]);
    for &v in depth.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| CliError::input_at(path, e))
}

fn read_raw(path: &Path) -> CliResult<DepthMapF64> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input_at(path, e))?;
    if bytes.len() < RAW_HEADER_LEN || &bytes[0..4] != RAW_MAGIC {
        return Err(CliError::input_at(path, "missing DPTH header"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = RAW_HEADER_LEN + width as usize * height as usize * 4;
    if bytes.len() != expected {
        return Err(CliError::input_at(
            path,
            format!("expected {} bytes for {}x{}, got {}", expected, width, height, bytes.len()),
        ));
    }
    let values = bytes[RAW_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DepthMapF64::new(width, height, values).map_err(|e| CliError::input_at(path, e))
}

fn write_png(path: &Path, depth: &DepthMapF64) -> CliResult<()> {
    let image: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(depth.width(), depth.height(), |x, y| {
            let d = depth.get(x, y);
            let mm = if d > 0.0 {
                (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
            } else {
                0
            };
            Luma([mm])
        });
    image.save(path).map_err(|e| CliError::input_at(path, e))
}

fn read_png(path: &Path) -> CliResult<DepthMapF64> {
    let image = image::open(path)
        .map_err(|e| CliError::input_at(path, e))?
        .into_luma16();
    let (width, height) = image.dimensions();
    let values = image.pixels().map(|p| p.0[0] as f64 / 1000.0).collect();
    DepthMapF64::new(width, height, values).map_err(|e| CliError::input_at(path, e))
}
