//! Correspondence text format: one match per line,
//! `frame_a frame_b ua va ub vb`, whitespace-separated decimals. Frame ids
//! are keyframe positions.

use std::fmt::Write as _;
use std::path::Path;

use mvrecon_core::Correspondence;
use nalgebra::Vector2;

use crate::error::{CliError, CliResult};

pub fn parse_correspondences(text: &str, origin: &Path) -> CliResult<Vec<Correspondence<f64>>> {
    let mut out = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(CliError::input_at(
                origin,
                format!("line {}: expected 6 fields, got {}", line_no + 1, fields.len()),
            ));
        }
        let frame = |i: usize| -> CliResult<usize> {
            fields[i].parse::<usize>().map_err(|_| {
                CliError::input_at(
                    origin,
                    format!("line {}: '{}' is not a frame index", line_no + 1, fields[i]),
                )
            })
        };
        let coord = |i: usize| -> CliResult<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                CliError::input_at(
                    origin,
                    format!("line {}: '{}' is not a pixel coordinate", line_no + 1, fields[i]),
                )
            })
        };
        let corr = Correspondence::new(
            frame(0)?,
            frame(1)?,
            Vector2::new(coord(2)?, coord(3)?),
            Vector2::new(coord(4)?, coord(5)?),
        )
        .map_err(|e| CliError::input_at(origin, format!("line {}: {}", line_no + 1, e)))?;
        out.push(corr);
    }
    Ok(out)
}

pub fn read_correspondences(path: &Path) -> CliResult<Vec<Correspondence<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input_at(path, e))?;
    parse_correspondences(&text, path)
}

pub fn format_correspondences(corrs: &[Correspondence<f64>]) -> String {
    let mut out = String::new();
    for c in corrs {
        let _ = writeln!(
            out,
            "{} {} {:.6} {:.6} {:.6} {:.6}",
            c.frame_a, c.frame_b, c.pixel_a.x, c.pixel_a.y, c.pixel_b.x, c.pixel_b.y
        );
    }
    out
}

pub fn write_correspondences(path: &Path, corrs: &[Correspondence<f64>]) -> CliResult<()> {
    std::fs::write(path, format_correspondences(corrs)).map_err(|e| CliError::input_at(path, e))
}
