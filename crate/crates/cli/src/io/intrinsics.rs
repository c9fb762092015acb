//! Intrinsics file: four lines `fx`, `fy`, `cx`, `cy`, then `width height`.
//! Parsing is whitespace-tolerant (six numeric tokens in that order).

use std::path::Path;

use mvrecon_core::IntrinsicsF64;

use crate::error::{CliError, CliResult};

pub fn parse_intrinsics(text: &str, origin: &Path) -> CliResult<IntrinsicsF64> {
    let tokens: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .collect();
    if tokens.len() != 6 {
        return Err(CliError::input_at(
            origin,
            format!(
                "expected 6 values (fx fy cx cy width height), got {}",
                tokens.len()
            ),
        ));
    }
    let number = |i: usize| -> CliResult<f64> {
        tokens[i]
            .parse::<f64>()
            .map_err(|_| CliError::input_at(origin, format!("'{}' is not a number", tokens[i])))
    };
    let fx = number(0)?;
    let fy = number(1)?;
    let cx = number(2)?;
    let cy = number(3)?;
    let width = tokens[4]
        .parse::<u32>()
        .map_err(|_| CliError::input_at(origin, format!("width '{}' is not an integer", tokens[4])))?;
    let height = tokens[5]
        .parse::<u32>()
        .map_err(|_| {
            CliError::input_at(origin, format!("height '{}' is not an integer", tokens[5]))
        })?;
    IntrinsicsF64::new(fx, fy, cx, cy, width, height)
        .map_err(|e| CliError::input_at(origin, e))
}

pub fn read_intrinsics(path: &Path) -> CliResult<IntrinsicsF64> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input_at(path, e))?;
    parse_intrinsics(&text, path)
}

pub fn format_intrinsics(k: &IntrinsicsF64) -> String {
    format!(
        "{}\n{}\n{}\n{}\n{} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    )
}

pub fn write_intrinsics(path: &Path, k: &IntrinsicsF64) -> CliResult<()> {
    std::fs::write(path, format_intrinsics(k)).map_err(|e| CliError::input_at(path, e))
}
