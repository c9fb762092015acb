//! TUM trajectory format: one line per frame,
//! `timestamp tx ty tz qx qy qz qw`, camera-to-world, quaternion w-last.
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::Path;

use mvrecon_core::PoseF64;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub timestamp: f64,
    pub pose: PoseF64,
}

pub fn parse_trajectory(text: &str, origin: &Path) -> CliResult<Vec<TrajectoryEntry>> {
    let mut entries = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(CliError::input_at(
                origin,
                format!("line {}: expected 8 fields, got {}", line_no + 1, fields.len()),
            ));
        }
        let mut values = [0.0f64; 8];
        for (i, field) in fields.iter().enumerate() {
            values[i] = field.parse::<f64>().map_err(|_| {
                CliError::input_at(
                    origin,
                    format!("line {}: '{}' is not a number", line_no + 1, field),
                )
            })?;
        }
        let [timestamp, tx, ty, tz, qx, qy, qz, qw] = values;
        let quat = Quaternion::new(qw, qx, qy, qz);
        if quat.norm() < 1e-9 {
            return Err(CliError::input_at(
                origin,
                format!("line {}: zero quaternion", line_no + 1),
            ));
        }
        let rotation = UnitQuaternion::from_quaternion(quat)
            .to_rotation_matrix()
            .into_inner();
        let pose = PoseF64::new(rotation, Vector3::new(tx, ty, tz))
            .map_err(|e| CliError::input_at(origin, format!("line {}: {}", line_no + 1, e)))?;
        entries.push(TrajectoryEntry { timestamp, pose });
    }
    if entries.is_empty() {
        return Err(CliError::input_at(origin, "trajectory contains no poses"));
    }
    Ok(entries)
}

pub fn read_trajectory(path: &Path) -> CliResult<Vec<TrajectoryEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input_at(path, e))?;
    parse_trajectory(&text, path)
}

pub fn format_trajectory(entries: &[TrajectoryEntry]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for entry in entries {
        let t = entry.pose.translation();
        let q = UnitQuaternion::from_matrix(entry.pose.rotation());
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            entry.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

pub fn write_trajectory(path: &Path, entries: &[TrajectoryEntry]) -> CliResult<()> {
    std::fs::write(path, format_trajectory(entries)).map_err(|e| CliError::input_at(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_pose_roundtrip() {
        let text = "# comment\n0.0 1 2 3 0 0 0 1\n";
        let entries = parse_trajectory(text, Path::new("test")).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].pose.translation(), &Vector3::new(1.0, 2.0, 3.0));

        let rendered = format_trajectory(&entries);
        let again = parse_trajectory(&rendered, Path::new("test")).unwrap();
        assert_relative_eq!(
            again[0].pose.rotation(),
            entries[0].pose.rotation(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotation_quaternion_roundtrip() {
        // 90 degrees about z: q = (0, 0, sin45, cos45).
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let text = format!("1.5 0 0 0 0 0 {s} {s}\n");
        let entries = parse_trajectory(&text, Path::new("test")).unwrap();
        let r = entries[0].pose.rotation();
        assert_relative_eq!(r[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(r[(1, 0)], 1.0, epsilon = 1e-12);

        let rendered = format_trajectory(&entries);
        let again = parse_trajectory(&rendered, Path::new("test")).unwrap();
        assert_relative_eq!(again[0].pose.rotation(), r, epsilon = 1e-12);
        assert_eq!(again[0].timestamp, 1.5);
    }

    #[test]
    fn malformed_lines_are_input_errors() {
        assert!(parse_trajectory("0 1 2 3\n", Path::new("t")).is_err());
        assert!(parse_trajectory("0 1 2 3 0 0 0 x\n", Path::new("t")).is_err());
        assert!(parse_trajectory("0 1 2 3 0 0 0 0\n", Path::new("t")).is_err());
        assert!(parse_trajectory("# only comments\n", Path::new("t")).is_err());
    }
}
