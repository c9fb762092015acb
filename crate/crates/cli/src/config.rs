//! Pipeline configuration: defaults, dataset profiles, and the line-oriented
//! `key = value` config file (a TOML subset).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// All tunable pipeline parameters. Distances are meters, angles degrees,
/// reprojection gates pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Keyframes per submap window.
    pub n: usize,
    /// Keyframes shared by consecutive submaps.
    pub o: usize,
    pub voxel_size: f64,
    pub truncation: f64,
    pub epsilon: f64,
    pub d_max: f64,
    /// Prior regularization strength of the scale graph.
    pub lambda: f64,
    pub max_reproj: f64,
    /// Precision/recall distance threshold for mesh evaluation.
    pub tau: f64,
    /// Keyframe translation threshold.
    pub t_max: f64,
    /// Keyframe rotation threshold.
    pub r_max: f64,
    pub dataset_profile: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n: 8,
            o: 4,
            voxel_size: 0.04,
            truncation: 0.12,
            epsilon: 0.05,
            d_max: 10.0,
            lambda: 0.1,
            max_reproj: 2.0,
            tau: 0.05,
            t_max: 0.1,
            r_max: 15.0,
            dataset_profile: "generic".to_string(),
        }
    }
}

const KEYS: [&str; 12] = [
    "n",
    "o",
    "voxel_size",
    "truncation",
    "epsilon",
    "d_max",
    "lambda",
    "max_reproj",
    "tau",
    "t_max",
    "r_max",
    "dataset_profile",
];

impl PipelineConfig {
    /// Profile defaults: the scannet profile uses the longer n = 16 window.
    pub fn for_profile(profile: &str) -> CliResult<Self> {
        let mut config = Self::default();
        match profile {
            "generic" => {}
            "scannet" => {
                config.n = 16;
            }
            other => {
                return Err(CliError::input(format!(
                    "unknown dataset profile '{other}' (expected scannet or generic)"
                )))
            }
        }
        config.dataset_profile = profile.to_string();
        Ok(config)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        Self::parse_onto(text, Self::default())
    }

    /// Applies `key = value` lines on top of `base`. Unknown keys are
    /// rejected; the truncation default tracks voxel_size unless set
    /// explicitly.
    pub fn parse_onto(text: &str, base: Self) -> CliResult<Self> {
        let mut config = base;
        let mut truncation_set = false;
        let mut voxel_set = false;
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::input(format!("config line {}: expected key = value", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::input(format!(
                    "config line {}: unknown key '{}'",
                    line_no + 1,
                    key
                )));
            }
            let parse_usize = |v: &str| {
                v.parse::<usize>().map_err(|_| {
                    CliError::input(format!("config line {}: '{}' is not an integer", line_no + 1, v))
                })
            };
            let parse_f64 = |v: &str| {
                v.parse::<f64>().map_err(|_| {
                    CliError::input(format!("config line {}: '{}' is not a number", line_no + 1, v))
                })
            };
            match key {
                "n" => config.n = parse_usize(value)?,
                "o" => config.o = parse_usize(value)?,
                "voxel_size" => {
                    config.voxel_size = parse_f64(value)?;
                    voxel_set = true;
                }
                "truncation" => {
                    config.truncation = parse_f64(value)?;
                    truncation_set = true;
                }
                "epsilon" => config.epsilon = parse_f64(value)?,
                "d_max" => config.d_max = parse_f64(value)?,
                "lambda" => config.lambda = parse_f64(value)?,
                "max_reproj" => config.max_reproj = parse_f64(value)?,
                "tau" => config.tau = parse_f64(value)?,
                "t_max" => config.t_max = parse_f64(value)?,
                "r_max" => config.r_max = parse_f64(value)?,
                "dataset_profile" => {
                    config.dataset_profile = value.trim_matches('"').to_string();
                }
                _ => unreachable!("key list checked above"),
            }
        }
        if voxel_set && !truncation_set {
            config.truncation = 3.0 * config.voxel_size;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, base: Self) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input_at(path, e))?;
        Self::parse_onto(&text, base)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "o = {}", self.o);
        let _ = writeln!(out, "voxel_size = {}", self.voxel_size);
        let _ = writeln!(out, "truncation = {}", self.truncation);
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        let _ = writeln!(out, "d_max = {}", self.d_max);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "max_reproj = {}", self.max_reproj);
        let _ = writeln!(out, "tau = {}", self.tau);
        let _ = writeln!(out, "t_max = {}", self.t_max);
        let _ = writeln!(out, "r_max = {}", self.r_max);
        let _ = writeln!(out, "dataset_profile = \"{}\"", self.dataset_profile);
        out
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::Input(msg));
        if self.n < 2 {
            return fail(format!("n must be >= 2, got {}", self.n));
        }
        if self.o >= self.n {
            return fail(format!("o must be < n, got n={} o={}", self.n, self.o));
        }
        if !(self.voxel_size > 0.0) {
            return fail(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        if self.truncation < self.voxel_size {
            return fail(format!(
                "truncation {} must be at least one voxel {}",
                self.truncation, self.voxel_size
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.d_max) {
            return fail(format!(
                "depth validity requires 0 < epsilon < d_max, got [{}, {}]",
                self.epsilon, self.d_max
            ));
        }
        if !(self.lambda > 0.0) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.max_reproj > 0.0) {
            return fail(format!("max_reproj must be positive, got {}", self.max_reproj));
        }
        if !(self.tau > 0.0) {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_max > 0.0) || !(self.r_max > 0.0) {
            return fail(format!(
                "keyframe thresholds must be positive, got t_max={} r_max={}",
                self.t_max, self.r_max
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.n, 8);
        assert_eq!(c.o, 4);
        assert_eq!(c.voxel_size, 0.04);
        assert_eq!(c.truncation, 0.12);
    }

    #[test]
    fn scannet_profile_widens_the_window() {
        let c = PipelineConfig::for_profile("scannet").unwrap();
        assert_eq!(c.n, 16);
        assert_eq!(c.o, 4);
        assert!(PipelineConfig::for_profile("nope").is_err());
    }

    #[test]
    fn roundtrip_is_identity() {
        let mut c = PipelineConfig::default();
        c.lambda = 0.325;
        c.voxel_size = 0.05;
        c.truncation = 0.2;
        c.dataset_profile = "scannet".into();
        let text = c.serialize();
        let parsed = PipelineConfig::parse(&text).unwrap();
        assert_eq!(parsed, c);
        assert_eq!(parsed.serialize(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::parse("nn = 3\n").is_err());
    }

    #[test]
    fn truncation_tracks_voxel_size_unless_explicit() {
        let c = PipelineConfig::parse("voxel_size = 0.1\n").unwrap();
        assert_eq!(c.truncation, 3.0 * 0.1);
        let c = PipelineConfig::parse("voxel_size = 0.1\ntruncation = 0.5\n").unwrap();
        assert_eq!(c.truncation, 0.5);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = PipelineConfig::parse("# comment\n\nlambda = 0.7\n").unwrap();
        assert_eq!(c.lambda, 0.7);
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(PipelineConfig::parse("o = 8\n").is_err());
        assert!(PipelineConfig::parse("lambda = 0\n").is_err());
        assert!(PipelineConfig::parse("epsilon = 20\n").is_err());
    }
}
