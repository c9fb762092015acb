//! Scene bundle directory layout: the on-disk unit of work.
//!
//! ```text
//! bundle/
//!   intrinsics.txt        fx fy cx cy / width height
//!   poses.txt             TUM trajectory, one line per frame
//!   correspondences.txt   optional; keyframe-position matches
//!   gt_mesh.ply           optional ground-truth mesh
//!   injected_scales.txt   optional; synthetic per-submap corruption record
//!   depth/                predicted depths: f{frame:06}_s{submap:03}.raw
//!                         (per-submap predictions), with f{frame:06}.raw as
//!                         a shared fallback for single-prediction inputs
//!   gt_depth/             optional exact depths: f{frame:06}.raw
//! ```

use std::path::{Path, PathBuf};

use mvrecon_core::{DepthMapF64, IntrinsicsF64, KeyframeSequence, PoseF64, Submap};

use crate::error::{CliError, CliResult};
use crate::io::depth_file::read_depth;
use crate::io::intrinsics::read_intrinsics;
use crate::io::tum::{read_trajectory, TrajectoryEntry};

pub fn frame_file_stem(frame: usize) -> String {
    format!("f{frame:06}")
}

pub fn submap_frame_file_stem(frame: usize, submap: usize) -> String {
    format!("f{frame:06}_s{submap:03}")
}

#[derive(Debug)]
pub struct SceneBundle {
    root: PathBuf,
    pub intrinsics: IntrinsicsF64,
    pub entries: Vec<TrajectoryEntry>,
}

impl SceneBundle {
    pub fn load(root: &Path) -> CliResult<Self> {
        let intrinsics = read_intrinsics(&root.join("intrinsics.txt"))?;
        let entries = read_trajectory(&root.join("poses.txt"))?;
        Ok(Self {
            root: root.to_path_buf(),
            intrinsics,
            entries,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn poses(&self) -> Vec<PoseF64> {
        self.entries.iter().map(|e| e.pose).collect()
    }

    pub fn correspondences_path(&self) -> PathBuf {
        self.root.join("correspondences.txt")
    }

    pub fn gt_mesh_path(&self) -> PathBuf {
        self.root.join("gt_mesh.ply")
    }

    pub fn injected_scales_path(&self) -> PathBuf {
        self.root.join("injected_scales.txt")
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.root.join("depth")
    }

    pub fn gt_depth_dir(&self) -> PathBuf {
        self.root.join("gt_depth")
    }

    pub fn gt_depth_path(&self, frame: usize) -> PathBuf {
        self.gt_depth_dir().join(frame_file_stem(frame) + ".raw")
    }

    /// Resolves the predicted depth for `frame` as seen by `submap`: the
    /// per-submap prediction when present, else the shared per-frame file.
    pub fn predicted_depth_path(&self, frame: usize, submap: usize) -> CliResult<PathBuf> {
        let dir = self.depth_dir();
        let mut tried = Vec::new();
        for stem in [submap_frame_file_stem(frame, submap), frame_file_stem(frame)] {
            for ext in ["raw", "png"] {
                let candidate = dir.join(format!("{stem}.{ext}"));
                if candidate.is_file() {
                    return Ok(candidate);
                }
                tried.push(candidate);
            }
        }
        Err(CliError::input(format!(
            "no predicted depth for frame {frame} in submap {submap}; tried {}",
            tried
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }

    fn load_checked_depth(&self, path: &Path) -> CliResult<DepthMapF64> {
        let depth = read_depth(path)?;
        if depth.width() != self.intrinsics.width || depth.height() != self.intrinsics.height {
            return Err(CliError::input_at(
                path,
                format!(
                    "depth is {}x{} but intrinsics declare {}x{}",
                    depth.width(),
                    depth.height(),
                    self.intrinsics.width,
                    self.intrinsics.height
                ),
            ));
        }
        Ok(depth)
    }

    /// Loads the per-submap predicted depth maps for every keyframe position
    /// covered by each submap.
    pub fn load_submap_depths(
        &self,
        seq: &KeyframeSequence<f64>,
        submaps: &[Submap],
    ) -> CliResult<Vec<Vec<DepthMapF64>>> {
        let mut all = Vec::with_capacity(submaps.len());
        for submap in submaps {
            let mut maps = Vec::with_capacity(submap.len());
            for position in submap.positions() {
                let frame = seq.frame_id(position);
                let path = self.predicted_depth_path(frame, submap.index())?;
                maps.push(self.load_checked_depth(&path)?);
            }
            all.push(maps);
        }
        Ok(all)
    }

    pub fn load_gt_depth(&self, frame: usize) -> CliResult<DepthMapF64> {
        self.load_checked_depth(&self.gt_depth_path(frame))
    }
}

/// `injected_scales.txt`: one `submap factor` pair per line.
pub fn read_injected_scales(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input_at(path, e))?;
    let mut factors = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(CliError::input_at(
                path,
                format!("line {}: expected 'submap factor'", line_no + 1),
            ));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| CliError::input_at(path, format!("line {}: bad index", line_no + 1)))?;
        if index != factors.len() {
            return Err(CliError::input_at(
                path,
                format!("line {}: submap indices must be consecutive", line_no + 1),
            ));
        }
        let factor: f64 = fields[1]
            .parse()
            .map_err(|_| CliError::input_at(path, format!("line {}: bad factor", line_no + 1)))?;
        factors.push(factor);
    }
    Ok(factors)
}

pub fn write_injected_scales(path: &Path, factors: &[f64]) -> CliResult<()> {
    let mut text = String::from("# submap corruption_factor\n");
    for (i, f) in factors.iter().enumerate() {
        text.push_str(&format!("{i} {f}\n"));
    }
    std::fs::write(path, text).map_err(|e| CliError::input_at(path, e))
}
