//! On-disk formats: TUM trajectories, intrinsics, depth maps (raw float and
//! 16-bit PNG), correspondences, binary PLY meshes, TSDF volumes, and the
//! metric report.

pub mod corr;
pub mod depth_file;
pub mod intrinsics;
pub mod ply;
pub mod report;
pub mod tum;
pub mod volume_file;
