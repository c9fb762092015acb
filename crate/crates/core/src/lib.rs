//! Geometry toolkit for scale-consistent multi-view depth reconstruction:
//! keyframe windowing, sparse-anchor scale recovery, submap scale-graph
//! optimization, TSDF fusion with marching cubes extraction, depth rendering,
//! and mesh/depth evaluation metrics.
//!
//! Everything numeric is generic over the [`Real`] scalar (`f32` or `f64`);
//! concrete aliases for the common instantiations live at the crate root.

pub mod anchor;
pub mod camera;
pub mod depth;
pub mod keyframe;
pub mod mesh;
pub mod metrics;
pub mod render;
pub mod robust;
pub mod scalar;
pub mod scale_graph;
pub mod tsdf;
pub mod tsdf_tables;

pub use anchor::{
    initial_scale, triangulate, AnchorError, Correspondence, TriangulateError, TriangulatedAnchor,
};
pub use camera::{backproject, project, GeometryError, Intrinsics, Pose};
pub use depth::{DepthError, DepthMap, DepthValidityRange};
pub use keyframe::{
    partition_submaps, select_keyframes, Keyframe, KeyframeSequence, Submap, SubmapConfig,
    SubmapError,
};
pub use mesh::{MeshError, TriangleMesh};
pub use metrics::{
    depth_metrics, log_transform, mesh_metrics, occ_loss, sample_mesh_points, sdf_loss,
    total_loss, DepthMetrics, MeshMetrics, MetricsError, SupervisionSample,
};
pub use render::{render_depth, RenderTarget};
pub use robust::lower_median;
pub use scalar::Real;
pub use scale_graph::{
    apply_scales, edge_relative_scale, objective_cost, objective_gradient, overlap_ratios,
    solve_scales, EdgeWeighting, ScaleEdge, ScaleEdgeStats, ScaleGraphError, ScaleGraphProblem,
    ScaleSolution, SolveOptions,
};
pub use tsdf::{fit_bounds, TsdfError, TsdfVolume};

/// `f32` instantiations.
pub type IntrinsicsF32 = Intrinsics<f32>;
pub type PoseF32 = Pose<f32>;
pub type DepthMapF32 = DepthMap<f32>;
pub type TriangleMeshF32 = TriangleMesh<f32>;
pub type TsdfVolumeF32 = TsdfVolume<f32>;

/// `f64` instantiations, the default working precision of the pipeline.
pub type IntrinsicsF64 = Intrinsics<f64>;
pub type PoseF64 = Pose<f64>;
pub type DepthMapF64 = DepthMap<f64>;
pub type TriangleMeshF64 = TriangleMesh<f64>;
pub type TsdfVolumeF64 = TsdfVolume<f64>;
