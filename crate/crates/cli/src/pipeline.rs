//! Pipeline stages: align (scale recovery), fuse/extract, render, evaluate.

use std::fmt::Write as _;
use std::path::Path;

use mvrecon_core::{
    apply_scales, depth_metrics, edge_relative_scale, fit_bounds, initial_scale, mesh_metrics,
    overlap_ratios, partition_submaps, render_depth, sample_mesh_points, select_keyframes,
    solve_scales, triangulate, AnchorError, Correspondence, DepthMapF64, DepthMetrics,
    DepthValidityRange, EdgeWeighting, IntrinsicsF64, KeyframeSequence, MeshMetrics,
    MetricsError, PoseF64, ScaleEdge, ScaleGraphProblem, ScaleSolution, SolveOptions, Submap,
    SubmapConfig, TriangleMeshF64, TsdfVolumeF64,
};

use crate::bundle::SceneBundle;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::io::corr::read_correspondences;

const EDGE_W_MIN: f64 = 1e-3;
/// Edge weight saturates once a tenth of the overlap pixels are valid.
const EDGE_N_REF_FRACTION: f64 = 0.1;
/// Mesh sampling density for evaluation: 1 point per square centimeter.
pub const DEFAULT_SAMPLE_DENSITY: f64 = 10_000.0;

#[derive(Debug, Clone, Copy)]
pub struct EdgeSummary {
    pub i: usize,
    pub j: usize,
    pub ratio: f64,
    pub weight: f64,
    pub valid_count: usize,
}

#[derive(Debug)]
pub struct AlignResult {
    pub keyframes: KeyframeSequence<f64>,
    pub submaps: Vec<Submap>,
    pub initial_scales: Vec<f64>,
    pub low_confidence: Vec<bool>,
    pub edges: Vec<EdgeSummary>,
    pub solution: ScaleSolution<f64>,
    /// One aligned depth map per keyframe position.
    pub aligned: Vec<DepthMapF64>,
}

impl AlignResult {
    /// Per-node scale report: `m s0 s_star` lines.
    pub fn scales_report(&self) -> String {
        let mut out = String::from("# submap s0 s_star\n");
        for (m, s0) in self.initial_scales.iter().enumerate() {
            let _ = writeln!(out, "{m} {s0} {}", self.solution.scale(m));
        }
        out
    }

    /// Diagnostic graph dump: one line per edge `i j r weight count`, then
    /// one per node `i s0 s_star`.
    pub fn graph_dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {} {}", e.i, e.j, e.ratio, e.weight, e.valid_count);
        }
        for (m, s0) in self.initial_scales.iter().enumerate() {
            let _ = writeln!(out, "{m} {s0} {}", self.solution.scale(m));
        }
        out
    }
}

fn validate_correspondences(
    corrs: &[Correspondence<f64>],
    k: &IntrinsicsF64,
    keyframe_count: usize,
    origin: &Path,
) -> CliResult<()> {
    for (idx, corr) in corrs.iter().enumerate() {
        corr.validate_bounds(k)
            .map_err(|e| CliError::input_at(origin, format!("match {}: {}", idx + 1, e)))?;
        if corr.frame_a >= keyframe_count || corr.frame_b >= keyframe_count {
            return Err(CliError::input_at(
                origin,
                format!(
                    "match {}: frame index out of range (have {} keyframes)",
                    idx + 1,
                    keyframe_count
                ),
            ));
        }
    }
    Ok(())
}

/// Scale-alignment stage: keyframe selection, submap partition, anchor
/// triangulation, edge extraction, log-scale optimization, and application
/// of the optimized scales to the predicted depths.
pub fn run_align(bundle: &SceneBundle, config: &PipelineConfig) -> CliResult<AlignResult> {
    let k = bundle.intrinsics;
    let poses = bundle.poses();
    let keyframes = select_keyframes(&poses, config.t_max, config.r_max)
        .map_err(|e| CliError::input(e.to_string()))?;
    let submap_cfg = SubmapConfig::new(config.n, config.o)
        .map_err(|e| CliError::input(e.to_string()))?;
    let submaps = partition_submaps(&keyframes, &submap_cfg);
    let depths = bundle.load_submap_depths(&keyframes, &submaps)?;
    let range = DepthValidityRange::new(config.epsilon, config.d_max)
        .map_err(|e| CliError::input(e.to_string()))?;

    let corr_path = bundle.correspondences_path();
    let correspondences = if corr_path.is_file() {
        let corrs = read_correspondences(&corr_path)?;
        validate_correspondences(&corrs, &k, keyframes.len(), &corr_path)?;
        corrs
    } else {
        eprintln!(
            "warning: {} not found; all submap priors fall back to 1.0",
            corr_path.display()
        );
        Vec::new()
    };

    // Per-submap priors from triangulated anchors.
    let mut initial_scales = Vec::with_capacity(submaps.len());
    let mut low_confidence = Vec::with_capacity(submaps.len());
    for (m, submap) in submaps.iter().enumerate() {
        let mut anchors = Vec::new();
        let mut rejected = 0usize;
        for corr in &correspondences {
            if !(submap.contains(corr.frame_a) && submap.contains(corr.frame_b)) {
                continue;
            }
            match triangulate(
                corr,
                keyframes.pose(corr.frame_a),
                keyframes.pose(corr.frame_b),
                &k,
                config.max_reproj,
            ) {
                Ok(pair) => anchors.extend(pair),
                Err(_) => rejected += 1,
            }
        }
        let lookup = |position: usize| {
            submap
                .contains(position)
                .then(|| &depths[m][position - submap.start()])
        };
        match initial_scale(&anchors, lookup) {
            Ok(s0) => {
                initial_scales.push(s0);
                low_confidence.push(false);
            }
            Err(AnchorError::NoValidAnchors) => {
                eprintln!(
                    "warning: submap {m} has no valid anchors ({} matches rejected); \
                     falling back to prior scale 1.0",
                    rejected
                );
                initial_scales.push(1.0);
                low_confidence.push(true);
            }
            Err(e) => return Err(CliError::input(e.to_string())),
        }
    }

    // Relative-scale edges between adjacent submaps from overlap ratios.
    let pixels_per_frame = (k.width as usize * k.height as usize) as f64;
    let mut edges = Vec::new();
    let mut summaries = Vec::new();
    for m in 0..submaps.len().saturating_sub(1) {
        let (a, b) = (&submaps[m], &submaps[m + 1]);
        let overlap = a.overlap_with(b);
        let mut ratio_sets = Vec::with_capacity(overlap.len());
        for position in overlap.clone() {
            let d_i = &depths[m][position - a.start()];
            let d_j = &depths[m + 1][position - b.start()];
            let ratios = overlap_ratios(d_i, d_j, &range)
                .map_err(|e| CliError::input(e.to_string()))?;
            ratio_sets.push(ratios);
        }
        let weighting = EdgeWeighting::new(
            (EDGE_N_REF_FRACTION * overlap.len().max(1) as f64 * pixels_per_frame).max(1.0),
            EDGE_W_MIN,
        );
        let stats = edge_relative_scale(&ratio_sets, &weighting);
        summaries.push(EdgeSummary {
            i: m,
            j: m + 1,
            ratio: stats.ratio,
            weight: stats.weight,
            valid_count: stats.valid_count,
        });
        // The ratio r measures how much larger submap m's depths are than
        // submap m+1's on shared frames, so consistency of the scaled depths
        // requires x_i - x_j = -ln(r).
        let rho = -stats.ratio.ln();
        edges.push(
            ScaleEdge::new(m, m + 1, rho, stats.weight, stats.valid_count)
                .map_err(|e| CliError::pipeline(e.to_string()))?,
        );
    }

    let priors: Vec<f64> = initial_scales.iter().map(|s| s.ln()).collect();
    let problem = ScaleGraphProblem::new(priors, edges, config.lambda)
        .map_err(|e| CliError::pipeline(e.to_string()))?;
    let solution = solve_scales(&problem, &SolveOptions::default())
        .map_err(|e| CliError::pipeline(e.to_string()))?;

    let aligned = apply_scales(&submaps, &depths, &solution)
        .map_err(|e| CliError::pipeline(e.to_string()))?;

    Ok(AlignResult {
        keyframes,
        submaps,
        initial_scales,
        low_confidence,
        edges: summaries,
        solution,
        aligned,
    })
}

/// Fuses aligned keyframe depths into a TSDF volume sized to enclose all
/// back-projected samples, then extracts the iso-surface mesh.
pub fn run_fuse_extract(
    aligned: &[DepthMapF64],
    poses: &[PoseF64],
    k: &IntrinsicsF64,
    config: &PipelineConfig,
) -> CliResult<(TriangleMeshF64, TsdfVolumeF64)> {
    if aligned.len() != poses.len() {
        return Err(CliError::input(format!(
            "{} depth maps vs {} poses",
            aligned.len(),
            poses.len()
        )));
    }
    let range = DepthValidityRange::new(config.epsilon, config.d_max)
        .map_err(|e| CliError::input(e.to_string()))?;
    let (origin, dims) = fit_bounds(
        aligned,
        poses,
        k,
        &range,
        config.voxel_size,
        config.truncation,
    )
    .ok_or_else(|| CliError::pipeline("EmptyVolume: no valid depth sample to fuse"))?;
    let mut volume = TsdfVolumeF64::new(origin, config.voxel_size, dims, config.truncation)
        .map_err(|e| CliError::pipeline(e.to_string()))?;
    for (depth, pose) in aligned.iter().zip(poses) {
        volume.integrate(depth, pose, k, &range);
    }
    if volume.observed_voxels() == 0 {
        return Err(CliError::pipeline("EmptyVolume: no voxel was observed"));
    }
    let mesh = volume.extract_mesh();
    Ok((mesh, volume))
}

/// Renders the mesh's z-depth at each pose.
pub fn run_render(
    mesh: &TriangleMeshF64,
    poses: &[PoseF64],
    k: &IntrinsicsF64,
) -> Vec<DepthMapF64> {
    poses.iter().map(|pose| render_depth(mesh, pose, k)).collect()
}

/// Samples both meshes and scores them; sampling is deterministic in `seed`.
pub fn run_eval_mesh(
    pred: &TriangleMeshF64,
    gt: &TriangleMeshF64,
    tau: f64,
    density: f64,
    seed: u64,
) -> CliResult<MeshMetrics<f64>> {
    let pred_points = sample_mesh_points(pred, density, seed);
    let gt_points = sample_mesh_points(gt, density, seed.wrapping_add(1));
    mesh_metrics(&pred_points, &gt_points, tau).map_err(|e| match e {
        MetricsError::EmptyCloud => CliError::pipeline("EmptyCloud: a mesh has no surface"),
        other => CliError::pipeline(other.to_string()),
    })
}

/// Pools pixels across all frame pairs by stacking the maps vertically, then
/// scores once.
pub fn run_eval_depth(
    pred: &[DepthMapF64],
    gt: &[DepthMapF64],
    range: &DepthValidityRange<f64>,
) -> CliResult<DepthMetrics<f64>> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(CliError::input(format!(
            "depth evaluation needs matching non-empty sets, got {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let width = pred[0].width();
    let mut pred_values = Vec::new();
    let mut gt_values = Vec::new();
    let mut rows = 0u32;
    for (p, g) in pred.iter().zip(gt) {
        if p.width() != width || g.width() != width || p.height() != g.height() {
            return Err(CliError::input(
                "all depth maps must share dimensions for pooled evaluation".to_string(),
            ));
        }
        pred_values.extend_from_slice(p.values());
        gt_values.extend_from_slice(g.values());
        rows += p.height();
    }
    let pred_stack = DepthMapF64::new(width, rows, pred_values)
        .map_err(|e| CliError::input(e.to_string()))?;
    let gt_stack =
        DepthMapF64::new(width, rows, gt_values).map_err(|e| CliError::input(e.to_string()))?;
    depth_metrics(&pred_stack, &gt_stack, range).map_err(|e| match e {
        MetricsError::NoValidPixels => {
            CliError::pipeline("NoValidPixels: no pixel is valid in both depth sets")
        }
        other => CliError::pipeline(other.to_string()),
    })
}
