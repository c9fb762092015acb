//! Synthetic box-room scenes with analytically exact depths, a known mesh,
//! lattice correspondences, and per-submap multiplicative depth corruption.
//! The recorded corruption factors are the ground truth that scale recovery
//! must invert.

use std::path::Path;

use mvrecon_core::{
    partition_submaps, select_keyframes, DepthMapF64, IntrinsicsF64, PoseF64, TriangleMeshF64,
};
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bundle::{frame_file_stem, submap_frame_file_stem, write_injected_scales};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::io::corr::write_correspondences;
use crate::io::depth_file::write_depth;
use crate::io::intrinsics::write_intrinsics;
use crate::io::ply::write_ply;
use crate::io::tum::{write_trajectory, TrajectoryEntry};

/// Fraction of the visual field the camera keeps clear of the walls.
const ROOM_MARGIN: f64 = 0.05;
const PITCH_AMPLITUDE: f64 = 0.6; // radians, ~34 degrees
const PITCH_CYCLES: f64 = 3.0;
const MIN_ANCHOR_DEPTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStyle {
    /// Orbit looking away from the room center.
    Outward,
    /// Orbit looking across the room center.
    Inward,
}

impl std::str::FromStr for TrajectoryStyle {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outward" => Ok(TrajectoryStyle::Outward),
            "inward" => Ok(TrajectoryStyle::Inward),
            other => Err(CliError::input(format!(
                "unknown trajectory style '{other}' (expected inward or outward)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Room extents in meters (width, depth, height); the room spans
    /// `[0, w] x [0, d] x [0, h]`.
    pub room: Vector3<f64>,
    pub frames: usize,
    pub style: TrajectoryStyle,
    pub corrupt_min: f64,
    pub corrupt_max: f64,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            room: Vector3::new(6.0, 4.0, 3.0),
            frames: 40,
            style: TrajectoryStyle::Inward,
            corrupt_min: 0.5,
            corrupt_max: 2.0,
            seed: 42,
            width: 80,
            height: 60,
            focal: 46.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthRecord {
    pub injected: Vec<f64>,
    pub keyframe_count: usize,
    pub correspondence_count: usize,
}

/// Rotation with camera x right, y down, z along `forward`; `up` fixes roll.
pub fn look_rotation(forward: Vector3<f64>, up: Vector3<f64>) -> Matrix3<f64> {
    let f = forward.normalize();
    let r = f.cross(&up).normalize();
    let d = f.cross(&r);
    Matrix3::from_columns(&[r, d, f])
}

/// The room as an inward-facing closed mesh: 12 triangles.
pub fn box_room_mesh(room: &Vector3<f64>) -> TriangleMeshF64 {
    let (w, d, h) = (room.x, room.y, room.z);
    let corners = vec![
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(w, 0.0, 0.0),
        Vector3::new(w, d, 0.0),
        Vector3::new(0.0, d, 0.0),
        Vector3::new(0.0, 0.0, h),
        Vector3::new(w, 0.0, h),
        Vector3::new(w, d, h),
        Vector3::new(0.0, d, h),
    ];
    let quads: [[u32; 4]; 6] = [
        [0, 1, 2, 3],
        [4, 5, 6, 7],
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    TriangleMeshF64::new(corners, faces).expect("box topology is valid")
}

fn camera_inside(room: &Vector3<f64>, position: &Vector3<f64>) -> bool {
    (0..3).all(|i| position[i] > ROOM_MARGIN && position[i] < room[i] - ROOM_MARGIN)
}

/// Orbit trajectory at mid-height with a pitch sweep for floor/ceiling
/// coverage.
pub fn trajectory(spec: &SynthSpec) -> CliResult<Vec<PoseF64>> {
    let center = spec.room * 0.5;
    let radius = 0.27 * spec.room.x.min(spec.room.y);
    let mut poses = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / spec.frames as f64;
        let position = center + Vector3::new(radius * theta.cos(), radius * theta.sin(), 0.0);
        if !camera_inside(&spec.room, &position) {
            return Err(CliError::input(format!(
                "trajectory leaves the room at frame {i}: {position:?}"
            )));
        }
        let pitch = PITCH_AMPLITUDE * (PITCH_CYCLES * theta).sin();
        let heading = match spec.style {
            TrajectoryStyle::Outward => theta,
            TrajectoryStyle::Inward => theta + std::f64::consts::PI,
        };
        let forward = Vector3::new(
            heading.cos() * pitch.cos(),
            heading.sin() * pitch.cos(),
            pitch.sin(),
        );
        let rotation = look_rotation(forward, Vector3::z());
        poses.push(
            PoseF64::new(rotation, position)
                .map_err(|e| CliError::input(format!("frame {i}: {e}")))?,
        );
    }
    Ok(poses)
}

/// Exact z-depth of the room walls along every pixel ray, via ray/slab
/// intersection from inside the (convex) box. Independent of the rasterizer.
pub fn analytic_box_depth(
    room: &Vector3<f64>,
    pose: &PoseF64,
    k: &IntrinsicsF64,
) -> DepthMapF64 {
    let origin = pose.center();
    let mut values = Vec::with_capacity(k.width as usize * k.height as usize);
    for y in 0..k.height {
        for x in 0..k.width {
            let dir_cam = k.ray_direction(&Vector2::new(x as f64, y as f64));
            let dir = pose.rotation() * dir_cam;
            let mut t_exit = f64::INFINITY;
            for axis in 0..3 {
                if dir[axis] > 1e-15 {
                    t_exit = t_exit.min((room[axis] - origin[axis]) / dir[axis]);
                } else if dir[axis] < -1e-15 {
                    t_exit = t_exit.min((0.0 - origin[axis]) / dir[axis]);
                }
            }
            debug_assert!(t_exit.is_finite() && t_exit > 0.0);
            // The ray parameter equals camera z because dir_cam.z = 1.
            values.push(t_exit);
        }
    }
    DepthMapF64::new(k.width, k.height, values).expect("analytic depths are finite")
}

/// Fixed lattice of wall points used to manufacture correspondences.
fn surface_lattice(room: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let spacing = room.amax() / 15.0;
    let margin = spacing * 0.5;
    let mut points = Vec::new();
    let mut axis_points = |fixed_axis: usize, fixed_value: f64| {
        let (a, b) = match fixed_axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut u = margin;
        while u <= room[a] - margin + 1e-9 {
            let mut v = margin;
            while v <= room[b] - margin + 1e-9 {
                let mut p = Vector3::zeros();
                p[fixed_axis] = fixed_value;
                p[a] = u;
                p[b] = v;
                points.push(p);
                v += spacing;
            }
            u += spacing;
        }
    };
    for axis in 0..3 {
        axis_points(axis, 0.0);
        axis_points(axis, room[axis]);
    }
    points
}

/// Projects the lattice into covisible frame pairs. Frame indices refer to
/// keyframe positions; the generator's trajectory makes every frame a
/// keyframe, so positions coincide with frame ids.
pub fn lattice_correspondences(
    room: &Vector3<f64>,
    poses: &[PoseF64],
    k: &IntrinsicsF64,
) -> Vec<mvrecon_core::Correspondence<f64>> {
    let lattice = surface_lattice(room);
    let mut correspondences = Vec::new();
    let visible = |point: &Vector3<f64>, f: usize| -> Option<Vector2<f64>> {
        let (pixel, depth) = mvrecon_core::project(point, &poses[f], k)?;
        (depth > MIN_ANCHOR_DEPTH && k.contains_pixel(&pixel)).then_some(pixel)
    };
    for point in &lattice {
        for f in (0..poses.len()).step_by(5) {
            for gap in [2usize, 4] {
                let g = f + gap;
                if g >= poses.len() {
                    continue;
                }
                let (Some(pixel_a), Some(pixel_b)) = (visible(point, f), visible(point, g))
                else {
                    continue;
                };
                correspondences.push(
                    mvrecon_core::Correspondence::new(f, g, pixel_a, pixel_b)
                        .expect("distinct frames"),
                );
            }
        }
    }
    correspondences
}

/// Generates the bundle directory. Returns the injected corruption record.
pub fn generate(spec: &SynthSpec, config: &PipelineConfig, out: &Path) -> CliResult<SynthRecord> {
    if spec.frames < 2 {
        return Err(CliError::input("synthetic scenes need at least 2 frames"));
    }
    if !(spec.room.min() > 1.0) {
        return Err(CliError::input(format!(
            "room extents must exceed 1 m, got {:?}",
            spec.room
        )));
    }
    if !(spec.corrupt_min > 0.0 && spec.corrupt_min <= spec.corrupt_max) {
        return Err(CliError::input(format!(
            "corruption range must satisfy 0 < min <= max, got [{}, {}]",
            spec.corrupt_min, spec.corrupt_max
        )));
    }
    let k = IntrinsicsF64::new(
        spec.focal,
        spec.focal,
        (spec.width - 1) as f64 / 2.0,
        (spec.height - 1) as f64 / 2.0,
        spec.width,
        spec.height,
    )
    .map_err(|e| CliError::input(e.to_string()))?;

    let poses = trajectory(spec)?;
    let seq = select_keyframes(&poses, config.t_max, config.r_max)
        .map_err(|e| CliError::input(e.to_string()))?;
    let submap_cfg = mvrecon_core::SubmapConfig::new(config.n, config.o)
        .map_err(|e| CliError::input(e.to_string()))?;
    let submaps = partition_submaps(&seq, &submap_cfg);

    std::fs::create_dir_all(out.join("depth")).map_err(|e| CliError::input_at(out, e))?;
    std::fs::create_dir_all(out.join("gt_depth")).map_err(|e| CliError::input_at(out, e))?;

    write_intrinsics(&out.join("intrinsics.txt"), &k)?;
    let entries: Vec<TrajectoryEntry> = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| TrajectoryEntry {
            timestamp: i as f64,
            pose: *pose,
        })
        .collect();
    write_trajectory(&out.join("poses.txt"), &entries)?;
    write_ply(&out.join("gt_mesh.ply"), &box_room_mesh(&spec.room))?;

    // Exact depths for every frame.
    let gt_depths: Vec<DepthMapF64> = poses
        .iter()
        .map(|pose| analytic_box_depth(&spec.room, pose, &k))
        .collect();
    for (frame, depth) in gt_depths.iter().enumerate() {
        write_depth(
            &out.join("gt_depth").join(frame_file_stem(frame) + ".raw"),
            depth,
        )?;
    }

    // Per-submap corrupted predictions for the selected keyframes.
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let factors: Vec<f64> = (0..submaps.len())
        .map(|_| rng.gen_range(spec.corrupt_min..=spec.corrupt_max))
        .collect();
    for submap in &submaps {
        let factor = factors[submap.index()];
        for position in submap.positions() {
            let frame = seq.frame_id(position);
            let corrupted = gt_depths[frame].map_valid(|d| d * factor);
            let name = submap_frame_file_stem(frame, submap.index()) + ".raw";
            write_depth(&out.join("depth").join(name), &corrupted)?;
        }
    }
    write_injected_scales(&out.join("injected_scales.txt"), &factors)?;

    let correspondences = lattice_correspondences(&spec.room, &poses, &k);
    write_correspondences(&out.join("correspondences.txt"), &correspondences)?;

    Ok(SynthRecord {
        injected: factors,
        keyframe_count: seq.len(),
        correspondence_count: correspondences.len(),
    })
}
