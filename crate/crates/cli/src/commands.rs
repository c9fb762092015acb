//! CLI surface and subcommand execution.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mvrecon_core::{DepthMapF64, DepthValidityRange, PoseF64};
use nalgebra::Vector3;

use crate::bundle::{frame_file_stem, SceneBundle};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::io::depth_file::{read_depth, write_depth};
use crate::io::intrinsics::read_intrinsics;
use crate::io::ply::{read_ply, write_ply};
use crate::io::report::MetricReport;
use crate::io::tum::{read_trajectory, write_trajectory, TrajectoryEntry};
use crate::io::volume_file::{read_volume, write_volume, write_volume_dump};
use crate::pipeline::{
    run_align, run_eval_depth, run_eval_mesh, run_fuse_extract, run_render, AlignResult,
    DEFAULT_SAMPLE_DENSITY,
};
use crate::synth::{generate, SynthSpec, TrajectoryStyle};

#[derive(Parser, Debug)]
#[command(
    name = "mvrecon",
    version,
    about = "Scale alignment, TSDF fusion, mesh extraction, depth rendering, and evaluation for multi-view depth reconstruction"
)]
pub struct Cli {
    /// Pipeline config file (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset profile: generic (n=8) or scannet (n=16).
    #[arg(long, global = true, default_value = "generic")]
    pub profile: String,
    /// Seed for the synthetic generator and mesh sampling.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Write the scale-graph diagnostic dump to this path during align.
    #[arg(long, global = true)]
    pub dump_graph: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic box-room bundle with known corruption.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        /// Room extents, e.g. 6x4x3 (meters).
        #[arg(long, default_value = "6x4x3")]
        room: String,
        #[arg(long, default_value = "inward")]
        style: String,
        #[arg(long, default_value_t = 0.5)]
        corrupt_min: f64,
        #[arg(long, default_value_t = 2.0)]
        corrupt_max: f64,
        #[arg(long, default_value_t = 80)]
        width: u32,
        #[arg(long, default_value_t = 60)]
        height: u32,
        #[arg(long, default_value_t = 46.0)]
        focal: f64,
    },
    /// Recover per-submap scales and write aligned keyframe depths.
    Align {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse aligned depths into a TSDF volume.
    Fuse {
        /// Directory of aligned depth maps (one per pose, sorted by name).
        #[arg(long)]
        depths: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the raw tsdf debug dump.
        #[arg(long)]
        dump_volume: Option<PathBuf>,
    },
    /// Extract the iso-surface mesh from a fused volume.
    Extract {
        #[arg(long)]
        volume: PathBuf,
        /// Output mesh path (.ply).
        #[arg(long)]
        out: PathBuf,
    },
    /// Render mesh z-depth maps at given poses.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predicted mesh against a ground-truth mesh.
    EvalMesh {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Precision/recall threshold in meters (default: config tau).
        #[arg(long)]
        tau: Option<f64>,
        /// Surface sampling density in points per square meter.
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted depth maps against ground-truth depth maps
    /// (directories paired by file name).
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run align, fuse, extract, render, and evaluation in sequence.
    Pipeline {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_volume: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let base = PipelineConfig::for_profile(&cli.profile)?;
    match &cli.config {
        Some(path) => PipelineConfig::load(path, base),
        None => Ok(base),
    }
}

fn parse_room(text: &str) -> CliResult<Vector3<f64>> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(CliError::input(format!(
            "room must be WxDxH (e.g. 6x4x3), got '{text}'"
        )));
    }
    let mut dims = [0.0; 3];
    for (i, part) in parts.iter().enumerate() {
        dims[i] = part
            .parse()
            .map_err(|_| CliError::input(format!("room extent '{part}' is not a number")))?;
    }
    Ok(Vector3::new(dims[0], dims[1], dims[2]))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::input_at(path, e))
}

fn write_align_outputs(out: &Path, result: &AlignResult) -> CliResult<()> {
    let aligned_dir = out.join("aligned");
    create_dir(&aligned_dir)?;
    for (position, depth) in result.aligned.iter().enumerate() {
        write_depth(&aligned_dir.join(frame_file_stem(position) + ".raw"), depth)?;
    }
    let entries: Vec<TrajectoryEntry> = result
        .keyframes
        .entries()
        .iter()
        .map(|kf| TrajectoryEntry {
            timestamp: kf.frame_id as f64,
            pose: kf.pose,
        })
        .collect();
    write_trajectory(&out.join("keyframes.txt"), &entries)?;
    std::fs::write(out.join("scales.txt"), result.scales_report())
        .map_err(|e| CliError::input_at(out, e))?;
    Ok(())
}

/// Lists depth files in a directory sorted by name.
fn list_depth_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::input_at(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("raw") | Some("png")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::input_at(dir, "no .raw or .png depth files found"));
    }
    Ok(files)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Synth {
            out,
            frames,
            room,
            style,
            corrupt_min,
            corrupt_max,
            width,
            height,
            focal,
        } => {
            let spec = SynthSpec {
                room: parse_room(room)?,
                frames: *frames,
                style: style.parse::<TrajectoryStyle>()?,
                corrupt_min: *corrupt_min,
                corrupt_max: *corrupt_max,
                seed: cli.seed,
                width: *width,
                height: *height,
                focal: *focal,
            };
            create_dir(out)?;
            let record = generate(&spec, &config, out)?;
            println!(
                "synth: {} keyframes, {} submaps, {} correspondences -> {}",
                record.keyframe_count,
                record.injected.len(),
                record.correspondence_count,
                out.display()
            );
            Ok(())
        }
        Command::Align { bundle, out } => {
            let bundle = SceneBundle::load(bundle)?;
            let result = run_align(&bundle, &config)?;
            create_dir(out)?;
            write_align_outputs(out, &result)?;
            if let Some(path) = &cli.dump_graph {
                std::fs::write(path, result.graph_dump())
                    .map_err(|e| CliError::input_at(path, e))?;
            }
            println!(
                "align: {} keyframes, {} submaps, final cost {:.3e}",
                result.keyframes.len(),
                result.submaps.len(),
                result.solution.final_cost()
            );
            for (m, s) in result.solution.scales().iter().enumerate() {
                let flag = if result.low_confidence[m] { " (low confidence)" } else { "" };
                println!("  submap {m}: s0 {:.6} -> s* {s:.6}{flag}", result.initial_scales[m]);
            }
            Ok(())
        }
        Command::Fuse {
            depths,
            poses,
            intrinsics,
            out,
            dump_volume,
        } => {
            let k = read_intrinsics(intrinsics)?;
            let entries = read_trajectory(poses)?;
            let files = list_depth_files(depths)?;
            if files.len() != entries.len() {
                return Err(CliError::input(format!(
                    "{} depth files vs {} poses",
                    files.len(),
                    entries.len()
                )));
            }
            let maps: Vec<DepthMapF64> =
                files.iter().map(|p| read_depth(p)).collect::<CliResult<_>>()?;
            let pose_list: Vec<PoseF64> = entries.iter().map(|e| e.pose).collect();
            let (_, volume) = run_fuse_extract(&maps, &pose_list, &k, &config)?;
            create_dir(out)?;
            let volume_path = out.join("volume.tsdf");
            write_volume(&volume_path, &volume)?;
            if let Some(path) = dump_volume {
                write_volume_dump(path, &volume)?;
            }
            println!(
                "fuse: {} frames into {:?} voxels ({} observed) -> {}",
                maps.len(),
                volume.dims(),
                volume.observed_voxels(),
                volume_path.display()
            );
            Ok(())
        }
        Command::Extract { volume, out } => {
            let volume = read_volume(volume)?;
            let mesh = volume.extract_mesh();
            write_ply(out, &mesh)?;
            println!(
                "extract: {} vertices, {} faces -> {}",
                mesh.vertices().len(),
                mesh.faces().len(),
                out.display()
            );
            Ok(())
        }
        Command::Render {
            mesh,
            poses,
            intrinsics,
            out,
        } => {
            let mesh = read_ply(mesh)?;
            let k = read_intrinsics(intrinsics)?;
            let entries = read_trajectory(poses)?;
            create_dir(out)?;
            let pose_list: Vec<PoseF64> = entries.iter().map(|e| e.pose).collect();
            let rendered = run_render(&mesh, &pose_list, &k);
            for (i, depth) in rendered.iter().enumerate() {
                write_depth(&out.join(frame_file_stem(i) + ".raw"), depth)?;
            }
            println!("render: {} depth maps -> {}", rendered.len(), out.display());
            Ok(())
        }
        Command::EvalMesh {
            pred,
            gt,
            tau,
            density,
            out,
        } => {
            let pred_mesh = read_ply(pred)?;
            let gt_mesh = read_ply(gt)?;
            let metrics = run_eval_mesh(
                &pred_mesh,
                &gt_mesh,
                tau.unwrap_or(config.tau),
                density.unwrap_or(DEFAULT_SAMPLE_DENSITY),
                cli.seed,
            )?;
            let report = MetricReport {
                mesh: Some(metrics),
                depth: None,
            };
            print!("{}", report.render());
            if let Some(path) = out {
                report.write(path)?;
            }
            Ok(())
        }
        Command::EvalDepth { pred, gt, out } => {
            let pred_files = list_depth_files(pred)?;
            let gt_files = list_depth_files(gt)?;
            let gt_names: std::collections::BTreeMap<String, &PathBuf> = gt_files
                .iter()
                .filter_map(|p| p.file_name().map(|n| (n.to_string_lossy().into_owned(), p)))
                .collect();
            let mut pred_maps = Vec::new();
            let mut gt_maps = Vec::new();
            for p in &pred_files {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                if let Some(gt_path) = gt_names.get(&name) {
                    pred_maps.push(read_depth(p)?);
                    gt_maps.push(read_depth(gt_path)?);
                }
            }
            if pred_maps.is_empty() {
                return Err(CliError::input(
                    "no file names shared between the two depth directories".to_string(),
                ));
            }
            let range = DepthValidityRange::new(config.epsilon, config.d_max)
                .map_err(|e| CliError::input(e.to_string()))?;
            let metrics = run_eval_depth(&pred_maps, &gt_maps, &range)?;
            let report = MetricReport {
                mesh: None,
                depth: Some(metrics),
            };
            print!("{}", report.render());
            if let Some(path) = out {
                report.write(path)?;
            }
            Ok(())
        }
        Command::Pipeline {
            bundle,
            out,
            dump_volume,
        } => {
            let bundle = SceneBundle::load(bundle)?;
            create_dir(out)?;

            let result = run_align(&bundle, &config)?;
            write_align_outputs(out, &result)?;
            if let Some(path) = &cli.dump_graph {
                std::fs::write(path, result.graph_dump())
                    .map_err(|e| CliError::input_at(path, e))?;
            }

            let kf_poses: Vec<PoseF64> = result
                .keyframes
                .entries()
                .iter()
                .map(|kf| kf.pose)
                .collect();
            let (mesh, volume) =
                run_fuse_extract(&result.aligned, &kf_poses, &bundle.intrinsics, &config)?;
            write_ply(&out.join("mesh.ply"), &mesh)?;
            if let Some(path) = dump_volume {
                write_volume_dump(path, &volume)?;
            }

            let rendered_dir = out.join("rendered");
            create_dir(&rendered_dir)?;
            let rendered = run_render(&mesh, &kf_poses, &bundle.intrinsics);
            for (i, depth) in rendered.iter().enumerate() {
                write_depth(&rendered_dir.join(frame_file_stem(i) + ".raw"), depth)?;
            }

            // Evaluate against whatever ground truth the bundle carries.
            let mut report = MetricReport::default();
            let gt_mesh_path = bundle.gt_mesh_path();
            if gt_mesh_path.is_file() {
                let gt_mesh = read_ply(&gt_mesh_path)?;
                report.mesh = Some(run_eval_mesh(
                    &mesh,
                    &gt_mesh,
                    config.tau,
                    DEFAULT_SAMPLE_DENSITY,
                    cli.seed,
                )?);
            }
            if bundle.gt_depth_dir().is_dir() {
                let mut gt_maps = Vec::new();
                for position in 0..result.keyframes.len() {
                    let frame = result.keyframes.frame_id(position);
                    gt_maps.push(bundle.load_gt_depth(frame)?);
                }
                let range = DepthValidityRange::new(config.epsilon, config.d_max)
                    .map_err(|e| CliError::input(e.to_string()))?;
                report.depth = Some(run_eval_depth(&rendered, &gt_maps, &range)?);
            }
            report.write(&out.join("report.txt"))?;
            print!("{}", report.render());
            println!(
                "pipeline: mesh {} vertices / {} faces, outputs in {}",
                mesh.vertices().len(),
                mesh.faces().len(),
                out.display()
            );
            Ok(())
        }
    }
}
