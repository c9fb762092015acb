//! Truncated signed distance fusion with running-average integration and
//! marching cubes surface extraction.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{backproject, Intrinsics, Pose};
use crate::depth::{DepthMap, DepthValidityRange};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use crate::tsdf_tables::{CORNER_OFFSETS, EDGE_ENDPOINTS, EDGE_TABLE, TRIANGLE_TABLE};

/// Hard ceiling on voxel count; two scalar arrays per voxel.
const MAX_VOXELS: usize = 200_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsdfError {
    #[error("voxel size must be positive, got {0}")]
    InvalidVoxelSize(f64),
    #[error("truncation {truncation} must be at least one voxel {voxel_size}")]
    TruncationTooSmall { truncation: f64, voxel_size: f64 },
    #[error("volume of {nx}x{ny}x{nz} voxels exceeds the {max} voxel limit")]
    VolumeTooLarge {
        nx: usize,
        ny: usize,
        nz: usize,
        max: usize,
    },
    #[error("volume has no dimensions")]
    EmptyDims,
}

/// Dense voxel grid of truncated signed distances with running-average
/// weights. Voxel `(x, y, z)` sits at `origin + (x, y, z) * voxel_size`;
/// storage is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume<S: Real> {
    origin: Vector3<S>,
    voxel_size: S,
    dims: [usize; 3],
    tsdf: Vec<S>,
    weight: Vec<S>,
    truncation: S,
    weight_cap: S,
}

impl<S: Real> TsdfVolume<S> {
    pub const DEFAULT_WEIGHT_CAP: f64 = 128.0;

    pub fn new(
        origin: Vector3<S>,
        voxel_size: S,
        dims: [usize; 3],
        truncation: S,
    ) -> Result<Self, TsdfError> {
        if !(voxel_size > S::zero()) {
            return Err(TsdfError::InvalidVoxelSize(voxel_size.as_f64()));
        }
        if truncation < voxel_size {
            return Err(TsdfError::TruncationTooSmall {
                truncation: truncation.as_f64(),
                voxel_size: voxel_size.as_f64(),
            });
        }
        let [nx, ny, nz] = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(TsdfError::EmptyDims);
        }
        let count = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .filter(|&v| v <= MAX_VOXELS)
            .ok_or(TsdfError::VolumeTooLarge {
                nx,
                ny,
                nz,
                max: MAX_VOXELS,
            })?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            tsdf: vec![S::zero(); count],
            weight: vec![S::zero(); count],
            truncation,
            weight_cap: S::of(Self::DEFAULT_WEIGHT_CAP),
        })
    }

    #[inline]
    pub fn origin(&self) -> Vector3<S> {
        self.origin
    }

    #[inline]
    pub fn voxel_size(&self) -> S {
        self.voxel_size
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn truncation(&self) -> S {
        self.truncation
    }

    #[inline]
    pub fn tsdf_values(&self) -> &[S] {
        &self.tsdf
    }

    #[inline]
    pub fn weights(&self) -> &[S] {
        &self.weight
    }

    #[inline]
    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<S> {
        self.origin
            + Vector3::new(
                S::of_usize(x) * self.voxel_size,
                S::of_usize(y) * self.voxel_size,
                S::of_usize(z) * self.voxel_size,
            )
    }

    #[inline]
    pub fn tsdf_at(&self, x: usize, y: usize, z: usize) -> S {
        self.tsdf[self.index(x, y, z)]
    }

    #[inline]
    pub fn weight_at(&self, x: usize, y: usize, z: usize) -> S {
        self.weight[self.index(x, y, z)]
    }

    /// Test-support hook: writes one voxel directly.
    pub fn set_voxel(&mut self, x: usize, y: usize, z: usize, tsdf: S, weight: S) {
        let idx = self.index(x, y, z);
        self.tsdf[idx] = tsdf;
        self.weight[idx] = weight;
    }

    pub fn observed_voxels(&self) -> usize {
        self.weight.iter().filter(|&&w| w > S::zero()).count()
    }

    /// Fuses one depth map. Every voxel whose center projects onto a valid
    /// depth pixel in front of the camera is updated by the running average
    /// `tsdf <- (tsdf * w + d_new) / (w + 1)` with the distance clamped to
    /// `[-1, 1]` after division by the truncation band. Voxels deeper than
    /// one truncation behind the surface are left untouched.
    pub fn integrate(
        &mut self,
        depth: &DepthMap<S>,
        pose: &Pose<S>,
        k: &Intrinsics<S>,
        range: &DepthValidityRange<S>,
    ) {
        let [nx, ny, _] = self.dims;
        let layer = nx * ny;
        let rot_cw = pose.rotation().transpose();
        let cam_center = *pose.translation();
        let origin = self.origin;
        let voxel_size = self.voxel_size;
        let truncation = self.truncation;
        let weight_cap = self.weight_cap;
        let one = S::one();

        self.tsdf
            .par_chunks_mut(layer)
            .zip(self.weight.par_chunks_mut(layer))
            .enumerate()
            .for_each(|(z, (tsdf_layer, weight_layer))| {
                let pz = origin.z + S::of_usize(z) * voxel_size;
                for y in 0..ny {
                    let py = origin.y + S::of_usize(y) * voxel_size;
                    for x in 0..nx {
                        let px = origin.x + S::of_usize(x) * voxel_size;
                        let world = Vector3::new(px, py, pz);
                        let cam = rot_cw * (world - cam_center);
                        if cam.z <= S::zero() {
                            continue;
                        }
                        let Some((pixel, _)) = k.project_camera_point(&cam) else {
                            continue;
                        };
                        let Some((ui, vi)) = k.nearest_pixel(&pixel) else {
                            continue;
                        };
                        let d = depth.get(ui, vi);
                        if d <= S::zero() || !range.contains(d) {
                            continue;
                        }
                        let sdf = d - cam.z;
                        if sdf <= -truncation {
                            continue;
                        }
                        let d_new = (sdf / truncation).min(one).max(-one);
                        let idx = y * nx + x;
                        let w = weight_layer[idx];
                        tsdf_layer[idx] = (tsdf_layer[idx] * w + d_new) / (w + one);
                        weight_layer[idx] = (w + one).min(weight_cap);
                    }
                }
            });
    }

    /// Marching cubes over observed voxels: cubes with any unobserved corner
    /// are skipped; vertices are interpolated to the zero crossing and shared
    /// along cube edges. Returns an empty mesh when no sign change exists.
    pub fn extract_mesh(&self) -> TriangleMesh<S> {
        let [nx, ny, nz] = self.dims;
        if nx < 2 || ny < 2 || nz < 2 {
            return TriangleMesh::empty();
        }
        let mut vertices: Vec<Vector3<S>> = Vec::new();
        let mut faces: Vec<[u32; 3]> = Vec::new();
        // Key: (min corner of the edge, axis 0/1/2).
        let mut edge_vertices: HashMap<(usize, usize, usize, u8), u32> = HashMap::new();

        for z in 0..nz - 1 {
            for y in 0..ny - 1 {
                for x in 0..nx - 1 {
                    let mut values = [S::zero(); 8];
                    let mut observed = true;
                    for (c, offset) in CORNER_OFFSETS.iter().enumerate() {
                        let (cx, cy, cz) = (x + offset[0], y + offset[1], z + offset[2]);
                        if self.weight_at(cx, cy, cz) <= S::zero() {
                            observed = false;
                            break;
                        }
                        values[c] = self.tsdf_at(cx, cy, cz);
                    }
                    if !observed {
                        continue;
                    }
                    let mut case = 0usize;
                    for (c, v) in values.iter().enumerate() {
                        if *v < S::zero() {
                            case |= 1 << c;
                        }
                    }
                    if EDGE_TABLE[case] == 0 {
                        continue;
                    }

                    let mut cube_edge_vertex = [u32::MAX; 12];
                    for edge in 0..12 {
                        if EDGE_TABLE[case] & (1 << edge) == 0 {
                            continue;
                        }
                        let [a, b] = EDGE_ENDPOINTS[edge];
                        let oa = CORNER_OFFSETS[a];
                        let ob = CORNER_OFFSETS[b];
                        let ca = (x + oa[0], y + oa[1], z + oa[2]);
                        let cb = (x + ob[0], y + ob[1], z + ob[2]);
                        let (emin, emax) = if ca <= cb { (ca, cb) } else { (cb, ca) };
                        let axis = if emax.0 > emin.0 {
                            0u8
                        } else if emax.1 > emin.1 {
                            1
                        } else {
                            2
                        };
                        let key = (emin.0, emin.1, emin.2, axis);
                        let index = *edge_vertices.entry(key).or_insert_with(|| {
                            let va = values[a];
                            let vb = values[b];
                            let t = va / (va - vb);
                            let pa = self.voxel_center(ca.0, ca.1, ca.2);
                            let pb = self.voxel_center(cb.0, cb.1, cb.2);
                            let pos = pa + (pb - pa) * t;
                            vertices.push(pos);
                            (vertices.len() - 1) as u32
                        });
                        cube_edge_vertex[edge] = index;
                    }

                    let tris = &TRIANGLE_TABLE[case];
                    let mut i = 0;
                    while tris[i] >= 0 {
                        let v0 = cube_edge_vertex[tris[i] as usize];
                        let v1 = cube_edge_vertex[tris[i + 1] as usize];
                        let v2 = cube_edge_vertex[tris[i + 2] as usize];
                        // Interpolation at t = 0 or 1 can collapse an edge.
                        if v0 != v1 && v1 != v2 && v0 != v2 {
                            faces.push([v0, v1, v2]);
                        }
                        i += 3;
                    }
                }
            }
        }
        TriangleMesh::new(vertices, faces).expect("indices are constructed in range")
    }
}

/// Axis-aligned bounds enclosing every valid, range-gated depth sample,
/// padded by the truncation distance. Returns the volume origin and grid
/// dimensions, or `None` when no sample qualifies.
pub fn fit_bounds<S: Real>(
    depths: &[DepthMap<S>],
    poses: &[Pose<S>],
    k: &Intrinsics<S>,
    range: &DepthValidityRange<S>,
    voxel_size: S,
    truncation: S,
) -> Option<(Vector3<S>, [usize; 3])> {
    let mut min = Vector3::repeat(S::max_value().unwrap_or_else(S::one));
    let mut max = -min;
    let mut any = false;
    for (depth, pose) in depths.iter().zip(poses) {
        for (x, y, d) in depth.iter_valid() {
            if !range.contains(d) {
                continue;
            }
            let pixel = nalgebra::Vector2::new(S::of_usize(x as usize), S::of_usize(y as usize));
            let world = backproject(&pixel, d, pose, k).expect("depth > 0");
            for i in 0..3 {
                min[i] = min[i].min(world[i]);
                max[i] = max[i].max(world[i]);
            }
            any = true;
        }
    }
    if !any {
        return None;
    }
    let origin = min - Vector3::repeat(truncation);
    let top = max + Vector3::repeat(truncation);
    let mut dims = [0usize; 3];
    for i in 0..3 {
        let extent = (top[i] - origin[i]) / voxel_size;
        dims[i] = extent.ceil().as_f64() as usize + 1;
    }
    Some((origin, dims))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn camera() -> Intrinsics<f64> {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    fn range() -> DepthValidityRange<f64> {
        DepthValidityRange::new(0.05, 10.0).unwrap()
    }

    fn constant_depth(value: f64) -> DepthMap<f64> {
        DepthMap::new(101, 101, vec![value; 101 * 101]).unwrap()
    }

    #[test]
    fn truncation_formula_on_first_observation() {
        // Voxel 0.1 m in front of a surface at depth 1.0, truncation 0.12.
        let mut vol = TsdfVolume::new(Vector3::new(0.0, 0.0, 0.9), 0.04, [1, 1, 1], 0.12).unwrap();
        vol.integrate(&constant_depth(1.0), &Pose::identity(), &camera(), &range());
        assert_relative_eq!(vol.tsdf_at(0, 0, 0), 0.1 / 0.12, epsilon = 1e-12);
        assert_eq!(vol.weight_at(0, 0, 0), 1.0);
    }

    #[test]
    fn running_average_of_two_observations() {
        let mut vol = TsdfVolume::new(Vector3::new(0.0, 0.0, 0.9), 0.04, [1, 1, 1], 0.12).unwrap();
        // sdf 0.06 -> 0.5, then sdf 0.12 -> 1.0.
        vol.integrate(&constant_depth(0.96), &Pose::identity(), &camera(), &range());
        vol.integrate(&constant_depth(1.02), &Pose::identity(), &camera(), &range());
        assert_relative_eq!(vol.tsdf_at(0, 0, 0), 0.75, epsilon = 1e-12);
        assert_eq!(vol.weight_at(0, 0, 0), 2.0);
    }

    #[test]
    fn voxel_far_behind_surface_is_untouched() {
        let mut vol = TsdfVolume::new(Vector3::new(0.0, 0.0, 1.3), 0.04, [1, 1, 1], 0.12).unwrap();
        vol.integrate(&constant_depth(1.0), &Pose::identity(), &camera(), &range());
        assert_eq!(vol.tsdf_at(0, 0, 0), 0.0);
        assert_eq!(vol.weight_at(0, 0, 0), 0.0);
    }

    #[test]
    fn sign_convention_free_space_positive() {
        let mut vol = TsdfVolume::new(Vector3::new(0.0, 0.0, 1.9), 0.04, [1, 1, 4], 0.12).unwrap();
        // Surface at z = 2.0; voxels at z = 1.9, 1.94, 1.98, 2.02.
        vol.integrate(&constant_depth(2.0), &Pose::identity(), &camera(), &range());
        assert!(vol.tsdf_at(0, 0, 0) > 0.0);
        assert!(vol.tsdf_at(0, 0, 3) < 0.0);
    }

    #[test]
    fn all_positive_field_extracts_empty_mesh() {
        let mut vol =
            TsdfVolume::new(Vector3::zeros(), 0.1, [4, 4, 4], 0.12).unwrap();
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    vol.set_voxel(x, y, z, 1.0, 1.0);
                }
            }
        }
        assert!(vol.extract_mesh().is_empty());
    }

    #[test]
    fn analytic_plane_is_recovered_at_exact_height() {
        let trunc = 0.12;
        let mut vol = TsdfVolume::new(Vector3::zeros(), 0.1, [16, 16, 16], trunc).unwrap();
        for z in 0..16 {
            for y in 0..16 {
                for x in 0..16 {
                    let height = z as f64 * 0.1;
                    let sdf = ((height - 0.5) / trunc).clamp(-1.0, 1.0);
                    vol.set_voxel(x, y, z, sdf, 1.0);
                }
            }
        }
        let mesh = vol.extract_mesh();
        assert!(!mesh.is_empty());
        for v in mesh.vertices() {
            assert_relative_eq!(v.z, 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_negative_corner_yields_midpoint_triangle() {
        let mut vol = TsdfVolume::new(Vector3::zeros(), 1.0, [2, 2, 2], 1.0).unwrap();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let value = if (x, y, z) == (0, 0, 0) { -0.5 } else { 0.5 };
                    vol.set_voxel(x, y, z, value, 1.0);
                }
            }
        }
        let mesh = vol.extract_mesh();
        assert_eq!(mesh.faces().len(), 1);
        let mut got: Vec<_> = mesh
            .vertices()
            .iter()
            .map(|v| (v.x, v.y, v.z))
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [(0.0, 0.0, 0.5), (0.0, 0.5, 0.0), (0.5, 0.0, 0.0)];
        for ((gx, gy, gz), (ex, ey, ez)) in got.iter().zip(expected) {
            assert_relative_eq!(*gx, ex, epsilon = 1e-12);
            assert_relative_eq!(*gy, ey, epsilon = 1e-12);
            assert_relative_eq!(*gz, ez, epsilon = 1e-12);
        }
    }

    #[test]
    fn cubes_touching_unobserved_voxels_are_skipped() {
        let mut vol = TsdfVolume::new(Vector3::zeros(), 1.0, [2, 2, 2], 1.0).unwrap();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let value = if (x, y, z) == (0, 0, 0) { -0.5 } else { 0.5 };
                    let weight = if (x, y, z) == (1, 1, 1) { 0.0 } else { 1.0 };
                    vol.set_voxel(x, y, z, value, weight);
                }
            }
        }
        assert!(vol.extract_mesh().is_empty());
    }

    #[test]
    fn integration_order_does_not_change_the_average() {
        let depths = [
            constant_depth(0.96),
            constant_depth(1.0),
            constant_depth(1.02),
        ];
        let mut orders = vec![[0usize, 1, 2], [2, 1, 0], [1, 2, 0]];
        let mut results = Vec::new();
        for order in orders.drain(..) {
            let mut vol =
                TsdfVolume::new(Vector3::new(0.0, 0.0, 0.9), 0.04, [1, 1, 1], 0.12).unwrap();
            for idx in order {
                vol.integrate(&depths[idx], &Pose::identity(), &camera(), &range());
            }
            results.push(vol.tsdf_at(0, 0, 0));
        }
        for r in &results[1..] {
            assert_relative_eq!(*r, results[0], epsilon = 1e-6);
        }
    }

    #[test]
    fn bounds_enclose_backprojected_samples_with_truncation_pad() {
        let mut depth = DepthMap::invalid(101, 101);
        depth.set(50, 50, 2.0);
        let (origin, dims) = fit_bounds(
            &[depth],
            &[Pose::identity()],
            &camera(),
            &range(),
            0.04,
            0.12,
        )
        .unwrap();
        // Sample back-projects to (0, 0, 2); padding is one truncation.
        assert_relative_eq!(origin.x, -0.12, epsilon = 1e-12);
        assert_relative_eq!(origin.z, 2.0 - 0.12, epsilon = 1e-12);
        assert!(dims.iter().all(|&d| d >= 7));
    }

    #[test]
    fn no_valid_samples_means_no_bounds() {
        let depth = DepthMap::invalid(101, 101);
        assert!(fit_bounds(
            &[depth],
            &[Pose::identity()],
            &camera(),
            &range(),
            0.04,
            0.12
        )
        .is_none());
    }
}
