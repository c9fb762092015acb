//! Z-buffer depth rendering of triangle meshes.
//!
//! Pixel centers sit at integer coordinates, matching the projection
//! convention. Coverage uses edge functions with the top-left fill rule so
//! shared edges are rasterized exactly once; z is interpolated
//! perspective-correctly by interpolating 1/z in screen space. Triangles
//! straddling the near plane are clipped, not culled, and no backface
//! culling is applied.

use rayon::prelude::*;

use nalgebra::Vector3;

use crate::camera::{Intrinsics, Pose};
use crate::depth::DepthMap;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;

/// Near-plane distance in meters; geometry closer than this is clipped away.
pub const NEAR_PLANE: f64 = 1e-4;

const ROWS_PER_BAND: usize = 8;

/// Per-pixel nearest camera-frame z; 0 marks pixels no triangle covers.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTarget<S: Real> {
    width: u32,
    height: u32,
    zbuffer: Vec<S>,
}

impl<S: Real> RenderTarget<S> {
    fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            zbuffer: vec![S::zero(); width as usize * height as usize],
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn zbuffer(&self) -> &[S] {
        &self.zbuffer
    }

    pub fn into_depth_map(self) -> DepthMap<S> {
        DepthMap::new(self.width, self.height, self.zbuffer)
            .expect("z-buffer entries are finite by construction")
    }
}

#[derive(Clone, Copy)]
struct ScreenTriangle<S: Real> {
    // Projected pixel coordinates and inverse depths, wound so the interior
    // is on the non-negative side of every edge function.
    x: [S; 3],
    y: [S; 3],
    inv_z: [S; 3],
    inv_area: S,
    min_y: i64,
    max_y: i64,
    min_x: i64,
    max_x: i64,
}

#[inline]
fn edge_function<S: Real>(ax: S, ay: S, bx: S, by: S, px: S, py: S) -> S {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Top or left edge under interior-on-positive-side winding with y pointing
/// down: top edges run towards +x, left edges towards -y.
#[inline]
fn is_top_or_left<S: Real>(ax: S, ay: S, bx: S, by: S) -> bool {
    (ay == by && bx > ax) || by < ay
}

/// Clips a camera-space triangle against the z = near plane, returning a
/// polygon of up to four vertices on the visible side.
fn clip_near<S: Real>(tri: &[Vector3<S>; 3], near: S) -> Vec<Vector3<S>> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        let cur_in = cur.z >= near;
        let next_in = next.z >= near;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (near - cur.z) / (next.z - cur.z);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

fn prepare_triangle<S: Real>(
    cam: &[Vector3<S>; 3],
    k: &Intrinsics<S>,
) -> Option<ScreenTriangle<S>> {
    let mut x = [S::zero(); 3];
    let mut y = [S::zero(); 3];
    let mut inv_z = [S::zero(); 3];
    for i in 0..3 {
        let z = cam[i].z;
        x[i] = k.fx * cam[i].x / z + k.cx;
        y[i] = k.fy * cam[i].y / z + k.cy;
        inv_z[i] = S::one() / z;
    }
    let mut area = edge_function(x[0], y[0], x[1], y[1], x[2], y[2]);
    if area == S::zero() {
        return None;
    }
    if area < S::zero() {
        x.swap(1, 2);
        y.swap(1, 2);
        inv_z.swap(1, 2);
        area = -area;
    }
    let (min_x, max_x) = (
        x[0].min(x[1]).min(x[2]),
        x[0].max(x[1]).max(x[2]),
    );
    let (min_y, max_y) = (
        y[0].min(y[1]).min(y[2]),
        y[0].max(y[1]).max(y[2]),
    );
    let last_col = k.width as i64 - 1;
    let last_row = k.height as i64 - 1;
    let min_x = (min_x.ceil().as_f64() as i64).max(0);
    let max_x = (max_x.floor().as_f64() as i64).min(last_col);
    let min_y = (min_y.ceil().as_f64() as i64).max(0);
    let max_y = (max_y.floor().as_f64() as i64).min(last_row);
    if min_x > max_x || min_y > max_y {
        return None;
    }
    Some(ScreenTriangle {
        x,
        y,
        inv_z,
        inv_area: S::one() / area,
        min_y,
        max_y,
        min_x,
        max_x,
    })
}

fn raster_rows<S: Real>(
    tri: &ScreenTriangle<S>,
    rows: std::ops::Range<usize>,
    width: usize,
    band: &mut [S],
    band_start_row: usize,
) {
    let top_left = [
        is_top_or_left(tri.x[1], tri.y[1], tri.x[2], tri.y[2]),
        is_top_or_left(tri.x[2], tri.y[2], tri.x[0], tri.y[0]),
        is_top_or_left(tri.x[0], tri.y[0], tri.x[1], tri.y[1]),
    ];
    for py in rows {
        let sy = S::of_usize(py);
        for px in tri.min_x..=tri.max_x {
            let sx = S::of(px as f64);
            let w0 = edge_function(tri.x[1], tri.y[1], tri.x[2], tri.y[2], sx, sy);
            let w1 = edge_function(tri.x[2], tri.y[2], tri.x[0], tri.y[0], sx, sy);
            let w2 = edge_function(tri.x[0], tri.y[0], tri.x[1], tri.y[1], sx, sy);
            let covered = (w0 > S::zero() || (w0 == S::zero() && top_left[0]))
                && (w1 > S::zero() || (w1 == S::zero() && top_left[1]))
                && (w2 > S::zero() || (w2 == S::zero() && top_left[2]));
            if !covered {
                continue;
            }
            let l0 = w0 * tri.inv_area;
            let l1 = w1 * tri.inv_area;
            let l2 = w2 * tri.inv_area;
            let inv_z = l0 * tri.inv_z[0] + l1 * tri.inv_z[1] + l2 * tri.inv_z[2];
            if inv_z <= S::zero() {
                continue;
            }
            let z = S::one() / inv_z;
            let idx = (py - band_start_row) * width + px as usize;
            let current = band[idx];
            if current == S::zero() || z < current {
                band[idx] = z;
            }
        }
    }
}

/// Renders the z-depth of `mesh` seen from `pose`: per pixel, the minimum
/// camera-frame z over all triangles covering the pixel center. Returns an
/// all-invalid map for an empty mesh.
pub fn render_depth<S: Real>(
    mesh: &TriangleMesh<S>,
    pose: &Pose<S>,
    k: &Intrinsics<S>,
) -> DepthMap<S> {
    let mut target = RenderTarget::new(k.width, k.height);
    if mesh.is_empty() {
        return target.into_depth_map();
    }

    let near = S::of(NEAR_PLANE);
    let rot_cw = pose.rotation().transpose();
    let cam_center = *pose.translation();
    let cam_vertices: Vec<Vector3<S>> = mesh
        .vertices()
        .iter()
        .map(|v| rot_cw * (v - cam_center))
        .collect();

    let mut screen_tris: Vec<ScreenTriangle<S>> = Vec::new();
    for face in mesh.faces() {
        let tri = [
            cam_vertices[face[0] as usize],
            cam_vertices[face[1] as usize],
            cam_vertices[face[2] as usize],
        ];
        if tri.iter().all(|v| v.z >= near) {
            if let Some(prepared) = prepare_triangle(&tri, k) {
                screen_tris.push(prepared);
            }
            continue;
        }
        let polygon = clip_near(&tri, near);
        if polygon.len() < 3 {
            continue;
        }
        for i in 1..polygon.len() - 1 {
            let sub = [polygon[0], polygon[i], polygon[i + 1]];
            if let Some(prepared) = prepare_triangle(&sub, k) {
                screen_tris.push(prepared);
            }
        }
    }

    let width = k.width as usize;
    let height = k.height as usize;
    target
        .zbuffer
        .par_chunks_mut(ROWS_PER_BAND * width)
        .enumerate()
        .for_each(|(band_idx, band)| {
            let band_start = band_idx * ROWS_PER_BAND;
            let band_end = (band_start + band.len() / width).min(height);
            for tri in &screen_tris {
                let rows = (tri.min_y.max(band_start as i64) as usize)
                    ..((tri.max_y + 1).min(band_end as i64).max(band_start as i64) as usize);
                if rows.is_empty() {
                    continue;
                }
                raster_rows(tri, rows, width, band, band_start);
            }
        });

    target.into_depth_map()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn camera() -> Intrinsics<f64> {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    fn single_triangle(verts: [(f64, f64, f64); 3]) -> TriangleMesh<f64> {
        let vertices = verts
            .iter()
            .map(|&(x, y, z)| Vector3::new(x, y, z))
            .collect();
        TriangleMesh::new(vertices, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn constant_depth_plane_covers_frame() {
        let mesh = single_triangle([(-10.0, -10.0, 2.0), (30.0, -10.0, 2.0), (-10.0, 30.0, 2.0)]);
        let depth = render_depth(&mesh, &Pose::identity(), &camera());
        for y in 0..101 {
            for x in 0..101 {
                assert_relative_eq!(depth.get(x, y), 2.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn nearest_surface_wins_regardless_of_submission_order() {
        let near = [(-10.0, -10.0, 1.0), (30.0, -10.0, 1.0), (-10.0, 30.0, 1.0)];
        let far = [(-20.0, -20.0, 2.0), (60.0, -20.0, 2.0), (-20.0, 60.0, 2.0)];
        let build = |tris: [[(f64, f64, f64); 3]; 2]| {
            let mut vertices = Vec::new();
            let mut faces = Vec::new();
            for tri in tris {
                let base = vertices.len() as u32;
                vertices.extend(tri.iter().map(|&(x, y, z)| Vector3::new(x, y, z)));
                faces.push([base, base + 1, base + 2]);
            }
            TriangleMesh::new(vertices, faces).unwrap()
        };
        let a = render_depth(&build([near, far]), &Pose::identity(), &camera());
        let b = render_depth(&build([far, near]), &Pose::identity(), &camera());
        assert_eq!(a, b);
        assert_relative_eq!(a.get(50, 50), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn slanted_plane_matches_ray_intersection() {
        // Plane z = 1 + 0.5 x; the ray of pixel (60, 50) has x/z = 0.1, so
        // z = 1 / 0.95.
        let mesh = single_triangle([(-1.0, -4.0, 0.5), (7.0, -4.0, 4.5), (-1.0, 4.0, 0.5)]);
        let depth = render_depth(&mesh, &Pose::identity(), &camera());
        assert_relative_eq!(depth.get(60, 50), 1.0 / 0.95, epsilon = 1e-9);
    }

    #[test]
    fn empty_mesh_renders_all_invalid() {
        let depth = render_depth(&TriangleMesh::<f64>::empty(), &Pose::identity(), &camera());
        assert!(depth.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn triangle_fully_behind_camera_is_culled() {
        let mesh = single_triangle([(-1.0, -1.0, -2.0), (1.0, -1.0, -2.0), (0.0, 1.0, -2.0)]);
        let depth = render_depth(&mesh, &Pose::identity(), &camera());
        assert!(depth.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn near_plane_straddler_is_clipped_not_culled() {
        // The visible part of this triangle contains (0, 0, 19/11) on the
        // principal ray.
        let mesh = single_triangle([(-1.0, -1.0, 2.0), (10.0, -1.0, 2.0), (-1.0, 10.0, -1.0)]);
        let depth = render_depth(&mesh, &Pose::identity(), &camera());
        assert_relative_eq!(depth.get(50, 50), 19.0 / 11.0, epsilon = 1e-9);
    }

    #[test]
    fn rendering_is_bit_deterministic() {
        let mesh = single_triangle([(-1.0, -4.0, 0.5), (7.0, -4.0, 4.5), (-1.0, 4.0, 0.5)]);
        let a = render_depth(&mesh, &Pose::identity(), &camera());
        let b = render_depth(&mesh, &Pose::identity(), &camera());
        assert_eq!(a, b);
    }

    #[test]
    fn shared_edge_pixels_are_rasterized_once_but_consistently() {
        // Two triangles forming a quad at constant depth: every interior
        // pixel must be covered exactly once with the same depth.
        let vertices = vec![
            Vector3::new(-10.0, -10.0, 2.0),
            Vector3::new(10.0, -10.0, 2.0),
            Vector3::new(10.0, 10.0, 2.0),
            Vector3::new(-10.0, 10.0, 2.0),
        ];
        let mesh = TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let depth = render_depth(&mesh, &Pose::identity(), &camera());
        for y in 0..101 {
            for x in 0..101 {
                assert_relative_eq!(depth.get(x, y), 2.0, epsilon = 1e-9);
            }
        }
    }
}
