//! Indexed triangle meshes in world coordinates.

use nalgebra::Vector3;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    IndexOutOfBounds {
        face: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("face {0} is degenerate (three identical indices)")]
    DegenerateFace(usize),
}

/// Vertex/face mesh, the unit of extraction, rendering, and evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh<S: Real> {
    vertices: Vec<Vector3<S>>,
    faces: Vec<[u32; 3]>,
}

impl<S: Real> TriangleMesh<S> {
    pub fn new(vertices: Vec<Vector3<S>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let vertex_count = vertices.len();
        for (face_idx, face) in faces.iter().enumerate() {
            for &index in face {
                if index as usize >= vertex_count {
                    return Err(MeshError::IndexOutOfBounds {
                        face: face_idx,
                        index,
                        vertex_count,
                    });
                }
            }
            if face[0] == face[1] && face[1] == face[2] {
                return Err(MeshError::DegenerateFace(face_idx));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    #[inline]
    pub fn vertices(&self) -> &[Vector3<S>] {
        &self.vertices
    }

    #[inline]
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_vertices(&self, face: usize) -> [Vector3<S>; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> S {
        let [a, b, c] = self.face_vertices(face);
        (b - a).cross(&(c - a)).norm() * S::of(0.5)
    }

    pub fn total_area(&self) -> S {
        (0..self.faces.len())
            .map(|f| self.face_area(f))
            .fold(S::zero(), |acc, a| acc + a)
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty vertex set.
    pub fn bounding_box(&self) -> Option<(Vector3<S>, Vector3<S>)> {
        let first = self.vertices.first()?;
        let mut min = *first;
        let mut max = *first;
        for v in &self.vertices[1..] {
            for i in 0..3 {
                min[i] = min[i].min(v[i]);
                max[i] = max[i].max(v[i]);
            }
        }
        Some((min, max))
    }
}
