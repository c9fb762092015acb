//! Pinhole camera model and rigid camera poses.
//!
//! Poses are camera-to-world transforms stored as rotation matrix plus
//! translation; quaternions appear only at file boundaries. Depth is z-depth
//! along the optical axis, not ray length.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("focal lengths must be positive, got fx={fx} fy={fy}")]
    InvalidFocal { fx: f64, fy: f64 },
    #[error("principal point ({cx}, {cy}) outside image {width}x{height}")]
    PrincipalPointOutside {
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    },
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("rotation is not orthonormal with determinant +1 (deviation {deviation:.3e})")]
    NotARotation { deviation: f64 },
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point coordinates must be finite")]
    NonFinitePoint,
}

/// Pinhole projection parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<S: Real> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
}

impl<S: Real> Intrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S, width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage);
        }
        if fx <= S::zero() || fy <= S::zero() {
            return Err(GeometryError::InvalidFocal {
                fx: fx.as_f64(),
                fy: fy.as_f64(),
            });
        }
        let in_x = cx >= S::zero() && cx < S::of_usize(width as usize);
        let in_y = cy >= S::zero() && cy < S::of_usize(height as usize);
        if !in_x || !in_y {
            return Err(GeometryError::PrincipalPointOutside {
                cx: cx.as_f64(),
                cy: cy.as_f64(),
                width,
                height,
            });
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Perspective projection of a camera-frame point. `None` when the point
    /// lies at or behind the camera plane (z <= 0). The returned pixel is a
    /// continuous coordinate and may fall outside the image.
    #[inline]
    pub fn project_camera_point(&self, p_cam: &Vector3<S>) -> Option<(Vector2<S>, S)> {
        let z = p_cam.z;
        if z <= S::zero() {
            return None;
        }
        let u = self.fx * p_cam.x / z + self.cx;
        let v = self.fy * p_cam.y / z + self.cy;
        Some((Vector2::new(u, v), z))
    }

    /// Camera-frame ray direction through a pixel, normalized to z = 1 so the
    /// ray parameter equals z-depth.
    #[inline]
    pub fn ray_direction(&self, pixel: &Vector2<S>) -> Vector3<S> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            S::one(),
        )
    }

    /// Whether a continuous pixel coordinate falls within pixel-center bounds
    /// `[0, width-1] x [0, height-1]`.
    #[inline]
    pub fn contains_pixel(&self, pixel: &Vector2<S>) -> bool {
        pixel.x >= S::zero()
            && pixel.y >= S::zero()
            && pixel.x <= S::of_usize(self.width as usize - 1)
            && pixel.y <= S::of_usize(self.height as usize - 1)
    }

    /// Rounds a continuous pixel coordinate to the nearest pixel index, or
    /// `None` when it lands outside the grid.
    #[inline]
    pub fn nearest_pixel(&self, pixel: &Vector2<S>) -> Option<(u32, u32)> {
        let u = pixel.x.round();
        let v = pixel.y.round();
        if u < S::zero() || v < S::zero() {
            return None;
        }
        let ui = u.as_f64() as u32;
        let vi = v.as_f64() as u32;
        if ui >= self.width || vi >= self.height {
            return None;
        }
        Some((ui, vi))
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<S: Real> {
    rotation: Matrix3<S>,
    translation: Vector3<S>,
}

impl<S: Real> Pose<S> {
    /// Validates that `rotation` is orthonormal with determinant +1. The
    /// tolerance adapts to the scalar width so `f32` chains stay usable.
    pub fn new(rotation: Matrix3<S>, translation: Vector3<S>) -> Result<Self, GeometryError> {
        let tol = S::of(1e-9).max(S::default_epsilon() * S::of(100.0));
        let gram = rotation.transpose() * rotation;
        let mut deviation = S::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { S::one() } else { S::zero() };
                deviation = deviation.max((gram[(i, j)] - target).abs());
            }
        }
        deviation = deviation.max((rotation.determinant() - S::one()).abs());
        if deviation > tol {
            return Err(GeometryError::NotARotation {
                deviation: deviation.as_f64(),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Skips the orthonormality check; for compositions of already-valid
    /// poses in hot paths.
    #[inline]
    pub fn from_parts_unchecked(rotation: Matrix3<S>, translation: Vector3<S>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<S> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<S> {
        &self.translation
    }

    /// Camera center in world coordinates.
    #[inline]
    pub fn center(&self) -> Vector3<S> {
        self.translation
    }

    /// `self * other`: applies `other` first.
    #[inline]
    pub fn compose(&self, other: &Pose<S>) -> Pose<S> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn inverse(&self) -> Pose<S> {
        let rot_inv = self.rotation.transpose();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// Camera frame to world frame.
    #[inline]
    pub fn transform_point(&self, p: &Vector3<S>) -> Vector3<S> {
        self.rotation * p + self.translation
    }

    /// World frame to camera frame.
    #[inline]
    pub fn inverse_transform_point(&self, p: &Vector3<S>) -> Vector3<S> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Euclidean distance between the two camera centers.
    #[inline]
    pub fn translation_distance(&self, other: &Pose<S>) -> S {
        (self.translation - other.translation).norm()
    }

    /// Relative rotation angle in radians.
    pub fn rotation_angle_to(&self, other: &Pose<S>) -> S {
        let rel = self.rotation.transpose() * other.rotation;
        let cos = ((rel.trace() - S::one()) / S::of(2.0))
            .min(S::one())
            .max(-S::one());
        cos.acos()
    }
}

/// Projects a world point through a camera-to-world pose and intrinsics.
/// Returns the continuous pixel coordinate and the camera-frame z-depth, or
/// `None` when the point lies at or behind the camera (z <= 0).
pub fn project<S: Real>(
    point: &Vector3<S>,
    pose: &Pose<S>,
    k: &Intrinsics<S>,
) -> Option<(Vector2<S>, S)> {
    let p_cam = pose.inverse_transform_point(point);
    k.project_camera_point(&p_cam)
}

/// Lifts a pixel observation with known z-depth back into the world frame.
pub fn backproject<S: Real>(
    pixel: &Vector2<S>,
    depth: S,
    pose: &Pose<S>,
    k: &Intrinsics<S>,
) -> Result<Vector3<S>, GeometryError> {
    if depth <= S::zero() {
        return Err(GeometryError::NonPositiveDepth(depth.as_f64()));
    }
    let p_cam = k.ray_direction(pixel) * depth;
    Ok(pose.transform_point(&p_cam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_intrinsics() -> Intrinsics<f64> {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn principal_ray_projects_to_center() {
        let k = test_intrinsics();
        let (pixel, depth) = project(&Vector3::new(0.0, 0.0, 2.0), &Pose::identity(), &k).unwrap();
        assert_eq!(pixel, Vector2::new(50.0, 50.0));
        assert_eq!(depth, 2.0);
    }

    #[test]
    fn off_axis_point_follows_pinhole_formula() {
        // u = fx * x / z + cx = 100 * 0.5 + 50 = 100
        let k = test_intrinsics();
        let (pixel, depth) = project(&Vector3::new(1.0, 0.0, 2.0), &Pose::identity(), &k).unwrap();
        assert_relative_eq!(pixel.x, 100.0, epsilon = 1e-12);
        assert_relative_eq!(pixel.y, 50.0, epsilon = 1e-12);
        assert_eq!(depth, 2.0);
    }

    #[test]
    fn point_behind_camera_is_flagged() {
        let k = test_intrinsics();
        assert!(project(&Vector3::new(0.0, 0.0, -1.0), &Pose::identity(), &k).is_none());
        assert!(project(&Vector3::new(0.0, 0.0, 0.0), &Pose::identity(), &k).is_none());
    }

    #[test]
    fn backproject_inverts_projection() {
        let k = test_intrinsics();
        let p = backproject(&Vector2::new(50.0, 50.0), 2.0, &Pose::identity(), &k).unwrap();
        assert_relative_eq!(p, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);

        let p = backproject(&Vector2::new(100.0, 50.0), 2.0, &Pose::identity(), &k).unwrap();
        assert_relative_eq!(p, Vector3::new(1.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn backproject_rejects_non_positive_depth() {
        let k = test_intrinsics();
        assert!(matches!(
            backproject(&Vector2::new(50.0, 50.0), 0.0, &Pose::identity(), &k),
            Err(GeometryError::NonPositiveDepth(_))
        ));
        assert!(matches!(
            backproject(&Vector2::new(50.0, 50.0), -1.0, &Pose::identity(), &k),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn pose_inverse_composes_to_identity() {
        let axis = Vector3::new(0.3, -0.2, 0.9).normalize();
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 0.7)
            .into_inner();
        let pose = Pose::new(rot, Vector3::new(1.0, -2.0, 0.5)).unwrap();
        let id = pose.compose(&pose.inverse());
        assert_relative_eq!(id.rotation(), &Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(id.translation(), &Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.5;
        assert!(matches!(
            Pose::new(m, Vector3::zeros()),
            Err(GeometryError::NotARotation { .. })
        ));
    }

    #[test]
    fn generic_over_f32() {
        let k = Intrinsics::<f32>::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap();
        let (pixel, _) = project(&Vector3::new(0.0, 0.0, 2.0), &Pose::identity(), &k).unwrap();
        assert_eq!(pixel, Vector2::new(50.0, 50.0));
    }
}
