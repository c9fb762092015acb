//! Sparse anchor triangulation and per-submap initial scale recovery.
//!
//! Correspondences are consumed as input; each accepted triangulation yields
//! one anchor per view carrying that view's z-depth. The initial scale of a
//! submap is the robust median ratio between triangulated depths and the
//! predicted depths sampled at the anchor pixels.

use nalgebra::Vector2;
use thiserror::Error;

use crate::camera::{project, Intrinsics, Pose};
use crate::depth::DepthMap;
use crate::robust::lower_median;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("correspondence endpoints must be distinct frames, got {0} twice")]
    SelfCorrespondence(usize),
    #[error("correspondence pixel ({u}, {v}) outside image {width}x{height}")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("no anchor landed on a valid predicted depth")]
    NoValidAnchors,
}

/// Rejection reasons for a two-view triangulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriangulateError {
    #[error("rays are parallel within 1e-12; baseline is degenerate")]
    DegenerateBaseline,
    #[error("triangulated point has non-positive depth in at least one view")]
    ChiralityReject,
    #[error("reprojection error {error_px:.3} px exceeds the {max_px:.3} px gate")]
    ReprojectionReject { error_px: f64, max_px: f64 },
}

/// A pixel match between two keyframe positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<S: Real> {
    pub frame_a: usize,
    pub frame_b: usize,
    pub pixel_a: Vector2<S>,
    pub pixel_b: Vector2<S>,
}

impl<S: Real> Correspondence<S> {
    pub fn new(
        frame_a: usize,
        frame_b: usize,
        pixel_a: Vector2<S>,
        pixel_b: Vector2<S>,
    ) -> Result<Self, AnchorError> {
        if frame_a == frame_b {
            return Err(AnchorError::SelfCorrespondence(frame_a));
        }
        Ok(Self {
            frame_a,
            frame_b,
            pixel_a,
            pixel_b,
        })
    }

    /// Bounds check against the image raster.
    pub fn validate_bounds(&self, k: &Intrinsics<S>) -> Result<(), AnchorError> {
        for pixel in [&self.pixel_a, &self.pixel_b] {
            if !k.contains_pixel(pixel) {
                return Err(AnchorError::PixelOutOfBounds {
                    u: pixel.x.as_f64(),
                    v: pixel.y.as_f64(),
                    width: k.width,
                    height: k.height,
                });
            }
        }
        Ok(())
    }
}

/// A verified triangulation observed from one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulatedAnchor<S: Real> {
    /// Keyframe position of the observing view.
    pub frame: usize,
    /// Pixel at which the anchor was observed.
    pub pixel: Vector2<S>,
    /// Camera-frame z-depth of the triangulated point in this view, meters.
    pub depth_triangulated: S,
    /// Reprojection residual of the triangulated point in this view, pixels.
    pub reprojection_error: S,
}

/// Midpoint triangulation of the two pixel rays, gated by chirality (positive
/// depth along the optical axis in both views) and reprojection error. On
/// acceptance returns one anchor per view.
pub fn triangulate<S: Real>(
    corr: &Correspondence<S>,
    pose_a: &Pose<S>,
    pose_b: &Pose<S>,
    k: &Intrinsics<S>,
    max_reproj: S,
) -> Result<[TriangulatedAnchor<S>; 2], TriangulateError> {
    let origin_a = pose_a.center();
    let origin_b = pose_b.center();
    let dir_a = (pose_a.rotation() * k.ray_direction(&corr.pixel_a)).normalize();
    let dir_b = (pose_b.rotation() * k.ray_direction(&corr.pixel_b)).normalize();

    // Closest points of the two lines: minimize |o_a + s d_a - o_b - t d_b|.
    let cos = dir_a.dot(&dir_b);
    let denom = S::one() - cos * cos; // sin^2 of the ray angle
    if denom.abs() < S::of(1e-12) {
        return Err(TriangulateError::DegenerateBaseline);
    }
    let baseline = origin_b - origin_a;
    let proj_a = baseline.dot(&dir_a);
    let proj_b = baseline.dot(&dir_b);
    let t = (cos * proj_a - proj_b) / denom;
    let s = proj_a + cos * t;
    let point = (origin_a + dir_a * s + origin_b + dir_b * t) * S::of(0.5);

    let depth_a = pose_a.inverse_transform_point(&point).z;
    let depth_b = pose_b.inverse_transform_point(&point).z;
    if depth_a <= S::zero() || depth_b <= S::zero() {
        return Err(TriangulateError::ChiralityReject);
    }

    // Both projections exist: positive depth was just established.
    let (reproj_a, _) = project(&point, pose_a, k).expect("depth_a > 0");
    let (reproj_b, _) = project(&point, pose_b, k).expect("depth_b > 0");
    let err_a = (reproj_a - corr.pixel_a).norm();
    let err_b = (reproj_b - corr.pixel_b).norm();
    let worst = err_a.max(err_b);
    if worst >= max_reproj {
        return Err(TriangulateError::ReprojectionReject {
            error_px: worst.as_f64(),
            max_px: max_reproj.as_f64(),
        });
    }

    Ok([
        TriangulatedAnchor {
            frame: corr.frame_a,
            pixel: corr.pixel_a,
            depth_triangulated: depth_a,
            reprojection_error: err_a,
        },
        TriangulatedAnchor {
            frame: corr.frame_b,
            pixel: corr.pixel_b,
            depth_triangulated: depth_b,
            reprojection_error: err_b,
        },
    ])
}

/// Initial scale of a submap: the lower-median ratio between triangulated
/// depths and nearest-neighbor samples of the predicted depth maps. Anchors
/// landing outside the grid or on invalid predictions are skipped.
pub fn initial_scale<'a, S: Real>(
    anchors: &[TriangulatedAnchor<S>],
    predicted: impl Fn(usize) -> Option<&'a DepthMap<S>>,
) -> Result<S, AnchorError> {
    let ratios: Vec<S> = anchors
        .iter()
        .filter_map(|anchor| {
            let map = predicted(anchor.frame)?;
            let d_hat = map.sample_nearest(anchor.pixel.x, anchor.pixel.y)?;
            Some(anchor.depth_triangulated / d_hat)
        })
        .collect();
    lower_median(&ratios).ok_or(AnchorError::NoValidAnchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn camera() -> Intrinsics<f64> {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    fn stereo_pair() -> (Pose<f64>, Pose<f64>) {
        (
            Pose::identity(),
            Pose::from_parts_unchecked(nalgebra::Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0)),
        )
    }

    #[test]
    fn exact_projections_triangulate_back() {
        let k = camera();
        let (pose_a, pose_b) = stereo_pair();
        let point = Vector3::new(0.5, 0.0, 2.0);
        let (pixel_a, _) = project(&point, &pose_a, &k).unwrap();
        let (pixel_b, _) = project(&point, &pose_b, &k).unwrap();
        // Hand-evaluated pinhole projections of (0.5, 0, 2) from both views.
        assert_relative_eq!(pixel_a, Vector2::new(75.0, 50.0), epsilon = 1e-12);
        assert_relative_eq!(pixel_b, Vector2::new(25.0, 50.0), epsilon = 1e-12);

        let corr = Correspondence::new(0, 1, pixel_a, pixel_b).unwrap();
        let [anchor_a, anchor_b] = triangulate(&corr, &pose_a, &pose_b, &k, 2.0).unwrap();
        assert_relative_eq!(anchor_a.depth_triangulated, 2.0, epsilon = 1e-6);
        assert_relative_eq!(anchor_b.depth_triangulated, 2.0, epsilon = 1e-6);
        assert!(anchor_a.reprojection_error < 1e-9);
        assert!(anchor_b.reprojection_error < 1e-9);
    }

    #[test]
    fn point_behind_both_cameras_fails_chirality() {
        let k = camera();
        let (pose_a, pose_b) = stereo_pair();
        // Antipodal projections of (0.5, 0, -2): the pixel rays pass through
        // the point on the negative side of both cameras.
        let corr = Correspondence::new(
            0,
            1,
            Vector2::new(25.0, 50.0),
            Vector2::new(75.0, 50.0),
        )
        .unwrap();
        assert_eq!(
            triangulate(&corr, &pose_a, &pose_b, &k, 2.0),
            Err(TriangulateError::ChiralityReject)
        );
    }

    #[test]
    fn perturbed_observation_fails_reprojection_gate() {
        let k = camera();
        let (pose_a, pose_b) = stereo_pair();
        let point = Vector3::new(0.5, 0.0, 2.0);
        let (pixel_a, _) = project(&point, &pose_a, &k).unwrap();
        let (pixel_b, _) = project(&point, &pose_b, &k).unwrap();
        // 10 px off the epipolar line (which runs horizontally here).
        let perturbed_b = pixel_b + Vector2::new(0.0, 10.0);

        // Independent residual check: solve the two-ray closest point by hand
        // and confirm the midpoint reprojects more than 2 px away.
        let dir_a = k.ray_direction(&pixel_a).normalize();
        let dir_b = (pose_b.rotation() * k.ray_direction(&perturbed_b)).normalize();
        let baseline = pose_b.center() - pose_a.center();
        let c = dir_a.dot(&dir_b);
        let t = (c * baseline.dot(&dir_a) - baseline.dot(&dir_b)) / (1.0 - c * c);
        let s = baseline.dot(&dir_a) + c * t;
        let mid = (dir_a * s + pose_b.center() + dir_b * t) * 0.5;
        let (reproj_b, _) = project(&mid, &pose_b, &k).unwrap();
        assert!((reproj_b - perturbed_b).norm() > 2.0);

        let corr = Correspondence::new(0, 1, pixel_a, perturbed_b).unwrap();
        assert!(matches!(
            triangulate(&corr, &pose_a, &pose_b, &k, 2.0),
            Err(TriangulateError::ReprojectionReject { .. })
        ));
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let k = camera();
        let (pose_a, pose_b) = stereo_pair();
        let pixel = Vector2::new(60.0, 50.0);
        let corr = Correspondence::new(0, 1, pixel, pixel).unwrap();
        assert_eq!(
            triangulate(&corr, &pose_a, &pose_b, &k, 2.0),
            Err(TriangulateError::DegenerateBaseline)
        );
    }

    fn anchor(frame: usize, x: f64, depth: f64) -> TriangulatedAnchor<f64> {
        TriangulatedAnchor {
            frame,
            pixel: Vector2::new(x, 0.0),
            depth_triangulated: depth,
            reprojection_error: 0.0,
        }
    }

    #[test]
    fn median_ratio_of_three_anchors() {
        let depth = DepthMap::new(3, 1, vec![1.0, 2.0, 2.9]).unwrap();
        let anchors = vec![anchor(0, 0.0, 2.0), anchor(0, 1.0, 4.0), anchor(0, 2.0, 6.0)];
        let s0 = initial_scale(&anchors, |_| Some(&depth)).unwrap();
        assert_eq!(s0, 2.0);
    }

    #[test]
    fn identity_prediction_gives_unit_scale() {
        let depth = DepthMap::new(3, 1, vec![1.5, 2.5, 3.5]).unwrap();
        let anchors = vec![
            anchor(0, 0.0, 1.5),
            anchor(0, 1.0, 2.5),
            anchor(0, 2.0, 3.5),
        ];
        assert_eq!(initial_scale(&anchors, |_| Some(&depth)).unwrap(), 1.0);
    }

    #[test]
    fn forty_percent_outliers_do_not_move_the_median() {
        let depth = DepthMap::new(10, 1, vec![1.0; 10]).unwrap();
        let mut anchors: Vec<_> = (0..6).map(|i| anchor(0, i as f64, 2.0)).collect();
        anchors.extend((6..10).map(|i| anchor(0, i as f64, 50.0)));
        assert_eq!(initial_scale(&anchors, |_| Some(&depth)).unwrap(), 2.0);
    }

    #[test]
    fn anchors_on_invalid_depth_are_skipped() {
        let depth = DepthMap::new(2, 1, vec![0.0, 4.0]).unwrap();
        let anchors = vec![anchor(0, 0.0, 2.0), anchor(0, 1.0, 2.0)];
        assert_eq!(initial_scale(&anchors, |_| Some(&depth)).unwrap(), 0.5);

        let all_invalid = DepthMap::new(2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(
            initial_scale(&anchors, |_| Some(&all_invalid)),
            Err(AnchorError::NoValidAnchors)
        );
    }
}
