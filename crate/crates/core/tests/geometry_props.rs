//! Property tests for the camera model and pose algebra.

use mvrecon_core::{backproject, project, Intrinsics, Pose};
use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use proptest::prelude::*;

fn rotation(axis: (f64, f64, f64), angle: f64) -> Matrix3<f64> {
    let axis = Vector3::new(axis.0, axis.1, axis.2);
    if axis.norm() < 1e-9 {
        return Matrix3::identity();
    }
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

prop_compose! {
    fn arb_pose()(
        axis in ((-1.0..1.0f64), (-1.0..1.0f64), (-1.0..1.0f64)),
        angle in -3.0..3.0f64,
        tx in -10.0..10.0f64,
        ty in -10.0..10.0f64,
        tz in -10.0..10.0f64,
    ) -> Pose<f64> {
        Pose::new(rotation(axis, angle), Vector3::new(tx, ty, tz)).unwrap()
    }
}

prop_compose! {
    fn arb_intrinsics()(
        fx in 100.0..800.0f64,
        fy in 100.0..800.0f64,
        cx in 100.0..540.0f64,
        cy in 100.0..380.0f64,
    ) -> Intrinsics<f64> {
        Intrinsics::new(fx, fy, cx, cy, 640, 480).unwrap()
    }
}

proptest! {
    #[test]
    fn project_after_backproject_is_identity(
        pose in arb_pose(),
        k in arb_intrinsics(),
        u in 0.0..639.0f64,
        v in 0.0..479.0f64,
        depth in 0.05..50.0f64,
    ) {
        let world = backproject(&Vector2::new(u, v), depth, &pose, &k).unwrap();
        let (pixel, z) = project(&world, &pose, &k).expect("positive depth round-trips");
        prop_assert!((pixel.x - u).abs() < 1e-9);
        prop_assert!((pixel.y - v).abs() < 1e-9);
        prop_assert!((z - depth).abs() < 1e-9);
    }

    #[test]
    fn pose_times_inverse_is_identity(pose in arb_pose()) {
        let id = pose.compose(&pose.inverse());
        let rot_dev = (id.rotation() - Matrix3::identity()).abs().max();
        prop_assert!(rot_dev < 1e-9);
        prop_assert!(id.translation().norm() < 1e-9);
    }

    #[test]
    fn pose_composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        let rot_dev = (left.rotation() - right.rotation()).abs().max();
        prop_assert!(rot_dev < 1e-9);
        prop_assert!((left.translation() - right.translation()).norm() < 1e-9);
    }

    #[test]
    fn projection_is_invariant_under_world_frame_change(
        pose in arb_pose(),
        frame_change in arb_pose(),
        k in arb_intrinsics(),
        u in 0.0..639.0f64,
        v in 0.0..479.0f64,
        depth in 0.1..20.0f64,
    ) {
        // Express the same scene in another world frame by moving both the
        // point and the camera with the same rigid transform.
        let world = backproject(&Vector2::new(u, v), depth, &pose, &k).unwrap();
        let moved_point = frame_change.transform_point(&world);
        let moved_pose = frame_change.compose(&pose);
        let (p0, z0) = project(&world, &pose, &k).unwrap();
        let (p1, z1) = project(&moved_point, &moved_pose, &k).unwrap();
        prop_assert!((p0 - p1).norm() < 1e-8);
        prop_assert!((z0 - z1).abs() < 1e-8);
    }
}
