//! Mesh and depth evaluation metrics plus the reconstruction loss formulas.
//!
//! Nearest-neighbor queries run against a uniform grid index; the index is an
//! optimization only and is held to a brute-force oracle by the test suite.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::depth::{DepthMap, DepthValidityRange};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("no pixel is valid in both depth maps")]
    NoValidPixels,
    #[error("predicted occupancy must lie strictly inside (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("supervision sample contains a non-finite value")]
    NonFiniteSample,
}

/// 3D mesh metrics at threshold `tau` (meters); distances in centimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshMetrics<S: Real> {
    pub acc_cm: S,
    pub comp_cm: S,
    pub cham_cm: S,
    pub prec: S,
    pub recall: S,
    pub f1: S,
    pub tau: S,
}

/// 2D depth metrics over pixels valid in both maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics<S: Real> {
    pub abs_rel: S,
    pub abs_diff_m: S,
    pub sq_rel: S,
    pub delta_105: S,
    pub delta_125: S,
    pub comp: S,
}

/// One supervision query point with ground truth and predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisionSample<S: Real> {
    pub point: Vector3<S>,
    /// Ground-truth occupancy o(x).
    pub occupied: bool,
    /// Ground-truth signed distance at the point.
    pub gt_sdf: S,
    /// Predicted occupancy probability, strictly inside (0, 1).
    pub predicted_occupancy: S,
    /// Raw SDF logits; tanh maps them to normalized signed distance.
    pub predicted_sdf_logits: S,
}

impl<S: Real> SupervisionSample<S> {
    pub fn new(
        point: Vector3<S>,
        occupied: bool,
        gt_sdf: S,
        predicted_occupancy: S,
        predicted_sdf_logits: S,
    ) -> Result<Self, MetricsError> {
        if !(predicted_occupancy > S::zero() && predicted_occupancy < S::one()) {
            return Err(MetricsError::InvalidProbability(
                predicted_occupancy.as_f64(),
            ));
        }
        if !gt_sdf.is_finite() || !predicted_sdf_logits.is_finite() {
            return Err(MetricsError::NonFiniteSample);
        }
        Ok(Self {
            point,
            occupied,
            gt_sdf,
            predicted_occupancy,
            predicted_sdf_logits,
        })
    }
}

// ── Nearest-neighbor grid index ──────────────────────────────────────────

struct GridIndex<'a, S: Real> {
    points: &'a [Vector3<S>],
    min: Vector3<S>,
    cell: S,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a, S: Real> GridIndex<'a, S> {
    fn build(points: &'a [Vector3<S>]) -> Self {
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        let extent = max - min;
        let longest = extent.x.max(extent.y).max(extent.z);
        // Aim for a handful of points per cell; a degenerate (single-point)
        // extent collapses to one bucket with an arbitrary positive cell.
        let n = S::of_usize(points.len());
        let cell = if longest > S::zero() {
            (longest / n.powf(S::of(1.0 / 3.0))).max(longest * S::of(1e-3))
        } else {
            S::one()
        };
        let mut dims = [1usize; 3];
        for i in 0..3 {
            dims[i] = ((extent[i] / cell).as_f64() as usize + 1).max(1);
        }
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (idx, p) in points.iter().enumerate() {
            let c = Self::cell_of(p, &min, cell, &dims);
            buckets[(c[2] as usize * dims[1] + c[1] as usize) * dims[0] + c[0] as usize]
                .push(idx as u32);
        }
        Self {
            points,
            min,
            cell,
            dims,
            buckets,
        }
    }

    fn cell_of(p: &Vector3<S>, min: &Vector3<S>, cell: S, dims: &[usize; 3]) -> [i64; 3] {
        let mut out = [0i64; 3];
        for i in 0..3 {
            let c = ((p[i] - min[i]) / cell).floor().as_f64() as i64;
            out[i] = c.clamp(0, dims[i] as i64 - 1);
        }
        out
    }

    fn scan_bucket(&self, cx: i64, cy: i64, cz: i64, query: &Vector3<S>, best: &mut S) {
        if cx < 0
            || cy < 0
            || cz < 0
            || cx >= self.dims[0] as i64
            || cy >= self.dims[1] as i64
            || cz >= self.dims[2] as i64
        {
            return;
        }
        let bucket =
            &self.buckets[(cz as usize * self.dims[1] + cy as usize) * self.dims[0] + cx as usize];
        for &idx in bucket {
            let d = (self.points[idx as usize] - query).norm();
            if d < *best {
                *best = d;
            }
        }
    }

    /// Exact nearest distance from `query` to the indexed set.
    fn nearest_distance(&self, query: &Vector3<S>) -> S {
        // Home cell by unclamped floor division so the shell lower bound
        // (s - 1 whole cells) stays valid for queries outside the grid.
        let mut home = [0i64; 3];
        for i in 0..3 {
            home[i] = ((query[i] - self.min[i]) / self.cell).floor().as_f64() as i64;
        }
        let mut best = S::max_value().unwrap_or_else(S::one);
        // Shells closer than the grid's own Chebyshev distance contain no
        // buckets; skipping them keeps far-outside queries cheap.
        let min_shell = (0..3)
            .map(|i| {
                if home[i] < 0 {
                    (-home[i]) as usize
                } else if home[i] > self.dims[i] as i64 - 1 {
                    (home[i] - (self.dims[i] as i64 - 1)) as usize
                } else {
                    0
                }
            })
            .max()
            .unwrap_or(0);
        let max_shell = (0..3)
            .map(|i| {
                let lo = (home[i]).unsigned_abs() as usize;
                let hi = (self.dims[i] as i64 - 1 - home[i]).unsigned_abs() as usize;
                lo.max(hi)
            })
            .max()
            .unwrap_or(0);
        for shell in min_shell..=max_shell {
            if shell > 0 {
                let bound = S::of_usize(shell - 1) * self.cell;
                if bound >= best {
                    break;
                }
            }
            let s = shell as i64;
            for dz in -s..=s {
                for dy in -s..=s {
                    for dx in -s..=s {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != s {
                            continue;
                        }
                        self.scan_bucket(home[0] + dx, home[1] + dy, home[2] + dz, query, &mut best);
                    }
                }
            }
        }
        best
    }
}

fn nearest_distances<S: Real>(queries: &[Vector3<S>], targets: &[Vector3<S>]) -> Vec<S> {
    let index = GridIndex::build(targets);
    queries
        .par_iter()
        .map(|q| index.nearest_distance(q))
        .collect()
}

/// Accuracy / completeness / chamfer plus precision / recall / F1 between two
/// sampled point sets. Distances are point-to-point nearest neighbors.
pub fn mesh_metrics<S: Real>(
    pred: &[Vector3<S>],
    gt: &[Vector3<S>],
    tau: S,
) -> Result<MeshMetrics<S>, MetricsError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let pred_to_gt = nearest_distances(pred, gt);
    let gt_to_pred = nearest_distances(gt, pred);

    let mean = |dists: &[S]| {
        dists.iter().fold(S::zero(), |acc, d| acc + *d) / S::of_usize(dists.len())
    };
    let within = |dists: &[S]| {
        let hits = dists.iter().filter(|&&d| d < tau).count();
        S::of_usize(hits) / S::of_usize(dists.len())
    };

    let acc_m = mean(&pred_to_gt);
    let comp_m = mean(&gt_to_pred);
    let prec = within(&pred_to_gt);
    let recall = within(&gt_to_pred);
    let f1 = if prec + recall > S::zero() {
        S::of(2.0) * prec * recall / (prec + recall)
    } else {
        S::zero()
    };
    let hundred = S::of(100.0);
    Ok(MeshMetrics {
        acc_cm: acc_m * hundred,
        comp_cm: comp_m * hundred,
        cham_cm: (acc_m + comp_m) * S::of(0.5) * hundred,
        prec,
        recall,
        f1,
        tau,
    })
}

/// 2D depth metrics over pixels where both maps carry an in-range depth;
/// `comp` is the fraction of gt-valid pixels with a valid prediction.
pub fn depth_metrics<S: Real>(
    pred: &DepthMap<S>,
    gt: &DepthMap<S>,
    range: &DepthValidityRange<S>,
) -> Result<DepthMetrics<S>, MetricsError> {
    pred.same_dimensions(gt)
        .map_err(|_| MetricsError::NoValidPixels)?;
    let mut gt_valid = 0usize;
    let mut joint = 0usize;
    let mut abs_rel = S::zero();
    let mut abs_diff = S::zero();
    let mut sq_rel = S::zero();
    let mut hits_105 = 0usize;
    let mut hits_125 = 0usize;
    for (&d_pred, &d_gt) in pred.values().iter().zip(gt.values()) {
        if !range.contains(d_gt) {
            continue;
        }
        gt_valid += 1;
        if !range.contains(d_pred) {
            continue;
        }
        joint += 1;
        let diff = (d_pred - d_gt).abs();
        abs_diff += diff;
        abs_rel += diff / d_gt;
        sq_rel += diff * diff / d_gt;
        let ratio = (d_pred / d_gt).max(d_gt / d_pred);
        if ratio < S::of(1.05) {
            hits_105 += 1;
        }
        if ratio < S::of(1.25) {
            hits_125 += 1;
        }
    }
    if joint == 0 {
        return Err(MetricsError::NoValidPixels);
    }
    let n = S::of_usize(joint);
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        abs_diff_m: abs_diff / n,
        sq_rel: sq_rel / n,
        delta_105: S::of_usize(hits_105) / n,
        delta_125: S::of_usize(hits_125) / n,
        comp: S::of_usize(joint) / S::of_usize(gt_valid),
    })
}

/// Signed log transform `t(x) = sign(x) ln(|x| + 1)`: odd, strictly monotone,
/// zero at zero.
pub fn log_transform<S: Real>(x: S) -> S {
    if x >= S::zero() {
        x.ln_1p()
    } else {
        -(-x).ln_1p()
    }
}

/// Mean L1 distance between log-transformed predicted and ground-truth SDF
/// over occupied samples; predictions pass through tanh first. `None` when no
/// sample is occupied (the loss term is absent, not zero, in that case).
pub fn sdf_loss<S: Real>(samples: &[SupervisionSample<S>]) -> Option<S> {
    let mut total = S::zero();
    let mut count = 0usize;
    for sample in samples.iter().filter(|s| s.occupied) {
        let predicted = sample.predicted_sdf_logits.tanh();
        total += (log_transform(predicted) - log_transform(sample.gt_sdf)).abs();
        count += 1;
    }
    (count > 0).then(|| total / S::of_usize(count))
}

/// Mean binary cross-entropy of the predicted occupancy probabilities.
pub fn occ_loss<S: Real>(samples: &[SupervisionSample<S>]) -> S {
    if samples.is_empty() {
        return S::zero();
    }
    let total = samples.iter().fold(S::zero(), |acc, s| {
        let p = s.predicted_occupancy;
        acc - if s.occupied { p.ln() } else { (S::one() - p).ln() }
    });
    total / S::of_usize(samples.len())
}

/// Total reconstruction loss: BCE occupancy term plus the SDF term when the
/// occupied set is non-empty.
pub fn total_loss<S: Real>(samples: &[SupervisionSample<S>]) -> S {
    occ_loss(samples) + sdf_loss(samples).unwrap_or_else(S::zero)
}

/// Uniform area-weighted surface sampling: one stratified draw per patch of
/// `1 / density` square meters, with barycentric jitter from the seeded RNG.
/// Deterministic for a fixed mesh, density, and seed.
pub fn sample_mesh_points<S: Real>(
    mesh: &TriangleMesh<S>,
    density_per_m2: S,
    seed: u64,
) -> Vec<Vector3<S>> {
    if mesh.is_empty() {
        return Vec::new();
    }
    let face_count = mesh.faces().len();
    let mut cumulative = Vec::with_capacity(face_count);
    let mut total = S::zero();
    for f in 0..face_count {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if total <= S::zero() {
        return Vec::new();
    }
    let samples = (total * density_per_m2).ceil().as_f64().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(samples);
    for i in 0..samples {
        let target = (S::of_usize(i) + S::of(0.5)) / S::of_usize(samples) * total;
        let face = cumulative.partition_point(|&c| c < target).min(face_count - 1);
        let [a, b, c] = mesh.face_vertices(face);
        let r1 = S::of(rng.gen::<f64>());
        let r2 = S::of(rng.gen::<f64>());
        let sqrt_r1 = r1.sqrt();
        let wa = S::one() - sqrt_r1;
        let wb = sqrt_r1 * (S::one() - r2);
        let wc = sqrt_r1 * r2;
        points.push(a * wa + b * wb + c * wc);
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cloud(points: &[(f64, f64, f64)]) -> Vec<Vector3<f64>> {
        points.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect()
    }

    fn random_cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect()
    }

    #[test]
    fn identical_clouds_score_perfectly() {
        let pts = random_cloud(200, 1);
        let m = mesh_metrics(&pts, &pts, 0.05).unwrap();
        assert_eq!(m.acc_cm, 0.0);
        assert_eq!(m.comp_cm, 0.0);
        assert_eq!(m.cham_cm, 0.0);
        assert_eq!(m.prec, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn uniform_shift_below_threshold() {
        let gt = random_cloud(256, 2);
        let pred: Vec<_> = gt.iter().map(|p| p + Vector3::new(0.03, 0.0, 0.0)).collect();
        let m = mesh_metrics(&pred, &gt, 0.05).unwrap();
        assert_relative_eq!(m.acc_cm, 3.0, max_relative = 1e-12);
        assert_relative_eq!(m.comp_cm, 3.0, max_relative = 1e-12);
        assert_eq!(m.prec, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn uniform_shift_above_threshold() {
        // Spread the points enough that the nearest neighbor of a shifted
        // point is its own original.
        let gt: Vec<_> = (0..64)
            .map(|i| Vector3::new(i as f64 * 0.5, 0.0, 0.0))
            .collect();
        let pred: Vec<_> = gt.iter().map(|p| p + Vector3::new(0.0, 0.07, 0.0)).collect();
        let m = mesh_metrics(&pred, &gt, 0.05).unwrap();
        assert_eq!(m.prec, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_relative_eq!(m.acc_cm, 7.0, max_relative = 1e-12);
    }

    #[test]
    fn swapping_clouds_swaps_directional_metrics() {
        let a = random_cloud(150, 3);
        let b = random_cloud(170, 4);
        let ab = mesh_metrics(&a, &b, 0.05).unwrap();
        let ba = mesh_metrics(&b, &a, 0.05).unwrap();
        assert_relative_eq!(ab.acc_cm, ba.comp_cm, epsilon = 1e-12);
        assert_relative_eq!(ab.comp_cm, ba.acc_cm, epsilon = 1e-12);
        assert_relative_eq!(ab.prec, ba.recall, epsilon = 1e-12);
        assert_relative_eq!(ab.recall, ba.prec, epsilon = 1e-12);
        assert_relative_eq!(ab.f1, ba.f1, epsilon = 1e-12);
        assert_relative_eq!(ab.cham_cm, ba.cham_cm, epsilon = 1e-12);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let pts = cloud(&[(0.0, 0.0, 0.0)]);
        assert_eq!(mesh_metrics(&[], &pts, 0.05), Err(MetricsError::EmptyCloud));
        assert_eq!(mesh_metrics(&pts, &[], 0.05), Err(MetricsError::EmptyCloud));
    }

    fn range() -> DepthValidityRange<f64> {
        DepthValidityRange::new(0.05, 10.0).unwrap()
    }

    #[test]
    fn identical_depths_are_perfect() {
        let gt = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = depth_metrics(&gt, &gt, &range()).unwrap();
        assert_eq!(m.abs_rel, 0.0);
        assert_eq!(m.abs_diff_m, 0.0);
        assert_eq!(m.sq_rel, 0.0);
        assert_eq!(m.delta_105, 1.0);
        assert_eq!(m.delta_125, 1.0);
        assert_eq!(m.comp, 1.0);
    }

    #[test]
    fn uniform_ten_percent_error() {
        let gt = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pred = gt.map_valid(|d| 1.1 * d);
        let m = depth_metrics(&pred, &gt, &range()).unwrap();
        assert_relative_eq!(m.abs_rel, 0.1, epsilon = 1e-12);
        assert_eq!(m.delta_105, 0.0);
        assert_eq!(m.delta_125, 1.0);
    }

    #[test]
    fn half_invalid_prediction() {
        let gt = DepthMap::new(2, 2, vec![2.0; 4]).unwrap();
        let pred = DepthMap::new(2, 2, vec![2.2, 2.2, 0.0, 0.0]).unwrap();
        let m = depth_metrics(&pred, &gt, &range()).unwrap();
        assert_relative_eq!(m.abs_diff_m, 0.2, epsilon = 1e-12);
        assert_eq!(m.comp, 0.5);
    }

    #[test]
    fn no_joint_valid_pixels_is_an_error() {
        let gt = DepthMap::new(2, 1, vec![1.0, 1.0]).unwrap();
        let pred = DepthMap::invalid(2, 1);
        assert_eq!(
            depth_metrics(&pred, &gt, &range()),
            Err(MetricsError::NoValidPixels)
        );
    }

    #[test]
    fn delta_metrics_are_ratio_symmetric() {
        let gt = DepthMap::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let pred = DepthMap::new(3, 1, vec![1.04, 2.4, 3.01]).unwrap();
        let ab = depth_metrics(&pred, &gt, &range()).unwrap();
        let ba = depth_metrics(&gt, &pred, &range()).unwrap();
        assert_eq!(ab.delta_105, ba.delta_105);
        assert_eq!(ab.delta_125, ba.delta_125);
    }

    #[test]
    fn log_transform_tagged_values() {
        assert_eq!(log_transform(0.0f64), 0.0);
        assert_relative_eq!(log_transform(std::f64::consts::E - 1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            log_transform(-(std::f64::consts::E - 1.0)),
            -1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(log_transform(3.0f64), 4.0f64.ln(), epsilon = 1e-12);
    }

    fn sample(
        occupied: bool,
        gt_sdf: f64,
        predicted_occupancy: f64,
        logits: f64,
    ) -> SupervisionSample<f64> {
        SupervisionSample::new(Vector3::zeros(), occupied, gt_sdf, predicted_occupancy, logits)
            .unwrap()
    }

    #[test]
    fn sdf_loss_examples() {
        // Perfect prediction: tanh(logits) equals the ground truth.
        let gt = 0.7f64.tanh();
        let samples = vec![sample(true, gt, 0.5, 0.7)];
        assert_eq!(sdf_loss(&samples), Some(0.0));

        // tanh(0) = 0 against gt e-1: |t(0) - t(e-1)| = 1.
        let samples = vec![sample(true, std::f64::consts::E - 1.0, 0.5, 0.0)];
        assert_relative_eq!(sdf_loss(&samples).unwrap(), 1.0, epsilon = 1e-12);

        // No occupied sample: the term is absent.
        let samples = vec![sample(false, 0.3, 0.5, 0.1)];
        assert_eq!(sdf_loss(&samples), None);
    }

    #[test]
    fn occ_loss_examples() {
        let half = vec![sample(true, 0.0, 0.5, 0.0), sample(false, 0.0, 0.5, 0.0)];
        assert_relative_eq!(occ_loss(&half), std::f64::consts::LN_2, epsilon = 1e-12);

        let eps = 1e-12;
        let confident = vec![sample(true, 0.0, 1.0 - eps, 0.0), sample(false, 0.0, eps, 0.0)];
        assert!(occ_loss(&confident) < 1e-9);

        let inv_e = vec![sample(true, 0.0, (-1.0f64).exp(), 0.0)];
        assert_relative_eq!(occ_loss(&inv_e), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss::<f64>(&[]), 0.0);

        // SDF absent, occupancy at maximum entropy.
        let samples = vec![sample(false, 0.0, 0.5, 0.0)];
        assert_relative_eq!(total_loss(&samples), std::f64::consts::LN_2, epsilon = 1e-12);

        // occ = 1 (o=1, p=1/e) and sdf = 1 (tanh 0 vs e-1).
        let samples = vec![sample(true, std::f64::consts::E - 1.0, (-1.0f64).exp(), 0.0)];
        assert_relative_eq!(total_loss(&samples), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn occ_loss_minimized_at_empirical_mean() {
        // 3 occupied of 4: the optimum constant prediction is 0.75.
        let build = |p: f64| {
            vec![
                sample(true, 0.0, p, 0.0),
                sample(true, 0.0, p, 0.0),
                sample(true, 0.0, p, 0.0),
                sample(false, 0.0, p, 0.0),
            ]
        };
        let h = 1e-6;
        let at = |p: f64| occ_loss(&build(p));
        let derivative = (at(0.75 + h) - at(0.75 - h)) / (2.0 * h);
        assert!(derivative.abs() < 1e-6);
        assert!(at(0.75) < at(0.6));
        assert!(at(0.75) < at(0.9));
    }

    #[test]
    fn sampling_is_deterministic_and_area_weighted() {
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let mesh = TriangleMesh::new(vertices, vec![[0, 1, 2]]).unwrap();
        let a = sample_mesh_points(&mesh, 10_000.0, 7);
        let b = sample_mesh_points(&mesh, 10_000.0, 7);
        assert_eq!(a, b);
        // Area 0.5 m^2 at 1 point/cm^2.
        assert_eq!(a.len(), 5000);
        for p in &a {
            assert!(p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 1.0 + 1e-12);
            assert_eq!(p.z, 0.0);
        }
    }
}
