//! Submap scale-factor graph: overlap depth ratios become relative-scale
//! edges, triangulation medians become priors, and log-scales are solved by
//! damped least squares.
//!
//! The objective is convex quadratic:
//!
//! ```text
//! F(x) = sum_(i,j) w_ij (x_i - x_j - rho_ij)^2 + lambda * sum_i (x_i - ln s_i0)^2
//! ```
//!
//! Working in log-space makes scale composition additive and guarantees
//! positive recovered scales through the exponential map.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::depth::{DepthError, DepthMap, DepthValidityRange};
use crate::keyframe::Submap;
use crate::robust::lower_median;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleGraphError {
    #[error("regularization lambda must be positive, got {0}")]
    LambdaNotPositive(f64),
    #[error("graph has no nodes")]
    NoNodes,
    #[error("edge ({i}, {j}) must satisfy i < j < node count {nodes}")]
    BadEdgeEndpoints { i: usize, j: usize, nodes: usize },
    #[error("edge ({i}, {j}) has invalid weight {weight}; expected finite in (0, 1]")]
    BadEdgeWeight { i: usize, j: usize, weight: f64 },
    #[error("edge ({i}, {j}) has non-finite relative log-scale")]
    BadEdgeRho { i: usize, j: usize },
    #[error("prior {0} is not finite")]
    BadPrior(usize),
    #[error("normal matrix is not positive definite")]
    SingularSystem,
    #[error("solution covers {scales} submaps but {submaps} were provided")]
    CoverageMismatch { scales: usize, submaps: usize },
    #[error("submap {submap} carries {got} depth maps for {expected} keyframes")]
    DepthCountMismatch {
        submap: usize,
        got: usize,
        expected: usize,
    },
}

impl ScaleGraphError {
    fn bad_edge_rho(i: usize, j: usize) -> Self {
        ScaleGraphError::BadEdgeRho { i, j }
    }
}

/// Relative-scale constraint between two submaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEdge<S: Real> {
    i: usize,
    j: usize,
    rho: S,
    weight: S,
    valid_pixel_count: usize,
}

impl<S: Real> ScaleEdge<S> {
    /// `rho` is the target for `x_i - x_j` in log-space.
    pub fn new(
        i: usize,
        j: usize,
        rho: S,
        weight: S,
        valid_pixel_count: usize,
    ) -> Result<Self, ScaleGraphError> {
        if i >= j {
            return Err(ScaleGraphError::BadEdgeEndpoints { i, j, nodes: 0 });
        }
        if !(weight > S::zero() && weight <= S::one()) || !weight.is_finite() {
            return Err(ScaleGraphError::BadEdgeWeight {
                i,
                j,
                weight: weight.as_f64(),
            });
        }
        if !rho.is_finite() {
            return Err(ScaleGraphError::bad_edge_rho(i, j));
        }
        Ok(Self {
            i,
            j,
            rho,
            weight,
            valid_pixel_count,
        })
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn rho(&self) -> S {
        self.rho
    }

    pub fn weight(&self) -> S {
        self.weight
    }

    pub fn valid_pixel_count(&self) -> usize {
        self.valid_pixel_count
    }
}

/// Weighting rule for edges: `clamp(valid_count / n_ref, w_min, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeighting<S: Real> {
    pub n_ref: S,
    pub w_min: S,
}

impl<S: Real> EdgeWeighting<S> {
    pub fn new(n_ref: S, w_min: S) -> Self {
        debug_assert!(n_ref > S::zero());
        debug_assert!(w_min > S::zero() && w_min <= S::one());
        Self { n_ref, w_min }
    }
}

/// Aggregated edge measurement before it becomes a [`ScaleEdge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEdgeStats<S: Real> {
    /// Robust median of the pooled overlap ratios (1.0 for an empty pool).
    pub ratio: S,
    pub weight: S,
    pub valid_count: usize,
}

/// The regularized least-squares problem over submap log-scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGraphProblem<S: Real> {
    priors: Vec<S>,
    edges: Vec<ScaleEdge<S>>,
    lambda: S,
}

impl<S: Real> ScaleGraphProblem<S> {
    /// `priors` are the log initial scales `ln s_i^(0)`, one per node.
    pub fn new(
        priors: Vec<S>,
        edges: Vec<ScaleEdge<S>>,
        lambda: S,
    ) -> Result<Self, ScaleGraphError> {
        if priors.is_empty() {
            return Err(ScaleGraphError::NoNodes);
        }
        if !(lambda > S::zero()) {
            return Err(ScaleGraphError::LambdaNotPositive(lambda.as_f64()));
        }
        if let Some(idx) = priors.iter().position(|p| !p.is_finite()) {
            return Err(ScaleGraphError::BadPrior(idx));
        }
        for edge in &edges {
            if edge.j >= priors.len() {
                return Err(ScaleGraphError::BadEdgeEndpoints {
                    i: edge.i,
                    j: edge.j,
                    nodes: priors.len(),
                });
            }
        }
        Ok(Self {
            priors,
            edges,
            lambda,
        })
    }

    pub fn node_count(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[S] {
        &self.priors
    }

    pub fn edges(&self) -> &[ScaleEdge<S>] {
        &self.edges
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }
}

/// Optimized log-scales and their exponentials.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSolution<S: Real> {
    log_scales: Vec<S>,
    scales: Vec<S>,
    final_cost: S,
    iterations: usize,
}

impl<S: Real> ScaleSolution<S> {
    pub fn log_scales(&self) -> &[S] {
        &self.log_scales
    }

    pub fn scales(&self) -> &[S] {
        &self.scales
    }

    pub fn scale(&self, submap: usize) -> S {
        self.scales[submap]
    }

    pub fn final_cost(&self) -> S {
        self.final_cost
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Termination controls for the damped least-squares solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<S: Real> {
    pub max_iters: usize,
    /// Threshold on the max-norm of the objective gradient.
    pub tol: S,
}

impl<S: Real> Default for SolveOptions<S> {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: S::of(1e-10),
        }
    }
}

/// Per-pixel depth ratios `d_i(u) / d_j(u)` over pixels valid in both maps.
pub fn overlap_ratios<S: Real>(
    d_i: &DepthMap<S>,
    d_j: &DepthMap<S>,
    range: &DepthValidityRange<S>,
) -> Result<Vec<S>, DepthError> {
    d_i.same_dimensions(d_j)?;
    let ratios = d_i
        .values()
        .iter()
        .zip(d_j.values())
        .filter(|(&a, &b)| range.contains(a) && range.contains(b))
        .map(|(&a, &b)| a / b)
        .collect();
    Ok(ratios)
}

/// Pools per-frame ratio lists into one robust edge measurement. An empty
/// pool yields the neutral ratio 1.0 at the minimum weight.
pub fn edge_relative_scale<S: Real>(
    ratio_sets: &[Vec<S>],
    weighting: &EdgeWeighting<S>,
) -> ScaleEdgeStats<S> {
    let pooled: Vec<S> = ratio_sets.iter().flatten().copied().collect();
    match lower_median(&pooled) {
        Some(ratio) => {
            let valid_count = pooled.len();
            let weight = (S::of_usize(valid_count) / weighting.n_ref)
                .min(S::one())
                .max(weighting.w_min);
            ScaleEdgeStats {
                ratio,
                weight,
                valid_count,
            }
        }
        None => ScaleEdgeStats {
            ratio: S::one(),
            weight: weighting.w_min,
            valid_count: 0,
        },
    }
}

/// Objective value of the regularized least-squares problem at `x`.
pub fn objective_cost<S: Real>(problem: &ScaleGraphProblem<S>, x: &[S]) -> S {
    let mut cost = S::zero();
    for edge in &problem.edges {
        let r = x[edge.i] - x[edge.j] - edge.rho;
        cost += edge.weight * r * r;
    }
    for (xi, pi) in x.iter().zip(&problem.priors) {
        let r = *xi - *pi;
        cost += problem.lambda * r * r;
    }
    cost
}

/// Analytic gradient of [`objective_cost`] at `x`.
pub fn objective_gradient<S: Real>(problem: &ScaleGraphProblem<S>, x: &[S]) -> Vec<S> {
    let two = S::of(2.0);
    let mut grad = vec![S::zero(); x.len()];
    for edge in &problem.edges {
        let r = x[edge.i] - x[edge.j] - edge.rho;
        grad[edge.i] += two * edge.weight * r;
        grad[edge.j] -= two * edge.weight * r;
    }
    for i in 0..x.len() {
        grad[i] += two * problem.lambda * (x[i] - problem.priors[i]);
    }
    grad
}

fn normal_matrix<S: Real>(problem: &ScaleGraphProblem<S>) -> DMatrix<S> {
    let m = problem.node_count();
    let mut h = DMatrix::zeros(m, m);
    for edge in &problem.edges {
        h[(edge.i, edge.i)] += edge.weight;
        h[(edge.j, edge.j)] += edge.weight;
        h[(edge.i, edge.j)] -= edge.weight;
        h[(edge.j, edge.i)] -= edge.weight;
    }
    for i in 0..m {
        h[(i, i)] += problem.lambda;
    }
    h
}

/// Minimizes the objective by Levenberg-Marquardt from the median-prior
/// initialization. The normal matrix is a weighted graph Laplacian plus
/// `lambda * I`, so it is strictly positive definite for `lambda > 0` and the
/// damped iteration converges to the unique optimum; a final undamped step
/// polishes to solver precision once the gradient tolerance is met.
pub fn solve_scales<S: Real>(
    problem: &ScaleGraphProblem<S>,
    options: &SolveOptions<S>,
) -> Result<ScaleSolution<S>, ScaleGraphError> {
    let m = problem.node_count();
    let init = lower_median(problem.priors()).expect("node count >= 1");
    let mut x = vec![init; m];

    let h = normal_matrix(problem);
    let max_diag = (0..m).fold(S::zero(), |acc, i| acc.max(h[(i, i)]));
    let mut mu = S::of(1e-4) * max_diag;

    let mut cost = objective_cost(problem, &x);
    let mut iterations = 0;

    let solve_damped = |mu: S, grad: &[S]| -> Result<DVector<S>, ScaleGraphError> {
        let mut damped = h.clone();
        for i in 0..m {
            damped[(i, i)] += mu;
        }
        // J^T J delta = -J^T r, with grad = 2 J^T r.
        let rhs = DVector::from_iterator(m, grad.iter().map(|&g| -g * S::of(0.5)));
        let chol = Cholesky::new(damped).ok_or(ScaleGraphError::SingularSystem)?;
        Ok(chol.solve(&rhs))
    };

    while iterations < options.max_iters {
        let grad = objective_gradient(problem, &x);
        let grad_max = grad
            .iter()
            .fold(S::zero(), |acc, g| acc.max(g.abs()));
        if grad_max < options.tol {
            break;
        }
        iterations += 1;

        let step = solve_damped(mu, &grad)?;
        let candidate: Vec<S> = x.iter().zip(step.iter()).map(|(xi, d)| *xi + *d).collect();
        let candidate_cost = objective_cost(problem, &candidate);
        if candidate_cost <= cost {
            x = candidate;
            cost = candidate_cost;
            mu /= S::of(3.0);
        } else {
            mu *= S::of(10.0);
        }
    }

    // Undamped polish: one exact Newton step on the quadratic objective.
    let grad = objective_gradient(problem, &x);
    let step = solve_damped(S::zero(), &grad)?;
    let polished: Vec<S> = x.iter().zip(step.iter()).map(|(xi, d)| *xi + *d).collect();
    let polished_cost = objective_cost(problem, &polished);
    if polished_cost <= cost {
        x = polished;
        cost = polished_cost;
    }

    let scales = x.iter().map(|xi| xi.exp()).collect();
    Ok(ScaleSolution {
        log_scales: x,
        scales,
        final_cost: cost,
        iterations,
    })
}

/// Multiplies each submap's depth maps by its optimized scale and flattens to
/// one aligned map per keyframe position. A keyframe covered by several
/// submaps takes the depth (and scale) of the submap it appears in first;
/// invalid pixels pass through unchanged.
pub fn apply_scales<S: Real>(
    submaps: &[Submap],
    depths: &[Vec<DepthMap<S>>],
    solution: &ScaleSolution<S>,
) -> Result<Vec<DepthMap<S>>, ScaleGraphError> {
    if solution.scales.len() != submaps.len() || depths.len() != submaps.len() {
        return Err(ScaleGraphError::CoverageMismatch {
            scales: solution.scales.len(),
            submaps: submaps.len(),
        });
    }
    for (m, submap) in submaps.iter().enumerate() {
        if depths[m].len() != submap.len() {
            return Err(ScaleGraphError::DepthCountMismatch {
                submap: m,
                got: depths[m].len(),
                expected: submap.len(),
            });
        }
    }
    let total = submaps.iter().map(|s| s.end()).max().unwrap_or(0);
    let mut aligned: Vec<Option<DepthMap<S>>> = vec![None; total];
    for (m, submap) in submaps.iter().enumerate() {
        let scale = solution.scale(m);
        for (offset, position) in submap.positions().enumerate() {
            if aligned[position].is_none() {
                aligned[position] = Some(depths[m][offset].map_valid(|d| d * scale));
            }
        }
    }
    Ok(aligned
        .into_iter()
        .map(|d| d.expect("submaps cover every position"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::keyframe::{partition_submaps, Keyframe, KeyframeSequence, SubmapConfig};

    fn weighting() -> EdgeWeighting<f64> {
        EdgeWeighting::new(100.0, 1e-3)
    }

    #[test]
    fn proportional_maps_give_constant_ratios() {
        let range = DepthValidityRange::new(0.05, 10.0).unwrap();
        let d_j = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d_i = d_j.map_valid(|d| 2.0 * d);
        let ratios = overlap_ratios(&d_i, &d_j, &range).unwrap();
        assert_eq!(ratios, vec![2.0; 4]);
    }

    #[test]
    fn invalid_pixels_are_excluded_from_ratios() {
        let range = DepthValidityRange::new(0.05, 10.0).unwrap();
        let d_i = DepthMap::new(3, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let d_j = DepthMap::new(3, 1, vec![1.0, 0.0, 1.0]).unwrap();
        let ratios = overlap_ratios(&d_i, &d_j, &range).unwrap();
        assert_eq!(ratios, vec![1.0, 1.0]);
    }

    #[test]
    fn epsilon_gate_drops_too_small_depths() {
        let range = DepthValidityRange::new(0.05, 10.0).unwrap();
        let d_i = DepthMap::new(2, 1, vec![1.0, 2.0]).unwrap();
        let d_j = DepthMap::new(2, 1, vec![0.5, 0.04]).unwrap();
        let ratios = overlap_ratios(&d_i, &d_j, &range).unwrap();
        assert_eq!(ratios, vec![2.0]);
    }

    #[test]
    fn mismatched_dimensions_error() {
        let range = DepthValidityRange::new(0.05, 10.0).unwrap();
        let d_i = DepthMap::new(2, 1, vec![1.0, 2.0]).unwrap();
        let d_j = DepthMap::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            overlap_ratios(&d_i, &d_j, &range),
            Err(DepthError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn edge_median_of_pooled_ratios() {
        let stats = edge_relative_scale(&[vec![1.9, 2.0], vec![2.1]], &weighting());
        assert_eq!(stats.ratio, 2.0);
        assert_eq!(stats.valid_count, 3);
    }

    #[test]
    fn empty_pool_defaults_to_unit_ratio_and_min_weight() {
        let stats = edge_relative_scale::<f64>(&[vec![], vec![]], &weighting());
        assert_eq!(stats.ratio, 1.0);
        assert_eq!(stats.weight, 1e-3);
        assert_eq!(stats.valid_count, 0);
    }

    #[test]
    fn sixty_forty_contamination_keeps_majority_ratio() {
        let pool: Vec<f64> = std::iter::repeat(3.0)
            .take(6)
            .chain(std::iter::repeat(100.0).take(4))
            .collect();
        let stats = edge_relative_scale(&[pool], &weighting());
        assert_eq!(stats.ratio, 3.0);
    }

    #[test]
    fn prior_only_problem_returns_prior() {
        let problem = ScaleGraphProblem::new(vec![2.0f64.ln()], vec![], 0.1).unwrap();
        let sol = solve_scales(&problem, &SolveOptions::default()).unwrap();
        assert_relative_eq!(sol.log_scales()[0], 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(sol.scale(0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn chain_with_vanishing_regularization_centers_the_gauge() {
        // Exact normal equations for the 3-node chain, lambda -> 0+: relative
        // constraints fix the differences, the prior pins the mean at 0.
        let lambda = 1e-8;
        let rho12 = 2.0f64.ln();
        let edges = vec![
            ScaleEdge::new(0, 1, rho12, 1.0, 10).unwrap(),
            ScaleEdge::new(1, 2, 0.0, 1.0, 10).unwrap(),
        ];
        let problem = ScaleGraphProblem::new(vec![0.0; 3], edges, lambda).unwrap();
        let sol = solve_scales(&problem, &SolveOptions::default()).unwrap();

        let expected = [2.0 * rho12 / 3.0, -rho12 / 3.0, -rho12 / 3.0];
        for (got, want) in sol.log_scales().iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-6);
        }

        // Cross-check against a direct 3x3 elimination at this lambda.
        let a = [
            [1.0 + lambda, -1.0, 0.0],
            [-1.0, 2.0 + lambda, -1.0],
            [0.0, -1.0, 1.0 + lambda],
        ];
        let b = [rho12, -rho12, 0.0];
        let exact = solve3(a, b);
        for (got, want) in sol.log_scales().iter().zip(exact) {
            assert_relative_eq!(*got, want, epsilon = 1e-9);
        }
    }

    fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
        for col in 0..3 {
            let pivot = (col..3)
                .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in (col + 1)..3 {
                let f = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = [0.0; 3];
        for row in (0..3).rev() {
            let mut acc = b[row];
            for k in (row + 1)..3 {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    #[test]
    fn consistent_problem_is_a_zero_residual_fixed_point() {
        let priors = [0.2f64, 0.5, -0.1];
        let edges = vec![
            ScaleEdge::new(0, 1, priors[0] - priors[1], 0.8, 10).unwrap(),
            ScaleEdge::new(1, 2, priors[1] - priors[2], 0.6, 10).unwrap(),
        ];
        let problem = ScaleGraphProblem::new(priors.to_vec(), edges, 0.1).unwrap();
        let sol = solve_scales(&problem, &SolveOptions::default()).unwrap();
        for (got, want) in sol.log_scales().iter().zip(priors) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(sol.final_cost() < 1e-18);
    }

    #[test]
    fn rejects_non_positive_lambda() {
        assert!(matches!(
            ScaleGraphProblem::new(vec![0.0f64], vec![], 0.0),
            Err(ScaleGraphError::LambdaNotPositive(_))
        ));
    }

    fn submaps_for(count: usize, n: usize, o: usize) -> Vec<Submap> {
        let entries = (0..count)
            .map(|frame_id| Keyframe {
                frame_id,
                pose: crate::camera::Pose::<f64>::identity(),
            })
            .collect();
        let seq = KeyframeSequence::new(entries).unwrap();
        partition_submaps(&seq, &SubmapConfig::new(n, o).unwrap())
    }

    fn unit_solution(scales: &[f64]) -> ScaleSolution<f64> {
        ScaleSolution {
            log_scales: scales.iter().map(|s| s.ln()).collect(),
            scales: scales.to_vec(),
            final_cost: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn apply_scales_multiplies_valid_pixels_only() {
        let submaps = submaps_for(2, 2, 0);
        let depth = DepthMap::new(2, 1, vec![1.5, 0.0]).unwrap();
        let depths = vec![vec![depth.clone(), depth.clone()]];
        let sol = unit_solution(&[2.0]);
        let aligned = apply_scales(&submaps[..1], &depths, &sol).unwrap();
        assert_eq!(aligned[0].get(0, 0), 3.0);
        assert_eq!(aligned[0].get(1, 0), 0.0);
    }

    #[test]
    fn unit_scales_are_bit_identical() {
        let submaps = submaps_for(2, 2, 0);
        let depth = DepthMap::new(2, 1, vec![1.5, 2.25]).unwrap();
        let depths = vec![vec![depth.clone(), depth.clone()]];
        let sol = unit_solution(&[1.0]);
        let aligned = apply_scales(&submaps[..1], &depths, &sol).unwrap();
        assert_eq!(aligned[0], depth);
    }

    #[test]
    fn overlapping_keyframe_takes_first_submap() {
        let submaps = submaps_for(3, 2, 1); // [0,2) and [1,3)
        assert_eq!(submaps.len(), 2);
        let d = |v: f64| DepthMap::new(1, 1, vec![v]).unwrap();
        let depths = vec![vec![d(1.0), d(1.0)], vec![d(1.0), d(1.0)]];
        let sol = unit_solution(&[2.0, 5.0]);
        let aligned = apply_scales(&submaps, &depths, &sol).unwrap();
        // Position 1 is in both submaps; the first one wins.
        assert_eq!(aligned[0].get(0, 0), 2.0);
        assert_eq!(aligned[1].get(0, 0), 2.0);
        assert_eq!(aligned[2].get(0, 0), 5.0);
    }
}
