//! Direct scan-to-map registration against a truncated distance field.
//!
//! Each sensor-frame point `p` is mapped to the world by the pose being
//! estimated and scored by the interpolated TDF distance at that location.
//! The objective is
//!
//! ```text
//! F(t, q) = ½ Σᵢ ρ_cᵢ( d(R(q)·pᵢ + t)² ),   cᵢ = λ·(0.1 + 0.1·‖pᵢ‖)
//! ```
//!
//! with the Cauchy loss `ρ_c(s) = c²·ln(1 + s/c²)`, minimized by
//! Levenberg–Marquardt over the tangent space (`t + δt`, `q ⊗ Exp(δθ)`)
//! using IRLS weights `ρ′(s)`.

use nalgebra::{Matrix6, Point3, Vector3, Vector6};
use rayon::prelude::*;

use crate::geometry::Pose;
use crate::tdf::TdfGrid;

/// Points per reduction chunk; fixed so results do not depend on threads.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    /// Robust scale factor λ.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Step-size termination threshold on ‖δt‖ (m).
    pub translation_tolerance: f64,
    /// Step-size termination threshold on ‖δθ‖ (rad).
    pub rotation_tolerance: f64,
    pub min_valid_points: usize,
    /// Initial Marquardt damping factor.
    pub initial_damping: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iterations: 50,
            translation_tolerance: 1e-4,
            rotation_tolerance: 1e-4,
            min_valid_points: 100,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationReport {
    pub pose: Pose,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub valid_points: usize,
    pub rejected_out_of_grid: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum RegistrationError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("only {valid} points inside the grid, need {required}")]
    NoValidPoints { valid: usize, required: usize },
    #[error("registration diverged (non-finite cost)")]
    Diverged,
}

/// Cauchy scale for a sensor-frame point.
#[inline]
pub fn robust_scale(p: &Vector3<f64>, lambda: f64) -> f64 {
    lambda * (0.1 + 0.1 * p.norm())
}

/// Cauchy loss `c²·ln(1 + s/c²)` of a squared residual `s` and its first
/// two derivatives with respect to `s`. `ρ′(0) = 1`.
#[inline]
pub fn cauchy_rho(s: f64, c: f64) -> (f64, f64, f64) {
    let c2 = c * c;
    let sum = 1.0 + s / c2;
    let inv = 1.0 / sum;
    (c2 * sum.ln(), inv, -inv * inv / c2)
}

/// TDF residual of one point and its Jacobian with respect to
/// `(δt, δθ)`, or `None` when the transformed point cannot be interpolated.
#[inline]
pub fn residual(point: &Point3<f64>, pose: &Pose, grid: &TdfGrid) -> Option<(f64, Vector6<f64>)> {
    let world = pose.transform_point(point);
    let sample = grid.distance_and_gradient_at(&world)?;
    let g = sample.gradient;
    // ∂(R·Exp(δθ)·p)/∂δθ = −R·[p]×, so gᵀ(−R[p]×) = (p × Rᵀg)ᵀ
    let g_body = pose.q.inverse_transform_vector(&g);
    let dtheta = point.coords.cross(&g_body);
    let mut j = Vector6::zeros();
    j.fixed_rows_mut::<3>(0).copy_from(&g);
    j.fixed_rows_mut::<3>(3).copy_from(&dtheta);
    Some((sample.distance, j))
}

/// Cost, gradient and Gauss–Newton (IRLS) Hessian of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: Vector6<f64>,
    pub hessian: Matrix6<f64>,
    /// Points that could be interpolated at this pose.
    pub interpolated: usize,
}

impl Evaluation {
    fn zero() -> Self {
        Self {
            cost: 0.0,
            gradient: Vector6::zeros(),
            hessian: Matrix6::zeros(),
            interpolated: 0,
        }
    }

    fn add(&mut self, o: &Evaluation) {
        self.cost += o.cost;
        self.gradient += o.gradient;
        self.hessian += o.hessian;
        self.interpolated += o.interpolated;
    }
}

/// Registration problem over a fixed set of points.
pub struct Problem<'a> {
    points: Vec<Point3<f64>>,
    scales: Vec<f64>,
    grid: &'a TdfGrid,
}

impl<'a> Problem<'a> {
    /// Uses every point of `cloud`, without out-of-grid filtering.
    pub fn new(cloud: &[Point3<f64>], grid: &'a TdfGrid, lambda: f64) -> Self {
        let scales = cloud
            .iter()
            .map(|p| robust_scale(&p.coords, lambda))
            .collect();
        Self {
            points: cloud.to_vec(),
            scales,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points that leave the interpolable region score the truncation
    /// distance with zero gradient.
    pub fn evaluate(&self, pose: &Pose, with_derivatives: bool) -> Evaluation {
        let trunc = self.grid.truncation_distance();
        let partials: Vec<Evaluation> = self
            .points
            .par_chunks(CHUNK)
            .zip(self.scales.par_chunks(CHUNK))
            .map(|(pts, scales)| {
                let mut e = Evaluation::zero();
                for (p, &c) in pts.iter().zip(scales) {
                    match residual(p, pose, self.grid) {
                        Some((r, j)) => {
                            let (rho, w, _) = cauchy_rho(r * r, c);
                            e.cost += 0.5 * rho;
                            e.interpolated += 1;
                            if with_derivatives {
                                e.gradient += j * (w * r);
                                e.hessian += (j * j.transpose()) * w;
                            }
                        }
                        None => {
                            e.cost += 0.5 * cauchy_rho(trunc * trunc, c).0;
                        }
                    }
                }
                e
            })
            .collect();
        let mut total = Evaluation::zero();
        for p in &partials {
            total.add(p);
        }
        total
    }

    pub fn cost(&self, pose: &Pose) -> f64 {
        self.evaluate(pose, false).cost
    }
}

/// Aligns `cloud` (sensor frame) to the distance field, starting at
/// `initial`.
pub fn register(
    cloud: &[Point3<f64>],
    grid: &TdfGrid,
    initial: &Pose,
    cfg: &RegistrationConfig,
) -> Result<RegistrationReport, RegistrationError> {
    if cloud.is_empty() {
        return Err(RegistrationError::EmptyCloud);
    }
    let valid: Vec<Point3<f64>> = cloud
        .iter()
        .filter(|p| grid.distance_at(&initial.transform_point(p)).is_some())
        .copied()
        .collect();
    let valid_points = valid.len();
    let rejected_out_of_grid = cloud.len() - valid_points;
    if valid_points < cfg.min_valid_points.max(1) {
        return Err(RegistrationError::NoValidPoints {
            valid: valid_points,
            required: cfg.min_valid_points.max(1),
        });
    }

    let problem = Problem::new(&valid, grid, cfg.lambda);
    let mut pose = *initial;
    let mut eval = problem.evaluate(&pose, true);
    if !eval.cost.is_finite() {
        return Err(RegistrationError::Diverged);
    }
    let initial_cost = eval.cost;
    let mut mu = cfg.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut a = eval.hessian;
        for i in 0..6 {
            a[(i, i)] += mu * eval.hessian[(i, i)].max(1e-9);
        }
        let Some(step) = a.cholesky().map(|c| c.solve(&(-eval.gradient))) else {
            mu *= 10.0;
            continue;
        };
        let dt = step.fixed_rows::<3>(0).into_owned();
        let dth = step.fixed_rows::<3>(3).into_owned();
        let small = dt.norm() < cfg.translation_tolerance && dth.norm() < cfg.rotation_tolerance;

        let candidate = pose.retract(&dt, &dth);
        let cand_cost = problem.cost(&candidate);
        if !cand_cost.is_finite() {
            return Err(RegistrationError::Diverged);
        }
        if cand_cost <= eval.cost {
            pose = candidate;
            eval = problem.evaluate(&pose, true);
            mu = (mu / 3.0).max(1e-12);
            if small {
                converged = true;
                break;
            }
        } else {
            if small {
                converged = true;
                break;
            }
            mu *= 4.0;
            if mu > 1e12 {
                break;
            }
        }
    }

    Ok(RegistrationReport {
        pose,
        iterations,
        initial_cost,
        final_cost: eval.cost,
        valid_points,
        rejected_out_of_grid,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdf::{build_kernel, Aabb, DEFAULT_MEMORY_BUDGET};

    #[test]
    fn scale_examples() {
        assert!((robust_scale(&Vector3::zeros(), 1.0) - 0.1).abs() < 1e-15);
        assert!((robust_scale(&Vector3::new(9.0, 0.0, 0.0), 1.0) - 1.0).abs() < 1e-15);
        assert!((robust_scale(&Vector3::new(0.0, 0.0, 4.0), 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cauchy_values() {
        let (v, d1, _) = cauchy_rho(0.0, 0.3);
        assert_eq!(v, 0.0);
        assert_eq!(d1, 1.0);
        let (v, _, _) = cauchy_rho(1e-8, 1.0);
        assert!((v - 1e-8).abs() < 1e-15);
        let c = 0.7;
        let (v, _, _) = cauchy_rho(c * c, c);
        assert!((v - c * c * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cauchy_derivatives_match_finite_differences() {
        for &(s, c) in &[(0.01, 0.1), (0.5, 0.3), (4.0, 1.0), (0.2, 2.0)] {
            let h = 1e-6;
            let (_, d1, d2) = cauchy_rho(s, c);
            let fd1 = (cauchy_rho(s + h, c).0 - cauchy_rho(s - h, c).0) / (2.0 * h);
            let fd2 = (cauchy_rho(s + h, c).1 - cauchy_rho(s - h, c).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6);
            assert!((d2 - fd2).abs() < 1e-4 * d2.abs().max(1.0));
        }
    }

    fn single_point_grid() -> (TdfGrid, Point3<f64>) {
        let k = build_kernel(10, 16).unwrap();
        let b = Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        let mut g = TdfGrid::new(b, 0.05, 16, DEFAULT_MEMORY_BUDGET).unwrap();
        let obstacle = Point3::new(0.125, 0.025, -0.075);
        g.insert_point(&k, &obstacle);
        let center = g.cell_center(g.world_to_cell(&obstacle).unwrap());
        (g, center)
    }

    #[test]
    fn zero_residual_on_occupied_center() {
        let (g, center) = single_point_grid();
        let pose = Pose::from_translation(Vector3::new(0.3, -0.2, 0.1));
        let p = Point3::from(center.coords - pose.t);
        let (r, _) = residual(&p, &pose, &g).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
    }

    #[test]
    fn out_of_grid_point_rejected() {
        let (g, _) = single_point_grid();
        assert!(residual(&Point3::new(5.0, 0.0, 0.0), &Pose::identity(), &g).is_none());
        let cloud = vec![Point3::new(5.0, 0.0, 0.0); 200];
        let err = register(
            &cloud,
            &g,
            &Pose::identity(),
            &RegistrationConfig::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            RegistrationError::NoValidPoints {
                valid: 0,
                required: 100
            }
        );
        assert_eq!(
            register(&[], &g, &Pose::identity(), &RegistrationConfig::default()),
            Err(RegistrationError::EmptyCloud)
        );
    }
}
