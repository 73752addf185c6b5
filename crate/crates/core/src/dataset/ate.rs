use nalgebra::{Matrix3, Vector3};

use super::{DatasetError, TrajectoryRecord};
use crate::geometry::Pose;

/// Maximum timestamp gap for an estimate/ground-truth pair, seconds.
pub const ASSOCIATION_WINDOW: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisStats {
    pub mean: f64,
    pub std: f64,
    pub rmse: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// Residual norm per associated pair, in estimate order.
    pub errors: Vec<f64>,
    /// Timestamps of the associated estimate records.
    pub times: Vec<f64>,
    pub axes: [AxisStats; 3],
    pub pairs: usize,
    /// Rigid transform taking estimate positions onto ground truth.
    pub alignment: Pose,
}

/// Pairs each estimate with the nearest ground-truth timestamp within
/// [`ASSOCIATION_WINDOW`]. Each ground-truth record is used at most once.
pub fn associate(
    estimate: &[TrajectoryRecord],
    ground_truth: &[TrajectoryRecord],
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut used = vec![false; ground_truth.len()];
    for (i, e) in estimate.iter().enumerate() {
        let k = ground_truth.partition_point(|g| g.t < e.t);
        let mut best: Option<(usize, f64)> = None;
        for j in [k.wrapping_sub(1), k] {
            if let Some(g) = ground_truth.get(j) {
                let d = (g.t - e.t).abs();
                if d <= ASSOCIATION_WINDOW && !used[j] && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Least-squares rigid transform (no scale) with `dst ≈ R·src + t`.
pub fn umeyama_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Pose {
    assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_d) * (s - mu_s).transpose();
    }
    let svd = cov.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut sign = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    Pose::new(mu_d - r * mu_s, q)
}

pub fn evaluate_ate(
    estimate: &[TrajectoryRecord],
    ground_truth: &[TrajectoryRecord],
) -> Result<AteReport, DatasetError> {
    let pairs = associate(estimate, ground_truth);
    if pairs.len() < 3 {
        return Err(DatasetError::InsufficientOverlap { pairs: pairs.len() });
    }
    let src: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| estimate[i].pose.t).collect();
    let dst: Vec<Vector3<f64>> = pairs.iter().map(|&(_, j)| ground_truth[j].pose.t).collect();
    let alignment = umeyama_rigid(&src, &dst);
    let r = alignment.rotation_matrix();
    let residuals: Vec<Vector3<f64>> = src
        .iter()
        .zip(&dst)
        .map(|(s, d)| r * s + alignment.t - d)
        .collect();
    let errors: Vec<f64> = residuals.iter().map(|e| e.norm()).collect();
    let n = errors.len() as f64;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mean = errors.iter().sum::<f64>() / n;
    let max = errors.iter().copied().fold(0.0, f64::max);
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let mut axes = [AxisStats::default(); 3];
    for (a, stats) in axes.iter_mut().enumerate() {
        let vals: Vec<f64> = residuals.iter().map(|e| e[a]).collect();
        let mu = vals.iter().sum::<f64>() / n;
        stats.mean = mu;
        stats.std = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        stats.rmse = (vals.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        stats.max_abs = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    Ok(AteReport {
        rmse,
        mean,
        median,
        max,
        errors,
        times: pairs.iter().map(|&(i, _)| estimate[i].t).collect(),
        axes,
        pairs: pairs.len(),
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn helix(n: usize) -> Vec<TrajectoryRecord> {
        (0..n)
            .map(|i| {
                let s = i as f64 * 0.1;
                TrajectoryRecord::new(
                    s,
                    Pose::new(
                        Vector3::new(s.cos() * 3.0, s.sin() * 2.0, 0.1 * s),
                        UnitQuaternion::from_euler_angles(0.0, 0.0, s),
                    ),
                )
            })
            .collect()
    }

    #[test]
    fn identical_is_zero() {
        let t = helix(50);
        let r = evaluate_ate(&t, &t).unwrap();
        assert!(r.rmse < 1e-12, "{}", r.rmse);
        assert_eq!(r.pairs, 50);
    }

    #[test]
    fn rigid_offset_is_removed() {
        let gt = helix(80);
        let tf = Pose::new(
            Vector3::new(10.0, -3.0, 2.0),
            UnitQuaternion::from_euler_angles(0.2, -0.4, 1.3),
        );
        let est: Vec<_> = gt
            .iter()
            .map(|r| TrajectoryRecord::new(r.t + 0.005, tf.compose(&r.pose)))
            .collect();
        let rep = evaluate_ate(&est, &gt).unwrap();
        assert!(rep.rmse < 1e-9, "{}", rep.rmse);
        let inv = tf.inverse();
        assert!((rep.alignment.t - inv.t).norm() < 1e-9);
    }

    #[test]
    fn reflection_is_not_returned() {
        let src = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.0, 2.0, 0.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| Vector3::new(p.x, -p.y, p.z)).collect();
        let t = umeyama_rigid(&src, &dst);
        assert!((t.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_ranges_fail() {
        let gt = helix(20);
        let est: Vec<_> = gt
            .iter()
            .map(|r| TrajectoryRecord::new(r.t + 100.0, r.pose))
            .collect();
        assert!(matches!(
            evaluate_ate(&est, &gt),
            Err(DatasetError::InsufficientOverlap { pairs: 0 })
        ));
    }

    #[test]
    fn association_window() {
        let gt = helix(10);
        let est = vec![
            TrajectoryRecord::new(0.019, gt[0].pose),
            TrajectoryRecord::new(0.35, gt[3].pose),
            TrajectoryRecord::new(0.51, gt[5].pose),
        ];
        assert_eq!(associate(&est, &gt), vec![(0, 0), (2, 5)]);
    }
}
