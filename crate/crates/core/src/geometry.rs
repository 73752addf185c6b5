//! Rigid transforms.

use nalgebra::{Isometry3, Matrix3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};

/// Rigid transform: rotation `q` followed by translation `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(t: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Self { t, q }
    }

    pub fn identity() -> Self {
        Self {
            t: Vector3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            t,
            q: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it.
    pub fn from_wxyz(t: Vector3<f64>, w: f64, x: f64, y: f64, z: f64) -> Self {
        Self {
            t,
            q: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        }
    }

    #[inline]
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.q.to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.q * p.coords + self.t)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q * v
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            t: self.q * other.t + self.t,
            q: self.q * other.q,
        }
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.q.inverse();
        Pose {
            t: -(qi * self.t),
            q: qi,
        }
    }

    /// `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    /// Right-perturbation retraction: `t + δt`, `q ⊗ Exp(δθ)`, renormalized.
    pub fn retract(&self, dt: &Vector3<f64>, dtheta: &Vector3<f64>) -> Pose {
        let mut q = self.q * so3_exp(dtheta);
        q.renormalize();
        Pose { t: self.t + dt, q }
    }

    /// Geodesic rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        self.q.angle()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.t), self.q)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            t: iso.translation.vector,
            q: iso.rotation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().all(|v| v.is_finite()) && self.q.coords.iter().all(|v| v.is_finite())
    }

    /// Linear interpolation in translation, slerp in rotation.
    pub fn interpolate(&self, other: &Pose, alpha: f64) -> Pose {
        let t = self.t + (other.t - self.t) * alpha;
        let q = self
            .q
            .try_slerp(&other.q, alpha, 1e-12)
            .unwrap_or_else(|| self.q.nlerp(&other.q, alpha));
        Pose { t, q }
    }
}

/// Rotation vector to unit quaternion.
#[inline]
pub fn so3_exp(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*v)
}

/// Unit quaternion to rotation vector (angle in [0, π]).
#[inline]
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q.scaled_axis()
}

/// Cross-product matrix `[v]×`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn compose_inverse_is_identity() {
        let a = Pose::new(
            Vector3::new(1.0, -2.0, 0.5),
            UnitQuaternion::from_euler_angles(0.1, -0.3, 1.2),
        );
        let id = a.compose(&a.inverse());
        assert!(id.t.norm() < 1e-12);
        assert!(id.rotation_angle() < 1e-12);
        let p = Point3::new(0.3, 0.2, -1.0);
        let back = a.inverse().transform_point(&a.transform_point(&p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn slerp_midpoint_yaw() {
        let a = Pose::identity();
        let b = Pose::new(
            Vector3::new(1.0, 0.0, 0.0),
            UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2),
        );
        let m = a.interpolate(&b, 0.5);
        assert!((m.t - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        let (_, _, yaw) = m.q.euler_angles();
        assert!((yaw - FRAC_PI_2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn skew_matches_cross() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let b = Vector3::new(-0.7, 0.4, 1.1);
        assert!((skew(&a) * b - a.cross(&b)).norm() < 1e-15);
    }

    #[test]
    fn retract_keeps_unit_norm() {
        let mut p = Pose::identity();
        for i in 0..1000 {
            p = p.retract(
                &Vector3::zeros(),
                &Vector3::new(1e-3, -2e-3, 1e-3 * (i % 7) as f64),
            );
        }
        assert!((p.q.norm() - 1.0).abs() < 1e-12);
    }
}
