//! Error-state extended Kalman filter driven by IMU samples.
//!
//! Nominal state: position `p`, velocity `v` (world frame), accelerometer
//! bias `a_b`, orientation `q` (body to world) and gyroscope bias `g_b`
//! (body frame). The 15-dim error state is ordered
//!
//! ```text
//!  [0..3)   δp    (m)
//!  [3..6)   δv    (m/s)
//!  [6..9)   δa_b  (m/s²)
//!  [9..12)  δθ    (rad, right perturbation: q_true = q ⊗ Exp(δθ))
//!  [12..15) δg_b  (rad/s)
//! ```

use std::collections::VecDeque;

use nalgebra::{SMatrix, SVector, UnitQuaternion, Vector3};

use crate::geometry::{skew, so3_exp, so3_log, Pose};

pub type Cov15 = SMatrix<f64, 15, 15>;

const IP: usize = 0;
const IV: usize = 3;
const IAB: usize = 6;
const ITH: usize = 9;
const IGB: usize = 12;

/// World gravity vector (m/s²).
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// Above this IMU period a gap warning is logged.
pub const MAX_NOMINAL_DT: f64 = 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EkfError {
    #[error("non-monotone IMU timestamp: {t} after {prev}")]
    NonMonotone { prev: f64, t: f64 },
    #[error("non-finite IMU sample at t={0}")]
    NonFiniteSample(f64),
    #[error("non-finite pose measurement")]
    NonFiniteMeasurement,
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("non-positive time difference {0} s")]
    NonPositiveDt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Angular rate, body frame (rad/s).
    pub omega: Vector3<f64>,
    /// Specific force, body frame (m/s²).
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, omega: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, omega, accel }
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.omega.iter().all(|v| v.is_finite())
            && self.accel.iter().all(|v| v.is_finite())
    }
}

/// Process noise densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    /// rad/s/√Hz
    pub gyro: f64,
    /// m/s²/√Hz
    pub accel: f64,
    pub gyro_bias_walk: f64,
    pub accel_bias_walk: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            gyro: 1e-3,
            accel: 1e-2,
            gyro_bias_walk: 1e-5,
            accel_bias_walk: 1e-5,
        }
    }
}

/// Per-component standard deviations of a pose + velocity measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl MeasurementNoise {
    pub fn isotropic(position: f64, orientation: f64, velocity: f64) -> Self {
        Self {
            position: Vector3::repeat(position),
            orientation: Vector3::repeat(orientation),
            velocity: Vector3::repeat(velocity),
        }
    }
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self::isotropic(0.02, 0.5f64.to_radians(), 0.1)
    }
}

/// Initial standard deviations of the error state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialUncertainty {
    pub position: f64,
    pub velocity: f64,
    pub accel_bias: f64,
    pub orientation: f64,
    pub gyro_bias: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        Self {
            position: 1e-3,
            velocity: 0.1,
            accel_bias: 0.05,
            orientation: 1f64.to_radians(),
            gyro_bias: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub p: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    pub noise: MeasurementNoise,
}

impl PoseMeasurement {
    fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.noise.position.iter().all(|x| x.is_finite())
            && self.noise.orientation.iter().all(|x| x.is_finite())
            && self.noise.velocity.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a_b: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub g_b: Vector3<f64>,
    pub cov: Cov15,
}

impl EkfState {
    pub fn new(t: f64, pose: Pose, init: &InitialUncertainty) -> Self {
        let mut cov = Cov15::zeros();
        let blocks = [
            (IP, init.position),
            (IV, init.velocity),
            (IAB, init.accel_bias),
            (ITH, init.orientation),
            (IGB, init.gyro_bias),
        ];
        for (i, s) in blocks {
            for k in 0..3 {
                cov[(i + k, i + k)] = s * s;
            }
        }
        Self {
            t,
            p: pose.t,
            v: Vector3::zeros(),
            a_b: Vector3::zeros(),
            q: pose.q,
            g_b: Vector3::zeros(),
            cov,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.p, self.q)
    }

    /// Propagates the state to `sample.t` with first-order integration.
    ///
    /// On error the state is left untouched.
    pub fn predict(&mut self, sample: &ImuSample, noise: &ProcessNoise) -> Result<(), EkfError> {
        if !sample.is_finite() {
            return Err(EkfError::NonFiniteSample(sample.t));
        }
        let dt = sample.t - self.t;
        if dt <= 0.0 {
            return Err(EkfError::NonMonotone {
                prev: self.t,
                t: sample.t,
            });
        }
        if dt > MAX_NOMINAL_DT {
            log::warn!("IMU gap of {dt:.3} s at t={:.6}", sample.t);
        }

        let omega = sample.omega - self.g_b;
        let acc_body = sample.accel - self.a_b;
        let rot = self.q.to_rotation_matrix().into_inner();
        let a_world = rot * acc_body + GRAVITY;

        self.p += self.v * dt + a_world * (0.5 * dt * dt);
        self.v += a_world * dt;
        let mut q = self.q * so3_exp(&(omega * dt));
        q.renormalize();
        self.q = q;
        self.t = sample.t;

        let mut f = Cov15::identity();
        let i3 = nalgebra::Matrix3::<f64>::identity();
        f.fixed_view_mut::<3, 3>(IP, IV).copy_from(&(i3 * dt));
        f.fixed_view_mut::<3, 3>(IV, IAB).copy_from(&(-rot * dt));
        f.fixed_view_mut::<3, 3>(IV, ITH)
            .copy_from(&(-rot * skew(&acc_body) * dt));
        f.fixed_view_mut::<3, 3>(ITH, ITH)
            .copy_from(&so3_exp(&(-omega * dt)).to_rotation_matrix().into_inner());
        f.fixed_view_mut::<3, 3>(ITH, IGB).copy_from(&(-i3 * dt));

        let mut qd = SVector::<f64, 15>::zeros();
        for k in 0..3 {
            qd[IV + k] = noise.accel * noise.accel * dt;
            qd[IAB + k] = noise.accel_bias_walk * noise.accel_bias_walk * dt;
            qd[ITH + k] = noise.gyro * noise.gyro * dt;
            qd[IGB + k] = noise.gyro_bias_walk * noise.gyro_bias_walk * dt;
        }
        self.cov = f * self.cov * f.transpose() + Cov15::from_diagonal(&qd);
        symmetrize(&mut self.cov);
        Ok(())
    }

    /// Fuses a registered pose and derived velocity.
    ///
    /// On error (non-finite input, singular innovation) the state is left
    /// untouched.
    pub fn update(&mut self, meas: &PoseMeasurement) -> Result<(), EkfError> {
        if !meas.is_finite() {
            return Err(EkfError::NonFiniteMeasurement);
        }
        let mut h = SMatrix::<f64, 9, 15>::zeros();
        for k in 0..3 {
            h[(k, IP + k)] = 1.0;
            h[(3 + k, ITH + k)] = 1.0;
            h[(6 + k, IV + k)] = 1.0;
        }
        let mut r_diag = SVector::<f64, 9>::zeros();
        for k in 0..3 {
            r_diag[k] = meas.noise.position[k].powi(2);
            r_diag[3 + k] = meas.noise.orientation[k].powi(2);
            r_diag[6 + k] = meas.noise.velocity[k].powi(2);
        }
        let r = SMatrix::<f64, 9, 9>::from_diagonal(&r_diag);

        let mut y = SVector::<f64, 9>::zeros();
        y.fixed_rows_mut::<3>(0).copy_from(&(meas.p - self.p));
        y.fixed_rows_mut::<3>(3)
            .copy_from(&so3_log(&(self.q.inverse() * meas.q)));
        y.fixed_rows_mut::<3>(6).copy_from(&(meas.v - self.v));

        let pht = self.cov * h.transpose();
        let s = h * pht + r;
        let chol = s.cholesky().ok_or(EkfError::SingularInnovation)?;
        // K = P Hᵀ S⁻¹  <=>  S Kᵀ = H P
        let k = chol.solve(&pht.transpose()).transpose();
        let dx = k * y;
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(EkfError::NonFiniteMeasurement);
        }

        self.p += dx.fixed_rows::<3>(IP);
        self.v += dx.fixed_rows::<3>(IV);
        self.a_b += dx.fixed_rows::<3>(IAB);
        let mut q = self.q * so3_exp(&dx.fixed_rows::<3>(ITH).into_owned());
        q.renormalize();
        self.q = q;
        self.g_b += dx.fixed_rows::<3>(IGB);

        let ikh = Cov15::identity() - k * h;
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        symmetrize(&mut self.cov);
        Ok(())
    }
}

fn symmetrize(m: &mut Cov15) {
    for i in 0..15 {
        for j in (i + 1)..15 {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Finite-difference velocity between two positions.
pub fn velocity_from_poses(
    p_prev: &Vector3<f64>,
    t_prev: f64,
    p_curr: &Vector3<f64>,
    t_curr: f64,
) -> Result<Vector3<f64>, EkfError> {
    let dt = t_curr - t_prev;
    if dt.is_nan() || dt <= 0.0 {
        return Err(EkfError::NonPositiveDt(dt));
    }
    Ok((p_curr - p_prev) / dt)
}

/// Orientation whose gravity direction matches a static accelerometer mean.
///
/// At rest the IMU measures `Rᵀ·(−g)`, so `R` rotates the mean specific
/// force onto +z. Yaw is left at the minimal-rotation solution.
pub fn level_orientation(mean_accel: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(mean_accel, &Vector3::z())
        .unwrap_or_else(UnitQuaternion::identity)
}

/// Time-ordered poses at IMU rate for deskewing.
#[derive(Debug, Clone)]
pub struct PoseBuffer {
    entries: VecDeque<(f64, Pose)>,
    max_span: f64,
}

impl PoseBuffer {
    /// Keeps at most `max_span` seconds of history.
    pub fn new(max_span: f64) -> Self {
        Self {
            entries: VecDeque::new(),
            max_span,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Appends a pose; entries must arrive in non-decreasing time order.
    pub fn push(&mut self, t: f64, pose: Pose) {
        if let Some(&(last, _)) = self.entries.back() {
            if t < last {
                log::warn!("pose buffer: dropping out-of-order pose at t={t}");
                return;
            }
            if t == last {
                self.entries.pop_back();
            }
        }
        self.entries.push_back((t, pose));
        while self.entries.len() > 2 {
            let oldest = self.entries[1].0;
            if t - oldest >= self.max_span {
                self.entries.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.entries.front()?.0, self.entries.back()?.0))
    }

    /// True when `[t0, t1]` lies inside the buffered span.
    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        matches!(self.span(), Some((a, b)) if a <= t0 && t1 <= b)
    }

    /// Interpolated pose at `t`, clamped to the nearest endpoint outside
    /// the buffered span. `None` only when the buffer is empty.
    pub fn pose_at(&self, t: f64) -> Option<Pose> {
        let (t0, t1) = self.span()?;
        if t <= t0 {
            if t < t0 {
                log::warn!("pose buffer: clamping t={t} to start {t0}");
            }
            return Some(self.entries.front()?.1);
        }
        if t >= t1 {
            if t > t1 {
                log::warn!("pose buffer: clamping t={t} to end {t1}");
            }
            return Some(self.entries.back()?.1);
        }
        let hi = self.entries.partition_point(|(ti, _)| *ti <= t);
        let (ta, pa) = self.entries[hi - 1];
        let (tb, pb) = self.entries[hi];
        if ta == t {
            return Some(pa);
        }
        let alpha = (t - ta) / (tb - ta);
        Some(pa.interpolate(&pb, alpha))
    }
}

/// Filter plus the pose history it produces.
#[derive(Debug, Clone)]
pub struct InertialEkf {
    pub state: EkfState,
    pub process_noise: ProcessNoise,
    pub buffer: PoseBuffer,
}

impl InertialEkf {
    pub fn new(state: EkfState, process_noise: ProcessNoise, buffer_span: f64) -> Self {
        let mut buffer = PoseBuffer::new(buffer_span);
        buffer.push(state.t, state.pose());
        Self {
            state,
            process_noise,
            buffer,
        }
    }

    pub fn predict(&mut self, sample: &ImuSample) -> Result<(), EkfError> {
        self.state.predict(sample, &self.process_noise)?;
        self.buffer.push(self.state.t, self.state.pose());
        Ok(())
    }

    pub fn update(&mut self, meas: &PoseMeasurement) -> Result<(), EkfError> {
        self.state.update(meas)?;
        self.buffer.push(self.state.t, self.state.pose());
        Ok(())
    }
}
