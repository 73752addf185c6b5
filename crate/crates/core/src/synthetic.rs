//! Synthetic scenes, trajectories and sensor streams.
//!
//! Scenes are unions of solid axis-aligned boxes. A spinning multi-beam
//! LiDAR is ray-cast against them with per-point timestamps, so scans carry
//! realistic motion distortion, and the IMU stream is the exact specific
//! force and angular rate of an analytic trajectory plus white noise.

use std::f64::consts::PI;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::TrajectoryRecord;
use crate::ekf::{ImuSample, GRAVITY};
use crate::geometry::Pose;
use crate::pipeline::{PipelineConfig, Scan};
use crate::tdf::Aabb;

/// Union of solid boxes.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub solids: Vec<Aabb>,
}

impl Scene {
    pub fn new(solids: Vec<Aabb>) -> Self {
        Self { solids }
    }

    /// Distance along `dir` (unit) to the first solid surface hit from
    /// `origin`, ignoring solids that contain the origin.
    pub fn ray_cast(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        max_range: f64,
    ) -> Option<f64> {
        let mut best = max_range;
        let mut hit = false;
        for b in &self.solids {
            let mut t0 = 0.0f64;
            let mut t1 = best;
            let mut inside = true;
            for a in 0..3 {
                if origin[a] < b.min[a] || origin[a] > b.max[a] {
                    inside = false;
                }
                if dir[a].abs() < 1e-15 {
                    if origin[a] < b.min[a] || origin[a] > b.max[a] {
                        t0 = f64::INFINITY;
                        break;
                    }
                    continue;
                }
                let inv = 1.0 / dir[a];
                let (mut ta, mut tb) = ((b.min[a] - origin[a]) * inv, (b.max[a] - origin[a]) * inv);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    break;
                }
            }
            if !inside && t0 <= t1 && t0 > 1e-9 && t0 < best {
                best = t0;
                hit = true;
            }
        }
        hit.then_some(best)
    }

    /// Bounding box of every solid.
    pub fn bounds(&self) -> Option<Aabb> {
        let mut it = self.solids.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, b| {
            Aabb::new(
                Point3::from(acc.min.coords.inf(&b.min.coords)),
                Point3::from(acc.max.coords.sup(&b.max.coords)),
            )
        }))
    }
}

fn solid(min: [f64; 3], max: [f64; 3]) -> Aabb {
    Aabb::new(Point3::from(min), Point3::from(max))
}

/// Straight corridor along +x with pillars and ceiling beams at irregular
/// spacing. The sensor travels at z = 0 along y = 0.
pub fn corridor(length: f64, seed: u64) -> Scene {
    let (x0, x1) = (-5.0, length + 5.0);
    let (w, zf, zc) = (2.0, -1.0, 2.0);
    let t = 0.2;
    let mut solids = vec![
        solid([x0 - t, -w - t, zf - t], [x1 + t, w + t, zf]),
        solid([x0 - t, -w - t, zc], [x1 + t, w + t, zc + t]),
        solid([x0 - t, w, zf], [x1 + t, w + t, zc]),
        solid([x0 - t, -w - t, zf], [x1 + t, -w, zc]),
        solid([x0 - t, -w, zf], [x0, w, zc]),
        solid([x1, -w, zf], [x1 + t, w, zc]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0 + 1.0;
    let mut side = 1.0;
    while x < x1 - 1.0 {
        let half = rng.random_range(0.1..0.3);
        let depth = rng.random_range(0.2..0.5);
        if side > 0.0 {
            solids.push(solid([x - half, w - depth, zf], [x + half, w, zc]));
        } else {
            solids.push(solid([x - half, -w, zf], [x + half, -w + depth, zc]));
        }
        if rng.random_bool(0.5) {
            let bx = x + rng.random_range(-0.8..0.8);
            let drop = rng.random_range(0.2..0.5);
            solids.push(solid([bx - 0.15, -w, zc - drop], [bx + 0.15, w, zc]));
        }
        side = -side;
        x += rng.random_range(1.5..3.0);
    }
    Scene::new(solids)
}

/// Pipeline configuration whose map encloses [`corridor`] of the given
/// length, with the start pose at the origin.
pub fn corridor_config(length: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    let x_extent = length + 14.0;
    cfg.map.size = [x_extent, 8.0, 6.0];
    cfg.map.anchor = [7.0 / x_extent, 0.5];
    cfg.map.vertical_offset = 2.0;
    cfg
}

/// Uniform samples on three mutually orthogonal walls meeting at the
/// origin: the floor z = 0 and the walls x = 0 and y = 0, each `size`
/// wide and `height` tall.
pub fn three_wall_room<R: Rng>(n: usize, size: f64, height: f64, rng: &mut R) -> Vec<Point3<f64>> {
    let floor = size * size;
    let wall = size * height;
    let total = floor + 2.0 * wall;
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let a = rng.random::<f64>();
            let b = rng.random::<f64>();
            if u < floor {
                Point3::new(a * size, b * size, 0.0)
            } else if u < floor + wall {
                Point3::new(0.0, a * size, b * height)
            } else {
                Point3::new(a * size, 0.0, b * height)
            }
        })
        .collect()
}

/// Rigid-body motion with analytic derivatives.
pub trait Motion {
    fn pose(&self, t: f64) -> Pose;
    /// World-frame linear acceleration.
    fn acceleration(&self, t: f64) -> Vector3<f64>;
    /// Body-frame angular rate.
    fn angular_rate(&self, t: f64) -> Vector3<f64>;

    /// Ideal accelerometer and gyroscope readings.
    fn imu(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let q = self.pose(t).q;
        let accel = q.inverse_transform_vector(&(self.acceleration(t) - GRAVITY));
        (self.angular_rate(t), accel)
    }
}

/// Rest, smooth ramp to cruise speed along +x, gentle lateral sway and yaw
/// oscillation once moving.
#[derive(Debug, Clone, Copy)]
pub struct CorridorMotion {
    pub rest: f64,
    pub ramp: f64,
    pub speed: f64,
    pub sway_amplitude: f64,
    pub sway_frequency: f64,
    pub yaw_amplitude: f64,
    pub yaw_frequency: f64,
}

impl CorridorMotion {
    pub fn stationary() -> Self {
        Self {
            rest: f64::INFINITY,
            ramp: 1.0,
            speed: 0.0,
            sway_amplitude: 0.0,
            sway_frequency: 0.0,
            yaw_amplitude: 0.0,
            yaw_frequency: 0.0,
        }
    }

    pub fn cruise(speed: f64) -> Self {
        Self {
            rest: 1.0,
            ramp: 2.0,
            speed,
            sway_amplitude: 0.1,
            sway_frequency: 0.1,
            yaw_amplitude: 5f64.to_radians(),
            yaw_frequency: 0.07,
        }
    }

    /// Time at which the platform has covered `distance` along x.
    pub fn time_to_travel(&self, distance: f64) -> f64 {
        if self.speed <= 0.0 {
            return f64::INFINITY;
        }
        let ramp_dist = 0.5 * self.speed * self.ramp;
        if distance <= ramp_dist {
            // invert numerically inside the ramp
            let (mut lo, mut hi) = (0.0, self.ramp);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.along(mid).0 < distance {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return self.rest + 0.5 * (lo + hi);
        }
        self.rest + self.ramp + (distance - ramp_dist) / self.speed
    }

    /// (x, vx, ax) as a function of time since departure.
    fn along(&self, tau: f64) -> (f64, f64, f64) {
        let (v, r) = (self.speed, self.ramp);
        if tau <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if tau < r {
            let s = PI * tau / r;
            (
                0.5 * v * (tau - r / PI * s.sin()),
                0.5 * v * (1.0 - s.cos()),
                0.5 * v * PI / r * s.sin(),
            )
        } else {
            (0.5 * v * r + v * (tau - r), v, 0.0)
        }
    }

    /// 1 − cos oscillation and its derivatives.
    fn osc(amplitude: f64, frequency: f64, tau: f64) -> (f64, f64, f64) {
        if tau <= 0.0 || amplitude == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let w = 2.0 * PI * frequency;
        (
            amplitude * (1.0 - (w * tau).cos()),
            amplitude * w * (w * tau).sin(),
            amplitude * w * w * (w * tau).cos(),
        )
    }
}

impl Motion for CorridorMotion {
    fn pose(&self, t: f64) -> Pose {
        let tau = t - self.rest;
        let x = self.along(tau).0;
        let y = Self::osc(self.sway_amplitude, self.sway_frequency, tau).0;
        let yaw = Self::osc(self.yaw_amplitude, self.yaw_frequency, tau).0;
        Pose::new(
            Vector3::new(x, y, 0.0),
            UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
        )
    }

    fn acceleration(&self, t: f64) -> Vector3<f64> {
        let tau = t - self.rest;
        Vector3::new(
            self.along(tau).2,
            Self::osc(self.sway_amplitude, self.sway_frequency, tau).2,
            0.0,
        )
    }

    fn angular_rate(&self, t: f64) -> Vector3<f64> {
        let tau = t - self.rest;
        Vector3::new(
            0.0,
            0.0,
            Self::osc(self.yaw_amplitude, self.yaw_frequency, tau).1,
        )
    }
}

/// Spinning multi-beam LiDAR.
#[derive(Debug, Clone)]
pub struct LidarModel {
    /// Beam elevations in radians.
    pub elevations: Vec<f64>,
    pub azimuth_steps: usize,
    pub max_range: f64,
    pub min_range: f64,
    pub range_noise: f64,
    /// Sensor pose in the body frame.
    pub mount: Pose,
}

impl LidarModel {
    /// 16 beams over ±15°.
    pub fn sixteen_beam(azimuth_steps: usize) -> Self {
        Self {
            elevations: (0..16)
                .map(|i| (-15.0 + 2.0 * i as f64).to_radians())
                .collect(),
            azimuth_steps,
            max_range: 40.0,
            min_range: 0.3,
            range_noise: 0.0,
            mount: Pose::identity(),
        }
    }

    pub fn mounted(self, mount: Pose) -> Self {
        Self { mount, ..self }
    }

    pub fn rays_per_scan(&self) -> usize {
        self.elevations.len() * self.azimuth_steps
    }
}

/// Parameters of a synthetic recording.
#[derive(Debug, Clone)]
pub struct SequenceConfig {
    pub duration: f64,
    pub imu_rate: f64,
    pub scan_rate: f64,
    pub lidars: Vec<LidarModel>,
    /// Gyro white noise density (rad/s/√Hz).
    pub gyro_noise: f64,
    /// Accelerometer white noise density (m/s²/√Hz).
    pub accel_noise: f64,
    pub seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            duration: 10.0,
            imu_rate: 200.0,
            scan_rate: 10.0,
            lidars: vec![LidarModel::sixteen_beam(240)],
            gyro_noise: 1e-3,
            accel_noise: 1e-2,
            seed: 7,
        }
    }
}

/// IMU stream, scans and ground truth (scan-end poses).
#[derive(Debug, Clone)]
pub struct Sequence {
    pub imu: Vec<ImuSample>,
    pub scans: Vec<Scan>,
    pub ground_truth: Vec<TrajectoryRecord>,
}

pub fn generate_imu<M: Motion>(
    motion: &M,
    cfg: &SequenceConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<ImuSample> {
    let dt = 1.0 / cfg.imu_rate;
    let gyro = Normal::new(0.0, cfg.gyro_noise * cfg.imu_rate.sqrt()).unwrap();
    let accel = Normal::new(0.0, cfg.accel_noise * cfg.imu_rate.sqrt()).unwrap();
    let n = (cfg.duration * cfg.imu_rate).round() as usize;
    (1..=n)
        .map(|i| {
            let t = i as f64 * dt;
            let (w, a) = motion.imu(t);
            let wn = Vector3::from_fn(|_, _| gyro.sample(rng));
            let an = Vector3::from_fn(|_, _| accel.sample(rng));
            ImuSample::new(t, w + wn, a + an)
        })
        .collect()
}

/// One sweep starting at `t_start`; points are in the body frame at their
/// own acquisition time, with offsets relative to `t_start`.
pub fn cast_scan<M: Motion>(
    scene: &Scene,
    motion: &M,
    lidars: &[LidarModel],
    t_start: f64,
    period: f64,
    rng: &mut ChaCha8Rng,
) -> Scan {
    let rays: usize = lidars.iter().map(LidarModel::rays_per_scan).sum();
    let mut points = Vec::with_capacity(rays);
    let mut offsets = Vec::with_capacity(rays);
    for lidar in lidars {
        let noise = (lidar.range_noise > 0.0).then(|| Normal::new(0.0, lidar.range_noise).unwrap());
        for a in 0..lidar.azimuth_steps {
            let frac = a as f64 / lidar.azimuth_steps as f64;
            let dt = frac * period;
            let sensor = motion.pose(t_start + dt).compose(&lidar.mount);
            let az = 2.0 * PI * frac;
            for &el in &lidar.elevations {
                let d = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let world_dir = sensor.q * d;
                let origin = Point3::from(sensor.t);
                if let Some(mut r) = scene.ray_cast(&origin, &world_dir, lidar.max_range) {
                    if r < lidar.min_range {
                        continue;
                    }
                    if let Some(n) = &noise {
                        r += n.sample(rng);
                    }
                    points.push(lidar.mount.transform_point(&Point3::from(d * r)));
                    offsets.push(dt as f32);
                }
            }
        }
    }
    Scan {
        t_start,
        t_end: t_start + period,
        points,
        offsets: Some(offsets),
    }
}

/// Full recording: IMU from `1/imu_rate` to `duration`, back-to-back
/// sweeps from t = 0, ground truth at every sweep end.
pub fn generate_sequence<M: Motion>(scene: &Scene, motion: &M, cfg: &SequenceConfig) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let imu = generate_imu(motion, cfg, &mut rng);
    let period = 1.0 / cfg.scan_rate;
    let n_scans = ((cfg.duration / period) + 1e-9).floor() as usize;
    let mut scans = Vec::with_capacity(n_scans);
    let mut ground_truth = Vec::with_capacity(n_scans);
    for k in 0..n_scans {
        let t_start = k as f64 * period;
        let scan = cast_scan(scene, motion, &cfg.lidars, t_start, period, &mut rng);
        ground_truth.push(TrajectoryRecord::new(scan.t_end, motion.pose(scan.t_end)));
        scans.push(scan);
    }
    Sequence {
        imu,
        scans,
        ground_truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_nearest_face() {
        let s = Scene::new(vec![
            solid([2.0, -1.0, -1.0], [3.0, 1.0, 1.0]),
            solid([5.0, -1.0, -1.0], [6.0, 1.0, 1.0]),
        ]);
        let r = s.ray_cast(&Point3::origin(), &Vector3::x(), 100.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(s
            .ray_cast(&Point3::origin(), &-Vector3::x(), 100.0)
            .is_none());
        assert!(s.ray_cast(&Point3::origin(), &Vector3::x(), 1.5).is_none());
    }

    #[test]
    fn corridor_is_enclosed_around_the_path() {
        let scene = corridor(20.0, 3);
        let lidar = LidarModel::sixteen_beam(60);
        let motion = CorridorMotion::stationary();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scan = cast_scan(
            &scene,
            &motion,
            std::slice::from_ref(&lidar),
            0.0,
            0.1,
            &mut rng,
        );
        // every ray within ±15° hits a wall, floor, pillar or ceiling
        assert_eq!(scan.points.len(), lidar.rays_per_scan());
        assert!(scan.points.iter().all(|p| p.coords.norm() <= 40.0));
    }

    #[test]
    fn imu_matches_finite_differences_of_motion() {
        let m = CorridorMotion::cruise(1.0);
        let h = 1e-4;
        for &t in &[0.5, 1.7, 2.5, 7.3, 12.0] {
            let v = |t: f64| (m.pose(t + h).t - m.pose(t - h).t) / (2.0 * h);
            let a_fd = (v(t + h) - v(t - h)) / (2.0 * h);
            assert!((a_fd - m.acceleration(t)).norm() < 1e-4, "t={t}");
            let dq = m.pose(t - h).q.inverse() * m.pose(t + h).q;
            let w_fd = dq.scaled_axis() / (2.0 * h);
            assert!((w_fd - m.angular_rate(t)).norm() < 1e-6);
        }
    }

    #[test]
    fn travel_time_inverts_position() {
        let m = CorridorMotion::cruise(1.0);
        for &d in &[0.3, 1.0, 10.0, 50.0] {
            let t = m.time_to_travel(d);
            assert!((m.pose(t).t.x - d).abs() < 1e-9);
        }
    }

    #[test]
    fn room_points_lie_on_walls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = three_wall_room(1000, 6.0, 3.0, &mut rng);
        assert_eq!(pts.len(), 1000);
        for p in pts {
            assert!(p.x == 0.0 || p.y == 0.0 || p.z == 0.0);
        }
    }
}
