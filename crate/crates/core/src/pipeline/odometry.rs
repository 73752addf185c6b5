use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{Point3, Vector3};

use super::{
    deskew, keyframe_due, DeskewStatus, Keyframe, PipelineConfig, PipelineError, Scan, ScanTiming,
    TimingRecorder, TimingReport,
};
use crate::dataset::{DatasetError, TrajectoryRecord};
use crate::ekf::{
    level_orientation, velocity_from_poses, EkfState, ImuSample, InertialEkf, InitialUncertainty,
    MeasurementNoise, PoseMeasurement, GRAVITY,
};
use crate::geometry::Pose;
use crate::registration::{register, RegistrationConfig, RegistrationReport};
use crate::tdf::{BinaryKernel, TdfGrid};

/// Result of processing one scan.
#[derive(Debug, Clone)]
pub struct OdometryOutput {
    /// Scan end time.
    pub t: f64,
    pub pose: Pose,
    pub report: Option<RegistrationReport>,
    pub map_updated: bool,
    /// Why registration or fusion was skipped; the pose is then the
    /// inertial prediction.
    pub degraded: Option<String>,
    pub deskew: DeskewStatus,
    pub timing: ScanTiming,
}

impl OdometryOutput {
    pub fn record(&self) -> TrajectoryRecord {
        TrajectoryRecord::new(self.t, self.pose)
    }
}

/// Incremental odometry.
///
/// Events may be pushed in any chunking; they are replayed in timestamp
/// order (an IMU sample at a scan's end time goes first) once both streams
/// have advanced past them, or on [`Odometry::finish`].
pub struct Odometry {
    cfg: PipelineConfig,
    reg_cfg: RegistrationConfig,
    meas_noise: MeasurementNoise,
    kernel: BinaryKernel,
    grid: TdfGrid,
    ekf: Option<InertialEkf>,
    init_imu: VecDeque<ImuSample>,
    first_imu: Option<f64>,
    last_imu: Option<ImuSample>,
    imu_queue: VecDeque<ImuSample>,
    scan_queue: VecDeque<Scan>,
    imu_seen: Option<f64>,
    scan_seen: Option<f64>,
    keyframes: Vec<Keyframe>,
    map_updates: usize,
    seeded: bool,
    prev_output: Option<(f64, Pose)>,
    timing: TimingRecorder,
}

impl Odometry {
    /// Validates `cfg` and allocates the map with the start pose at the
    /// configured anchor.
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate().map_err(PipelineError::Config)?;
        let kernel = cfg.new_kernel()?;
        let grid = cfg.new_grid()?;
        Ok(Self {
            reg_cfg: cfg.registration_config(),
            meas_noise: cfg.measurement_noise(),
            kernel,
            grid,
            ekf: None,
            init_imu: VecDeque::new(),
            first_imu: None,
            last_imu: None,
            imu_queue: VecDeque::new(),
            scan_queue: VecDeque::new(),
            imu_seen: None,
            scan_seen: None,
            keyframes: Vec::new(),
            map_updates: 0,
            seeded: false,
            prev_output: None,
            timing: TimingRecorder::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &TdfGrid {
        &self.grid
    }

    pub fn into_grid(self) -> TdfGrid {
        self.grid
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    /// Number of `insert_cloud` calls so far.
    pub fn map_updates(&self) -> usize {
        self.map_updates
    }

    pub fn timing(&self) -> TimingReport {
        self.timing.report()
    }

    pub fn state(&self) -> Option<&EkfState> {
        self.ekf.as_ref().map(|e| &e.state)
    }

    pub fn push_imu(&mut self, sample: ImuSample) -> Result<Vec<OdometryOutput>, PipelineError> {
        if !(sample.t.is_finite()
            && sample
                .omega
                .iter()
                .chain(sample.accel.iter())
                .all(|v| v.is_finite()))
        {
            return Err(PipelineError::InvalidImu(sample.t));
        }
        if let Some(prev) = self.imu_seen {
            if sample.t <= prev {
                return Err(PipelineError::Unordered {
                    stream: "imu",
                    prev,
                    t: sample.t,
                });
            }
        }
        self.imu_seen = Some(sample.t);
        self.first_imu.get_or_insert(sample.t);
        self.imu_queue.push_back(sample);
        Ok(self.drain(false))
    }

    pub fn push_scan(&mut self, scan: Scan) -> Result<Vec<OdometryOutput>, PipelineError> {
        if !(scan.t_start.is_finite() && scan.t_end.is_finite()) || scan.t_end < scan.t_start {
            return Err(PipelineError::InvalidScan {
                t_start: scan.t_start,
                t_end: scan.t_end,
            });
        }
        if let Some(prev) = self.scan_seen {
            if scan.t_end <= prev {
                return Err(PipelineError::Unordered {
                    stream: "scan",
                    prev,
                    t: scan.t_end,
                });
            }
        }
        self.scan_seen = Some(scan.t_end);
        self.scan_queue.push_back(scan);
        Ok(self.drain(false))
    }

    /// Processes everything still queued.
    pub fn finish(&mut self) -> Vec<OdometryOutput> {
        self.drain(true)
    }

    fn drain(&mut self, all: bool) -> Vec<OdometryOutput> {
        let mut out = Vec::new();
        loop {
            let imu_t = self.imu_queue.front().map(|s| s.t);
            let scan_t = self.scan_queue.front().map(|s| s.t_end);
            let take_imu = match (imu_t, scan_t) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(i), Some(s)) => i <= s,
            };
            if take_imu {
                let t = imu_t.unwrap();
                if !all && !self.scan_seen.is_some_and(|s| s >= t) {
                    break;
                }
                let s = self.imu_queue.pop_front().unwrap();
                self.apply_imu(s);
            } else {
                let t = match (&self.ekf, self.init_window(scan_t.unwrap())) {
                    (None, Some((_, hi))) => hi,
                    (None, None) if !all => break,
                    _ => scan_t.unwrap(),
                };
                if !all && !self.imu_seen.is_some_and(|i| i >= t) {
                    break;
                }
                let s = self.scan_queue.pop_front().unwrap();
                out.push(self.process_scan(&s));
            }
        }
        out
    }

    fn apply_imu(&mut self, s: ImuSample) {
        self.last_imu = Some(s);
        match self.ekf.as_mut() {
            None => {
                self.init_imu.push_back(s);
                while self
                    .init_imu
                    .front()
                    .is_some_and(|f| s.t - f.t > self.cfg.ekf.init_window)
                {
                    self.init_imu.pop_front();
                }
            }
            Some(ekf) if s.t > ekf.state.t => {
                if let Err(e) = ekf.predict(&s) {
                    log::warn!("IMU sample at t={} rejected: {e}", s.t);
                }
            }
            Some(_) => {}
        }
    }

    /// Leveling window for a first scan ending at `t_end`: the first
    /// `init_window` seconds of IMU data, or the last `init_window` seconds
    /// before `t_end` when the scan comes later than that.
    fn init_window(&self, t_end: f64) -> Option<(f64, f64)> {
        let w = self.cfg.ekf.init_window;
        self.first_imu.map(|f| {
            let lo = f.max(t_end - w);
            (lo, (lo + w).max(t_end))
        })
    }

    fn initialize(&mut self, t: f64) {
        let window = self.init_window(t);
        let samples: Vec<Vector3<f64>> = match window {
            Some((lo, hi)) => self
                .init_imu
                .iter()
                .chain(&self.imu_queue)
                .filter(|s| s.t >= lo && s.t <= hi)
                .map(|s| s.accel)
                .collect(),
            None => Vec::new(),
        };
        let q = if samples.is_empty() {
            log::warn!("no IMU data around the first scan; starting level with identity attitude");
            nalgebra::UnitQuaternion::identity()
        } else {
            let mean = samples.iter().sum::<Vector3<f64>>() / samples.len() as f64;
            level_orientation(&mean)
        };
        let state = EkfState::new(
            t,
            Pose::new(Vector3::zeros(), q),
            &InitialUncertainty::default(),
        );
        self.ekf = Some(InertialEkf::new(
            state,
            self.cfg.process_noise(),
            self.cfg.ekf.buffer_span,
        ));
        self.init_imu.clear();
    }

    /// Holds the last IMU sample up to `t`, or coasts at constant velocity
    /// without IMU data.
    fn propagate_to(&mut self, t: f64) {
        let ekf = self.ekf.as_mut().expect("initialized");
        if ekf.state.t >= t {
            return;
        }
        let sample = match self.last_imu {
            Some(s) => ImuSample::new(t, s.omega, s.accel),
            None => ImuSample::new(
                t,
                ekf.state.g_b,
                ekf.state.q.inverse() * (-GRAVITY) + ekf.state.a_b,
            ),
        };
        if let Err(e) = ekf.predict(&sample) {
            log::warn!("propagation to t={t} failed: {e}");
        }
    }

    fn insert(&mut self, points: &[Point3<f64>], pose: &Pose, trigger: &Pose, t: f64) -> f64 {
        let start = Instant::now();
        let world: Vec<Point3<f64>> = points.iter().map(|p| pose.transform_point(p)).collect();
        let stats = self.grid.insert_cloud(&self.kernel, &world);
        if stats.out_of_bounds > 0 {
            log::warn!(
                "keyframe at t={t}: {} points outside the map",
                stats.out_of_bounds
            );
        }
        self.map_updates += 1;
        self.keyframes.push(Keyframe {
            t,
            pose: *pose,
            trigger: *trigger,
        });
        self.seeded |= stats.inserted > 0;
        start.elapsed().as_secs_f64()
    }

    /// Runs one scan through deskew, registration, fusion and keyframing.
    ///
    /// IMU samples up to `scan.t_end` should already have been applied;
    /// [`Odometry::push_scan`] guarantees this ordering.
    pub fn process_scan(&mut self, scan: &Scan) -> OdometryOutput {
        let start = Instant::now();
        let t = scan.t_end;

        if self.ekf.is_none() {
            self.initialize(t);
            let pose = self.ekf.as_ref().unwrap().state.pose();
            // The platform is assumed at rest for the first sweep.
            let update = self.insert(&scan.points, &pose, &pose, t);
            return self.finish_scan(
                t,
                pose,
                None,
                Some(update),
                None,
                DeskewStatus::Disabled,
                start,
                0.0,
            );
        }

        self.propagate_to(t);
        let predicted = self.ekf.as_ref().unwrap().state.pose();
        let (cloud, deskew_status) = if self.cfg.deskew {
            deskew(scan, &self.ekf.as_ref().unwrap().buffer)
        } else {
            (scan.clone(), DeskewStatus::Disabled)
        };

        if !self.seeded {
            let update = self.insert(&cloud.points, &predicted, &predicted, t);
            let why = Some("map empty; scan used to seed it".to_string());
            return self.finish_scan(
                t,
                predicted,
                None,
                Some(update),
                why,
                deskew_status,
                start,
                0.0,
            );
        }

        let reg_points: Vec<Point3<f64>> = if self.cfg.downsample > 1 {
            cloud
                .points
                .iter()
                .step_by(self.cfg.downsample)
                .copied()
                .collect()
        } else {
            cloud.points.clone()
        };
        let opt_start = Instant::now();
        let result = register(&reg_points, &self.grid, &predicted, &self.reg_cfg);
        let optimize = opt_start.elapsed().as_secs_f64();

        let report = match result {
            Ok(r) => r,
            Err(e) => {
                log::warn!("scan at t={t}: registration failed ({e}); keeping inertial prediction");
                return self.finish_scan(
                    t,
                    predicted,
                    None,
                    None,
                    Some(e.to_string()),
                    deskew_status,
                    start,
                    optimize,
                );
            }
        };

        let ekf = self.ekf.as_mut().unwrap();
        let velocity = self
            .prev_output
            .and_then(|(tp, pp)| velocity_from_poses(&pp.t, tp, &report.pose.t, t).ok())
            .unwrap_or(ekf.state.v);
        let meas = PoseMeasurement {
            p: report.pose.t,
            q: report.pose.q,
            v: velocity,
            noise: self.meas_noise,
        };
        let mut degraded = None;
        if let Err(e) = ekf.update(&meas) {
            log::warn!("scan at t={t}: filter update failed ({e})");
            degraded = Some(e.to_string());
        }
        let pose = ekf.state.pose();

        let mut update = None;
        let last_kf = self
            .keyframes
            .last()
            .expect("seeded map has a keyframe")
            .pose;
        // Gating on the prediction keeps this scan's registration error from
        // deciding when a keyframe is taken.
        if degraded.is_none()
            && keyframe_due(
                &predicted,
                &last_kf,
                self.cfg.keyframe.t_th,
                self.cfg.keyframe.q_th,
            )
        {
            update = Some(self.insert(&cloud.points, &report.pose, &predicted, t));
        }
        self.finish_scan(
            t,
            pose,
            Some(report),
            update,
            degraded,
            deskew_status,
            start,
            optimize,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_scan(
        &mut self,
        t: f64,
        pose: Pose,
        report: Option<RegistrationReport>,
        update: Option<f64>,
        degraded: Option<String>,
        deskew: DeskewStatus,
        start: Instant,
        optimize: f64,
    ) -> OdometryOutput {
        self.prev_output = Some((t, pose));
        let timing = ScanTiming {
            total: start.elapsed().as_secs_f64(),
            optimize,
            update,
        };
        self.timing.record(timing);
        OdometryOutput {
            t,
            pose,
            report,
            map_updated: update.is_some(),
            degraded,
            deskew,
            timing,
        }
    }
}

/// Trajectory, map and statistics of a complete run.
pub struct RunOutput {
    pub outputs: Vec<OdometryOutput>,
    pub trajectory: Vec<TrajectoryRecord>,
    pub grid: TdfGrid,
    pub keyframes: Vec<Keyframe>,
    pub map_updates: usize,
    pub timing: TimingReport,
}

impl RunOutput {
    pub fn degraded_scans(&self) -> usize {
        self.outputs.iter().filter(|o| o.degraded.is_some()).count()
    }
}

/// Replays two time-ordered streams through a fresh [`Odometry`].
pub fn run<I, S>(imu: I, scans: S, cfg: &PipelineConfig) -> Result<RunOutput, PipelineError>
where
    I: IntoIterator<Item = Result<ImuSample, DatasetError>>,
    S: IntoIterator<Item = Result<Scan, DatasetError>>,
{
    let mut odo = Odometry::new(cfg.clone())?;
    let mut imu = imu.into_iter().peekable();
    let mut scans = scans.into_iter().peekable();
    let mut outputs = Vec::new();
    loop {
        let imu_t = match imu.peek() {
            Some(Ok(s)) => Some(s.t),
            Some(Err(_)) => return Err(imu.next().unwrap().unwrap_err().into()),
            None => None,
        };
        let scan_t = match scans.peek() {
            Some(Ok(s)) => Some(s.t_end),
            Some(Err(_)) => return Err(scans.next().unwrap().unwrap_err().into()),
            None => None,
        };
        let take_imu = match (imu_t, scan_t) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(i), Some(s)) => i <= s,
        };
        if take_imu {
            outputs.extend(odo.push_imu(imu.next().unwrap()?)?);
        } else {
            outputs.extend(odo.push_scan(scans.next().unwrap()?)?);
        }
    }
    outputs.extend(odo.finish());
    let timing = odo.timing();
    let keyframes = odo.keyframes().to_vec();
    let map_updates = odo.map_updates();
    Ok(RunOutput {
        trajectory: outputs.iter().map(OdometryOutput::record).collect(),
        outputs,
        grid: odo.into_grid(),
        keyframes,
        map_updates,
        timing,
    })
}

pub fn run_slices(
    imu: &[ImuSample],
    scans: &[Scan],
    cfg: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    run(
        imu.iter().copied().map(Ok),
        scans.iter().cloned().map(Ok),
        cfg,
    )
}
