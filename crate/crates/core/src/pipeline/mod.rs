//! Odometry and mapping loop: ordered replay of IMU and scan events,
//! deskewing, registration against the map, filter update, keyframing and
//! map updates.

use nalgebra::Point3;

mod config;
mod deskew;
mod keyframe;
mod odometry;
mod timing;

pub use config::{
    EkfConfig, KernelConfig, KeyframeConfig, MapConfig, PipelineConfig, RegistrationSection,
    CONFIG_KEYS,
};
pub use deskew::{deskew, DeskewStatus};
pub use keyframe::{keyframe_due, Keyframe};
pub use odometry::{run, run_slices, Odometry, OdometryOutput, RunOutput};
pub use timing::{PhaseStats, ScanTiming, TimingRecorder, TimingReport, WARMUP_SCANS};

use crate::dataset::DatasetError;
use crate::tdf::TdfError;

/// One LiDAR sweep in the sensor (or body) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub t_start: f64,
    pub t_end: f64,
    pub points: Vec<Point3<f64>>,
    /// Per-point acquisition time relative to `t_start`, seconds.
    pub offsets: Option<Vec<f32>>,
}

impl Scan {
    pub fn new(t_start: f64, t_end: f64, points: Vec<Point3<f64>>) -> Self {
        Self {
            t_start,
            t_end,
            points,
            offsets: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Map(#[from] TdfError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{stream} stream out of order: t={t} after t={prev}")]
    Unordered {
        stream: &'static str,
        prev: f64,
        t: f64,
    },
    #[error("invalid scan: t_start={t_start} t_end={t_end}")]
    InvalidScan { t_start: f64, t_end: f64 },
    #[error("non-finite IMU sample at t={0}")]
    InvalidImu(f64),
}

impl PipelineError {
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Self::Map(e) if e.is_resource_limit())
    }
}
