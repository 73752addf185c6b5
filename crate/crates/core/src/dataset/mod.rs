//! On-disk formats and trajectory evaluation.

use std::path::{Path, PathBuf};

mod ate;
mod imu_io;
mod manifest;
mod scan_io;
mod trajectory;

pub use ate::{associate, evaluate_ate, umeyama_rigid, AteReport, AxisStats, ASSOCIATION_WINDOW};
pub use imu_io::{read_imu, write_imu, ImuReader};
pub use manifest::{DatasetManifest, Extrinsics};
pub use scan_io::{
    read_scans, write_scan, write_scans, ScanReader, FLAG_TIME_OFFSETS, MAX_POINTS_PER_SCAN,
    SCAN_HEADER_LEN, SCAN_MAGIC,
};
pub use trajectory::{
    format_record, parse_record, read_trajectory, read_trajectory_from, write_trajectory,
    write_trajectory_to, TrajectoryRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: byte offset {offset}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{}: line {line}: {reason}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: line {line}: timestamp {t} does not increase past {prev}", path.display())]
    NonMonotone {
        path: PathBuf,
        line: usize,
        prev: f64,
        t: f64,
    },
    #[error("insufficient overlap: {pairs} associated pose pairs, at least 3 required")]
    InsufficientOverlap { pairs: usize },
    #[error("manifest {}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for malformed or inconsistent input, as opposed to I/O failure
    /// or too little data.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Self::InsufficientOverlap { .. })
    }
}
