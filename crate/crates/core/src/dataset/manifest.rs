//! Dataset manifest, TOML:
//!
//! ```toml
//! scans = "scans"            # directory of scan files or one log file
//! imu = "imu.csv"
//! ground_truth = "gt.txt"    # optional
//! time_offset = 0.0          # added to scan times to reach the IMU clock
//!
//! [extrinsics]               # LiDAR frame expressed in the IMU frame
//! translation = [0.0, 0.0, 0.0]
//! rotation = [0.0, 0.0, 0.0, 1.0]   # qx, qy, qz, qw
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::Deserialize;

use super::{
    read_imu, read_scans, read_trajectory, DatasetError, ImuReader, ScanReader, TrajectoryRecord,
};
use crate::geometry::Pose;
use crate::pipeline::Scan;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extrinsics {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
}

fn identity_rotation() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl Default for Extrinsics {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            rotation: identity_rotation(),
        }
    }
}

impl Extrinsics {
    pub fn pose(&self) -> Pose {
        let [x, y, z, w] = self.rotation;
        Pose::new(
            Vector3::from(self.translation),
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        )
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    scans: PathBuf,
    imu: PathBuf,
    ground_truth: Option<PathBuf>,
    #[serde(default)]
    time_offset: f64,
    #[serde(default)]
    extrinsics: Extrinsics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub scans: PathBuf,
    pub imu: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub time_offset: f64,
    pub extrinsics: Extrinsics,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    /// Parses manifest text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self, DatasetError> {
        let err = |reason: String| DatasetError::Manifest {
            path: origin.to_path_buf(),
            reason,
        };
        let raw: RawManifest = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        if !raw.time_offset.is_finite() {
            return Err(err("time_offset must be finite".into()));
        }
        let [x, y, z, w] = raw.extrinsics.rotation;
        let norm = (x * x + y * y + z * z + w * w).sqrt();
        if !(norm.is_finite() && (norm - 1.0).abs() < 1e-3) {
            return Err(err(format!(
                "extrinsics.rotation is not a unit quaternion (norm {norm})"
            )));
        }
        if !raw.extrinsics.translation.iter().all(|v| v.is_finite()) {
            return Err(err("extrinsics.translation must be finite".into()));
        }
        let resolve = |p: PathBuf| -> Result<PathBuf, DatasetError> {
            let full = if p.is_absolute() { p } else { base.join(p) };
            if !full.exists() {
                return Err(DatasetError::io(
                    &full,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "referenced by manifest but missing",
                    ),
                ));
            }
            Ok(full)
        };
        Ok(Self {
            scans: resolve(raw.scans)?,
            imu: resolve(raw.imu)?,
            ground_truth: raw.ground_truth.map(resolve).transpose()?,
            time_offset: raw.time_offset,
            extrinsics: raw.extrinsics,
        })
    }

    /// Moves a raw scan onto the IMU clock and into the IMU body frame.
    pub fn apply(&self, mut scan: Scan) -> Scan {
        scan.t_start += self.time_offset;
        scan.t_end += self.time_offset;
        if !self.extrinsics.is_identity() {
            let tf = self.extrinsics.pose();
            for p in &mut scan.points {
                *p = tf.transform_point(p);
            }
        }
        scan
    }

    /// Scans in the body frame on the IMU clock.
    pub fn scans(
        &self,
    ) -> Result<impl Iterator<Item = Result<Scan, DatasetError>> + '_, DatasetError> {
        let reader: ScanReader = read_scans(&self.scans)?;
        Ok(reader.map(move |s| s.map(|s| self.apply(s))))
    }

    pub fn imu(&self) -> Result<ImuReader<std::fs::File>, DatasetError> {
        read_imu(&self.imu)
    }

    pub fn ground_truth(&self) -> Result<Option<Vec<TrajectoryRecord>>, DatasetError> {
        self.ground_truth
            .as_deref()
            .map(read_trajectory)
            .transpose()
    }
}
