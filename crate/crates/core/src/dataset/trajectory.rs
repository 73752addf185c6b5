use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::DatasetError;
use crate::geometry::Pose;

/// Timestamped pose, one line of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub pose: Pose,
}

impl TrajectoryRecord {
    pub fn new(t: f64, pose: Pose) -> Self {
        Self { t, pose }
    }
}

/// Shortest round-trip decimal, padded to at least nine fractional digits.
fn format_time(t: f64) -> String {
    let mut s = format!("{t}");
    match s.find('.') {
        Some(dot) => {
            let decimals = s.len() - dot - 1;
            for _ in decimals..9 {
                s.push('0');
            }
        }
        None if t.is_finite() => s.push_str(".000000000"),
        None => {}
    }
    s
}

/// `t x y z qx qy qz qw`, full precision.
pub fn format_record(r: &TrajectoryRecord) -> String {
    let q = r.pose.q.quaternion();
    format!(
        "{} {} {} {} {} {} {} {}",
        format_time(r.t),
        r.pose.t.x,
        r.pose.t.y,
        r.pose.t.z,
        q.i,
        q.j,
        q.k,
        q.w
    )
}

pub fn write_trajectory_to<W: Write>(
    records: &[TrajectoryRecord],
    mut w: W,
) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", format_record(r))?;
    }
    w.flush()
}

pub fn write_trajectory(records: &[TrajectoryRecord], path: &Path) -> Result<(), DatasetError> {
    let f = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    write_trajectory_to(records, BufWriter::new(f)).map_err(|e| DatasetError::io(path, e))
}

/// Parses one non-comment line; `line` is 1-based for diagnostics.
pub fn parse_record(
    text: &str,
    path: &Path,
    line: usize,
) -> Result<TrajectoryRecord, DatasetError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(DatasetError::Line {
            path: path.to_path_buf(),
            line,
            reason: format!("expected 8 fields, found {}", fields.len()),
        });
    }
    let mut v = [0.0f64; 8];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f.parse().map_err(|_| DatasetError::Line {
            path: path.to_path_buf(),
            line,
            reason: format!("invalid number {f:?}"),
        })?;
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(DatasetError::Line {
            path: path.to_path_buf(),
            line,
            reason: "non-finite value".into(),
        });
    }
    let norm = (v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]).sqrt();
    if norm < 1e-12 {
        return Err(DatasetError::Line {
            path: path.to_path_buf(),
            line,
            reason: "zero quaternion".into(),
        });
    }
    let t = Vector3::new(v[1], v[2], v[3]);
    // Keep already-unit quaternions bit-exact so files round-trip.
    let pose = if (norm - 1.0).abs() < 1e-9 {
        Pose::new(
            t,
            UnitQuaternion::new_unchecked(Quaternion::new(v[7], v[4], v[5], v[6])),
        )
    } else {
        Pose::from_wxyz(t, v[7], v[4], v[5], v[6])
    };
    Ok(TrajectoryRecord::new(v[0], pose))
}

pub fn read_trajectory_from<R: BufRead>(
    r: R,
    path: &Path,
) -> Result<Vec<TrajectoryRecord>, DatasetError> {
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let rec = parse_record(text, path, i + 1)?;
        if let Some(prev) = out.last() {
            if rec.t < prev.t {
                return Err(DatasetError::NonMonotone {
                    path: path.to_path_buf(),
                    line: i + 1,
                    prev: prev.t,
                    t: rec.t,
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>, DatasetError> {
    let f = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    read_trajectory_from(BufReader::new(f), path)
}
