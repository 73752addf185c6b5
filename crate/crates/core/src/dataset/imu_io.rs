//! IMU CSV: `t, wx, wy, wz, ax, ay, az` in seconds, rad/s and m/s².
//! An optional non-numeric header row and `#` comments are skipped.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::DatasetError;
use crate::ekf::ImuSample;

pub struct ImuReader<R: std::io::Read> {
    path: PathBuf,
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    first: bool,
    last_t: Option<f64>,
    failed: bool,
}

impl<R: std::io::Read> ImuReader<R> {
    pub fn from_reader(r: R, path: &Path) -> Self {
        let reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(r);
        Self {
            path: path.to_path_buf(),
            reader,
            record: csv::StringRecord::new(),
            first: true,
            last_t: None,
            failed: false,
        }
    }

    fn next_sample(&mut self) -> Result<Option<ImuSample>, DatasetError> {
        loop {
            let more = self.reader.read_record(&mut self.record).map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                DatasetError::Line {
                    path: self.path.clone(),
                    line,
                    reason: e.to_string(),
                }
            })?;
            if !more {
                return Ok(None);
            }
            let line = self
                .record
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            let first = std::mem::replace(&mut self.first, false);
            if self.record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let looks_like_header = self
                .record
                .get(0)
                .is_some_and(|f| f.parse::<f64>().is_err());
            if first && looks_like_header {
                continue;
            }
            if self.record.len() != 7 {
                return Err(DatasetError::Line {
                    path: self.path.clone(),
                    line,
                    reason: format!("expected 7 columns, found {}", self.record.len()),
                });
            }
            let mut v = [0.0f64; 7];
            for (slot, f) in v.iter_mut().zip(self.record.iter()) {
                *slot = f
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DatasetError::Line {
                        path: self.path.clone(),
                        line,
                        reason: format!("invalid number {f:?}"),
                    })?;
            }
            if let Some(prev) = self.last_t {
                if v[0] <= prev {
                    return Err(DatasetError::NonMonotone {
                        path: self.path.clone(),
                        line,
                        prev,
                        t: v[0],
                    });
                }
            }
            self.last_t = Some(v[0]);
            return Ok(Some(ImuSample::new(
                v[0],
                Vector3::new(v[1], v[2], v[3]),
                Vector3::new(v[4], v[5], v[6]),
            )));
        }
    }
}

impl<R: std::io::Read> Iterator for ImuReader<R> {
    type Item = Result<ImuSample, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_sample() {
            Ok(s) => s.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_imu(path: &Path) -> Result<ImuReader<File>, DatasetError> {
    let f = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(ImuReader::from_reader(f, path))
}

pub fn write_imu(samples: &[ImuSample], path: &Path) -> Result<(), DatasetError> {
    let f = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "t,wx,wy,wz,ax,ay,az")?;
        for s in samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.t, s.omega.x, s.omega.y, s.omega.z, s.accel.x, s.accel.y, s.accel.z
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| DatasetError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ImuSample>, DatasetError> {
        ImuReader::from_reader(text.as_bytes(), Path::new("imu.csv")).collect()
    }

    #[test]
    fn three_rows() {
        let s = parse("t,wx,wy,wz,ax,ay,az\n0.0,0,0,0,0,0,9.81\n0.005,0.1,0,0,0,0,9.81\n0.01,0,0,0.2,1,0,9.8\n")
            .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[1].omega.x, 0.1);
        assert_eq!(s[2].accel, Vector3::new(1.0, 0.0, 9.8));
    }

    #[test]
    fn header_only() {
        assert!(parse("t,wx,wy,wz,ax,ay,az\n").unwrap().is_empty());
    }

    #[test]
    fn decreasing_timestamp_cites_line() {
        let mut text = String::from("t,wx,wy,wz,ax,ay,az\n");
        for (i, t) in [0.0, 0.1, 0.2, 0.3, 0.4, 0.35].iter().enumerate() {
            text.push_str(&format!("{t},0,0,0,0,0,{}\n", 9.8 + i as f64));
        }
        match parse(&text) {
            Err(DatasetError::NonMonotone { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_cites_line() {
        match parse("0,0,0,0,0,0,9.8\n0.1,0,0,zero,0,0,9.8\n") {
            Err(DatasetError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("0,0,0,0,0,0,9.8\n0.1,0,0\n") {
            Err(DatasetError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let samples = vec![
            ImuSample::new(
                0.005,
                Vector3::new(1e-3, -2e-3, 0.3),
                Vector3::new(0.1, 0.2, 9.81),
            ),
            ImuSample::new(
                0.01,
                Vector3::new(1.0 / 3.0, 0.0, 0.0),
                Vector3::new(0.0, 0.0, 9.7),
            ),
        ];
        write_imu(&samples, &path).unwrap();
        let back: Vec<_> = read_imu(&path).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, samples);
    }
}
