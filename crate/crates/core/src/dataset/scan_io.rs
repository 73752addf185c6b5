//! Native binary scan format.
//!
//! A file holds one or more back-to-back scan records, all little-endian:
//!
//! | size | field                                            |
//! |------|--------------------------------------------------|
//! | 4    | magic `LSCN`                                     |
//! | 4    | point count (u32)                                |
//! | 8    | t_start, seconds (f64)                           |
//! | 8    | t_end, seconds (f64)                             |
//! | 4    | flags (u32); bit 0: per-point time offsets       |
//! | n·12 | points as f32 x, y, z (meters, sensor frame)     |
//! |      | or n·16 with a trailing f32 offset from t_start  |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Point3;

use super::DatasetError;
use crate::pipeline::Scan;

pub const SCAN_MAGIC: &[u8; 4] = b"LSCN";
pub const SCAN_HEADER_LEN: usize = 28;
pub const FLAG_TIME_OFFSETS: u32 = 1;
/// Refuse absurd point counts before allocating.
pub const MAX_POINTS_PER_SCAN: u32 = 50_000_000;

pub fn write_scan<W: Write>(scan: &Scan, mut w: W) -> io::Result<()> {
    let flags = if scan.offsets.is_some() {
        FLAG_TIME_OFFSETS
    } else {
        0
    };
    let count = u32::try_from(scan.points.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "too many points"))?;
    let mut buf = Vec::with_capacity(SCAN_HEADER_LEN + scan.points.len() * 16);
    buf.extend_from_slice(SCAN_MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&scan.t_start.to_le_bytes());
    buf.extend_from_slice(&scan.t_end.to_le_bytes());
    buf.extend_from_slice(&flags.to_le_bytes());
    for (i, p) in scan.points.iter().enumerate() {
        for a in 0..3 {
            buf.extend_from_slice(&(p[a] as f32).to_le_bytes());
        }
        if let Some(off) = &scan.offsets {
            buf.extend_from_slice(&off[i].to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// Writes all scans into one concatenated log file.
pub fn write_scans(scans: &[Scan], path: &Path) -> Result<(), DatasetError> {
    let f = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for s in scans {
        write_scan(s, &mut w).map_err(|e| DatasetError::io(path, e))?;
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}

/// Reads the next record; `Ok(None)` at a clean end of stream.
fn read_record<R: Read>(
    r: &mut R,
    path: &Path,
    offset: &mut u64,
) -> Result<Option<Scan>, DatasetError> {
    let mut header = [0u8; SCAN_HEADER_LEN];
    let got = read_fully(r, &mut header).map_err(|e| DatasetError::io(path, e))?;
    if got == 0 {
        return Ok(None);
    }
    let start = *offset;
    let parse_err = |at: u64, reason: String| DatasetError::Parse {
        path: path.to_path_buf(),
        offset: at,
        reason,
    };
    if got < SCAN_HEADER_LEN {
        return Err(parse_err(start, "truncated scan header".into()));
    }
    if &header[0..4] != SCAN_MAGIC {
        return Err(parse_err(start, "bad scan magic".into()));
    }
    let count = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let t_start = f64::from_le_bytes(header[8..16].try_into().unwrap());
    let t_end = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let flags = u32::from_le_bytes(header[24..28].try_into().unwrap());
    if flags & !FLAG_TIME_OFFSETS != 0 {
        return Err(parse_err(start + 24, format!("unknown flags {flags:#x}")));
    }
    if !(t_start.is_finite() && t_end.is_finite()) || t_end < t_start {
        return Err(parse_err(
            start + 8,
            format!("invalid scan times {t_start}..{t_end}"),
        ));
    }
    if count > MAX_POINTS_PER_SCAN {
        return Err(parse_err(
            start + 4,
            format!("implausible point count {count}"),
        ));
    }
    let has_offsets = flags & FLAG_TIME_OFFSETS != 0;
    let stride = if has_offsets { 16 } else { 12 };
    let body_len = count as usize * stride;
    let mut body = Vec::new();
    let body_start = start + SCAN_HEADER_LEN as u64;
    let got = r
        .by_ref()
        .take(body_len as u64)
        .read_to_end(&mut body)
        .map_err(|e| DatasetError::io(path, e))?;
    if got < body_len {
        return Err(parse_err(
            body_start + (got - got % stride) as u64,
            format!(
                "truncated point record ({} of {count} points complete)",
                got / stride
            ),
        ));
    }
    let f32_at = |b: &[u8], o: usize| f32::from_le_bytes(b[o..o + 4].try_into().unwrap());
    let mut points = Vec::with_capacity(count as usize);
    let mut offsets = has_offsets.then(|| Vec::with_capacity(count as usize));
    for rec in body.chunks_exact(stride) {
        points.push(Point3::new(
            f32_at(rec, 0) as f64,
            f32_at(rec, 4) as f64,
            f32_at(rec, 8) as f64,
        ));
        if let Some(o) = offsets.as_mut() {
            o.push(f32_at(rec, 12));
        }
    }
    *offset = body_start + body_len as u64;
    Ok(Some(Scan {
        t_start,
        t_end,
        points,
        offsets,
    }))
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streams scans from one log file or a directory of scan files (sorted by
/// file name). Scans must be in non-decreasing `t_start` order.
pub struct ScanReader {
    files: std::vec::IntoIter<PathBuf>,
    current: Option<(PathBuf, BufReader<File>, u64)>,
    last_t: Option<f64>,
    failed: bool,
}

impl ScanReader {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let meta = std::fs::metadata(path).map_err(|e| DatasetError::io(path, e))?;
        let files = if meta.is_dir() {
            let mut files = Vec::new();
            for entry in std::fs::read_dir(path).map_err(|e| DatasetError::io(path, e))? {
                let entry = entry.map_err(|e| DatasetError::io(path, e))?;
                let p = entry.path();
                if p.is_file() {
                    files.push(p);
                }
            }
            files.sort();
            files
        } else {
            vec![path.to_path_buf()]
        };
        Ok(Self {
            files: files.into_iter(),
            current: None,
            last_t: None,
            failed: false,
        })
    }

    fn next_scan(&mut self) -> Result<Option<Scan>, DatasetError> {
        loop {
            if self.current.is_none() {
                let Some(p) = self.files.next() else {
                    return Ok(None);
                };
                let f = File::open(&p).map_err(|e| DatasetError::io(&p, e))?;
                self.current = Some((p, BufReader::new(f), 0));
            }
            let (path, reader, offset) = self.current.as_mut().unwrap();
            let start = *offset;
            match read_record(reader, path, offset)? {
                Some(scan) => {
                    if let Some(prev) = self.last_t {
                        if scan.t_start < prev {
                            return Err(DatasetError::Parse {
                                path: path.clone(),
                                offset: start,
                                reason: format!(
                                    "scan at t={} precedes previous scan at t={prev}",
                                    scan.t_start
                                ),
                            });
                        }
                    }
                    self.last_t = Some(scan.t_start);
                    return Ok(Some(scan));
                }
                None => self.current = None,
            }
        }
    }
}

impl Iterator for ScanReader {
    type Item = Result<Scan, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_scan() {
            Ok(s) => s.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_scans(path: &Path) -> Result<ScanReader, DatasetError> {
    ScanReader::open(path)
}
