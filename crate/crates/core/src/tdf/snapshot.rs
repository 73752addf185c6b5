//! Binary grid snapshots and zero-level point exports.
//!
//! Snapshot layout, all little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `FTDF`                  |
//! | 4      | 4    | version (u32, currently 1)    |
//! | 8      | 24   | dims nx, ny, nz (u64 each)    |
//! | 32     | 8    | resolution in meters (f64)    |
//! | 40     | 24   | origin x, y, z (f64 each)     |
//! | 64     | 4    | mask bit width (u32)          |
//! | 68     | 8·n  | masks, row-major, x fastest   |

use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;

use super::{TdfError, TdfGrid};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"FTDF";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 68;

impl TdfGrid {
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dims = self.dims();
        let origin = self.origin();
        let mut header = Vec::with_capacity(SNAPSHOT_HEADER_LEN);
        header.extend_from_slice(SNAPSHOT_MAGIC);
        header.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        for d in dims {
            header.extend_from_slice(&(d as u64).to_le_bytes());
        }
        header.extend_from_slice(&self.resolution().to_le_bytes());
        for a in 0..3 {
            header.extend_from_slice(&origin[a].to_le_bytes());
        }
        header.extend_from_slice(&self.bits().to_le_bytes());
        debug_assert_eq!(header.len(), SNAPSHOT_HEADER_LEN);
        w.write_all(&header)?;

        let mut buf = Vec::with_capacity(8 * 4096);
        for chunk in self.raw_cells().chunks(4096) {
            buf.clear();
            for m in chunk {
                buf.extend_from_slice(&m.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), TdfError> {
        let f = std::fs::File::create(path).map_err(|e| TdfError::io(path, e))?;
        self.write_snapshot(BufWriter::new(f))
            .map_err(|e| TdfError::io(path, e))
    }

    /// Parses a snapshot; `budget_bytes` bounds the mask array allocation.
    pub fn read_snapshot<R: Read>(mut r: R, budget_bytes: u64) -> Result<Self, TdfError> {
        let mut header = [0u8; SNAPSHOT_HEADER_LEN];
        read_exact_at(&mut r, &mut header, 0)?;
        if &header[0..4] != SNAPSHOT_MAGIC {
            return Err(TdfError::Snapshot {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());

        let version = u32_at(4);
        if version != SNAPSHOT_VERSION {
            return Err(TdfError::Snapshot {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let dims64 = [u64_at(8), u64_at(16), u64_at(24)];
        let resolution = f64_at(32);
        let origin = Point3::new(f64_at(40), f64_at(48), f64_at(56));
        let bits = u32_at(64);
        if !super::kernel::SUPPORTED_BITS.contains(&bits) {
            return Err(TdfError::Snapshot {
                offset: 64,
                reason: format!("unsupported bit width {bits}"),
            });
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(TdfError::Snapshot {
                offset: 32,
                reason: format!("invalid resolution {resolution}"),
            });
        }
        if dims64.contains(&0) {
            return Err(TdfError::Snapshot {
                offset: 8,
                reason: "zero dimension".into(),
            });
        }
        let required = dims64
            .iter()
            .try_fold(8u64, |acc, &d| acc.checked_mul(d))
            .unwrap_or(u64::MAX);
        if required > budget_bytes {
            return Err(TdfError::MemoryBudget {
                required,
                available: budget_bytes,
            });
        }
        let dims = [dims64[0] as usize, dims64[1] as usize, dims64[2] as usize];
        let len = dims[0] * dims[1] * dims[2];
        let mut cells = Vec::new();
        cells
            .try_reserve_exact(len)
            .map_err(|_| TdfError::Allocation { bytes: required })?;

        let mut buf = vec![0u8; 8 * 4096];
        let mut offset = SNAPSHOT_HEADER_LEN as u64;
        while cells.len() < len {
            let n = (len - cells.len()).min(4096);
            let bytes = &mut buf[..8 * n];
            read_exact_at(&mut r, bytes, offset)?;
            cells.extend(
                bytes
                    .chunks_exact(8)
                    .map(|b| u64::from_le_bytes(b.try_into().unwrap())),
            );
            offset += bytes.len() as u64;
        }
        Ok(TdfGrid::from_parts(origin, dims, resolution, bits, cells))
    }

    pub fn load_snapshot(path: &Path, budget_bytes: u64) -> Result<Self, TdfError> {
        let f = std::fs::File::open(path).map_err(|e| TdfError::io(path, e))?;
        Self::read_snapshot(io::BufReader::new(f), budget_bytes)
    }

    /// Writes the zero-distance cell centers as an ASCII PLY point cloud.
    pub fn write_zero_level_ply<W: Write>(&self, mut w: W) -> io::Result<()> {
        let count = self.occupied_count();
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {count}")?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        writeln!(w, "end_header")?;
        for p in self.zero_cells() {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        w.flush()
    }

    pub fn save_zero_level_ply(&self, path: &Path) -> Result<(), TdfError> {
        let f = std::fs::File::create(path).map_err(|e| TdfError::io(path, e))?;
        self.write_zero_level_ply(BufWriter::new(f))
            .map_err(|e| TdfError::io(path, e))
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<(), TdfError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            TdfError::Snapshot {
                offset,
                reason: "truncated file".into(),
            }
        } else {
            TdfError::Io {
                path: None,
                source: e,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdf::{build_kernel, DEFAULT_MEMORY_BUDGET};

    fn sample_grid() -> TdfGrid {
        let k = build_kernel(3, 8).unwrap();
        let mut g = TdfGrid::with_dims(
            Point3::new(-1.0, 2.0, 0.5),
            [9, 7, 5],
            0.1,
            8,
            DEFAULT_MEMORY_BUDGET,
        )
        .unwrap();
        g.insert_cloud(
            &k,
            &[Point3::new(-0.62, 2.31, 0.77), Point3::new(-0.2, 2.5, 0.9)],
        );
        g
    }

    #[test]
    fn round_trip() {
        let g = sample_grid();
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), SNAPSHOT_HEADER_LEN + 8 * g.len());
        assert_eq!(&buf[..4], b"FTDF");
        let back = TdfGrid::read_snapshot(&buf[..], DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn truncated_snapshot_reports_offset() {
        let g = sample_grid();
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf).unwrap();
        buf.truncate(SNAPSHOT_HEADER_LEN + 10);
        match TdfGrid::read_snapshot(&buf[..], DEFAULT_MEMORY_BUDGET) {
            Err(TdfError::Snapshot { offset, .. }) => {
                assert_eq!(offset, SNAPSHOT_HEADER_LEN as u64)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            TdfGrid::read_snapshot(&b"NOPE"[..], DEFAULT_MEMORY_BUDGET),
            Err(TdfError::Snapshot { offset: 0, .. })
        ));
    }

    #[test]
    fn oversized_header_respects_budget() {
        let g = sample_grid();
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf).unwrap();
        buf[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            TdfGrid::read_snapshot(&buf[..], DEFAULT_MEMORY_BUDGET),
            Err(TdfError::MemoryBudget { .. })
        ));
    }

    #[test]
    fn ply_lists_zero_cells() {
        let g = sample_grid();
        let mut out = Vec::new();
        g.write_zero_level_ply(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("element vertex 2\n"));
        assert_eq!(text.lines().count(), 7 + 2);
    }
}
