//! Fast truncated distance fields.
//!
//! Distances are stored as canonical bit masks ([`DistanceMask`]) so that
//! inserting an obstacle is a bitwise-AND of a precomputed
//! [`BinaryKernel`] into a dense [`TdfGrid`]. The per-point cost depends on
//! the kernel volume only, never on the grid size. Queries decode masks with
//! a popcount and interpolate trilinearly between cell centers.

mod grid;
mod interp;
mod kernel;
mod mask;
mod snapshot;

use std::path::{Path, PathBuf};

pub use grid::{Aabb, CellIndex, InsertStats, TdfGrid, DEFAULT_MEMORY_BUDGET};
pub use interp::DistanceSample;
pub use kernel::{build_kernel, BinaryKernel, SUPPORTED_BITS};
pub use mask::{distance_cells, merge_masks, DistanceMask};
pub use snapshot::{SNAPSHOT_HEADER_LEN, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum TdfError {
    #[error("unsupported mask width {0} (expected one of 4, 8, 16, 32, 64)")]
    InvalidBitWidth(u32),
    #[error("invalid kernel radius {0}")]
    InvalidRadius(u32),
    #[error("invalid grid resolution {0}")]
    InvalidResolution(f64),
    #[error("degenerate grid bounds {min:?}..{max:?}")]
    DegenerateBounds { min: [f64; 3], max: [f64; 3] },
    #[error("grid needs {required} bytes but the memory budget is {available} bytes")]
    MemoryBudget { required: u64, available: u64 },
    #[error("failed to allocate {bytes} bytes for the grid")]
    Allocation { bytes: u64 },
    #[error("malformed snapshot at byte {offset}: {reason}")]
    Snapshot { offset: u64, reason: String },
    #[error("I/O error{}: {source}", path.as_ref().map(|p| format!(" on {}", p.display())).unwrap_or_default())]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },
}

impl TdfError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TdfError::Io {
            path: Some(path.to_path_buf()),
            source,
        }
    }

    /// True for failures caused by memory limits.
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            TdfError::MemoryBudget { .. } | TdfError::Allocation { .. }
        )
    }
}
