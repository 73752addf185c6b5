use super::{DistanceMask, TdfError};

/// Mask widths accepted by [`BinaryKernel::new`].
pub const SUPPORTED_BITS: [u32; 5] = [4, 8, 16, 32, 64];

/// One contiguous run of kernel taps along x, for fixed (dy, dz).
#[derive(Debug, Clone)]
pub(crate) struct KernelRow {
    pub dy: i32,
    pub dz: i32,
    pub dx_min: i32,
    /// Offset into `BinaryKernel::row_masks`.
    pub start: usize,
    pub len: usize,
}

/// Precomputed truncated L1 field of a single occupied cell.
///
/// Values live on a cube of side `2 * radius + 1`. Only taps with
/// `L1 < bits` are kept in the insertion footprint, since saturated taps
/// AND as no-ops.
#[derive(Debug, Clone)]
pub struct BinaryKernel {
    radius: u32,
    bits: u32,
    values: Vec<DistanceMask>,
    rows: Vec<KernelRow>,
    row_masks: Vec<u64>,
}

impl BinaryKernel {
    pub fn new(radius: u32, bits: u32) -> Result<Self, TdfError> {
        if !SUPPORTED_BITS.contains(&bits) {
            return Err(TdfError::InvalidBitWidth(bits));
        }
        if radius == 0 || radius > 512 {
            return Err(TdfError::InvalidRadius(radius));
        }
        let r = radius as i32;
        let side = (2 * radius + 1) as usize;
        let mut values = Vec::with_capacity(side * side * side);
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let l1 = dx.unsigned_abs() + dy.unsigned_abs() + dz.unsigned_abs();
                    values.push(DistanceMask::saturating(l1, bits));
                }
            }
        }

        let mut rows = Vec::new();
        let mut row_masks = Vec::new();
        for dz in -r..=r {
            for dy in -r..=r {
                let yz = (dy.abs() + dz.abs()) as u32;
                if yz >= bits {
                    continue;
                }
                // |dx| < bits - yz, clipped to the cube
                let half = ((bits - yz - 1) as i32).min(r);
                let start = row_masks.len();
                for dx in -half..=half {
                    let l1 = dx.unsigned_abs() + yz;
                    row_masks.push(DistanceMask::saturating(l1, bits).0);
                }
                rows.push(KernelRow {
                    dy,
                    dz,
                    dx_min: -half,
                    start,
                    len: row_masks.len() - start,
                });
            }
        }

        Ok(Self {
            radius,
            bits,
            values,
            rows,
            row_masks,
        })
    }

    #[inline]
    pub fn radius(&self) -> u32 {
        self.radius
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    /// Kernel value at integer offset from the center, `None` outside the cube.
    pub fn value(&self, dx: i32, dy: i32, dz: i32) -> Option<DistanceMask> {
        let r = self.radius as i32;
        if dx.abs() > r || dy.abs() > r || dz.abs() > r {
            return None;
        }
        let side = self.side();
        let idx = (dx + r) as usize + side * ((dy + r) as usize + side * (dz + r) as usize);
        Some(self.values[idx])
    }

    /// All cube values in x-fastest order.
    pub fn values(&self) -> &[DistanceMask] {
        &self.values
    }

    /// Number of cells written when the footprint is fully inside a grid.
    pub fn footprint_len(&self) -> usize {
        self.row_masks.len()
    }

    pub(crate) fn rows(&self) -> &[KernelRow] {
        &self.rows
    }

    #[inline]
    pub(crate) fn row_masks(&self, row: &KernelRow) -> &[u64] {
        &self.row_masks[row.start..row.start + row.len]
    }
}

/// Builds a kernel of the given radius and mask width.
pub fn build_kernel(radius: u32, bits: u32) -> Result<BinaryKernel, TdfError> {
    BinaryKernel::new(radius, bits)
}
