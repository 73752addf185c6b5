use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::{BinaryKernel, DistanceMask, TdfError};

/// Memory budget used when callers do not configure one (8 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 8 << 30;

/// Axis-aligned world-space box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Integer cell coordinates inside a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl CellIndex {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }
}

/// Counters returned by [`TdfGrid::insert_cloud`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertStats {
    pub inserted: usize,
    pub out_of_bounds: usize,
    /// Distinct occupied cells after deduplication.
    pub unique_cells: usize,
}

/// Dense fixed-resolution grid of distance masks.
///
/// Cell `(i, j, k)` covers `origin + [i, i+1) * resolution` on x (same for
/// y and z) and is stored at `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdfGrid {
    resolution: f64,
    origin: Point3<f64>,
    dims: [usize; 3],
    bits: u32,
    cells: Vec<u64>,
}

impl TdfGrid {
    /// Allocates a grid covering `bounds`, every cell at the truncation mask.
    pub fn new(
        bounds: Aabb,
        resolution: f64,
        bits: u32,
        budget_bytes: u64,
    ) -> Result<Self, TdfError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(TdfError::InvalidResolution(resolution));
        }
        let extent = bounds.extent();
        if !extent.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(TdfError::DegenerateBounds {
                min: bounds.min.coords.into(),
                max: bounds.max.coords.into(),
            });
        }
        // Absorb representation error so that e.g. 1.0 / 0.05 yields 20, not 21.
        let dims = extent.map(|e| ((e / resolution) - 1e-9).ceil().max(1.0));
        if dims.iter().any(|d| *d > u32::MAX as f64) {
            return Err(TdfError::MemoryBudget {
                required: u64::MAX,
                available: budget_bytes,
            });
        }
        let dims = [dims.x as usize, dims.y as usize, dims.z as usize];
        Self::with_dims(bounds.min, dims, resolution, bits, budget_bytes)
    }

    /// Allocates a grid with explicit origin and cell counts.
    pub fn with_dims(
        origin: Point3<f64>,
        dims: [usize; 3],
        resolution: f64,
        bits: u32,
        budget_bytes: u64,
    ) -> Result<Self, TdfError> {
        if !super::kernel::SUPPORTED_BITS.contains(&bits) {
            return Err(TdfError::InvalidBitWidth(bits));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(TdfError::InvalidResolution(resolution));
        }
        if dims.contains(&0) {
            return Err(TdfError::DegenerateBounds {
                min: origin.coords.into(),
                max: origin.coords.into(),
            });
        }
        let required = dims
            .iter()
            .try_fold(8u64, |acc, &d| acc.checked_mul(d as u64))
            .unwrap_or(u64::MAX);
        if required > budget_bytes {
            return Err(TdfError::MemoryBudget {
                required,
                available: budget_bytes,
            });
        }
        let len = dims[0] * dims[1] * dims[2];
        let mut cells = Vec::new();
        cells
            .try_reserve_exact(len)
            .map_err(|_| TdfError::Allocation { bytes: required })?;
        advise_huge_pages(&mut cells);
        cells.resize(len, DistanceMask::truncation(bits).0);
        Ok(Self {
            resolution,
            origin,
            dims,
            bits,
            cells,
        })
    }

    /// Rebuilds a grid from raw parts (used by snapshot loading).
    pub(crate) fn from_parts(
        origin: Point3<f64>,
        dims: [usize; 3],
        resolution: f64,
        bits: u32,
        cells: Vec<u64>,
    ) -> Self {
        debug_assert_eq!(cells.len(), dims[0] * dims[1] * dims[2]);
        Self {
            resolution,
            origin,
            dims,
            bits,
            cells,
        }
    }

    #[inline]
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    #[inline]
    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vector3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.resolution;
        Aabb::new(self.origin, self.origin + ext)
    }

    /// Truncation distance in meters.
    pub fn truncation_distance(&self) -> f64 {
        self.bits as f64 * self.resolution
    }

    /// Raw masks in row-major (x fastest) order.
    pub fn raw_cells(&self) -> &[u64] {
        &self.cells
    }

    #[cfg(test)]
    pub(crate) fn cells_mut(&mut self) -> &mut [u64] {
        &mut self.cells
    }

    #[inline]
    pub fn linear_index(&self, c: CellIndex) -> usize {
        c.i + self.dims[0] * (c.j + self.dims[1] * c.k)
    }

    #[inline]
    pub fn cell_from_linear(&self, idx: usize) -> CellIndex {
        let nx = self.dims[0];
        let ny = self.dims[1];
        CellIndex::new(idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    /// Bounds-checked mask lookup.
    pub fn mask(&self, c: CellIndex) -> Option<DistanceMask> {
        if c.i < self.dims[0] && c.j < self.dims[1] && c.k < self.dims[2] {
            Some(DistanceMask(self.cells[self.linear_index(c)]))
        } else {
            None
        }
    }

    /// Decoded distance of a cell in cells.
    pub fn cell_distance(&self, c: CellIndex) -> Option<u32> {
        self.mask(c).map(DistanceMask::distance_cells)
    }

    /// World position of a cell center.
    pub fn cell_center(&self, c: CellIndex) -> Point3<f64> {
        self.origin
            + Vector3::new(c.i as f64 + 0.5, c.j as f64 + 0.5, c.k as f64 + 0.5) * self.resolution
    }

    /// Cell containing `p`, or `None` when `p` is outside the grid.
    #[inline]
    pub fn world_to_cell(&self, p: &Point3<f64>) -> Option<CellIndex> {
        let inv = 1.0 / self.resolution;
        let mut out = [0usize; 3];
        for a in 0..3 {
            let u = ((p[a] - self.origin[a]) * inv).floor();
            // NaN fails both comparisons.
            if !(u >= 0.0 && u < self.dims[a] as f64) {
                return None;
            }
            out[a] = u as usize;
        }
        Some(CellIndex::new(out[0], out[1], out[2]))
    }

    /// Number of cells with distance zero.
    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&m| m == 0).count()
    }

    /// Centers of all zero-distance cells.
    pub fn zero_cells(&self) -> impl Iterator<Item = Point3<f64>> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 0)
            .map(|(idx, _)| self.cell_center(self.cell_from_linear(idx)))
    }

    /// ANDs the kernel footprint centered at `p` into the grid.
    ///
    /// Returns `false` (and leaves the grid untouched) when `p` is outside.
    pub fn insert_point(&mut self, kernel: &BinaryKernel, p: &Point3<f64>) -> bool {
        match self.world_to_cell(p) {
            Some(c) => {
                self.insert_cell(kernel, c);
                true
            }
            None => false,
        }
    }

    /// ANDs the kernel footprint centered at cell `c` into the grid.
    pub fn insert_cell(&mut self, kernel: &BinaryKernel, c: CellIndex) {
        assert_eq!(
            kernel.bits(),
            self.bits,
            "kernel and grid mask widths differ"
        );
        let dims = self.dims;
        apply_kernel(&mut self.cells, dims, 0, dims[2], kernel, c);
    }

    /// Inserts every in-bounds point of `points`.
    ///
    /// Out-of-bounds points are skipped and counted. The grid is split into
    /// z-slabs owned by disjoint workers of the current rayon pool; since AND
    /// is commutative the result does not depend on the schedule.
    pub fn insert_cloud(&mut self, kernel: &BinaryKernel, points: &[Point3<f64>]) -> InsertStats {
        assert_eq!(
            kernel.bits(),
            self.bits,
            "kernel and grid mask widths differ"
        );
        let mut centers = Vec::with_capacity(points.len());
        let mut out_of_bounds = 0;
        for p in points {
            match self.world_to_cell(p) {
                Some(c) => centers.push(c),
                None => out_of_bounds += 1,
            }
        }
        let inserted = centers.len();
        // Sorted by (k, j, i); duplicates are no-ops under AND.
        centers.sort_unstable_by_key(|c| (c.k, c.j, c.i));
        centers.dedup();
        let unique_cells = centers.len();

        let dims = self.dims;
        let slab_cells = dims[0] * dims[1];
        let threads = rayon::current_num_threads();
        if threads <= 1 || centers.len() < 2 {
            for &c in &centers {
                apply_kernel(&mut self.cells, dims, 0, dims[2], kernel, c);
            }
        } else {
            let reach = kernel.radius().min(kernel.bits() - 1) as usize;
            let slabs = (threads * 4).min(dims[2]);
            let slab_depth = dims[2].div_ceil(slabs);
            self.cells
                .par_chunks_mut(slab_depth * slab_cells)
                .enumerate()
                .for_each(|(s, chunk)| {
                    let k0 = s * slab_depth;
                    let k1 = k0 + chunk.len() / slab_cells;
                    let lo = centers.partition_point(|c| c.k + reach < k0);
                    let hi = centers.partition_point(|c| c.k < k1 + reach);
                    for &c in &centers[lo..hi] {
                        apply_kernel(chunk, dims, k0, k1, kernel, c);
                    }
                });
        }
        InsertStats {
            inserted,
            out_of_bounds,
            unique_cells,
        }
    }
}

/// ANDs the kernel centered at `c` into `cells`, which hold z-layers
/// `[k0, k1)` of a grid with the given dims.
#[inline]
/// Asks the kernel to back large grids with transparent huge pages before
/// first touch. Kernel rows are a page apart on big grids, so 4 KiB pages
/// turn most row starts into TLB misses.
#[cfg(target_os = "linux")]
fn advise_huge_pages(cells: &mut Vec<u64>) {
    const HUGE: usize = 2 << 20;
    let bytes = cells.capacity() * std::mem::size_of::<u64>();
    if bytes < 4 * HUGE {
        return;
    }
    let start = cells.as_mut_ptr() as usize;
    let aligned = start.next_multiple_of(HUGE);
    let end = (start + bytes) / HUGE * HUGE;
    if end > aligned {
        // SAFETY: the range lies inside the vector's own allocation; the
        // advice only changes how untouched pages are backed.
        unsafe {
            libc::madvise(
                aligned as *mut libc::c_void,
                end - aligned,
                libc::MADV_HUGEPAGE,
            );
        }
    }
}

#[cfg(not(target_os = "linux"))]
fn advise_huge_pages(_cells: &mut Vec<u64>) {}

fn apply_kernel(
    cells: &mut [u64],
    dims: [usize; 3],
    k0: usize,
    k1: usize,
    kernel: &BinaryKernel,
    c: CellIndex,
) {
    let [nx, ny, _] = dims;
    let (ci, cj, ck) = (c.i as i64, c.j as i64, c.k as i64);
    for row in kernel.rows() {
        let z = ck + row.dz as i64;
        let y = cj + row.dy as i64;
        if z < k0 as i64 || z >= k1 as i64 || y < 0 || y >= ny as i64 {
            continue;
        }
        let x_start = ci + row.dx_min as i64;
        let x_end = x_start + row.len as i64;
        let lo = x_start.max(0);
        let hi = x_end.min(nx as i64);
        if lo >= hi {
            continue;
        }
        let masks = kernel.row_masks(row);
        let base = ((z as usize - k0) * ny + y as usize) * nx;
        let dst = &mut cells[base + lo as usize..base + hi as usize];
        let src = &masks[(lo - x_start) as usize..(hi - x_start) as usize];
        for (d, s) in dst.iter_mut().zip(src) {
            *d &= *s;
        }
    }
}
