//! Trilinear interpolation of decoded distances between cell centers.

use nalgebra::{Point3, Vector3};

use super::TdfGrid;

/// Interpolated distance and its spatial gradient at a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    /// Unsigned L1 distance in meters.
    pub distance: f64,
    /// d(distance)/d(position), dimensionless.
    pub gradient: Vector3<f64>,
}

struct Stencil {
    base: usize,
    frac: [f64; 3],
}

impl TdfGrid {
    /// Lower corner of the 8-cell stencil around `p`, or `None` when any of
    /// the 8 cell centers would fall outside the grid.
    #[inline]
    fn stencil(&self, p: &Point3<f64>) -> Option<Stencil> {
        let inv = 1.0 / self.resolution();
        let dims = self.dims();
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin()[a]) * inv - 0.5;
            let f = u.floor();
            if !(f >= 0.0 && f + 1.0 < dims[a] as f64) {
                return None;
            }
            idx[a] = f as usize;
            frac[a] = u - f;
        }
        Some(Stencil {
            base: idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]),
            frac,
        })
    }

    #[inline]
    fn corners(&self, base: usize) -> [f64; 8] {
        let [nx, ny, _] = self.dims();
        let cells = self.raw_cells();
        let res = self.resolution();
        let sx = 1;
        let sy = nx;
        let sz = nx * ny;
        let d = |o: usize| cells[base + o].count_ones() as f64 * res;
        // index bits: x = 1, y = 2, z = 4
        [
            d(0),
            d(sx),
            d(sy),
            d(sx + sy),
            d(sz),
            d(sx + sz),
            d(sy + sz),
            d(sx + sy + sz),
        ]
    }

    /// Trilinearly interpolated distance in meters, `None` outside the
    /// interpolable region.
    pub fn distance_at(&self, p: &Point3<f64>) -> Option<f64> {
        let s = self.stencil(p)?;
        let c = self.corners(s.base);
        let [fx, fy, fz] = s.frac;
        let c00 = c[0] + (c[1] - c[0]) * fx;
        let c10 = c[2] + (c[3] - c[2]) * fx;
        let c01 = c[4] + (c[5] - c[4]) * fx;
        let c11 = c[6] + (c[7] - c[6]) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        Some(c0 + (c1 - c0) * fz)
    }

    /// Interpolated distance plus the analytic gradient of the trilinear
    /// interpolant (one-sided on cell-center planes).
    pub fn distance_and_gradient_at(&self, p: &Point3<f64>) -> Option<DistanceSample> {
        let s = self.stencil(p)?;
        let c = self.corners(s.base);
        let [fx, fy, fz] = s.frac;
        let (gy, gz) = (1.0 - fy, 1.0 - fz);

        let c00 = c[0] + (c[1] - c[0]) * fx;
        let c10 = c[2] + (c[3] - c[2]) * fx;
        let c01 = c[4] + (c[5] - c[4]) * fx;
        let c11 = c[6] + (c[7] - c[6]) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let distance = c0 + (c1 - c0) * fz;

        let dx = gz * (gy * (c[1] - c[0]) + fy * (c[3] - c[2]))
            + fz * (gy * (c[5] - c[4]) + fy * (c[7] - c[6]));
        let dy = gz * (c10 - c00) + fz * (c11 - c01);
        let dz = c1 - c0;

        let inv = 1.0 / self.resolution();
        Some(DistanceSample {
            distance,
            gradient: Vector3::new(dx, dy, dz) * inv,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdf::{build_kernel, CellIndex, DEFAULT_MEMORY_BUDGET};

    fn grid_with(values: &[(CellIndex, u32)], dims: [usize; 3], res: f64) -> TdfGrid {
        let mut g =
            TdfGrid::with_dims(Point3::origin(), dims, res, 64, DEFAULT_MEMORY_BUDGET).unwrap();
        for &(c, d) in values {
            let idx = g.linear_index(c);
            g.cells_mut()[idx] = crate::tdf::DistanceMask::from_cells(d).0;
        }
        g
    }

    #[test]
    fn cell_center_returns_cell_value() {
        let k = build_kernel(6, 16).unwrap();
        let mut g = TdfGrid::with_dims(
            Point3::origin(),
            [12, 12, 12],
            0.05,
            16,
            DEFAULT_MEMORY_BUDGET,
        )
        .unwrap();
        let obstacle = CellIndex::new(6, 5, 7);
        g.insert_cell(&k, obstacle);
        assert_eq!(g.distance_at(&g.cell_center(obstacle)), Some(0.0));
        let other = CellIndex::new(8, 5, 6);
        let d = g.distance_at(&g.cell_center(other)).unwrap();
        assert!((d - 3.0 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn midway_between_centers() {
        let dims = [4, 4, 4];
        let mut vals = Vec::new();
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..4 {
                    vals.push((CellIndex::new(i, j, k), if i == 1 { 1 } else { 2 }));
                }
            }
        }
        let g = grid_with(&vals, dims, 0.05);
        let a = g.cell_center(CellIndex::new(1, 1, 1));
        let b = g.cell_center(CellIndex::new(2, 1, 1));
        let mid = Point3::from((a.coords + b.coords) * 0.5);
        let d = g.distance_at(&mid).unwrap();
        assert!((d - 0.075).abs() < 1e-12, "{d}");
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let g = TdfGrid::with_dims(Point3::origin(), [5, 5, 5], 0.1, 64, DEFAULT_MEMORY_BUDGET)
            .unwrap();
        let s = g
            .distance_and_gradient_at(&Point3::new(0.23, 0.31, 0.27))
            .unwrap();
        assert!((s.distance - 6.4).abs() < 1e-12);
        assert_eq!(s.gradient, Vector3::zeros());
    }

    #[test]
    fn linear_ramp_along_x() {
        let dims = [6, 4, 4];
        let mut vals = Vec::new();
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..6 {
                    vals.push((CellIndex::new(i, j, k), 2 * i as u32));
                }
            }
        }
        let res = 0.05;
        let g = grid_with(&vals, dims, res);
        let s = g
            .distance_and_gradient_at(&Point3::new(0.131, 0.097, 0.112))
            .unwrap();
        // 2 cells per cell => 2 * res meters per res meters
        assert!((s.gradient.x - 2.0).abs() < 1e-12);
        assert!(s.gradient.y.abs() < 1e-12 && s.gradient.z.abs() < 1e-12);
    }

    #[test]
    fn outside_interpolable_region() {
        let g = TdfGrid::with_dims(Point3::origin(), [5, 5, 5], 0.1, 64, DEFAULT_MEMORY_BUDGET)
            .unwrap();
        // below the first cell center
        assert!(g.distance_at(&Point3::new(0.04, 0.2, 0.2)).is_none());
        // beyond the last cell center
        assert!(g.distance_at(&Point3::new(0.2, 0.46, 0.2)).is_none());
        assert!(g.distance_at(&Point3::new(0.2, 0.2, 0.2)).is_some());
        assert!(g
            .distance_and_gradient_at(&Point3::new(9.0, 0.2, 0.2))
            .is_none());
    }
}
