//! Shared fixtures for the criterion benchmarks.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdflio::synthetic::three_wall_room;
use tdflio::tdf::DEFAULT_MEMORY_BUDGET;
use tdflio::{BinaryKernel, Pose, TdfGrid};

pub const RESOLUTION: f64 = 0.05;

pub fn default_kernel() -> BinaryKernel {
    BinaryKernel::new(20, 64).expect("default kernel")
}

/// Cubic grid of roughly `cells` cells centered on the origin.
pub fn cube_grid(cells: usize) -> TdfGrid {
    let side = (cells as f64).cbrt().round() as usize;
    let half = side as f64 * RESOLUTION / 2.0;
    TdfGrid::with_dims(
        Point3::new(-half, -half, -half),
        [side; 3],
        RESOLUTION,
        64,
        DEFAULT_MEMORY_BUDGET,
    )
    .expect("grid fits the default budget")
}

/// Uniform points in a cube of side `extent` centered on the origin.
pub fn random_cloud(n: usize, extent: f64, seed: u64) -> Vec<Point3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = extent / 2.0;
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
            )
        })
        .collect()
}

/// Map of a three-wall room, a scan of it in the sensor frame and the true
/// sensor pose.
pub struct RoomFixture {
    pub grid: TdfGrid,
    pub scan: Vec<Point3<f64>>,
    pub truth: Pose,
}

pub fn room_fixture(scan_points: usize, seed: u64) -> RoomFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 4.0;
    let dims = [((size + 2.0) / RESOLUTION).ceil() as usize; 3];
    let mut grid = TdfGrid::with_dims(
        Point3::new(-1.0, -1.0, -1.0),
        dims,
        RESOLUTION,
        64,
        DEFAULT_MEMORY_BUDGET,
    )
    .expect("room grid");
    grid.insert_cloud(
        &default_kernel(),
        &three_wall_room(50_000, size, size, &mut rng),
    );
    let truth = Pose::from_translation(Vector3::new(2.0, 2.0, 1.5));
    let scan = three_wall_room(scan_points, size, size, &mut rng)
        .iter()
        .map(|p| truth.inverse().transform_point(p))
        .collect();
    RoomFixture { grid, scan, truth }
}
