use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use tdflio::tdf::{merge_masks, BinaryKernel, DistanceMask, TdfGrid, DEFAULT_MEMORY_BUDGET};

const RES: f64 = 0.1;

fn grid(dims: [usize; 3], bits: u32) -> TdfGrid {
    TdfGrid::with_dims(Point3::origin(), dims, RES, bits, DEFAULT_MEMORY_BUDGET).unwrap()
}

fn cloud_strategy(
    max_dim: usize,
    max_points: usize,
) -> impl Strategy<Value = ([usize; 3], Vec<[f64; 3]>)> {
    (4..=max_dim, 4..=max_dim, 4..=max_dim).prop_flat_map(move |(x, y, z)| {
        let pts = prop::collection::vec(
            (
                0.0..x as f64 * RES,
                0.0..y as f64 * RES,
                0.0..z as f64 * RES,
            )
                .prop_map(|(a, b, c)| [a, b, c]),
            0..max_points,
        );
        (Just([x, y, z]), pts)
    })
}

fn to_points(raw: &[[f64; 3]]) -> Vec<Point3<f64>> {
    raw.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
}

proptest! {
    #[test]
    fn merge_is_canonical_minimum(a in 0u32..=64, b in 0u32..=64) {
        let m = merge_masks(DistanceMask::from_cells(a), DistanceMask::from_cells(b));
        prop_assert!(m.is_canonical());
        prop_assert_eq!(m.distance_cells(), a.min(b));
        prop_assert_eq!(m, DistanceMask::from_cells(a.min(b)));
    }

    #[test]
    fn merge_is_commutative_and_associative(a in 0u32..=64, b in 0u32..=64, c in 0u32..=64) {
        let [ma, mb, mc] = [a, b, c].map(DistanceMask::from_cells);
        prop_assert_eq!(ma.merge(mb), mb.merge(ma));
        prop_assert_eq!(ma.merge(mb).merge(mc), ma.merge(mb.merge(mc)));
    }

    #[test]
    fn insertion_order_does_not_matter(
        (dims, raw) in cloud_strategy(24, 80),
        seed in any::<u64>(),
        radius in 1u32..8,
    ) {
        let kernel = BinaryKernel::new(radius, 16).unwrap();
        let pts = to_points(&raw);
        let mut a = grid(dims, 16);
        a.insert_cloud(&kernel, &pts);

        let mut shuffled = pts.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut b = grid(dims, 16);
        for p in &shuffled {
            b.insert_point(&kernel, p);
        }
        prop_assert_eq!(a.raw_cells(), b.raw_cells());
    }

    #[test]
    fn decoded_distances_match_brute_force((dims, raw) in cloud_strategy(16, 30), radius in 1u32..6) {
        let bits = 8;
        let kernel = BinaryKernel::new(radius, bits).unwrap();
        let pts = to_points(&raw);
        let mut g = grid(dims, bits);
        g.insert_cloud(&kernel, &pts);
        let occupied: Vec<[usize; 3]> = pts
            .iter()
            .map(|p| {
                let c = g.world_to_cell(p).unwrap();
                [c.i, c.j, c.k]
            })
            .collect();
        for idx in 0..g.len() {
            let c = g.cell_from_linear(idx);
            let mut best = bits;
            for o in &occupied {
                let d = [c.i.abs_diff(o[0]), c.j.abs_diff(o[1]), c.k.abs_diff(o[2])];
                if d.iter().all(|&x| x <= radius as usize) {
                    best = best.min((d[0] + d[1] + d[2]).min(bits as usize) as u32);
                }
            }
            prop_assert_eq!(g.cell_distance(c), Some(best), "cell {:?}", c);
        }
    }

    #[test]
    fn interpolated_distance_is_bounded((dims, raw) in cloud_strategy(12, 20), q in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64)) {
        let kernel = BinaryKernel::new(4, 8).unwrap();
        let mut g = grid(dims, 8);
        g.insert_cloud(&kernel, &to_points(&raw));
        let p = Point3::new(q.0 * dims[0] as f64 * RES, q.1 * dims[1] as f64 * RES, q.2 * dims[2] as f64 * RES);
        if let Some(s) = g.distance_and_gradient_at(&p) {
            prop_assert!(s.distance >= 0.0 && s.distance <= g.truncation_distance() + 1e-12);
            prop_assert!(s.gradient.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn gradient_matches_central_differences(
        (dims, raw) in cloud_strategy(12, 20),
        q in (0.1..0.9f64, 0.1..0.9f64, 0.1..0.9f64),
    ) {
        let kernel = BinaryKernel::new(5, 16).unwrap();
        let mut g = grid(dims, 16);
        g.insert_cloud(&kernel, &to_points(&raw));
        let p = Point3::new(q.0 * dims[0] as f64 * RES, q.1 * dims[1] as f64 * RES, q.2 * dims[2] as f64 * RES);
        let h = 1e-7;
        // the field has a kink on cell-center planes
        let near_plane = (0..3).any(|a| {
            let u = p[a] / RES - 0.5;
            (u - u.round()).abs() < 1e-4
        });
        if let (Some(s), false) = (g.distance_and_gradient_at(&p), near_plane) {
            for a in 0..3 {
                let e = Vector3::ith(a, h);
                let (Some(fp), Some(fm)) = (g.distance_at(&(p + e)), g.distance_at(&(p - e))) else { continue };
                let fd = (fp - fm) / (2.0 * h);
                prop_assert!((fd - s.gradient[a]).abs() < 1e-6, "axis {a}: fd {fd} analytic {}", s.gradient[a]);
            }
        }
    }

    #[test]
    fn snapshot_round_trip((dims, raw) in cloud_strategy(10, 20)) {
        let kernel = BinaryKernel::new(3, 8).unwrap();
        let mut g = grid(dims, 8);
        g.insert_cloud(&kernel, &to_points(&raw));
        let mut bytes = Vec::new();
        g.write_snapshot(&mut bytes).unwrap();
        let back = TdfGrid::read_snapshot(&bytes[..], DEFAULT_MEMORY_BUDGET).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn snapshot_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = TdfGrid::read_snapshot(&bytes[..], 1 << 20);
    }

    #[test]
    fn corrupted_snapshot_never_panics(flip in 0usize..96, bit in 0u8..8) {
        let kernel = BinaryKernel::new(3, 8).unwrap();
        let mut g = grid([6, 5, 4], 8);
        g.insert_point(&kernel, &Point3::new(0.25, 0.25, 0.15));
        let mut bytes = Vec::new();
        g.write_snapshot(&mut bytes).unwrap();
        let i = flip % bytes.len();
        bytes[i] ^= 1 << bit;
        if let Ok(back) = TdfGrid::read_snapshot(&bytes[..], 1 << 20) {
            prop_assert_eq!(back.len(), back.raw_cells().len());
        }
    }
}
