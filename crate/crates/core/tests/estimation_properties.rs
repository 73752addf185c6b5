use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use tdflio::ekf::{
    EkfState, ImuSample, InertialEkf, InitialUncertainty, MeasurementNoise, PoseMeasurement,
    ProcessNoise,
};
use tdflio::geometry::so3_exp;
use tdflio::registration::{cauchy_rho, register, robust_scale, RegistrationConfig};
use tdflio::tdf::{BinaryKernel, TdfGrid, DEFAULT_MEMORY_BUDGET};
use tdflio::Pose;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn imu_stream(max_len: usize) -> impl Strategy<Value = Vec<(Vector3<f64>, Vector3<f64>)>> {
    prop::collection::vec((vec3(3.0), vec3(15.0)), 1..max_len)
}

fn filter() -> InertialEkf {
    let state = EkfState::new(0.0, Pose::identity(), &InitialUncertainty::default());
    InertialEkf::new(state, ProcessNoise::default(), 1.0)
}

fn feed(ekf: &mut InertialEkf, stream: &[(Vector3<f64>, Vector3<f64>)]) {
    for (i, (w, a)) in stream.iter().enumerate() {
        let t = (i + 1) as f64 / 256.0;
        ekf.predict(&ImuSample::new(t, *w, *a)).unwrap();
    }
}

fn max_asymmetry(ekf: &InertialEkf) -> f64 {
    let c = &ekf.state.cov;
    (c - c.transpose()).abs().max()
}

proptest! {
    #[test]
    fn predict_keeps_unit_quaternion_and_symmetric_covariance(stream in imu_stream(400)) {
        let mut ekf = filter();
        feed(&mut ekf, &stream);
        prop_assert!((ekf.state.q.quaternion().norm() - 1.0).abs() < 1e-9);
        prop_assert!(max_asymmetry(&ekf) < 1e-12);
        for i in 0..15 {
            prop_assert!(ekf.state.cov[(i, i)] > 0.0);
        }
    }

    #[test]
    fn update_keeps_covariance_symmetric(
        stream in imu_stream(100),
        dp in vec3(0.5),
        dth in vec3(0.2),
        dv in vec3(1.0),
    ) {
        let mut ekf = filter();
        feed(&mut ekf, &stream);
        let before = ekf.state.cov.trace();
        let meas = PoseMeasurement {
            p: ekf.state.p + dp,
            q: ekf.state.q * so3_exp(&dth),
            v: ekf.state.v + dv,
            noise: MeasurementNoise::default(),
        };
        ekf.update(&meas).unwrap();
        prop_assert!(max_asymmetry(&ekf) < 1e-12);
        prop_assert!(ekf.state.cov.trace() <= before);
        prop_assert!((ekf.state.q.quaternion().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn precise_measurement_dominates_posterior(
        stream in imu_stream(50),
        dp in vec3(0.3),
        dth in vec3(0.05),
        dv in vec3(0.5),
    ) {
        let mut ekf = filter();
        feed(&mut ekf, &stream);
        let meas = PoseMeasurement {
            p: ekf.state.p + dp,
            q: ekf.state.q * so3_exp(&dth),
            v: ekf.state.v + dv,
            noise: MeasurementNoise::isotropic(1e-6, 1e-6, 1e-6),
        };
        ekf.update(&meas).unwrap();
        prop_assert!((ekf.state.p - meas.p).norm() < 1e-4);
        prop_assert!((ekf.state.v - meas.v).norm() < 1e-4);
        prop_assert!(ekf.state.q.angle_to(&meas.q) < 1e-4);
    }

    #[test]
    fn filter_is_deterministic(stream in imu_stream(200)) {
        let mut a = filter();
        let mut b = filter();
        feed(&mut a, &stream);
        feed(&mut b, &stream);
        prop_assert_eq!(a.state, b.state);
    }

    #[test]
    fn robust_scale_is_linear_in_lambda_and_monotone_in_range(
        p in vec3(50.0),
        lambda in 0.01..10.0f64,
        k in 0.1..10.0f64,
        grow in 1.0..3.0f64,
    ) {
        let c = robust_scale(&p, lambda);
        prop_assert!(c > 0.0);
        prop_assert!((robust_scale(&p, k * lambda) - k * c).abs() <= 1e-12 * k * c.max(1.0));
        prop_assert!(robust_scale(&(p * grow), lambda) >= c);
    }

    #[test]
    fn cauchy_loss_is_bounded_by_least_squares(s in 0.0..100.0f64, c in 0.01..10.0f64) {
        let (rho, d1, d2) = cauchy_rho(s, c);
        prop_assert!(rho >= 0.0 && rho <= s + 1e-12);
        prop_assert!(d1 > 0.0 && d1 <= 1.0);
        prop_assert!(d2 <= 0.0);
    }
}

/// Box room with walls on cell centers; every coordinate is dyadic so
/// shifted copies land on exactly the same cells.
fn room(origin: Vector3<f64>) -> (TdfGrid, Vec<Point3<f64>>) {
    let res = 1.0 / 16.0;
    let dims = [64usize, 48, 40];
    let kernel = BinaryKernel::new(10, 64).unwrap();
    let mut g =
        TdfGrid::with_dims(Point3::from(origin), dims, res, 64, DEFAULT_MEMORY_BUDGET).unwrap();
    let lo = [8usize; 3];
    let hi = [dims[0] - 9, dims[1] - 9, dims[2] - 9];
    let center = |c: usize| (c as f64 + 0.5) * res;
    let mut pts = Vec::new();
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for face in [lo[a], hi[a]] {
            for i in lo[b]..=hi[b] {
                for j in lo[c]..=hi[c] {
                    let mut p = [0.0; 3];
                    p[a] = center(face);
                    p[b] = center(i);
                    p[c] = center(j);
                    pts.push(Point3::new(p[0], p[1], p[2]));
                }
            }
        }
    }
    let world: Vec<Point3<f64>> = pts.iter().map(|p| p + origin).collect();
    g.insert_cloud(&kernel, &world);
    (g, pts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn registration_never_increases_cost(dt in vec3(0.08), dth in vec3(0.04)) {
        let (g, pts) = room(Vector3::zeros());
        let truth = Pose::from_translation(Vector3::new(2.0, 1.5, 1.25));
        let cloud: Vec<Point3<f64>> = pts.iter().map(|p| truth.inverse().transform_point(p)).collect();
        let initial = truth.retract(&dt, &dth);
        let rep = register(&cloud, &g, &initial, &RegistrationConfig::default()).unwrap();
        prop_assert!(rep.final_cost <= rep.initial_cost);
        prop_assert!((rep.pose.q.quaternion().norm() - 1.0).abs() < 1e-9);
        prop_assert!(rep.pose.is_finite());
    }

    #[test]
    fn registration_commutes_with_translation(
        shift in (-20i32..20, -20i32..20, -20i32..20),
        dt in vec3(0.05),
        dth in vec3(0.03),
    ) {
        let v = Vector3::new(shift.0 as f64, shift.1 as f64, shift.2 as f64) / 16.0;
        let (g0, pts) = room(Vector3::zeros());
        let (g1, _) = room(v);
        prop_assert_eq!(g0.raw_cells(), g1.raw_cells());
        let truth = Pose::from_translation(Vector3::new(2.0, 1.5, 1.25));
        let cloud: Vec<Point3<f64>> = pts.iter().map(|p| truth.inverse().transform_point(p)).collect();
        let init0 = truth.retract(&dt, &dth);
        let init1 = Pose::new(init0.t + v, init0.q);
        let cfg = RegistrationConfig::default();
        let r0 = register(&cloud, &g0, &init0, &cfg).unwrap();
        let r1 = register(&cloud, &g1, &init1, &cfg).unwrap();
        prop_assert!((r1.pose.t - v - r0.pose.t).norm() < 1e-6, "{} vs {}", r1.pose.t - v, r0.pose.t);
        prop_assert!(r1.pose.q.angle_to(&r0.pose.q) < 1e-6);
    }
}
