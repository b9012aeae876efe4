use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use scan2map::change::{change_counts, detect_changes};
use scan2map::cloud::ply::{read_ply_from, write_ply_to};
use scan2map::cloud::trajectory::{format_trajectory, parse_trajectory, StampedPose};
use scan2map::cloud::{radius_crop, voxel_downsample};
use scan2map::icp::cauchy_weight;
use scan2map::se3::{rotation_error, se3_exp, se3_log, translation_error};
use scan2map::stats::{median, summarize};
use scan2map::{PointCloud, Pose, SpatialIndex, Twist};

fn twist(max_angle: f64) -> impl Strategy<Value = Twist> {
    (prop::array::uniform3(-20.0..20.0f64), prop::array::uniform3(-1.0..1.0f64), 0.0..max_angle).prop_map(
        move |(rho, axis, angle)| {
            let a = Vector3::from(axis);
            let phi = if a.norm() < 1e-6 { Vector3::zeros() } else { a.normalize() * angle };
            Twist::new(Vector3::from(rho), phi)
        },
    )
}

fn pose() -> impl Strategy<Value = Pose> {
    twist(3.0).prop_map(|xi| se3_exp(&xi).unwrap())
}

fn point(half: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-half..half).prop_map(Vector3::from)
}

fn cloud(half: f64, max: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(point(half), 1..max)
}

fn max_abs(v: Vector6<f64>) -> f64 {
    v.amax()
}

proptest! {
    #[test]
    fn exp_log_round_trip(xi in twist(3.0)) {
        let back = se3_log(&se3_exp(&xi).unwrap()).unwrap();
        prop_assert!(max_abs(back.to_vector() - xi.to_vector()) < 1e-8);
    }

    #[test]
    fn inverse_composes_to_identity(a in pose()) {
        let id = a.compose(&a.inverse());
        prop_assert!(translation_error(&id, &Pose::identity()) < 1e-9);
        prop_assert!(rotation_error(&id, &Pose::identity()).unwrap() < 1e-9);
    }

    #[test]
    fn composition_is_associative_and_acts_on_points(a in pose(), b in pose(), c in pose(), p in point(10.0)) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(translation_error(&left, &right) < 1e-9);
        prop_assert!(rotation_error(&left, &right).unwrap() < 1e-9);
        let chained = a.transform_point(&b.transform_point(&p));
        prop_assert!((a.compose(&b).transform_point(&p) - chained).norm() < 1e-9);
    }

    #[test]
    fn error_metrics_are_symmetric_and_non_negative(a in pose(), b in pose()) {
        let r = rotation_error(&a, &b).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&r));
        prop_assert!((r - rotation_error(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert_eq!(translation_error(&a, &b), translation_error(&b, &a));
    }

    #[test]
    fn index_matches_linear_scan(points in cloud(5.0, 200), queries in prop::collection::vec(point(6.0), 1..20)) {
        let index = SpatialIndex::new(&points);
        for q in &queries {
            let (i, d) = index.nearest(q).unwrap();
            let dists: Vec<f64> = points.iter().map(|p| (p - q).norm()).collect();
            let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let first = dists.iter().position(|&x| x == best).unwrap();
            prop_assert_eq!(i, first);
            prop_assert!((d - best).abs() < 1e-12);

            let k = 5.min(points.len());
            let knn = index.knn(q, k).unwrap();
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
            prop_assert_eq!(knn.iter().map(|x| x.0).collect::<Vec<_>>(), order[..k].to_vec());

            let mut inside = index.within_radius(q, 2.0);
            inside.sort_unstable();
            let expected: Vec<usize> = (0..points.len()).filter(|&j| dists[j] <= 2.0).collect();
            prop_assert_eq!(inside, expected);
        }
    }

    #[test]
    fn voxel_filter_is_idempotent(points in cloud(3.0, 300), voxel in 0.2..1.5f64) {
        let once = voxel_downsample(&PointCloud::new(points).unwrap(), voxel).unwrap();
        let twice = voxel_downsample(&once, voxel).unwrap();
        prop_assert_eq!(once.len(), twice.len());
        for (a, b) in once.points().iter().zip(twice.points()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn crop_is_an_ordered_subset(points in cloud(10.0, 200), center in point(5.0), radius in 0.5..12.0f64) {
        let c = PointCloud::new(points.clone()).unwrap();
        let crop = radius_crop(&c, &center, radius).unwrap();
        let expected: Vec<Vector3<f64>> = points.into_iter().filter(|p| (p - center).norm() <= radius).collect();
        prop_assert_eq!(crop.points(), &expected[..]);
    }

    #[test]
    fn summaries_ignore_order(mut values in prop::collection::vec(-100.0..100.0f64, 1..50), seed in any::<u64>()) {
        let before = summarize(&values).unwrap();
        let n = values.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            values.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(summarize(&values).unwrap(), before);
        let m = median(&values).unwrap();
        let below = values.iter().filter(|&&v| v < m).count();
        let above = values.iter().filter(|&&v| v > m).count();
        prop_assert!(below <= n / 2 && above <= n / 2);
        prop_assert!(before.iqr >= 0.0 && before.max >= before.median);
    }

    #[test]
    fn cauchy_weight_decreases_with_residual(a in 0.0..10.0f64, b in 0.0..10.0f64, scale in 0.01..5.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (wl, wh) = (cauchy_weight(lo, scale), cauchy_weight(hi, scale));
        prop_assert!(wl >= wh && wh > 0.0 && wl <= 1.0);
        prop_assert_eq!(cauchy_weight(-a, scale), cauchy_weight(a, scale));
    }

    #[test]
    fn change_counts_fall_as_threshold_grows(
        reference in cloud(4.0, 150),
        session in cloud(5.0, 150),
        t1 in 0.05..1.0f64,
        t2 in 0.05..1.0f64,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let index = SpatialIndex::new(&reference);
        let s = PointCloud::new(session).unwrap();
        let (new_lo, ref_lo) = change_counts(&s, &index, &Vector3::zeros(), 6.0, lo).unwrap();
        let (new_hi, ref_hi) = change_counts(&s, &index, &Vector3::zeros(), 6.0, hi).unwrap();
        prop_assert!(new_hi <= new_lo);
        prop_assert_eq!(ref_lo, ref_hi);
        let mask_lo = detect_changes(&s, &index, lo).unwrap();
        let mask_hi = detect_changes(&s, &index, hi).unwrap();
        prop_assert!(mask_lo.iter().zip(&mask_hi).all(|(l, h)| *l || !*h));
    }

    #[test]
    fn ply_round_trip_is_exact(points in cloud(100.0, 100), with_normals in any::<bool>()) {
        let c = if with_normals {
            let normals = points.iter().map(|p| if p.norm() > 0.0 { p.normalize() } else { Vector3::z() }).collect();
            PointCloud::with_normals(points, normals).unwrap()
        } else {
            PointCloud::new(points).unwrap()
        };
        let mut bytes = Vec::new();
        write_ply_to(&mut bytes, &c).unwrap();
        let back = read_ply_from(&bytes[..]).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn trajectory_round_trip(poses in prop::collection::vec(pose(), 1..10)) {
        let stamped: Vec<StampedPose> = poses.into_iter().enumerate().map(|(i, pose)| StampedPose { id: 3 * i as u64, pose }).collect();
        let back = parse_trajectory(&format_trajectory(&stamped)).unwrap();
        prop_assert_eq!(back.len(), stamped.len());
        for (a, b) in back.iter().zip(&stamped) {
            prop_assert_eq!(a.id, b.id);
            prop_assert!(translation_error(&a.pose, &b.pose) < 1e-12);
            prop_assert!(rotation_error(&a.pose, &b.pose).unwrap() < 1e-9);
        }
    }
}
